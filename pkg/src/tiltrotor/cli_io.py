"""JSON configuration, CSV trajectories, JSON metrics and SVG plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

from .decoupler import DecouplerKind
from .flc import GAIN_PRESETS, AttitudeGains, GainOrdering, PositionGains
from .gait import GaitKind, GaitPlan
from .simulator import ExperimentConfig, Metrics, ReferenceKind, Trajectory

CSV_COLUMNS = ("t", "X", "Y", "Z", "phi", "theta", "psi", "p", "q", "r",
               "w1", "w2", "w3", "w4", "rho", "ex", "ey", "ez")

_TOP_KEYS = {"reference", "gait", "decoupler", "gains", "position_gains", "dt", "duration",
             "steady_window", "sup_fraction", "sup_min_periods", "initial_rotor_speed",
             "saturation", "record_stride"}
_GAIT_KEYS = {"kind", "rho", "period", "rho_max"}
_GAIN_KEYS = {"preset", "kp1", "kp2", "kp3", "kpz", "ordering"}
_POSITION_KEYS = {"kx1", "ky1", "kx2", "ky2"}


class ConfigError(ValueError):
    """Configuration document is malformed or violates a constraint."""


def _check_keys(section: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key {prefix}{unknown[0]!s} (allowed: {', '.join(sorted(allowed))})")
    return section


def _number(value: Any, key: str, allow_none: bool = False) -> float | None:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _choice(enum_cls, value: Any, key: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{key} must be one of {allowed}, got {value!r}") from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    _check_keys(doc, _TOP_KEYS, "")
    kwargs: dict[str, Any] = {}
    try:
        if "reference" in doc:
            kwargs["reference"] = _choice(ReferenceKind, doc["reference"], "reference")
        if "decoupler" in doc:
            kwargs["decoupler"] = _choice(DecouplerKind, doc["decoupler"], "decoupler")
        if "gait" in doc:
            g = _check_keys(doc["gait"], _GAIT_KEYS, "gait")
            gait_kwargs = {}
            if "kind" in g:
                gait_kwargs["kind"] = _choice(GaitKind, g["kind"], "gait.kind")
            for src, dst in (("rho", "rho_fixed"), ("period", "period"), ("rho_max", "rho_max")):
                if src in g:
                    gait_kwargs[dst] = _number(g[src], f"gait.{src}")
            kwargs["gait"] = GaitPlan(**gait_kwargs)
        if "gains" in doc:
            g = _check_keys(doc["gains"], _GAIN_KEYS, "gains")
            preset = g.get("preset", "stable")
            if preset not in GAIN_PRESETS:
                raise ConfigError(f"gains.preset must be one of {sorted(GAIN_PRESETS)}, got {preset!r}")
            kwargs["gain_preset"] = preset
            explicit = {k: g[k] for k in ("kp1", "kp2", "kp3", "kpz", "ordering") if k in g}
            if explicit:
                base = GAIN_PRESETS[preset]
                merged = {"kp1": base.kp1, "kp2": base.kp2, "kp3": base.kp3, "kpz": base.kpz,
                          "ordering": base.ordering}
                merged.update(explicit)
                if "ordering" in explicit:
                    merged["ordering"] = _choice(GainOrdering, explicit["ordering"], "gains.ordering")
                kwargs["attitude_gains"] = AttitudeGains(**merged)
        if "position_gains" in doc:
            p = _check_keys(doc["position_gains"], _POSITION_KEYS, "position_gains")
            kwargs["position_gains"] = PositionGains(**{k: _number(v, f"position_gains.{k}") for k, v in p.items()})
        for key in ("dt", "steady_window", "sup_fraction", "sup_min_periods", "initial_rotor_speed"):
            if key in doc:
                kwargs[key] = _number(doc[key], key)
        for key in ("duration", "saturation"):
            if key in doc:
                kwargs[key] = _number(doc[key], key, allow_none=True)
        if "record_stride" in doc:
            stride = doc["record_stride"]
            if isinstance(stride, bool) or not isinstance(stride, int):
                raise ConfigError(f"record_stride must be an integer, got {stride!r}")
            kwargs["record_stride"] = stride
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved configuration; ``config_from_dict`` inverts it exactly."""
    gains = cfg.attitude_gains
    pg = cfg.position_gains
    return {
        "reference": cfg.reference.value,
        "gait": {"kind": cfg.gait.kind.value, "rho": cfg.gait.rho_fixed,
                 "period": cfg.gait.period, "rho_max": cfg.gait.rho_max},
        "decoupler": cfg.decoupler.value,
        "gains": {"preset": cfg.gain_preset, "kp1": list(gains.kp1), "kp2": list(gains.kp2),
                  "kp3": list(gains.kp3), "kpz": list(gains.kpz), "ordering": gains.ordering.value},
        "position_gains": {"kx1": pg.kx1, "ky1": pg.ky1, "kx2": pg.kx2, "ky2": pg.ky2},
        "dt": cfg.dt,
        "duration": cfg.duration,
        "steady_window": cfg.steady_window,
        "sup_fraction": cfg.sup_fraction,
        "sup_min_periods": cfg.sup_min_periods,
        "initial_rotor_speed": cfg.initial_rotor_speed,
        "saturation": cfg.saturation,
        "record_stride": cfg.record_stride,
    }


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def trajectory_rows(traj: Trajectory):
    err = traj.errors
    for i in range(len(traj)):
        x = traj.states[i]
        yield [traj.t[i], *x[0:3], *traj.euler[i], *x[15:18], *x[18:22], traj.rho[i], *err[i]]


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    """One row per sample; ``w1..w4`` are the signed rotor speeds (rad/s)."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in trajectory_rows(traj):
            writer.writerow([_fmt(v) for v in row])


def read_trajectory_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[float(v) for v in row] for row in reader]


def _finite_or_none(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def metrics_to_dict(metrics: Metrics, cfg: ExperimentConfig | None = None) -> dict:
    sse = metrics.steady_state_error if not metrics.diverged else None
    sup = metrics.sup_error if not metrics.diverged else None
    doc = {
        "steady_state_error_x": _finite_or_none(sse[0]) if sse else None,
        "steady_state_error_y": _finite_or_none(sse[1]) if sse else None,
        "sup_error_x": _finite_or_none(sup[0]) if sup else None,
        "sup_error_y": _finite_or_none(sup[1]) if sup else None,
        "sup_error_norm": _finite_or_none(sup[2]) if sup else None,
        "diverged": bool(metrics.diverged),
        "saturation_count": int(metrics.saturation_count),
        "converged": bool(metrics.converged),
        "failure": metrics.failure,
        "max_orthonormality_error": _finite_or_none(metrics.max_orthonormality_error),
    }
    if cfg is not None:
        doc["config"] = config_to_dict(cfg)
    return doc


def write_metrics_json(metrics: Metrics, cfg: ExperimentConfig | None, path: str | Path) -> None:
    Path(path).write_text(json.dumps(metrics_to_dict(metrics, cfg), indent=2) + "\n", encoding="ascii")


def write_error_plot(traj: Trajectory, path: str | Path, title: str = "") -> None:
    """Line plot of e_x and e_y against time."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    err = traj.errors
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(traj.t, err[:, 0], label="e_x", linewidth=1.0)
    ax.plot(traj.t, err[:, 1], label="e_y", linewidth=1.0)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("position error (m)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
