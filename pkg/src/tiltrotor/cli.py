"""Command-line entry point: ``tiltrotor simulate | sweep | gaitcheck | figure4``.

Exit codes: 0 success, 1 usage or configuration error, 2 divergence or
singularity during a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .cli_io import (ConfigError, config_to_dict, load_config, write_error_plot, write_metrics_json,
                     write_trajectory_csv)
from .decoupler import DecouplerKind
from .gait import RHO_LIMIT, GaitKind, GaitPlan, invertibility_margin, tilt_angles_from_rho, \
    trot_margin_closed_form
from .simulator import ExperimentConfig, ReferenceKind, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
OUTPUT_ENV = "TILTROTOR_OUTPUT_DIR"

FIGURE4_RHOS = (0.65, 0.325, 0.0, -0.325, -0.65)
FIGURE4_SERIES = (("A", DecouplerKind.CONVENTIONAL), ("B", DecouplerKind.MODIFIED))


class UsageError(Exception):
    pass


def _out_dir(arg: str | None) -> Path:
    path = arg or os.environ.get(OUTPUT_ENV)
    if not path:
        raise UsageError(f"--out is required (or set {OUTPUT_ENV})")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_periods(text: str) -> list[float]:
    try:
        periods = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"--periods must be a comma-separated list of numbers: {exc}") from exc
    if not periods or any(not p > 0 for p in periods):
        raise UsageError("--periods needs at least one positive period")
    return periods


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args.out)
    traj, metrics = run_experiment(cfg)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_metrics_json(metrics, cfg, out / "metrics.json")
    (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
    if args.plot:
        write_error_plot(traj, out / "errors.svg", title=f"{cfg.reference.value} / {cfg.decoupler.value}")
    if metrics.diverged:
        print(f"run failed: {metrics.failure}", file=sys.stderr)
        return EXIT_RUNTIME
    ex, ey = metrics.steady_state_error
    sx, sy, sn = metrics.sup_error
    print(f"steady-state error: ({ex:.4f}, {ey:.4f}) m; sup error norm {sn:.4f} m "
          f"(x {sx:.4f}, y {sy:.4f}); saturation count {metrics.saturation_count}")
    return EXIT_OK


SWEEP_COLUMNS = ("period", "decoupler", "gait", "reference", "sup_error_x", "sup_error_y",
                 "sup_error_norm", "diverged", "saturation_count")


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    if not base.gait.is_trot:
        raise ConfigError("sweep needs a trot gait in the base config (gait.kind trot_instant or trot_continuous)")
    periods = _parse_periods(args.periods)
    out = _out_dir(args.out)
    rows = []
    failed = False
    for period in periods:
        for decoupler in DecouplerKind:
            try:
                cfg = base.with_(gait=GaitPlan(base.gait.kind, base.gait.rho_fixed, period, base.gait.rho_max),
                                 decoupler=decoupler)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            traj, metrics = run_experiment(cfg)
            sup = metrics.sup_error or (None, None, None)
            failed |= metrics.diverged
            rows.append([period, decoupler.value, cfg.gait.kind.value, cfg.reference.value, *sup,
                         metrics.diverged, metrics.saturation_count])
            if args.plot:
                write_error_plot(traj, out / f"errors_T{period:g}_{decoupler.value}.svg",
                                 title=f"T = {period:g} s, {decoupler.value}")
            print(f"T={period:g} {decoupler.value:12s} sup norm "
                  f"{'diverged' if metrics.diverged else format(sup[2], '.4f')}")
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(["" if v is None else (format(v, ".17g") if isinstance(v, float) else v)
                             for v in row])
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_gaitcheck(args) -> int:
    if args.rho is not None:
        if abs(args.rho) > RHO_LIMIT:
            raise UsageError(f"--rho must lie in [-{RHO_LIMIT}, {RHO_LIMIT}]")
        alpha = tilt_angles_from_rho(args.rho)
        print(f"rho = {args.rho:g}: margin = {invertibility_margin(alpha):.6f} "
              f"(closed form 4cos^2 = {trot_margin_closed_form(args.rho):.6f})")
        return EXIT_OK
    if args.period is not None:
        plan = GaitPlan(GaitKind(args.gait), period=args.period)
        ts = np.linspace(0.0, 2.0 * args.period, 2001)
        rhos = np.array([plan.rho(t) for t in ts])
    else:
        rhos = np.linspace(-RHO_LIMIT, RHO_LIMIT, 1001)
    margins = np.array([invertibility_margin(tilt_angles_from_rho(r)) for r in rhos])
    i = int(np.argmin(margins))
    print(f"minimum margin {margins[i]:.6f} at rho = {rhos[i]:.4f} over {len(rhos)} samples; "
          f"{'no singularity' if margins[i] > 0 else 'SINGULAR'}")
    return EXIT_OK if margins[i] > 0 else EXIT_RUNTIME


def cmd_figure4(args) -> int:
    base = load_config(args.config) if args.config else ExperimentConfig()
    base = base.with_(reference=ReferenceKind.SETPOINT)
    out = _out_dir(args.out)
    failed = False
    with open(out / "figure4.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("label", "decoupler", "rho", "ex", "ey", "converged", "diverged"))
        for letter, decoupler in FIGURE4_SERIES:
            for k, rho in enumerate(FIGURE4_RHOS, start=1):
                cfg = base.with_(gait=GaitPlan(GaitKind.FIXED, rho_fixed=rho), decoupler=decoupler)
                traj, metrics = run_experiment(cfg)
                failed |= metrics.diverged
                ex, ey = metrics.steady_state_error or (float("nan"), float("nan"))
                writer.writerow((f"{letter}{k}", decoupler.value, format(rho, ".17g"), format(ex, ".17g"),
                                 format(ey, ".17g"), metrics.converged, metrics.diverged))
                print(f"{letter}{k} (rho={rho:+.3f}, {decoupler.value:12s}): ({ex:+.3f}, {ey:+.3f})")
                if args.plot:
                    write_error_plot(traj, out / f"errors_{letter}{k}.svg", title=f"{letter}{k}")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiltrotor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run every (period x decoupler) combination")
    p.add_argument("--config", required=True)
    p.add_argument("--periods", required=True, help="comma-separated gait periods in seconds")
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gaitcheck", help="invertibility margin of the trot tilt assignment")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--rho", type=float)
    group.add_argument("--scan", action="store_true", help="minimum margin over rho in [-0.65, 0.65]")
    p.add_argument("--gait", choices=[k.value for k in GaitKind if k is not GaitKind.FIXED],
                   default=GaitKind.TROT_CONTINUOUS.value, help="with --scan and --period: gait to sample")
    p.add_argument("--period", type=float, help="with --scan: sample two periods of this gait instead")
    p.set_defaults(func=cmd_gaitcheck)

    p = sub.add_parser("figure4", help="setpoint steady-state errors for the ten fixed-tilt cases")
    p.add_argument("--out")
    p.add_argument("--config", help="optional base config (reference is forced to setpoint)")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_figure4)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
