"""Gait-scheduled tilt-rotor quadcopter: plant model, trot gaits, decouplers,
feedback-linearizing control and a closed-loop simulator."""

from .decoupler import (AttitudeReference, DecouplerKind, LateralForces, SingularAllocationError,
                        hover_rotor_loading, lateral_equilibrium_forces, reference_attitude)
from .flc import (GAIN_PRESETS, AttitudeGains, GainOrdering, PositionGains, RotorSpeedError,
                  SingularDecouplingError, check_gain_stability, routh_third_order)
from .gait import GaitKind, GaitPlan, invertibility_margin, tilt_angles_from_rho
from .simulator import (DivergenceError, ExperimentConfig, Metrics, NonConvergedWarning, ReferenceKind,
                        Trajectory, reference_sample, run_experiment, simulate, step)
from .vehicle_model import (GimbalLockError, VehicleParams, VehicleState, force_map, hover_state,
                            state_derivative, torque_map)

__all__ = [
    "AttitudeGains", "AttitudeReference", "DecouplerKind", "DivergenceError", "ExperimentConfig",
    "GAIN_PRESETS", "GainOrdering", "GaitKind", "GaitPlan", "GimbalLockError", "LateralForces", "Metrics",
    "NonConvergedWarning", "PositionGains", "ReferenceKind", "RotorSpeedError", "SingularAllocationError",
    "SingularDecouplingError", "Trajectory", "VehicleParams", "VehicleState", "check_gain_stability",
    "force_map", "hover_rotor_loading", "hover_state", "invertibility_margin", "lateral_equilibrium_forces",
    "reference_attitude", "reference_sample", "routh_third_order", "run_experiment", "simulate",
    "state_derivative", "step", "tilt_angles_from_rho", "torque_map",
]
