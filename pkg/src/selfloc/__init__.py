"""Calibration-free indoor positioning: Wi-Fi ranging fused with dead reckoning.

Every trainable parameter (ranging model, start pose, heading reference,
stride coefficient) is optimized online; a seeded synthetic world makes all
behaviour reproducible and testable at desk scale.
"""

from .calibration import (CalibrationBuffer, CalibrationTrace, GdConfig,
                          InitialCalResult, SelfCalResult, Theta,
                          initial_calibrate, initial_cost,
                          initial_cost_gradient, ls_position,
                          ls_position_gradient, self_calibrate, selfcal_cost,
                          selfcal_cost_gradient)
from .errors import (DegenerateGeometryError, DegenerateOrientationError,
                     DivergenceError, InsufficientDataError, InvalidInputError,
                     ScenarioError, SelflocError, SingularInnovationError)
from .fusion import (FilterState, GatePolicy, NoiseConfig, init_state, predict,
                     should_range, step_engine, update)
from .metrics import RunReport, cdf_points, compute_report, mean_ranging_interval
from .orientation import (ImuSample, Quaternion, dcm_from_quaternion,
                          heading_from_quaternion, to_global,
                          update_orientation, wrap_to_pi)
from .pdr import (PdrParams, StepEvent, StepExtremes, dead_reckon, detect_steps,
                  lowpass, roll_forward, step_length)
from .pipeline import (EngineConfig, ImuConfig, RunResult, ScenarioConfig,
                       run_scenario, steps_from_imu)
from .ranging import (AccessPoint, ApRegistry, RangingSnapshot, RssParams,
                      RttParams, SelectedObservations, distance_gradient,
                      estimate_distance, select_aps)
from .simulator import (RssWorldModel, RttWorldModel, SyntheticWorld, Walk,
                        WorldConfig, simulate_steps, snapshot_at, synth_ftm,
                        synth_imu, synth_rss, synth_truth)

__version__ = "0.1.0"
