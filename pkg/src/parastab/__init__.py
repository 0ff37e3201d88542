"""Boundary rapid stabilization of 1-D semilinear parabolic equations.

Pipeline: discretise the Sturm-Liouville operator, reduce to the unstable
modes, place poles with a scalar boundary feedback, certify decay with a
Lyapunov function, then simulate and check the trajectories.
"""
from ._validation import BlowUpError, CertificateError, HypothesisError, UncontrollableError
from .analysis import DecayReport, composite_bound, decay_fit, energy_monitors, lmi_runtime_monitor, lyapunov_trace
from .certificate import StabilityCertificate, certify, select_ntilde, solve_lyapunov
from .config import RunConfig, parse_config
from .controller import (ControllerDesign, build_reduced_system, kalman_controllability, modal_coefficients,
                         place_poles, select_mode_count)
from .estimator import DecayRateEstimator, RapidStabilizer
from .nonlinearity import Nonlinearity, evaluate_nonlinearity, growth_envelope_check
from .simulator import (AlwaysOn, ClosedLoopState, imex_step, OpenLoop, ProblemSpec, SimConfig, Trajectory, WaitThenControl, initial_condition,
                        simulate)
from .sturm_liouville import CoefficientField, Grid, GridFunction, SpectralBasis, build_basis, norm, sobolev_constants

__version__ = "0.1.0"
