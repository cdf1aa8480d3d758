"""Trajectory tracking for mechanical control systems by oscillatory inputs.

The package covers the differential-geometric kernel (``geometry``), vehicle
models (``models``), oscillation sequences (``sequences``), symmetric-product
families and certificates (``cones``), law synthesis (``synthesis``),
closed-loop integration (``dynamics``) and an experiment runner (``cli``).
"""
from .geometry import (Chart, Connection, ConfigurationError, TangentPoint, UndefinedResidual, VectorField,
                       covariant_derivative, geodesic_spray, lie_bracket, symmetric_product,
                       verify_triple_bracket, vertical_lift)
from .models import (Faccs, HovercraftParams, SubmarineParams, flat_system, hovercraft, orthogonality_drift,
                     sample_states, submarine)
from .sequences import PeriodicFn, lambda_T, lo, mean_value, pairing, phi, psi
from .cones import (BracketTree, Combination, HConeElement, LinealPair, TrackabilityReport, certify,
                    generate_H, generate_Z, membership_residual, span_rank)
from .synthesis import (ControlLaw, EpsSchedule, Parameterization, ReferenceCurve, averaged_counterpart,
                        eta_schedule, oscillatory_law, parameterize_reference, recursion_H, recursion_Z,
                        synth_single_level)
from .dynamics import IntegrationError, IntegratorConfig, Trajectory, convergence_study, integrate, tracking_error

__version__ = "0.1.0"
