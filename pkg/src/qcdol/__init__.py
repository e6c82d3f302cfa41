"""
Closed-loop designed open-loop control for bilinear quantum systems.

Simulate a feedback law, freeze the simulated control values into
piecewise-constant pulses, drive the plant with them open loop, and measure
how the resulting state error behaves as the simulation grid is refined.
"""

from .analysis import (
    SweepRecord,
    Theorem2Limit,
    appendix_identity_checks,
    convergence_sweep,
    slope_fit,
    theorem1_check,
    theorem2_check,
    theorem2_limit,
    theorem3_bound,
)
from .control_model import AffineProtocol, BilinearSystem, CallableProtocol
from .errors import (
    ConfigError,
    DivergenceError,
    GridError,
    InsufficientDataError,
    QuadratureError,
    ReferenceAccuracyError,
)
from .integrators import ButcherTableau, step1_simulate, tableau
from .pipeline import (
    ReferenceTrajectory,
    reference_trajectory,
    run_pipeline,
    step2_generate_controls,
    step3_propagate,
)
from .twoqubit import default_setup, proposition1_trace

__version__ = "0.1.0"
