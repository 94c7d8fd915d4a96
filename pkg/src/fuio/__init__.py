"""Functional unknown-input observers for LTI and LTV systems."""

from .errors import (
    DimensionError,
    DivergenceError,
    ExprEvalError,
    ExprSyntaxError,
    FuioError,
    InfeasibleDesign,
)
from .ltv_gpebo import ReducedLtvSystem, frozen_stability_scan, reduce_to_w
from .sim_engine import (
    compare_oracle,
    derivative_feed_oracle,
    rk4_integrate,
    rk4_linear,
    run_bilinear_demo,
    run_ltv_scenario,
    run_mimo_scenario,
)
from .system_model import (
    LtiSystem,
    LtvCanonicalSystem,
    RelativeDegreeProfile,
    apply_r_override,
    compute_relative_degrees,
)
from .time_expr import parse_time_expr
from .uio_synth import FunctionalObserverRealization, design_uio, place_observer_gain

__version__ = "0.1.0"
