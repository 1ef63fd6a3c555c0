"""Multivariable generalized super-twisting control: bound estimation, gain
design, Lyapunov verification and closed-loop simulation."""

from .bounds import BoundConstants, SamplingDomain, UncertainPlant, estimate_bounds
from .design import DesignInputs, DesignOptions, DesignResult, design_gains, verify_gain_selection
from .lyapunov import LyapCert
from .sta import StaParams

__all__ = [
    "BoundConstants", "SamplingDomain", "UncertainPlant", "estimate_bounds",
    "DesignInputs", "DesignOptions", "DesignResult", "design_gains", "verify_gain_selection",
    "LyapCert", "StaParams",
]
__version__ = "0.1.0"
