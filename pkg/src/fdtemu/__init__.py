"""Fluctuation-dissipation response emulation toolkit.

Estimates a system's mean response to constant forcing from its unforced
internal fluctuations: lag-indexed emulators are trained on anomaly data,
their perturbed-minus-unperturbed outputs are averaged over fluctuation
samples and integrated over lags.  A linear stochastic truth system with an
exact analytic response provides the verification oracle.
"""

__version__ = "0.1.0"

from .errors import ConfigError, FormatError, ToolkitError, ValidationError

__all__ = [
    "ConfigError",
    "FormatError",
    "ToolkitError",
    "ValidationError",
    "__version__",
]
