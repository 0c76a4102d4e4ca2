"""f-DP / GDP privacy accounting for noisy gradient descent variants.

Submodules:
    tradeoff     tradeoff-curve arithmetic (Gaussian curves, subsampling)
    schedule     shift schedules and their closed-form optima
    accountant   privacy bounds for GD / CGD / SGD, CLT approximations
    conversions  f-DP <-> (eps, delta) <-> RDP conversions
    prv          privacy-loss random variables and FFT composition
    oracle       Monte-Carlo and brute-force verification
    cli          command-line front end
"""

from .errors import (
    AccuracyError,
    ConfigurationError,
    DomainError,
    InvalidCurveError,
    VerificationError,
)

__all__ = [
    "AccuracyError",
    "ConfigurationError",
    "DomainError",
    "InvalidCurveError",
    "VerificationError",
]

__version__ = "0.1.0"
