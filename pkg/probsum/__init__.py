"""
probsum: low-precision recursive summation under deterministic and
stochastic rounding, with probabilistic forward-error bounds.
"""

__version__ = "0.1.0"

from .errors import ProbsumError
from .fpemu import BF16, FP16, FP32, FloatFormat, RoundingMode, parse_format
from .summation import SummationTrace, recursive_sum, sum_trials

__all__ = [
    "BF16",
    "FP16",
    "FP32",
    "FloatFormat",
    "ProbsumError",
    "RoundingMode",
    "SummationTrace",
    "parse_format",
    "recursive_sum",
    "sum_trials",
]
