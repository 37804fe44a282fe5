"""
Order-j decomposition of the summation forward error.

E_n expands into a polynomial in d_2..d_n; S_k^(j) collects the order-j terms
of E_k. They obey S_k^(1) = S_{k-1}^(1) + d_k s_k and
S_k^(j) = S_{k-1}^(j) + d_k S_{k-1}^(j-1), with S_k^(j) = 0 for j >= k.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import OrderRangeError, SizeError
from .summation import SummationTrace

DEFAULT_MAX_ORDER = 4
BRUTE_FORCE_LIMIT = 20


@dataclass
class OrderDecomposition:
    """terms[k-1, j-1] holds S_k^(j) for k = 1..n and j = 1..max_order."""

    terms: np.ndarray
    n: int

    @property
    def max_order(self) -> int:
        return self.terms.shape[1]

    def term(self, k: int, j: int) -> float:
        if j >= k or j > self.max_order:
            return 0.0
        return float(self.terms[k - 1, j - 1])

    def total(self) -> np.ndarray:
        """Sum over the stored orders for every k."""
        return self.terms.sum(axis=1)


def decompose(trace: SummationTrace, max_order: int = None) -> OrderDecomposition:
    n = trace.n
    if max_order is None:
        max_order = min(DEFAULT_MAX_ORDER, n - 1)
        if max_order == 0:
            return OrderDecomposition(terms=np.zeros((n, 0)), n=n)
    if not 1 <= max_order <= n - 1:
        raise OrderRangeError(f"max_order must be in 1..{n - 1}, got {max_order}")
    s, d = trace.exact_partial, trace.delta
    terms = np.zeros((n, max_order))
    for k in range(1, n):
        prev = terms[k - 1]
        lower = np.empty(max_order)
        lower[0] = s[k]
        lower[1:] = prev[:-1]
        terms[k] = prev + d[k] * lower
    return OrderDecomposition(terms=terms, n=n)


def brute_force_orders(trace: SummationTrace) -> OrderDecomposition:
    """Expand s_k d_k prod_{j>k} (1 + d_j) monomial by monomial, for every prefix."""
    n = trace.n
    if n > BRUTE_FORCE_LIMIT:
        raise SizeError(f"brute-force expansion is limited to n <= {BRUTE_FORCE_LIMIT}, got {n}")
    s, d = trace.exact_partial, trace.delta
    terms = np.zeros((n, max(n - 1, 0)))
    # 0-based: term i is s_i d_i, prefix end m collects subsets of i+1..m
    for m in range(1, n):
        for i in range(1, m + 1):
            later = range(i + 1, m + 1)
            for size in range(0, m - i + 1):
                for subset in itertools.combinations(later, size):
                    terms[m, size] += s[i] * d[i] * math.prod(d[j] for j in subset)
    return OrderDecomposition(terms=terms, n=n)


def check_hockey_stick(dec: OrderDecomposition, trace: SummationTrace) -> float:
    """Max residual of S_k^(1) = sum_i d_i s_i and S_k^(j) = sum_i d_i S_{i-1}^(j-1)."""
    if dec.max_order == 0:
        return 0.0
    s, d = trace.exact_partial, trace.delta
    worst = 0.0
    first = np.cumsum(np.where(np.arange(trace.n) > 0, d * s, 0.0))
    worst = max(worst, float(np.max(np.abs(first - dec.terms[:, 0]))))
    for j in range(1, dec.max_order):
        shifted = np.zeros(trace.n)
        shifted[1:] = d[1:] * dec.terms[:-1, j - 1]
        worst = max(worst, float(np.max(np.abs(np.cumsum(shifted) - dec.terms[:, j]))))
    return worst


def order_norms(dec: OrderDecomposition) -> np.ndarray:
    """max_k |S_k^(j)| for each stored order j."""
    if dec.max_order == 0:
        return np.zeros(0)
    return np.max(np.abs(dec.terms), axis=0)
