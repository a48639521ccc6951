"""Delocalization functionals of site populations and coherences.

``tau(p, k)`` is k! times the k-th elementary symmetric polynomial of the
populations. Expanded in the moments M_j = sum_i p_i^j it gives the familiar
polynomials

    tau_2 = 1 - M_2
    tau_3 = 1 - 3 M_2 + 2 M_3
    tau_4 = 1 - 6 M_2 + 8 M_3 + 3 M_2^2 - 6 M_4
    tau_5 = 1 - 10 M_2 + 20 M_3 + 15 M_2^2 - 30 M_4 - 20 M_2 M_3 + 24 M_5

for populations on the simplex (M_1 = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .errors import EqualIndices, IndexOutOfRange, KOutOfRange
from .sxstate import as_array, moment, purity

SIMPLEX_ATOL = 1e-12


def _check_k(k, n):
    if not 2 <= k <= n:
        raise KOutOfRange(f"k must satisfy 2 <= k <= n = {n}, got {k}")


def elementary_symmetric(populations, k: int) -> np.ndarray:
    """e_k of the last axis by the product recurrence e_j += x e_{j-1}.

    Works on a single vector or a batch; every update adds nonnegative terms
    when the inputs are nonnegative, so there is no cancellation.
    """
    x = np.asarray(populations, dtype=float)
    n = x.shape[-1]
    if k > n:
        return np.zeros(x.shape[:-1])
    e = np.zeros((k + 1,) + x.shape[:-1])
    e[0] = 1.0
    for i in range(n):
        xi = x[..., i]
        top = min(i + 1, k)
        # descending so e[j-1] is still the previous-row value
        e[top:0:-1] += xi * e[top - 1::-1][:top]
    return e[k]


def tau(populations, k: int, check: bool = True):
    """k-partite delocalization tau_k = k! e_k(populations).

    Parameters
    ----------
    populations : array_like, shape (..., n)
        Site populations; each vector must lie on the probability simplex.
    k : int
        Order, 2 <= k <= n.
    check : bool
        Verify the simplex precondition (disable in hot loops).
    """
    p = np.asarray(populations, dtype=float)
    n = p.shape[-1]
    _check_k(k, n)
    if check:
        if np.any(p < -SIMPLEX_ATOL) or np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_ATOL):
            raise ValueError("populations must be nonnegative and sum to 1")
    out = factorial(k) * elementary_symmetric(p, k)
    return float(out) if out.ndim == 0 else out


def tau_from_moments(moments, k: int):
    """Explicit moment polynomials for k = 2..5.

    ``moments`` maps j -> M_j (scalars or arrays) for j = 2..k.
    """
    M = moments
    if k == 2:
        return 1 - M[2]
    if k == 3:
        return 1 - 3 * M[2] + 2 * M[3]
    if k == 4:
        return 1 - 6 * M[2] + 8 * M[3] + 3 * M[2] ** 2 - 6 * M[4]
    if k == 5:
        return (1 - 10 * M[2] + 20 * M[3] + 15 * M[2] ** 2 - 30 * M[4]
                - 20 * M[2] * M[3] + 24 * M[5])
    raise KOutOfRange(f"explicit moment polynomials exist for k = 2..5, got {k}")


def tau_newton(moments, k: int):
    """k! e_k from power sums through Newton's identities, any k.

    With M_1 = 1, j e_j = sum_{i=1}^{j} (-1)^(i-1) e_{j-i} M_i.
    """
    M = dict(moments)
    M.setdefault(1, 1.0)
    e = [1.0]
    for j in range(1, k + 1):
        s = 0.0
        for i in range(1, j + 1):
            s = s + (-1) ** (i - 1) * e[j - i] * M[i]
        e.append(s / j)
    return factorial(k) * e[k]


def tau_max(n: int, k: int) -> float:
    """tau_k of uniform populations 1/n, i.e. of the n-mode W state."""
    return factorial(k) * comb(n, k) / n**k


def tangle(rho, a: int, b: int) -> float:
    """Pairwise tangle 4 |rho_ab|^2."""
    m = as_array(rho)
    n = m.shape[0]
    if not (0 <= a < n and 0 <= b < n):
        raise IndexOutOfRange(f"mode indices must lie in [0, {n}), got ({a}, {b})")
    if a == b:
        raise EqualIndices(f"tangle needs two distinct modes, got a = b = {a}")
    return float(4 * abs(m[a, b]) ** 2)


def total_tangle(rho) -> float:
    """Sum of tau_ab over ordered pairs a != b."""
    m = as_array(rho)
    off = np.abs(m) ** 2
    return float(4 * (off.sum() - np.trace(off)))


def e2_purity_form(rho) -> float:
    """Tr(rho^2) - M_2(rho), which equals 2 sum_{a<b} |rho_ab|^2."""
    return purity(rho) - moment(rho, 2)


@dataclass
class DelocalizationProfile:
    """Purity, moments, tau_k and E_k for k = 2..n of one state.

    ``moments``, ``tau``, ``e`` and ``methods`` are keyed by k.
    """

    dim: int
    purity: float
    moments: dict = field(default_factory=dict)
    tau: dict = field(default_factory=dict)
    e: dict = field(default_factory=dict)
    methods: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        keyed = lambda d: {str(k): v for k, v in sorted(d.items())}
        return {
            "dim": self.dim,
            "purity": self.purity,
            "moments": keyed(self.moments),
            "tau": keyed(self.tau),
            "E": keyed(self.e),
            "method": keyed(self.methods),
        }
