"""Closest (k-1)-entangled reference states and the E_k measures.

For a state of purity P the reference sigma is a mixture of block W states,
one per block of a partition of the n modes into pieces of at most k-1
modes, weighted so that Tr(sigma^2) = P. Then

    E_k(rho) = tau_k(rho) - tau_k(sigma).

Three partition shapes occur:

* TwoBlock    -- k-1 >= n/2: blocks [k-1, n-k+1]; p1 solves p1^2 + (1-p1)^2 = P.
* EqualSplit  -- (k-1) divides n into q blocks; p2 = ... = pq.
* Remainder   -- q blocks of k-1 plus one block of r = n mod (k-1) modes;
                 p_r is chosen to maximize tau_k(sigma). Closed form for
                 (n, k) = (5, 3), bounded 1-D search otherwise.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InsufficientSamples, KOutOfRange, PurityOutOfRange
from .measures import DelocalizationProfile, tau
from .sxstate import DensityMatrix, _readonly, as_array, moment, purity

PURITY_SLACK = 1e-12
# junction of the two p_r branches for (n, k) = (5, 3)
BRANCH_PURITY_5_3 = 3 / 7


class Category(str, enum.Enum):
    TWO_BLOCK = "TwoBlock"
    EQUAL_SPLIT = "EqualSplit"
    REMAINDER = "Remainder"


@dataclass(frozen=True)
class ReferencePlan:
    n: int
    k: int
    blocks: tuple
    category: Category
    q: int

    @property
    def r(self) -> int:
        return self.n - self.q * (self.k - 1)

    @property
    def method(self) -> str:
        if self.category is Category.REMAINDER and (self.n, self.k) != (5, 3):
            return "numeric"
        return "closed-form"

    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.blocks)[:-1]]).astype(int)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "blocks": list(self.blocks),
            "category": self.category.value,
            "method": self.method,
        }


@dataclass(frozen=True)
class ReferenceWeights:
    """Mixing probabilities of the block W states.

    ``p_mid`` is shared by blocks 2..q and ``p_r`` belongs to the remainder
    block (zero when there is none).
    """

    p1: float
    p_mid: float
    p_r: float
    purity_min: float
    method: str = "closed-form"

    def block_weights(self, plan: ReferencePlan) -> np.ndarray:
        w = [self.p1] + [self.p_mid] * (plan.q - 1)
        if plan.r:
            w.append(self.p_r)
        return np.array(w, dtype=float)


@functools.lru_cache(maxsize=None)
def partition_plan(n: int, k: int) -> ReferencePlan:
    """Deterministic block partition for measuring k-partite delocalization.

    q = n // (k-1) blocks of size k-1, followed by a remainder block of
    n mod (k-1) modes if nonzero; blocks occupy contiguous ascending modes.
    """
    if n < 2 or not 2 <= k <= n:
        raise KOutOfRange(f"need n >= 2 and 2 <= k <= n, got n = {n}, k = {k}")
    s = k - 1
    q, r = divmod(n, s)
    blocks = (s,) * q + ((r,) if r else ())
    if 2 * s >= n:
        category = Category.TWO_BLOCK
    elif r == 0:
        category = Category.EQUAL_SPLIT
    else:
        category = Category.REMAINDER
    return ReferencePlan(n=n, k=k, blocks=blocks, category=category, q=q)


def min_purity(plan: ReferencePlan) -> float:
    """Purity at which sigma has uniform site populations: sum (size/n)^2."""
    return sum(b * b for b in plan.blocks) / plan.n**2


def _check_purity(plan, P):
    lo = min_purity(plan)
    if not (lo - PURITY_SLACK <= P <= 1 + PURITY_SLACK):
        raise PurityOutOfRange(
            f"purity {P!r} outside [{lo!r}, 1] for n = {plan.n}, k = {plan.k}"
        )
    return min(max(P, lo), 1.0)


def two_block_p1(P):
    """Larger root of p^2 + (1-p)^2 = P."""
    return 0.5 * (1.0 + np.sqrt(np.maximum(2.0 * P - 1.0, 0.0)))


def equal_split_p1(P, q):
    return (np.sqrt(np.maximum((q * q - q) * P - q + 1.0, 0.0)) + 1.0) / q


def remainder_p1(P, q, p_r):
    """p1 for given p_r from p1^2 + (1-p1-p_r)^2/(q-1) + p_r^2 = P."""
    s = 1.0 - p_r
    disc = (q - 1) * (q * (P - p_r * p_r) - s * s)
    return (s + np.sqrt(np.maximum(disc, 0.0))) / q


def p_r_5_3(P):
    """Remainder weight for (n, k) = (5, 3); branches join at P = 3/7."""
    P = np.asarray(P, dtype=float)
    upper = (2.0 - np.sqrt(1.0 + 3.0 * P)) / 6.0
    lower = (1.0 - np.sqrt(np.maximum(6.0 * P - 2.0, 0.0))) / 3.0
    out = np.where(P >= BRANCH_PURITY_5_3, upper, lower)
    return float(out) if out.ndim == 0 else out


def _pops_from_block_weights(plan, w):
    """Site populations of sigma for block weights w (shape (..., n_blocks))."""
    w = np.asarray(w, dtype=float)
    sizes = np.array(plan.blocks, dtype=float)
    per_site = w / sizes
    return np.repeat(per_site, plan.blocks, axis=-1)


def _remainder_block_weights(plan, P, p_r):
    p1 = remainder_p1(P, plan.q, p_r)
    pm = (1.0 - p1 - p_r) / (plan.q - 1)
    return p1, pm


def _numeric_p_r(plan, P):
    """Maximize tau_k(sigma(p_r)) over admissible p_r at fixed purity."""
    q, k = plan.q, plan.k
    root = math.sqrt(max(q * (q + 1) * P - q, 0.0))
    lo = max(0.0, (1.0 - root) / (q + 1))
    hi = min(1.0, (1.0 + root) / (q + 1))

    def weights(pr):
        p1, pm = _remainder_block_weights(plan, P, pr)
        return np.array([p1] + [pm] * (q - 1) + [pr])

    def admissible(pr):
        w = weights(pr)
        return w[-2] >= -1e-15 and w[0] >= pr - 1e-15

    def objective(pr):
        pops = _pops_from_block_weights(plan, np.clip(weights(pr), 0.0, None))
        return -tau(pops, k, check=False)

    grid = np.linspace(lo, hi, 401)
    ok = np.array([admissible(x) for x in grid])
    if not ok.any():
        # interval collapsed to a point: only the uniform configuration fits
        return lo
    cand = grid[ok]
    vals = np.array([objective(x) for x in cand])
    i = int(np.argmin(vals))
    a = cand[max(i - 1, 0)]
    b = cand[min(i + 1, cand.size - 1)]
    best_x, best_v = cand[i], vals[i]
    if b > a:
        res = minimize_scalar(objective, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-13})
        if res.fun < best_v and admissible(res.x):
            best_x = float(res.x)
    return float(best_x)


def solve_weights(plan: ReferencePlan, P: float, method: str = "auto") -> ReferenceWeights:
    """Reference weights at purity P for ``plan``.

    ``method="numeric"`` forces the 1-D maximization for Remainder plans,
    including (5, 3) where a closed form exists.
    """
    P = _check_purity(plan, float(P))
    pmin = min_purity(plan)
    if plan.category is Category.TWO_BLOCK:
        p1 = float(two_block_p1(P))
        if plan.q == 1:
            return ReferenceWeights(p1, 0.0, 1.0 - p1, pmin)
        return ReferenceWeights(p1, 1.0 - p1, 0.0, pmin)
    if plan.category is Category.EQUAL_SPLIT:
        p1 = float(equal_split_p1(P, plan.q))
        return ReferenceWeights(p1, (1.0 - p1) / (plan.q - 1), 0.0, pmin)
    if (plan.n, plan.k) == (5, 3) and method != "numeric":
        pr = p_r_5_3(P)
        label = "closed-form"
    else:
        pr = _numeric_p_r(plan, P)
        label = "numeric"
    p1, pm = _remainder_block_weights(plan, P, pr)
    return ReferenceWeights(float(p1), float(pm), float(pr), pmin, method=label)


def sigma_populations(plan: ReferencePlan, w: ReferenceWeights) -> np.ndarray:
    return _pops_from_block_weights(plan, w.block_weights(plan))


def build_sigma(plan: ReferencePlan, w: ReferenceWeights) -> DensityMatrix:
    """Mixture of block W states; block of size s has amplitude 1/sqrt(s) per mode."""
    out = np.zeros((plan.n, plan.n), dtype=np.complex128)
    for start, size, p in zip(plan.offsets(), plan.blocks, w.block_weights(plan)):
        out[start:start + size, start:start + size] = p / size
    return DensityMatrix(_readonly(out))


def border_values(n: int, k: int, purities, method: str = "auto") -> np.ndarray:
    """tau_k(sigma) at each purity; vectorized for closed-form plans."""
    plan = partition_plan(n, k)
    P = np.atleast_1d(np.asarray(purities, dtype=float))
    lo = min_purity(plan)
    if np.any(P < lo - PURITY_SLACK) or np.any(P > 1 + PURITY_SLACK):
        raise PurityOutOfRange(f"purities must lie in [{lo!r}, 1] for n = {n}, k = {k}")
    P = np.clip(P, lo, 1.0)
    if plan.category is Category.TWO_BLOCK:
        p1 = two_block_p1(P)
        w = np.stack([p1, 1.0 - p1], axis=-1)
    elif plan.category is Category.EQUAL_SPLIT:
        p1 = equal_split_p1(P, plan.q)
        pm = (1.0 - p1) / (plan.q - 1)
        w = np.concatenate([p1[:, None], np.repeat(pm[:, None], plan.q - 1, axis=1)], axis=1)
    elif plan.method == "closed-form" and method != "numeric":
        pr = p_r_5_3(P)
        p1, pm = _remainder_block_weights(plan, P, pr)
        w = np.stack([p1, pm, pr], axis=-1)
    else:
        w = np.array([solve_weights(plan, x, method="numeric").block_weights(plan) for x in P])
    pops = _pops_from_block_weights(plan, np.clip(w, 0.0, None))
    return np.atleast_1d(tau(pops, k, check=False))


def border_curve(n: int, k: int, purity_grid) -> list:
    """Analytic border as (purity, tau_k(sigma)) pairs."""
    grid = np.asarray(purity_grid, dtype=float)
    vals = border_values(n, k, grid)
    return list(zip(grid.tolist(), vals.tolist()))


@dataclass(frozen=True)
class FittedBorder:
    """Empirical border tau_k(P) from sampled (k-1)-producible states."""

    n: int
    k: int
    purity: np.ndarray
    value: np.ndarray
    samples: int

    def __call__(self, P):
        out = np.interp(P, self.purity, self.value)
        return float(out) if np.ndim(out) == 0 else out


def fitted_border(n: int, k: int, samples: int, rng_seed: int, grid_points: int = 161,
                  threads: int = 1) -> FittedBorder:
    """Fit the border from ``samples`` random (k-1)-producible states.

    The fit at purity P is the largest sampled tau_k among states with
    purity >= P. The true border is nonincreasing in P, so this monotone
    envelope approaches it from below and never crosses it.
    """
    from .sampling import SamplerConfig, scatter_experiment

    if samples < 10_000:
        raise InsufficientSamples(f"fitted_border needs >= 10^4 samples, got {samples}")
    plan = partition_plan(n, k)
    cfg = SamplerConfig(n=n, kind="producible", max_block=k - 1,
                        max_components=plan.q + 1, seed=rng_seed, count=samples)
    pts = scatter_experiment(cfg, k, threads=threads)
    order = np.argsort(pts[:, 0])
    P, T = pts[order, 0], pts[order, 1]
    suffix_max = np.maximum.accumulate(T[::-1])[::-1]
    grid = np.linspace(min_purity(plan), 1.0, grid_points)
    j = np.searchsorted(P, grid, side="left")
    vals = np.where(j < P.size, suffix_max[np.minimum(j, P.size - 1)], 0.0)
    return FittedBorder(n=n, k=k, purity=grid, value=vals, samples=samples)


def e_k_detail(rho, k: int, clamp: bool = True, fitted: FittedBorder | None = None,
               method: str = "auto"):
    """E_k with the route taken: closed-form, numeric, fitted or below-threshold."""
    a = as_array(rho)
    n = a.shape[0]
    if n < 2 or not 2 <= k <= n:
        raise KOutOfRange(f"need 2 <= k <= n = {n}, got {k}")
    plan = partition_plan(n, k)
    P = purity(a)
    if P < min_purity(plan) - PURITY_SLACK:
        return 0.0, "below-threshold"
    pops = np.clip(a.diagonal().real, 0.0, None)
    t_rho = tau(pops / pops.sum(), k, check=False)
    if fitted is not None:
        t_sig, label = fitted(min(P, 1.0)), "fitted"
    else:
        w = solve_weights(plan, min(P, 1.0), method=method)
        t_sig = tau(sigma_populations(plan, w), k, check=False)
        label = w.method
    val = t_rho - t_sig
    if clamp:
        val = max(val, 0.0)
    return float(val), label


def e_k(rho, k: int, clamp: bool = True, fitted: FittedBorder | None = None) -> float:
    """E_k(rho) = tau_k(rho) - tau_k(sigma); zero below the plan's minimum purity.

    With ``clamp`` (default) states inside the producible region, where the
    difference is negative, score 0: their closest reference is themselves.
    """
    return e_k_detail(rho, k, clamp=clamp, fitted=fitted)[0]


def delocalization_profile(rho, k_max: int | None = None, clamp: bool = True) -> DelocalizationProfile:
    a = as_array(rho)
    n = a.shape[0]
    k_max = n if k_max is None else min(k_max, n)
    prof = DelocalizationProfile(dim=n, purity=purity(a))
    pops = np.clip(a.diagonal().real, 0.0, None)
    pops = pops / pops.sum()
    for k in range(2, k_max + 1):
        prof.moments[k] = moment(a, k)
        prof.tau[k] = tau(pops, k, check=False)
        prof.e[k], prof.methods[k] = e_k_detail(a, k, clamp=clamp)
    return prof
