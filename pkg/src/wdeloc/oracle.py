"""Brute-force checks of the analytic reference-state construction.

Everything here is deliberately independent of the closed forms it checks:
the border search optimizes over explicit mixtures of block-supported pure
states, the overlap check builds population vectors mode by mode, and the
ordered sum enumerates index tuples directly.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import factorial

import numpy as np

from .errors import InfeasiblePurity
from .refstate import (
    BRANCH_PURITY_5_3,
    Category,
    border_values,
    build_sigma,
    min_purity,
    p_r_5_3,
    partition_plan,
    sigma_populations,
    solve_weights,
)
from .measures import tau
from .sxstate import purity as state_purity

SHELL_TOL = 1e-6
BORDER_TOL = 1e-6
OVERLAP_TOL = 1e-12
WEIGHT_TOL = 1e-10
# search reaches the analytic border to within this at budget 1e5
APPROACH_TOL = 5e-3

DOMINANCE_CASES = ((3, 3), (5, 3), (6, 3), (6, 4), (6, 5), (6, 6))


@dataclass
class VerificationReport:
    check_name: str
    instances: int
    max_violation: float
    worst_case: dict
    passed: bool
    tolerance: float
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def ordered_sum(populations, k: int) -> np.ndarray:
    """Sum over i_0 < i_1 < ... < i_{k-1} of the product of populations.

    Enumerates every index tuple; shape (..., n) -> (...).
    """
    x = np.asarray(populations, dtype=float)
    n = x.shape[-1]
    combos = np.array(list(itertools.combinations(range(n), k)), dtype=int)
    if combos.size == 0:
        return np.zeros(x.shape[:-1])
    return x[..., combos].prod(axis=-1).sum(axis=-1)


def ordered_sum_tau(populations, k: int):
    return factorial(k) * ordered_sum(populations, k)


# -- border search ------------------------------------------------------------

@dataclass
class BorderSearchResult:
    n: int
    k: int
    purity: float
    best_tau: float
    border: float
    max_excess: float
    feasible: int
    evaluated: int
    argmax: dict

    @property
    def gap(self) -> float:
        return self.border - self.best_tau


def _draw_candidates(n, max_block, C, m, rng):
    ncomp = rng.integers(1, C + 1, size=m)
    sizes = rng.integers(1, max_block + 1, size=(m, C))
    ranks = np.argsort(np.argsort(rng.random((m, C, n)), axis=2), axis=2)
    mask = ranks < sizes[..., None]
    psi = (rng.standard_normal((m, C, n)) + 1j * rng.standard_normal((m, C, n))) * mask
    psi /= np.linalg.norm(psi, axis=2, keepdims=True)
    logw = np.log(rng.standard_exponential((m, C)))
    logw[np.arange(C)[None, :] >= ncomp[:, None]] = -np.inf
    return psi, logw, mask


def _weights_at(logw, t):
    finite = np.isfinite(logw)
    z = np.where(finite, t[:, None] * np.where(finite, logw, 0.0), -np.inf)
    z -= z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def _project_to_shell(psi, logw, target, t_max=80.0, iters=100):
    """Tilt weights w ~ w0^t so that the mixture purity equals ``target``.

    Returns (weights, purity, feasible mask). Mixture purity is w^T G w with
    G_ab = |<psi_a|psi_b>|^2.
    """
    G = np.abs(np.einsum("mai,mbi->mab", np.conj(psi), psi)) ** 2
    pur = lambda w: np.einsum("ma,mab,mb->m", w, G, w)
    m = psi.shape[0]
    lo = np.zeros(m)
    hi = np.full(m, t_max)
    f_lo = pur(_weights_at(logw, lo)) - target
    f_hi = pur(_weights_at(logw, hi)) - target
    ok = (f_lo <= 0) & (f_hi >= 0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = pur(_weights_at(logw, mid)) - target
        up = f_mid < 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    w = _weights_at(logw, 0.5 * (lo + hi))
    P = pur(w)
    ok &= np.abs(P - target) <= SHELL_TOL
    return w, P, ok


def _evaluate(psi, w, k):
    pops = np.einsum("ma,mai->mi", w, np.abs(psi) ** 2)
    pops = np.clip(pops, 0.0, None)
    pops /= pops.sum(axis=1, keepdims=True)
    return np.atleast_1d(tau(pops, k, check=False))


def border_search(n: int, k: int, purity: float, budget: int = 100_000, rng=None,
                  refine_fraction: float = 0.2, chunk: int = 8192) -> BorderSearchResult:
    """Largest tau_k found among (k-1)-producible states at fixed purity.

    Candidates mix up to q+1 Haar-random pure states, each supported on a
    random subset of at most k-1 modes, with Dirichlet weights tilted onto
    the purity shell. A ``refine_fraction`` of the budget perturbs the best
    candidates locally (same supports, jittered amplitudes and weights).
    """
    rng = _rng(rng)
    plan = partition_plan(n, k)
    lo = min_purity(plan)
    if not (lo - 1e-12 <= purity <= 1 + 1e-12):
        raise InfeasiblePurity(f"purity {purity!r} outside [{lo!r}, 1] for n = {n}, k = {k}")
    if budget < 1000:
        raise ValueError(f"budget must be >= 1000, got {budget}")
    purity = min(max(purity, lo), 1.0)
    C = plan.q + 1
    closed = plan.method == "closed-form"
    border_target = float(border_values(n, k, [purity])[0])

    def border_at(P):
        if closed:
            return border_values(n, k, np.clip(P, lo, 1.0))
        return np.full(P.shape, border_target)

    best = {"tau": -np.inf}
    max_excess = -np.inf
    feasible = 0
    evaluated = 0
    pool = []

    def consider(psi, logw, mask):
        nonlocal max_excess, feasible, evaluated
        if purity >= 1 - 1e-12:
            # only single pure components sit on the P = 1 shell
            top = np.argmax(logw, axis=1)
            logw = np.where(np.arange(C)[None, :] == top[:, None], 0.0, -np.inf)
            w = _weights_at(logw, np.ones(len(logw)))
            P = np.ones(len(logw))
            ok = np.ones(len(logw), dtype=bool)
        else:
            w, P, ok = _project_to_shell(psi, logw, purity)
        evaluated += len(ok)
        if not ok.any():
            return
        t = _evaluate(psi[ok], w[ok], k)
        excess = t - border_at(P[ok])
        feasible += int(ok.sum())
        max_excess = max(max_excess, float(excess.max()))
        i = int(np.argmax(t))
        if t[i] > best["tau"]:
            idx = np.flatnonzero(ok)[i]
            best.update(tau=float(t[i]), purity=float(P[idx]), weights=w[idx],
                        psi=psi[idx], supports=mask[idx])
        order = np.argsort(t)[::-1][:32]
        keep = np.flatnonzero(ok)[order]
        pool.extend(zip(t[order], psi[keep], np.log(np.maximum(w[keep], 1e-300)), mask[keep]))
        pool.sort(key=lambda x: -x[0])
        del pool[32:]

    n_random = int(budget * (1 - refine_fraction))
    done = 0
    while done < n_random:
        m = min(chunk, n_random - done)
        consider(*_draw_candidates(n, k - 1, C, m, rng))
        done += m

    remaining = budget - done
    step = 0.1
    while remaining > 0 and pool:
        seeds = pool[:8]
        per = max(1, min(remaining, 2048) // len(seeds))
        psi = np.concatenate([np.repeat(s[1][None], per, axis=0) for s in seeds])
        logw = np.concatenate([np.repeat(s[2][None], per, axis=0) for s in seeds])
        mask = np.concatenate([np.repeat(s[3][None], per, axis=0) for s in seeds])
        noise = rng.standard_normal(psi.shape) + 1j * rng.standard_normal(psi.shape)
        psi = (psi + step * noise) * mask
        norms = np.linalg.norm(psi, axis=2, keepdims=True)
        psi = np.where(norms > 0, psi / np.where(norms > 0, norms, 1), psi)
        logw = logw + step * rng.standard_normal(logw.shape)
        consider(psi, logw, mask)
        remaining -= len(psi)
        step = max(step * 0.85, 1e-4)

    if feasible == 0:
        raise InfeasiblePurity(f"no sampled candidate reached purity {purity!r}")
    argmax = {
        "purity": best["purity"],
        "weights": np.round(best["weights"], 12).tolist(),
        "supports": [np.flatnonzero(s).tolist() for s in best["supports"]],
        "populations": np.round(
            np.einsum("a,ai->i", best["weights"], np.abs(best["psi"]) ** 2), 12).tolist(),
    }
    return BorderSearchResult(n=n, k=k, purity=purity, best_tau=best["tau"],
                              border=border_target, max_excess=max_excess,
                              feasible=feasible, evaluated=evaluated, argmax=argmax)


def dominance_check(cases=DOMINANCE_CASES, points: int = 10, budget: int = 100_000,
                    seed: int = 0, threads: int = 1) -> VerificationReport:
    """border_search never beats the analytic border by more than BORDER_TOL.

    Every (case, purity) search owns a seed spawned from ``seed``, so the
    report does not depend on ``threads``.
    """
    jobs = []
    ss = np.random.SeedSequence(seed)
    for (n, k), child in zip(cases, ss.spawn(len(cases))):
        grid = np.linspace(min_purity(partition_plan(n, k)), 1.0, points)
        for P, sub in zip(grid, child.spawn(points)):
            jobs.append((n, k, float(P), sub))

    def run(job):
        n, k, P, sub = job
        return border_search(n, k, P, budget, np.random.default_rng(sub))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    worst = {}
    max_v = -np.inf
    gaps = {}
    for (n, k, P, _), res in zip(jobs, results):
        gaps[f"{n},{k},{P:.6f}"] = res.gap
        if res.max_excess > max_v:
            max_v = res.max_excess
            worst = {"n": n, "k": k, "purity": P, "best_tau": res.best_tau,
                     "border": res.border, "argmax": res.argmax}
    count = len(jobs)
    return VerificationReport(
        check_name="reference_dominance", instances=count, max_violation=max_v,
        worst_case=worst, passed=bool(max_v <= BORDER_TOL), tolerance=BORDER_TOL,
        notes={"budget": budget, "approach_tolerance": APPROACH_TOL,
               "max_gap_below_border": max(gaps.values()), "gaps": gaps},
    )


# -- overlap inequality -------------------------------------------------------

def overlap_m2(k: int, m: int, p1, p2):
    """M_2 contributions of p1 sigma_1 + p2 sigma_2 built mode by mode.

    sigma_1 is uniform over modes 0..k-2. In the overlapping layout sigma_2 is
    uniform over m modes k-2..k+m-3, sharing mode k-2; in the disjoint layout
    that shared population moves so sigma_2 covers the m-1 modes k-1..k+m-3.
    Returns (overlapping, disjoint).
    """
    n = k - 2 + m
    p1 = np.asarray(p1, dtype=float)[..., None]
    p2 = np.asarray(p2, dtype=float)[..., None]
    s1 = np.zeros(n); s1[: k - 1] = 1.0 / (k - 1)
    s2o = np.zeros(n); s2o[k - 2:] = 1.0 / m
    s2d = np.zeros(n); s2d[k - 1:] = 1.0 / (m - 1)
    over = ((p1 * s1 + p2 * s2o) ** 2).sum(axis=-1)
    disj = ((p1 * s1 + p2 * s2d) ** 2).sum(axis=-1)
    return over, disj


def overlap_m2_closed_form(k, m, p1, p2):
    return p1**2 / (k - 1) + p2**2 / m + 2 * p1 * p2 / (m * (k - 1))


def overlap_inequality_check(k: int, m: int, trials: int = 10_000, rng=None) -> VerificationReport:
    """Overlapping constituents never lower M_2 while p2 <= 2(m-1)/(k-1) p1."""
    if not 2 <= m <= k - 1:
        raise ValueError(f"need 2 <= m <= k-1, got k = {k}, m = {m}")
    if trials < 1000:
        raise ValueError(f"trials must be >= 1000, got {trials}")
    rng = _rng(rng)
    bound = 2 * (m - 1) / (k - 1)
    p1 = rng.uniform(0.0, 1.0, trials)
    cap = np.minimum(np.minimum(p1, 1.0 - p1), bound * p1)
    p2 = rng.uniform(0.0, 1.0, trials) * cap
    # edges: no second constituent, and exactly on the bound
    p1 = np.concatenate([p1, [0.6, 0.6]])
    p2 = np.concatenate([p2, [0.0, min(0.4, bound * 0.6)]])
    over, disj = overlap_m2(k, m, p1, p2)
    viol = disj - over
    i = int(np.argmax(viol))
    formula_err = float(np.abs(over - overlap_m2_closed_form(k, m, p1, p2)).max())

    # just beyond the bound the inequality is allowed to fail; record only
    q1 = rng.uniform(0.05, 0.5, 1000)
    q2 = bound * q1 * rng.uniform(1.0 + 1e-6, 1.1, 1000)
    o_out, d_out = overlap_m2(k, m, q1, q2)
    outside = d_out - o_out
    return VerificationReport(
        check_name=f"overlap_inequality_k{k}_m{m}", instances=int(p1.size),
        max_violation=float(viol[i]),
        worst_case={"k": k, "m": m, "p1": float(p1[i]), "p2": float(p2[i])},
        passed=bool(viol[i] <= OVERLAP_TOL and formula_err <= OVERLAP_TOL),
        tolerance=OVERLAP_TOL,
        notes={"bound_ratio": bound, "closed_form_error": formula_err,
               "outside_range_max_violation": float(outside.max()),
               "outside_range_reversals": int((outside > 0).sum())},
    )


def overlap_suite(k_max: int = 6, trials: int = 10_000, seed: int = 0) -> VerificationReport:
    reports = []
    ss = np.random.SeedSequence(seed)
    pairs = [(k, m) for k in range(3, k_max + 1) for m in range(2, k)]
    for (k, m), child in zip(pairs, ss.spawn(len(pairs))):
        reports.append(overlap_inequality_check(k, m, trials, np.random.default_rng(child)))
    worst = max(reports, key=lambda r: r.max_violation)
    return VerificationReport(
        check_name="overlap_inequality", instances=sum(r.instances for r in reports),
        max_violation=worst.max_violation, worst_case=worst.worst_case,
        passed=all(r.passed for r in reports), tolerance=OVERLAP_TOL,
        notes={r.check_name: r.max_violation for r in reports},
    )


# -- weight consistency -------------------------------------------------------

def weight_consistency_check(plans, purity_grid) -> VerificationReport:
    """Normalization, purity, ranking and sigma purity for every plan and purity."""
    max_v = 0.0
    worst = {}
    count = 0
    grid = np.asarray(purity_grid, dtype=float)
    for plan in plans:
        lo = min_purity(plan)
        for P in grid[(grid >= lo) & (grid <= 1.0)]:
            w = solve_weights(plan, float(P))
            bw = w.block_weights(plan)
            sigma = build_sigma(plan, w)
            checks = {
                "sum": abs(bw.sum() - 1.0),
                "purity": abs((bw**2).sum() - P),
                "rank_mid": max(w.p_mid - w.p1, -w.p_mid, 0.0),
                "rank_r": max(w.p_r - w.p1, -w.p_r, 0.0),
                "sigma_purity": abs(state_purity(sigma) - P),
                "sigma_trace": abs(np.trace(sigma.entries).real - 1.0),
            }
            count += 1
            name, v = max(checks.items(), key=lambda kv: kv[1])
            if v > max_v or not worst:
                max_v = max(max_v, v)
                worst = {"n": plan.n, "k": plan.k, "purity": float(P), "check": name,
                         "violation": float(v)}
    notes = {}
    if any((p.n, p.k) == (5, 3) for p in plans):
        P = BRANCH_PURITY_5_3
        upper = (2.0 - np.sqrt(1.0 + 3.0 * P)) / 6.0
        lower = (1.0 - np.sqrt(6.0 * P - 2.0)) / 3.0
        jump = abs(upper - lower)
        notes["branch_jump_at_3_7"] = jump
        notes["p_r_at_3_7"] = p_r_5_3(P)
        if jump > 1e-12:
            max_v = max(max_v, jump)
            worst = {"n": 5, "k": 3, "purity": P, "check": "branch_continuity",
                     "violation": jump}
    return VerificationReport(
        check_name="weight_consistency", instances=count, max_violation=float(max_v),
        worst_case=worst, passed=bool(max_v <= WEIGHT_TOL), tolerance=WEIGHT_TOL,
        notes=notes,
    )


def default_weight_plans(n_max: int = 8):
    return [partition_plan(n, k) for n in range(2, n_max + 1) for k in range(2, n + 1)]
