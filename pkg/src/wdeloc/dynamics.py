"""Secular Redfield dynamics of a site Hamiltonian coupled to Drude baths.

    d rho / dt = -i [H, rho] + D(rho)

    D(rho) = sum_w gamma(w) sum_{m,n} C_mn [A_n(w) rho A_m(w)^+ - 1/2 {A_m(w)^+ A_n(w), rho}]

with exciton-basis jump operators A_n(w) = sum_{e_k' - e_k = w} a_n(k)* a_n(k') |k><k'|,
rates gamma(w) = 2 pi J(|w|) |N(-w)| and C the site-fluctuation correlation
matrix (identity for independent sites).

Energies are in cm^-1, temperatures in K, times in fs. Everything is
integrated in the exciton basis, where the coherent part is diagonal.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import (
    ConfigError,
    DegenerateBasisWarning,
    NegativeFrequency,
    PositivityViolation,
    ZeroFrequency,
)
from .measures import tau, tau_max
from .refstate import border_values, min_purity, partition_plan
from .sxstate import DensityMatrix, _readonly, as_array, from_pure, load_state, w_state

# unit conversions
K_B_CM = 0.695034800            # Boltzmann constant, cm^-1 / K
C_CM_PER_FS = 2.99792458e-5     # speed of light, cm / fs
CM_TO_RAD_PER_FS = 2.0 * math.pi * C_CM_PER_FS

RING6 = np.array([
    [12500, 300, 0, 0, 0, 300],
    [300, 12000, 300, 0, 0, 0],
    [0, 300, 12500, 300, 0, 0],
    [0, 0, 300, 12000, 300, 0],
    [0, 0, 0, 300, 12500, 300],
    [300, 0, 0, 0, 300, 12000],
], dtype=float)


@dataclass(frozen=True, eq=False)
class SiteHamiltonian:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"Hamiltonian must be square, got shape {m.shape}")
        if np.abs(m - m.T).max() > 1e-12:
            raise ValueError("Hamiltonian must be real symmetric")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class BathSpec:
    """Drude-Lorentz bath: reorganization energy, cutoff (cm^-1), temperature (K)."""

    reorganization_energy: float = 300.0
    cutoff: float = 150.0
    temperature: float = 77.0

    def __post_init__(self):
        for name in ("reorganization_energy", "cutoff", "temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)!r}")

    @property
    def kT(self) -> float:
        return K_B_CM * self.temperature

    @property
    def beta(self) -> float:
        return 1.0 / self.kT


def ring_hamiltonian() -> SiteHamiltonian:
    """Six-site ring, alternating 12500/12000 cm^-1 sites, 300 cm^-1 couplings."""
    return SiteHamiltonian(RING6.copy())


def spectral_density(omega, bath: BathSpec):
    """Ohmic spectral density with Drude cutoff, 2 E_r w_c w / (pi (w_c^2 + w^2))."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise NegativeFrequency(f"spectral density needs omega >= 0, got {omega!r}")
    er, wc = bath.reorganization_energy, bath.cutoff
    out = 2.0 * er * wc * w / (math.pi * (wc * wc + w * w))
    return float(out) if out.ndim == 0 else out


def thermal_occupation(omega, temperature: float):
    """Bose-Einstein occupation 1/(exp(w / k_B T) - 1); negative w allowed."""
    w = np.asarray(omega, dtype=float)
    if np.any(w == 0):
        raise ZeroFrequency("thermal occupation diverges at omega = 0; use the rate limit")
    out = 1.0 / np.expm1(w / (K_B_CM * temperature))
    return float(out) if out.ndim == 0 else out


def rate_gamma_cm(omega, bath: BathSpec):
    """gamma(w) = 2 pi J(|w|) |N(-w)| in cm^-1, with the finite w -> 0 limit."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.empty_like(w)
    zero = w == 0
    aw = np.abs(w[~zero])
    J = spectral_density(aw, bath)
    N = 1.0 / np.expm1(aw * bath.beta)
    # |N(-w)| is N(w) + 1 for w > 0 and N(|w|) for w < 0
    out[~zero] = 2.0 * math.pi * J * np.where(w[~zero] > 0, N + 1.0, N)
    out[zero] = 4.0 * bath.reorganization_energy * bath.kT / bath.cutoff
    return float(out[0]) if np.ndim(omega) == 0 else out


def rate_gamma(omega, bath: BathSpec):
    """gamma(w) converted to fs^-1."""
    return rate_gamma_cm(omega, bath) * CM_TO_RAD_PER_FS


def gibbs_populations(energies, temperature: float) -> np.ndarray:
    e = np.asarray(energies, dtype=float)
    x = np.exp(-(e - e.min()) / (K_B_CM * temperature))
    return x / x.sum()


@dataclass
class ExcitonDecomposition:
    """Eigenbasis of H with gap-grouped jump operators.

    ``operators[w]`` has shape (n_sites, n, n): A_n(w) in the exciton basis.
    """

    energies: np.ndarray
    coefficients: np.ndarray
    gap_groups: dict
    operators: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return self.energies.size

    def to_site(self, rho_exc):
        U = self.coefficients
        return U @ rho_exc @ U.conj().T

    def to_exciton(self, rho_site):
        U = self.coefficients
        return U.conj().T @ rho_site @ U

    def operator_site_basis(self, n: int, omega: float) -> np.ndarray:
        return self.to_site(self.operators[omega][n])


def _cluster_gaps(gaps, tol):
    order = np.argsort(gaps, kind="stable")
    s = gaps[order]
    labels = np.empty(gaps.size, dtype=int)
    lab = 0
    labels[order[0]] = 0
    for i in range(1, s.size):
        if s[i] - s[i - 1] > tol:
            lab += 1
        labels[order[i]] = lab
    return labels


def lindblad_operators(H: SiteHamiltonian, gap_tol: float = 1e-6) -> ExcitonDecomposition:
    """Diagonalize H and build A_n(w) for every site n and transition frequency w.

    Gaps closer than ``gap_tol`` (cm^-1) share a group; a group containing
    zero is pinned to w = 0 exactly.
    """
    eps, U = np.linalg.eigh(H.matrix)
    n = eps.size
    kk, kp = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    kk, kp = kk.ravel(), kp.ravel()
    gaps = eps[kp] - eps[kk]
    labels = _cluster_gaps(gaps, gap_tol)
    groups = {}
    operators = {}
    for lab in np.unique(labels):
        sel = labels == lab
        members = gaps[sel]
        span = members.max() - members.min()
        if span > gap_tol:
            warnings.warn(
                f"gap group spans {span:.3g} cm^-1 (> tol {gap_tol:g}); distinct "
                "transition frequencies were merged",
                DegenerateBasisWarning, stacklevel=2,
            )
        if members.min() <= gap_tol and members.max() >= -gap_tol:
            omega = 0.0
        else:
            omega = float(members.mean())
        pairs = list(zip(kk[sel].tolist(), kp[sel].tolist()))
        groups[omega] = pairs
        A = np.zeros((n, n, n), dtype=np.complex128)
        for a, b in pairs:
            A[:, a, b] = np.conj(U[:, a]) * U[:, b]
        operators[omega] = A
    return ExcitonDecomposition(energies=eps, coefficients=U, gap_groups=groups,
                                operators=operators)


def _left(A):
    """Row-major vec: vec(A X) = (A kron I) vec(X)."""
    return np.kron(A, np.eye(A.shape[0]))


def _right(B):
    """vec(X B) = (I kron B^T) vec(X)."""
    return np.kron(np.eye(B.shape[0]), B.T)


@dataclass
class Dissipator:
    """Dissipator as an n^2 x n^2 superoperator in the exciton basis (fs^-1)."""

    superop: np.ndarray
    decomposition: ExcitonDecomposition

    def apply_exciton(self, rho_exc):
        n = self.decomposition.dim
        return (self.superop @ np.asarray(rho_exc).reshape(-1)).reshape(n, n)

    def __call__(self, rho):
        """D(rho) for a site-basis state."""
        dec = self.decomposition
        return dec.to_site(self.apply_exciton(dec.to_exciton(as_array(rho))))


def site_correlation(kind, n):
    if isinstance(kind, str):
        if kind == "independent":
            return np.eye(n)
        if kind == "literal":
            return np.ones((n, n))
        raise ValueError(f"unknown correlation {kind!r}; use independent, literal or a matrix")
    C = np.asarray(kind, dtype=float)
    if C.shape != (n, n):
        raise ValueError(f"correlation matrix must be {n}x{n}")
    return C


def build_dissipator(decomp: ExcitonDecomposition, bath: BathSpec,
                     correlation="independent", coupling_scale: float = 1.0) -> Dissipator:
    """Secular Redfield dissipator.

    ``correlation`` sets C_mn: ``"independent"`` (identity) for uncorrelated
    site baths, ``"literal"`` (all ones) keeps every cross-site term with an
    equal rate, or pass a matrix.
    """
    n = decomp.dim
    C = site_correlation(correlation, n)
    eye = np.eye(n)
    S = np.zeros((n * n, n * n), dtype=np.complex128)
    for omega, A in decomp.operators.items():
        g = rate_gamma(omega, bath) * coupling_scale
        if g == 0:
            continue
        for m in range(n):
            for s in range(n):
                c = C[m, s]
                if c == 0:
                    continue
                An, Am = A[s], A[m]
                AmdAn = Am.conj().T @ An
                S += g * c * (np.kron(An, Am.conj())
                              - 0.5 * np.kron(AmdAn, eye)
                              - 0.5 * np.kron(eye, AmdAn.T))
    return Dissipator(superop=S, decomposition=decomp)


def coherent_generator(decomp: ExcitonDecomposition) -> np.ndarray:
    """Diagonal of -i[H, .] in the exciton basis, fs^-1."""
    e = decomp.energies * CM_TO_RAD_PER_FS
    return (-1j * (e[:, None] - e[None, :])).reshape(-1)


def step_matrix(decomp: ExcitonDecomposition, D: Dissipator | None, dt: float,
                method: str = "ifrk4") -> np.ndarray:
    """One-step propagator for the exciton-basis Liouvillian.

    ``ifrk4``  classical RK4 in the interaction picture of H (the coherent
               phases are exact, dissipation is 4th order),
    ``rk4``    classical RK4 on the full Liouvillian,
    ``expm``   exact exponential, for cross-checks.
    """
    lam = coherent_generator(decomp)
    N = lam.size
    B = np.zeros((N, N), dtype=np.complex128) if D is None else D.superop
    h = dt
    if method == "expm":
        return scipy.linalg.expm(h * (np.diag(lam) + B))
    if method == "rk4":
        hL = h * (np.diag(lam) + B)
        I = np.eye(N)
        return I + hL @ (I + hL @ (I / 2 + hL @ (I / 6 + hL / 24)))
    if method != "ifrk4":
        raise ValueError(f"unknown integrator {method!r}")
    E = np.exp(0.5 * h * lam)
    Einv = 1.0 / E
    Y = np.eye(N, dtype=np.complex128)
    half = lambda X: Einv[:, None] * (B @ (E[:, None] * X))
    K1 = B @ Y
    K2 = half(Y + 0.5 * h * K1)
    K3 = half(Y + 0.5 * h * K2)
    K4 = (Einv**2)[:, None] * (B @ ((E**2)[:, None] * (Y + h * K3)))
    W = Y + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
    return (E**2)[:, None] * W


@dataclass
class Trajectory:
    times: np.ndarray
    rhos: np.ndarray
    exciton_rhos: np.ndarray
    decomposition: ExcitonDecomposition = field(repr=False)

    @property
    def states(self):
        """Snapshots as DensityMatrix values (trace drift tolerated up to 1e-9)."""
        return [DensityMatrix(_readonly(a)) for a in self.rhos]

    @property
    def purity(self) -> np.ndarray:
        return np.sum(np.abs(self.rhos) ** 2, axis=(1, 2))

    @property
    def trace_error(self) -> np.ndarray:
        return np.abs(np.trace(self.rhos, axis1=1, axis2=2) - 1.0)

    @property
    def min_eigenvalue(self) -> np.ndarray:
        h = 0.5 * (self.rhos + np.conj(np.swapaxes(self.rhos, 1, 2)))
        return np.linalg.eigvalsh(h)[:, 0]

    @property
    def hermiticity_error(self) -> np.ndarray:
        return np.abs(self.rhos - np.conj(np.swapaxes(self.rhos, 1, 2))).max(axis=(1, 2))

    def exciton_populations(self) -> np.ndarray:
        return np.diagonal(self.exciton_rhos, axis1=1, axis2=2).real

    def profiles(self, k_max=None):
        from .refstate import delocalization_profile

        return [delocalization_profile(a, k_max) for a in self.rhos]


def propagate(rho0, H: SiteHamiltonian, D: Dissipator | None, dt: float, steps: int,
              stride: int = 1, method: str = "ifrk4", positivity_floor: float = -1e-6,
              decomposition: ExcitonDecomposition | None = None) -> Trajectory:
    """Fixed-step integration of the master equation from ``rho0`` (site basis).

    The trace is never renormalized. Snapshots are kept every ``stride``
    steps, plus t = 0. Raises PositivityViolation as soon as a snapshot's
    smallest eigenvalue drops below ``positivity_floor`` or it stops being
    finite.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if steps < 0 or stride < 1:
        raise ValueError("steps must be >= 0 and stride >= 1")
    dec = decomposition or (D.decomposition if D is not None else lindblad_operators(H))
    n = dec.dim
    M = step_matrix(dec, D, dt, method)
    y = dec.to_exciton(as_array(rho0).astype(np.complex128)).reshape(-1)
    nsnap = steps // stride + 1
    times = np.empty(nsnap)
    exc = np.empty((nsnap, n, n), dtype=np.complex128)
    times[0] = 0.0
    exc[0] = y.reshape(n, n)
    j = 1
    for step in range(1, steps + 1):
        y = M @ y
        if step % stride == 0:
            snap = y.reshape(n, n)
            # the spectrum is basis independent, so check in the exciton basis
            if not np.all(np.isfinite(snap)):
                raise PositivityViolation(float("nan"), step * dt)
            lo = np.linalg.eigvalsh(0.5 * (snap + snap.conj().T))[0]
            if lo < positivity_floor:
                raise PositivityViolation(lo, step * dt)
            times[j] = step * dt
            exc[j] = snap
            j += 1
    U = dec.coefficients
    rhos = U @ exc @ U.conj().T
    return Trajectory(times=times, rhos=rhos, exciton_rhos=exc, decomposition=dec)


def ek_series(rhos, clamp: bool = True) -> np.ndarray:
    """Normalized E_2..E_n for a stack of site-basis states, shape (T, n-1).

    Each column is E_k(rho) / tau_k(W_n); the reference at purity 1 has
    tau_k = 0, so the pure W state scores 1.
    """
    rhos = np.asarray(rhos)
    n = rhos.shape[-1]
    P = np.sum(np.abs(rhos) ** 2, axis=(1, 2))
    pops = np.clip(np.diagonal(rhos, axis1=1, axis2=2).real, 0.0, None)
    pops = pops / pops.sum(axis=1, keepdims=True)
    out = np.zeros((rhos.shape[0], n - 1))
    for k in range(2, n + 1):
        plan = partition_plan(n, k)
        lo = min_purity(plan)
        above = P >= lo - 1e-12
        e = np.zeros(P.size)
        if above.any():
            t_rho = np.atleast_1d(tau(pops[above], k, check=False))
            t_sig = border_values(n, k, np.clip(P[above], lo, 1.0))
            e[above] = t_rho - t_sig
        if clamp:
            e = np.maximum(e, 0.0)
        out[:, k - 2] = e / tau_max(n, k)
    return out


def ek_trajectory(traj: Trajectory, clamp: bool = True):
    """(times, normalized E_k columns for k = 2..n)."""
    return traj.times, ek_series(traj.rhos, clamp=clamp)


# -- run configuration ----------------------------------------------------------

CONFIG_KEYS = {
    "hamiltonian": "\"ring6\" or an n x n list of lists (cm^-1)",
    "E_r": "reorganization energy, cm^-1 (> 0)",
    "omega_c": "Drude cutoff, cm^-1 (> 0)",
    "T": "temperature, K (> 0)",
    "dt": "time step, fs (> 0)",
    "steps": "number of steps (integer >= 0)",
    "stride": "keep every stride-th step (integer >= 1)",
    "initial_state": "\"W6\" (W state on all sites), \"exciton:<k>\" or a state file path",
    "gap_tol": "secular gap-grouping tolerance, cm^-1 (> 0)",
    "method": "ifrk4, rk4 or expm",
    "coupling_scale": "multiplier on every rate (>= 0); 0 switches the bath off",
    "correlation": "independent or literal",
}


@dataclass(frozen=True)
class DynamicsConfig:
    """Everything needed for one trajectory. Defaults are the ring6 preset."""

    hamiltonian: object = "ring6"
    E_r: float = 300.0
    omega_c: float = 150.0
    T: float = 77.0
    dt: float = 1.0
    steps: int = 10_000
    stride: int = 1
    initial_state: str = "W6"
    gap_tol: float = 1e-6
    method: str = "ifrk4"
    coupling_scale: float = 1.0
    correlation: str = "independent"

    def bath(self) -> BathSpec:
        return BathSpec(self.E_r, self.omega_c, self.T)

    def site_hamiltonian(self) -> SiteHamiltonian:
        if isinstance(self.hamiltonian, str):
            return ring_hamiltonian()
        return SiteHamiltonian(np.asarray(self.hamiltonian, dtype=float))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in CONFIG_KEYS}


PRESETS = {"ring6": DynamicsConfig()}


def _positive(key, v, strict=True, integer=False):
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{key} must be {kind}, got {v!r}")
    if (strict and not v > 0) or (not strict and v < 0):
        raise ConfigError(f"{key} must be {'>' if strict else '>='} 0, got {v!r}")
    return v


def config_from_dict(obj: dict) -> DynamicsConfig:
    """Validate a flat key-value mapping against CONFIG_KEYS."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = dict(obj)
    for key in ("E_r", "omega_c", "T", "dt", "gap_tol"):
        if key in kw:
            kw[key] = float(_positive(key, kw[key]))
    if "steps" in kw:
        _positive("steps", kw["steps"], strict=False, integer=True)
    if "stride" in kw:
        _positive("stride", kw["stride"], integer=True)
    if "coupling_scale" in kw:
        kw["coupling_scale"] = float(_positive("coupling_scale", kw["coupling_scale"], strict=False))
    if kw.get("method", "ifrk4") not in ("ifrk4", "rk4", "expm"):
        raise ConfigError(f"method must be ifrk4, rk4 or expm, got {kw['method']!r}")
    if kw.get("correlation", "independent") not in ("independent", "literal"):
        raise ConfigError(f"correlation must be independent or literal, got {kw['correlation']!r}")
    h = kw.get("hamiltonian", "ring6")
    if isinstance(h, str):
        if h != "ring6":
            raise ConfigError(f"unknown hamiltonian preset {h!r}")
    else:
        try:
            SiteHamiltonian(np.asarray(h, dtype=float))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"hamiltonian: {exc}") from None
        kw["hamiltonian"] = [list(map(float, row)) for row in h]
    if not isinstance(kw.get("initial_state", "W6"), str):
        raise ConfigError("initial_state must be a string")
    return DynamicsConfig(**kw)


def load_config(source) -> DynamicsConfig:
    """Preset name or path to a JSON config file."""
    if source in PRESETS:
        return PRESETS[source]
    try:
        with open(source) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {source} is not valid JSON: {exc}") from None
    return config_from_dict(obj)


def initial_state(spec: str, decomp: ExcitonDecomposition, base_dir=None) -> np.ndarray:
    n = decomp.dim
    if spec.upper() == f"W{n}" or spec == "W":
        return as_array(from_pure(w_state(n)))
    if spec.startswith("exciton:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad exciton index in {spec!r}") from None
        if not 0 <= k < n:
            raise ConfigError(f"exciton index must lie in [0, {n - 1}], got {k}")
        v = decomp.coefficients[:, k]
        return np.outer(v, v.conj()).astype(np.complex128)
    path = Path(spec)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    rho = load_state(path)
    if rho.dim != n:
        raise ConfigError(f"initial state has dim {rho.dim}, Hamiltonian has {n}")
    return as_array(rho)


def run_config(cfg: DynamicsConfig, base_dir=None) -> Trajectory:
    H = cfg.site_hamiltonian()
    dec = lindblad_operators(H, cfg.gap_tol)
    D = build_dissipator(dec, cfg.bath(), cfg.correlation, cfg.coupling_scale)
    rho0 = initial_state(cfg.initial_state, dec, base_dir)
    return propagate(rho0, H, D, cfg.dt, cfg.steps, cfg.stride, cfg.method, decomposition=dec)


def trajectory_table(traj: Trajectory) -> tuple[list, np.ndarray]:
    """Header and rows for the trajectory CSV: t_fs, E2..En, purity, trace_error."""
    t, E = ek_trajectory(traj)
    n = traj.rhos.shape[-1]
    header = ["t_fs"] + [f"E{k}" for k in range(2, n + 1)] + ["purity", "trace_error"]
    rows = np.column_stack([t, E, traj.purity, traj.trace_error])
    return header, rows
