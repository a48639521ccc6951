"""Density matrices restricted to the single-excitation subspace.

An n-mode system carrying exactly one excitation lives in an n-dimensional
space spanned by the site kets |1>, ..., |n>. States are stored as n x n
complex arrays in that site basis and validated once, on construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    NonHermitian,
    NotNormalized,
    NotPositiveSemidefinite,
    StateFileError,
    TraceNotOne,
    WeightsNotNormalized,
)

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_FLOOR = -1e-10
NORM_ATOL = 1e-12


def _readonly(a):
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated, immutable single-excitation density matrix.

    Build instances with :func:`new_density_matrix`; the raw constructor
    skips validation.
    """

    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real.copy()

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, purity={purity(self):.6g})"


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _readonly(np.ravel(self.amplitudes))
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_ATOL:
            raise NotNormalized(abs(norm - 1.0), f"sum |a_i|^2 = {norm!r}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


def as_array(rho) -> np.ndarray:
    """Return the matrix behind a DensityMatrix or array-like without copying."""
    if isinstance(rho, DensityMatrix):
        return rho.entries
    return np.asarray(rho)


def state_violations(entries) -> dict:
    """Measure each validity invariant for a matrix or a stack of matrices.

    Returns a dict with ``hermiticity``, ``trace``, ``min_eigenvalue`` and
    ``diagonal_range`` arrays (scalars for a single matrix). The first two
    are absolute deviations; ``diagonal_range`` is how far any diagonal entry
    falls outside [0, 1].
    """
    a = np.asarray(entries, dtype=np.complex128)
    herm = np.abs(a - np.conj(np.swapaxes(a, -1, -2))).max(axis=(-1, -2))
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    tr = np.abs(diag.sum(axis=-1) - 1.0)
    hpart = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    mineig = np.linalg.eigvalsh(hpart)[..., 0]
    d = diag.real
    rng = np.maximum(np.maximum(-d, d - 1.0), 0.0).max(axis=-1)
    return {"hermiticity": herm, "trace": tr, "min_eigenvalue": mineig, "diagonal_range": rng}


def new_density_matrix(entries) -> DensityMatrix:
    """Validate ``entries`` and wrap it as a :class:`DensityMatrix`.

    Raises
    ------
    NonHermitian, TraceNotOne, NotPositiveSemidefinite
        For the first violated invariant, checked in that order.
    """
    a = np.asarray(entries, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    v = state_violations(a)
    if v["hermiticity"] > HERMITIAN_ATOL:
        raise NonHermitian(v["hermiticity"], "max |rho_ij - conj(rho_ji)|")
    if v["trace"] > TRACE_ATOL:
        raise TraceNotOne(v["trace"], f"trace = {np.trace(a).real!r}")
    if v["min_eigenvalue"] < PSD_FLOOR:
        raise NotPositiveSemidefinite(-v["min_eigenvalue"], "smallest eigenvalue is negative")
    if v["diagonal_range"] > -PSD_FLOOR:
        raise NotPositiveSemidefinite(v["diagonal_range"], "population outside [0, 1]")
    return DensityMatrix(_readonly(a))


def purity(rho) -> float:
    """Tr(rho^2), computed as the sum of |rho_ij|^2."""
    a = as_array(rho)
    return float(np.sum(a.real**2 + a.imag**2))


def moment(rho, k: int) -> float:
    """Statistical moment M_k = sum_j rho_jj^k of the site populations."""
    if k < 1:
        raise ValueError(f"moment order must be >= 1, got {k}")
    p = np.diagonal(as_array(rho)).real
    return float(np.sum(p**k))


def from_pure(psi) -> DensityMatrix:
    """Projector |psi><psi| for a normalized ket."""
    if not isinstance(psi, PureState):
        psi = PureState(np.asarray(psi, dtype=np.complex128))
    v = psi.amplitudes
    return DensityMatrix(_readonly(np.outer(v, v.conj())))


def basis_state(n: int, site: int) -> PureState:
    amps = np.zeros(n, dtype=np.complex128)
    amps[site] = 1.0
    return PureState(amps)


def w_state(n: int, modes=None) -> PureState:
    """Equal-amplitude superposition over ``modes`` (all n modes by default)."""
    modes = range(n) if modes is None else list(modes)
    amps = np.zeros(n, dtype=np.complex128)
    idx = list(modes)
    amps[idx] = 1.0 / np.sqrt(len(idx))
    return PureState(amps)


def mix(states, weights) -> DensityMatrix:
    """Convex combination sum_i w_i rho_i of same-dimension states."""
    states = list(states)
    w = np.asarray(weights, dtype=float)
    if len(states) == 0 or len(states) != w.size:
        raise DimensionMismatch(f"{len(states)} states but {w.size} weights")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise WeightsNotNormalized(f"weights must be nonnegative and sum to 1, got {w.tolist()}")
    dims = {as_array(s).shape for s in states}
    if len(dims) != 1:
        raise DimensionMismatch(f"states have differing shapes {sorted(dims)}")
    out = sum(wi * as_array(s) for wi, s in zip(w, states))
    return DensityMatrix(_readonly(out))


# -- state files -------------------------------------------------------------

def state_to_dict(rho) -> dict:
    a = as_array(rho)
    return {
        "dim": int(a.shape[0]),
        "re": [float(x) for x in a.real.ravel()],
        "im": [float(x) for x in a.imag.ravel()],
    }


def dumps_state(rho) -> str:
    return json.dumps(state_to_dict(rho))


def save_state(rho, path) -> None:
    Path(path).write_text(dumps_state(rho) + "\n")


def state_from_dict(obj) -> DensityMatrix:
    """Parse the {"dim", "re", "im"} schema; invariants checked as in new_density_matrix."""
    try:
        n = obj["dim"]
        re = obj["re"]
        im = obj["im"]
    except (KeyError, TypeError) as exc:
        raise StateFileError(f"missing field {exc}") from None
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise StateFileError(f"dim must be a positive integer, got {n!r}")
    try:
        re = np.asarray(re, dtype=float)
        im = np.asarray(im, dtype=float)
    except (TypeError, ValueError) as exc:
        raise StateFileError(f"non-numeric entries: {exc}") from None
    if re.shape != (n * n,) or im.shape != (n * n,):
        raise StateFileError(f"re and im must each hold dim^2 = {n * n} numbers")
    return new_density_matrix((re + 1j * im).reshape(n, n))


def loads_state(text: str) -> DensityMatrix:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StateFileError(f"invalid JSON: {exc}") from None
    return state_from_dict(obj)


def load_state(path) -> DensityMatrix:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise StateFileError(f"cannot read {path}: {exc}") from None
    return loads_state(text)
