"""Random single-excitation states for scatter experiments and property tests.

Samples are produced in fixed-size chunks. Chunk ``c`` draws from a Philox
generator keyed by ``(seed, c)``, and a full chunk is always generated, so
sample ``i`` is the same regardless of ``count``, thread count or how the
stream is consumed.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BlockTooLarge, InvalidState, RankOutOfRange
from .measures import tau
from .sxstate import (
    HERMITIAN_ATOL,
    PSD_FLOOR,
    TRACE_ATOL,
    DensityMatrix,
    PureState,
    new_density_matrix,
    state_violations,
)

CHUNK = 4096
KINDS = ("pure", "mixed", "diagonal", "producible")


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))
    return np.random.Generator(np.random.Philox(ss))


def _complex_normal(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def batch_pure(n, m, rng):
    """(m, n) kets, uniform on the complex unit sphere."""
    z = _complex_normal(rng, (m, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def batch_mixed(n, rank, m, rng):
    """(m, n, n) induced-measure states G G^dag / Tr with G of shape n x rank."""
    if not 1 <= rank <= n:
        raise RankOutOfRange(f"rank must lie in [1, {n}], got {rank}")
    g = _complex_normal(rng, (m, n, rank))
    rho = g @ np.conj(np.swapaxes(g, 1, 2))
    return rho / np.trace(rho, axis1=1, axis2=2).real[:, None, None]


def batch_diagonal(n, m, rng):
    pops = rng.dirichlet(np.ones(n), size=m) if n > 1 else np.ones((m, 1))
    out = np.zeros((m, n, n), dtype=np.complex128)
    idx = np.arange(n)
    out[:, idx, idx] = pops
    return out


def batch_producible(n, max_block, max_components, m, rng):
    """(m, n, n) mixtures of block-supported pure states.

    Each sample mixes between 1 and ``max_components`` pure states with
    Dirichlet(1, ..., 1) weights. Every component is Haar-random on a
    uniformly chosen subset of between 1 and ``max_block`` modes.
    """
    if not 1 <= max_block < n:
        raise BlockTooLarge(f"max_block must lie in [1, {n - 1}], got {max_block}")
    C = int(max_components)
    ncomp = rng.integers(1, C + 1, size=m)
    sizes = rng.integers(1, max_block + 1, size=(m, C))
    ranks = np.argsort(np.argsort(rng.random((m, C, n)), axis=2), axis=2)
    mask = ranks < sizes[..., None]
    psi = _complex_normal(rng, (m, C, n)) * mask
    psi /= np.linalg.norm(psi, axis=2, keepdims=True)
    w = rng.standard_exponential((m, C))
    w[np.arange(C)[None, :] >= ncomp[:, None]] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    return np.einsum("mc,mci,mcj->mij", w, psi, np.conj(psi))


def random_pure(n: int, rng) -> PureState:
    return PureState(batch_pure(n, 1, rng)[0])


def random_mixed(n: int, rank: int, rng) -> DensityMatrix:
    return new_density_matrix(batch_mixed(n, rank, 1, rng)[0])


def random_diagonal(n: int, rng) -> DensityMatrix:
    return new_density_matrix(batch_diagonal(n, 1, rng)[0])


def random_producible(n: int, max_block: int, max_components: int, rng) -> DensityMatrix:
    return new_density_matrix(batch_producible(n, max_block, max_components, 1, rng)[0])


@dataclass(frozen=True)
class SamplerConfig:
    """What to sample: ``kind`` is one of pure, mixed, diagonal, producible."""

    n: int
    kind: str
    seed: int = 0
    count: int = 1
    rank: int | None = None
    max_block: int | None = None
    max_components: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.kind == "mixed":
            rank = self.n if self.rank is None else self.rank
            if not 1 <= rank <= self.n:
                raise RankOutOfRange(f"rank must lie in [1, {self.n}], got {rank}")
            object.__setattr__(self, "rank", rank)
        if self.kind == "producible":
            mb = self.max_block
            if mb is None or not 1 <= mb < self.n:
                raise BlockTooLarge(f"max_block must lie in [1, {self.n - 1}], got {mb}")
            if self.max_components is None:
                object.__setattr__(self, "max_components", self.n // mb + 1)
            if self.max_components < 1:
                raise ValueError("max_components must be >= 1")

    @classmethod
    def from_kind(cls, n, kind_spec: str, seed=0, count=1):
        """Parse ``pure``, ``diagonal``, ``mixed[:rank]`` or ``producible:block[:components]``."""
        head, *rest = kind_spec.split(":")
        try:
            args = [int(x) for x in rest]
        except ValueError:
            raise ValueError(f"bad sampler kind {kind_spec!r}") from None
        kw = {}
        if head == "mixed" and args:
            kw["rank"] = args[0]
        elif head == "producible":
            if not args:
                raise ValueError("producible needs a block size, e.g. producible:2")
            kw["max_block"] = args[0]
            if len(args) > 1:
                kw["max_components"] = args[1]
        elif args:
            raise ValueError(f"sampler kind {head!r} takes no parameters")
        return cls(n=n, kind=head, seed=seed, count=count, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_chunk(cfg: SamplerConfig, chunk: int) -> np.ndarray:
    """All CHUNK density matrices of chunk ``chunk`` as an array."""
    rng = chunk_rng(cfg.seed, chunk)
    n = cfg.n
    if cfg.kind == "pure":
        v = batch_pure(n, CHUNK, rng)
        return v[:, :, None] * np.conj(v[:, None, :])
    if cfg.kind == "mixed":
        return batch_mixed(n, cfg.rank, CHUNK, rng)
    if cfg.kind == "diagonal":
        return batch_diagonal(n, CHUNK, rng)
    return batch_producible(n, cfg.max_block, cfg.max_components, CHUNK, rng)


def _chunk_bounds(cfg):
    nchunks = -(-cfg.count // CHUNK)
    for c in range(nchunks):
        yield c, min(CHUNK, cfg.count - c * CHUNK)


def validate_batch(rhos) -> None:
    """Raise InvalidState if any matrix in the stack breaks an invariant."""
    v = state_violations(rhos)
    bad = (
        (v["hermiticity"] > HERMITIAN_ATOL)
        | (v["trace"] > TRACE_ATOL)
        | (v["min_eigenvalue"] < PSD_FLOOR)
        | (v["diagonal_range"] > -PSD_FLOOR)
    )
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidState(
            max(v["hermiticity"][i], v["trace"][i], -v["min_eigenvalue"][i]),
            f"generated sample {i} of batch is not a valid state",
        )


def generate_states(cfg: SamplerConfig):
    """Yield validated DensityMatrix samples in index order."""
    for c, m in _chunk_bounds(cfg):
        rhos = sample_chunk(cfg, c)[:m]
        for a in rhos:
            yield new_density_matrix(a)


def _scatter_chunk(cfg, k, c, m, validate):
    rhos = sample_chunk(cfg, c)[:m]
    if validate:
        validate_batch(rhos)
    P = np.sum(rhos.real**2 + rhos.imag**2, axis=(1, 2))
    pops = np.clip(np.diagonal(rhos, axis1=1, axis2=2).real, 0.0, None)
    pops /= pops.sum(axis=1, keepdims=True)
    return np.column_stack([P, np.atleast_1d(tau(pops, k, check=False))])


def iter_scatter(cfg: SamplerConfig, k: int, threads: int = 1, validate: bool = True):
    """Stream (purity, tau_k) chunks of shape (m, 2) in sample order.

    Only one chunk of states per worker is resident at a time.
    """
    jobs = list(_chunk_bounds(cfg))
    if threads <= 1:
        for c, m in jobs:
            yield _scatter_chunk(cfg, k, c, m, validate)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # bounded window keeps memory flat while preserving order
        window = 4 * threads
        pending = []
        for c, m in jobs:
            pending.append(pool.submit(_scatter_chunk, cfg, k, c, m, validate))
            if len(pending) >= window:
                yield pending.pop(0).result()
        for f in pending:
            yield f.result()


def scatter_experiment(cfg: SamplerConfig, measure_k: int, threads: int = 1,
                       validate: bool = True) -> np.ndarray:
    """(count, 2) array of (purity, tau_k) points."""
    return np.concatenate(list(iter_scatter(cfg, measure_k, threads, validate)), axis=0)


def write_cloud(chunks, stream, fmt: str = "csv") -> int:
    """Write point chunks as CSV text or little-endian float64 pairs; return row count."""
    rows = 0
    if fmt == "csv":
        stream.write("purity,tau\n")
        for pts in chunks:
            stream.write("".join(f"{p!r},{t!r}\n" for p, t in pts.tolist()))
            rows += len(pts)
    elif fmt == "bin":
        for pts in chunks:
            stream.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
            rows += len(pts)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return rows


def sidecar(cfg: SamplerConfig, k: int, fmt: str) -> str:
    meta = dict(cfg.to_dict(), measure_k=k, format=fmt, chunk=CHUNK)
    return json.dumps(meta, indent=2, sort_keys=True)
