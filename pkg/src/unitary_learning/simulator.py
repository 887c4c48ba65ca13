"""Monte Carlo and quadrature checks of the measure-and-rotate strategy.

Randomness is drawn from counter-based sub-streams keyed by ``(seed, chunk)``, so a
run is bit-reproducible regardless of how chunks are scheduled across threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import groups
from .learning import (
    LearningProblem,
    MultiplicityMatrix,
    StorageSpec,
    fidelity_of_storage,
    goal_function,
    multiplicity_matrix,
)

THREADS_ENV = "UNITARY_LEARNING_THREADS"


class RejectionStall(RuntimeError):
    pass


class DegreeTooLow(ValueError):
    pass


class InfeasibleDraw(RuntimeError):
    pass


class InvalidRetrieval(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    samples: int = 100_000
    seed: int = 0
    chunk: int = 20_000
    workers: int | None = None

    def __post_init__(self):
        if self.samples < 1 or self.chunk < 1:
            raise ValueError("samples and chunk must be >= 1")


@dataclass(frozen=True)
class SimResult:
    mean: float
    stderr: float
    samples: int

    def within(self, value: float, sigmas: float = 4.0) -> bool:
        return abs(self.mean - value) <= sigmas * self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "samples": self.samples}


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_chunks(values: Callable[[np.random.Generator, int], np.ndarray], cfg: SimConfig) -> SimResult:
    """Evaluate ``values(rng, n)`` over deterministic chunks and merge ``(sum, sum_sq, count)``."""
    sizes = [cfg.chunk] * (cfg.samples // cfg.chunk)
    if cfg.samples % cfg.chunk:
        sizes.append(cfg.samples % cfg.chunk)

    def one(i):
        v = np.asarray(values(chunk_rng(cfg.seed, i), sizes[i]), dtype=float)
        return v.sum(), (v * v).sum(), v.size

    workers = cfg.workers or _default_workers()
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(i) for i in range(len(sizes))]
    s = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    mean = s / n
    var = max(s2 - n * mean * mean, 0.0) / (n - 1) if n > 1 else 0.0
    return SimResult(float(mean), float(math.sqrt(var / n)), int(n))


# ---------------------------------------------------------------------------
# sampling the covariant POVM


def _u1_coefficients(spec: StorageSpec) -> dict[int, float]:
    """Cosine coefficients of the offset density ``q(d) = c_0 + 2 sum_k c_k cos(k d)``."""
    coeffs: dict[int, float] = {}
    for w1, q1 in spec.probs:
        for w2, q2 in spec.probs:
            k = w1 - w2
            if k >= 0:
                coeffs[k] = coeffs.get(k, 0.0) + math.sqrt(q1 * q2)
    return coeffs


def _u1_cdf(coeffs, delta):
    out = np.array(delta, dtype=float) * coeffs.get(0, 0.0)
    for k, c in coeffs.items():
        if k > 0:
            out += 2 * c * np.sin(k * delta) / k
    return out / (2 * np.pi)


def _u1_offsets(spec: StorageSpec, rng: np.random.Generator, size: int, refine: int = 45) -> np.ndarray:
    coeffs = _u1_coefficients(spec)
    bandwidth = max(max(coeffs), 1)
    grid = np.linspace(0.0, 2 * np.pi, 64 * bandwidth + 1)
    cdf = _u1_cdf(coeffs, grid)
    cdf[-1] = 1.0
    u = rng.uniform(size=size)
    idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(grid) - 2)
    lo, hi = grid[idx], grid[idx + 1]
    # exact closed-form CDF refines the grid bracket
    for _ in range(refine):
        mid = (lo + hi) / 2
        below = _u1_cdf(coeffs, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


def _su2_offsets(spec: StorageSpec, rng: np.random.Generator, size: int,
                 min_rate: float = 1e-6) -> np.ndarray:
    amps = [(j, math.sqrt(q)) for j, q in spec.probs]
    envelope = sum(a * (j + 1) for j, a in amps) ** 2
    max_j = max(j for j, _ in amps)
    out = np.empty((size, 2, 2), dtype=complex)
    filled = proposed = 0
    batch = max(64, int(1.2 * size * envelope))
    while filled < size:
        h = groups.haar_sample("su2", rng, batch)
        chi = groups.chebyshev_characters(groups.half_trace(h), max_j)
        density = sum(a * chi[j] for j, a in amps) ** 2
        accept = rng.uniform(size=batch) * envelope < density
        take = h[accept][: size - filled]
        out[filled:filled + len(take)] = take
        filled += len(take)
        proposed += batch
        if proposed > 10 / min_rate and filled / proposed < min_rate:
            raise RejectionStall(f"acceptance rate {filled / proposed:.2e}")
    return out


def sample_estimate(g, spec: StorageSpec, p: LearningProblem, rng: np.random.Generator):
    """Draw estimates ``g_hat`` with Haar density ``|<eta_ghat|phi_g>|^2``.

    ``g`` may be a single element or a batch; the result has the same shape.
    """
    if p.group == "u1":
        theta = np.asarray(g, dtype=float)
        delta = _u1_offsets(spec, rng, theta.size).reshape(theta.shape)
        return np.mod(theta + delta, 2 * np.pi)
    g = np.asarray(g)
    single = g.ndim == 2
    G = g.reshape(-1, 2, 2)
    h = _su2_offsets(spec, rng, len(G))
    out = G @ h
    return out[0] if single else out


def su2_acceptance_rate(spec: StorageSpec) -> float:
    """Expected acceptance of the rejection sampler: ``1 / (sum_j sqrt(p_j) d_j)^2``."""
    return 1.0 / sum(math.sqrt(q) * (j + 1) for j, q in spec.probs) ** 2


def monte_carlo_fidelity(p: LearningProblem, spec: StorageSpec, cfg: SimConfig) -> SimResult:
    """Average goal function over Haar ``g`` and POVM-sampled estimates."""
    if p.figure == "single_copy":
        p = p.with_(m=1, figure="global")

    def values(rng, n):
        g = groups.haar_sample(p.group, rng, n)
        g_hat = sample_estimate(g, spec, p, rng)
        if p.task == "invert":
            return goal_function(p, groups.inverse(p.group, g), groups.inverse(p.group, g_hat))
        return goal_function(p, g, g_hat)

    return run_chunks(values, cfg)


def required_degree(p: LearningProblem, spec: StorageSpec) -> int:
    labels = spec.labels
    if p.group == "u1":
        return (max(labels) - min(labels)) + 2 * p.m
    return 2 * max(labels) + 2 * p.m


def quadrature_fidelity(p: LearningProblem, spec: StorageSpec, degree: int | None = None) -> float:
    """``F = int |<eta_e|phi_v>|^2 f_M(v, e) dv`` on an exact group quadrature."""
    if p.figure == "single_copy":
        p = p.with_(m=1, figure="global")
    need = required_degree(p, spec)
    degree = need if degree is None else degree
    if degree < need:
        raise DegreeTooLow(f"degree {degree} < integrand bandwidth {need}")
    q = groups.quadrature(p.group, degree)
    e = groups.identity_element(p.group)
    if p.group == "u1":
        density = np.abs(sum(math.sqrt(w) * np.exp(1j * j * q.nodes) for j, w in spec.probs)) ** 2
        goal = goal_function(p, q.nodes, np.zeros_like(q.nodes))
    else:
        chi = groups.chebyshev_characters(groups.half_trace(q.nodes), max(spec.labels))
        density = sum(math.sqrt(w) * chi[j] for j, w in spec.probs) ** 2
        goal = goal_function(p, q.nodes, np.broadcast_to(e, q.nodes.shape))
    return float(np.sum(q.weights * density * goal))


def povm_completeness(p: LearningProblem, spec: StorageSpec, g) -> float:
    """Quadrature of the estimate density over the group (should be 1)."""
    from .learning import povm_density

    degree = max(required_degree(p.with_(m=1), spec) - 2, 1)
    q = groups.quadrature(p.group, degree)
    return float(np.sum(q.weights * povm_density(spec, g, q.nodes, p)))


# ---------------------------------------------------------------------------
# covariant retrieval operators


@dataclass(frozen=True, eq=False)
class RetrievalOperator:
    """Blocks ``R_KL`` on ``(+)_{j in P_KL} C^{m_K^(j)} (x) C^{m_L^(j)}``; absent blocks are zero."""

    structure: MultiplicityMatrix
    blocks: dict = field(default_factory=dict)


def block_layout(mm: MultiplicityMatrix, K: int, L: int) -> list[tuple[int, int, int, int]]:
    """``(j, offset, m_K^(j), m_L^(j))`` for every ``j`` in ``P_KL``."""
    layout, offset = [], 0
    for j in mm.input_irreps:
        mk, ml = mm.mult(K, j), mm.mult(L, j)
        if mk and ml:
            layout.append((j, offset, mk, ml))
            offset += mk * ml
    return layout


def _block_dim(layout) -> int:
    return sum(mk * ml for _, _, mk, ml in layout)


def _pairs(mm: MultiplicityMatrix):
    for K in mm.k_labels:
        for L in mm.k_labels:
            layout = block_layout(mm, K, L)
            if layout:
                yield K, L, layout


def _partial_traces(R: RetrievalOperator) -> dict[tuple[int, int], np.ndarray]:
    """``T_{Lj} = sum_K (d_K/d_j) Tr_{m_K^(j)} R^(j)_KL``."""
    mm = R.structure
    out = {}
    for L in mm.k_labels:
        for j in mm.input_irreps:
            ml = mm.mult(L, j)
            if ml:
                out[L, j] = np.zeros((ml, ml), dtype=complex)
    for K, L, layout in _pairs(mm):
        block = R.blocks.get((K, L))
        if block is None:
            continue
        d_K = groups.irrep_dim(mm.group, K)
        for j, off, mk, ml in layout:
            sub = block[off:off + mk * ml, off:off + mk * ml].reshape(mk, ml, mk, ml)
            out[L, j] += d_K / groups.irrep_dim(mm.group, j) * np.einsum("kakb->ab", sub)
    return out


def retrieval_residuals(R: RetrievalOperator) -> tuple[float, float]:
    """``(normalization residual, most negative eigenvalue)`` over all blocks."""
    norm = max(np.abs(T - np.eye(len(T))).max() for T in _partial_traces(R).values())
    min_eig = min((np.linalg.eigvalsh((b + b.conj().T) / 2)[0] for b in R.blocks.values()), default=0.0)
    return float(norm), float(min_eig)


def validate_retrieval(R: RetrievalOperator, tol: float = 1e-9) -> None:
    norm, min_eig = retrieval_residuals(R)
    if min_eig < -1e-10:
        raise InvalidRetrieval(f"block not positive: eigenvalue {min_eig:.3e}")
    if norm > tol:
        raise InvalidRetrieval(f"normalization residual {norm:.3e} > {tol:.1e}")


def alpha_vector(mm: MultiplicityMatrix, spec: StorageSpec, K: int) -> np.ndarray:
    """``(+)_{j in P_KK} sqrt(p_j/d_j) |I_{m_K^(j)}>>``."""
    probs = spec.as_dict()
    parts = []
    for j, _, mk, _ in block_layout(mm, K, K):
        parts.append(math.sqrt(probs.get(j, 0.0) / groups.irrep_dim(mm.group, j)) * np.eye(mk).reshape(-1))
    return np.concatenate(parts)


def beta_vector(mm: MultiplicityMatrix, K: int) -> np.ndarray:
    """``(+)_{j in P_KK} sqrt(d_j) |I_{m_K^(j)}>>``."""
    return np.concatenate([
        math.sqrt(groups.irrep_dim(mm.group, j)) * np.eye(mk).reshape(-1)
        for j, _, mk, _ in block_layout(mm, K, K)
    ])


def retrieval_fidelity(R: RetrievalOperator, spec: StorageSpec) -> float:
    """``F = sum_K (d_K/d_T^2) <alpha_K|R_KK|alpha_K>``."""
    mm = R.structure
    total = 0.0
    for K in mm.k_labels:
        block = R.blocks.get((K, K))
        if block is None:
            continue
        a = alpha_vector(mm, spec, K)
        total += groups.irrep_dim(mm.group, K) * float(np.real(a.conj() @ block @ a))
    return total / mm.target_dim ** 2


def estimation_retrieval(p: LearningProblem) -> RetrievalOperator:
    """The measure-and-rotate strategy: ``R_KK = |beta_K><beta_K| / d_K``, off-diagonal blocks zero."""
    mm = multiplicity_matrix(p)
    blocks = {}
    for K in mm.k_labels:
        b = beta_vector(mm, K)
        blocks[K, K] = np.outer(b, b.conj()) / groups.irrep_dim(mm.group, K)
    return RetrievalOperator(mm, blocks)


def _inv_sqrt(T: np.ndarray, cond: float = 1e12) -> np.ndarray:
    w, V = np.linalg.eigh((T + T.conj().T) / 2)
    if w[0] <= w[-1] / cond or w[-1] <= 0:
        raise InfeasibleDraw("normalization block is singular")
    return (V / np.sqrt(w)) @ V.conj().T


def normalize_retrieval(R: RetrievalOperator) -> RetrievalOperator:
    """Congruence ``R_KL -> D_L R_KL D_L`` with ``D_L = (+)_j I (x) T_{Lj}^{-1/2}``.

    Each ``(L, j)`` constraint becomes exact and positivity is preserved.
    """
    mm = R.structure
    S = {key: _inv_sqrt(T) for key, T in _partial_traces(R).items()}
    blocks = {}
    for K, L, layout in _pairs(mm):
        block = R.blocks.get((K, L))
        if block is None:
            continue
        D = np.zeros((_block_dim(layout),) * 2, dtype=complex)
        for j, off, mk, ml in layout:
            D[off:off + mk * ml, off:off + mk * ml] = np.kron(np.eye(mk), S[L, j])
        blocks[K, L] = D @ block @ D.conj().T
    return RetrievalOperator(mm, blocks)


def _random_psd(rng, dim):
    rank = int(rng.integers(1, dim + 1))
    G = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    return G @ G.conj().T / rank


def random_covariant_retrieval(p: LearningProblem, spec: StorageSpec, rng: np.random.Generator,
                               normalize: bool = True, max_tries: int = 100):
    """Random valid covariant retrieval operator and its fidelity ``F``.

    Draws mix random positive blocks with the estimation strategy at a random
    weight (so part of the sample lies near the optimum), then enforce the
    normalization by :func:`normalize_retrieval`.
    """
    mm = multiplicity_matrix(p)
    est = estimation_retrieval(p)
    for _ in range(max_tries):
        t = rng.uniform() ** 3
        blocks = {}
        for K, L, layout in _pairs(mm):
            rand = _random_psd(rng, _block_dim(layout))
            base = est.blocks.get((K, L))
            blocks[K, L] = t * rand + ((1 - t) * base if base is not None else 0)
        R = RetrievalOperator(mm, blocks)
        if not normalize:
            return R, retrieval_fidelity(R, spec)
        try:
            R = normalize_retrieval(R)
        except InfeasibleDraw:
            continue
        norm, min_eig = retrieval_residuals(R)
        if min_eig < -1e-10 or norm > 1e-9:
            continue
        return R, retrieval_fidelity(R, spec)
    raise InfeasibleDraw(f"no valid draw in {max_tries} attempts")


# ---------------------------------------------------------------------------
# reference-frame alignment


def pure_state_fidelity(channel_fidelity: float, dim: int) -> float:
    """Average pure-state fidelity from the channel fidelity: ``(d F + 1)/(d + 1)``."""
    return (dim * channel_fidelity + 1) / (dim + 1)


def _kron_power(U: np.ndarray, m: int) -> np.ndarray:
    out = U
    for _ in range(m - 1):
        out = np.einsum("nij,nkl->nikjl", out, U).reshape(len(U), out.shape[1] * 2, out.shape[2] * 2)
    return out


def alignment_fidelity(p: LearningProblem, spec: StorageSpec, cfg: SimConfig) -> SimResult:
    """Simulate the alignment protocol and average ``|<psi| corrected |psi>|^2``.

    Alice's frame is ``g``; Bob receives ``g^{(x)M}|psi>`` together with the
    memory state, estimates ``g_hat`` from the memory and applies ``g_hat^{-1 (x)M}``.
    """
    if p.task != "invert":
        raise ValueError("alignment uses the inversion problem (task='invert')")
    d_msg = p.target_dim

    def values(rng, n):
        g = groups.haar_sample(p.group, rng, n)
        g_hat = sample_estimate(g, spec, p, rng)
        W = np.conj(np.swapaxes(groups.defining_matrix(p.group, g_hat), -1, -2)) @ groups.defining_matrix(p.group, g)
        V = _kron_power(W, p.m)
        psi = rng.normal(size=(n, d_msg)) + 1j * rng.normal(size=(n, d_msg))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        amp = np.einsum("ni,nij,nj->n", psi.conj(), V, psi)
        return np.abs(amp) ** 2

    return run_chunks(values, cfg)


def alignment_reference(p: LearningProblem, spec: StorageSpec) -> float:
    return pure_state_fidelity(fidelity_of_storage(spec, p), p.target_dim)
