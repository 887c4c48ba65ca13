"""Optimal storage states and the estimation fidelity for learning a group unitary.

With the examples applied in parallel on ``(+)_j sqrt(p_j/d_j)|I_j>>`` and the
measure-and-rotate retrieval, the achieved fidelity is

    F(p) = (1/d_T^2) sum_K (sum_j m_K^(j) sqrt(p_j))^2 = x^T A x,   x_j = sqrt(p_j),

where ``m_K^(j)`` is the multiplicity of ``K`` in ``target (x) conj(j)`` and
``d_T`` is the target dimension. Maximizing over unit ``x >= 0`` is a
principal-eigenvector problem for the nonnegative matrix ``A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import groups
from .groups import Decomposition

TASKS = ("emulate", "invert")
FIGURES = ("global", "single_copy")


class ConvergenceFailure(RuntimeError):
    pass


class IrrepMismatch(ValueError):
    pass


class UnsupportedM(ValueError):
    pass


@dataclass(frozen=True)
class LearningProblem:
    group: str
    n: int
    m: int = 1
    task: str = "emulate"
    figure: str = "global"
    example_reps: tuple[Decomposition, ...] | None = None

    def __post_init__(self):
        groups._check_group(self.group)
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need N >= 1 and M >= 1, got N={self.n}, M={self.m}")
        figure = self.figure.replace("-", "_")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if figure not in FIGURES:
            raise ValueError(f"figure must be one of {FIGURES}")
        object.__setattr__(self, "figure", figure)
        if self.example_reps is not None:
            reps = tuple(self.example_reps)
            if len(reps) != self.n:
                raise ValueError(f"{len(reps)} example representations for N={self.n}")
            for r in reps:
                if r.group != self.group:
                    raise groups.GroupMismatch(f"{r.group} example for a {self.group} problem")
            object.__setattr__(self, "example_reps", reps)

    @property
    def base_dim(self) -> int:
        return 2

    @property
    def target_dim(self) -> int:
        return self.base_dim ** self.m

    def with_(self, **changes) -> "LearningProblem":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {"group": self.group, "N": self.n, "M": self.m, "task": self.task, "figure": self.figure}
        if self.example_reps is not None:
            out["example_reps"] = [r.as_dict() for r in self.example_reps]
        return out


def input_decomposition(p: LearningProblem) -> Decomposition:
    reps = p.example_reps or (groups.base_rep(p.group),) * p.n
    return groups.tensor_power(p.group, list(reps))


def target_decomposition(p: LearningProblem) -> Decomposition:
    target = groups.tensor_power(p.group, [groups.base_rep(p.group)] * p.m)
    return groups.conjugate_decomposition(target) if p.task == "invert" else target


@dataclass(frozen=True, eq=False)
class MultiplicityMatrix:
    group: str
    input_irreps: tuple[int, ...]
    input_dims: tuple[int, ...]
    target_dim: int
    k_labels: tuple[int, ...]
    table: np.ndarray  # (len(k_labels), len(input_irreps)) integers m_K^(j)
    A: np.ndarray

    @property
    def k_dims(self) -> tuple[int, ...]:
        return tuple(groups.irrep_dim(self.group, k) for k in self.k_labels)

    def mult(self, K: int, j: int) -> int:
        return int(self.table[self.k_labels.index(K), self.input_irreps.index(j)])

    def support(self, K: int) -> tuple[int, ...]:
        """Input irreps ``j`` with ``m_K^(j) > 0``."""
        row = self.table[self.k_labels.index(K)]
        return tuple(j for j, m in zip(self.input_irreps, row) if m > 0)


def multiplicity_matrix(p: LearningProblem) -> MultiplicityMatrix:
    inputs = input_decomposition(p)
    target = target_decomposition(p)
    columns = []
    for j in inputs.labels:
        conj_j = Decomposition(p.group, ((groups.conjugate(p.group, j), 1),))
        columns.append(groups.fuse_decompositions(target, conj_j).as_dict())
    k_labels = sorted({k for col in columns for k in col}, key=lambda k: -k if p.group == "u1" else k)
    table = np.array([[col.get(k, 0) for col in columns] for k in k_labels], dtype=np.int64)
    d_t = target.dim
    A = (table.T @ table).astype(float) / d_t ** 2
    return MultiplicityMatrix(
        p.group,
        inputs.labels,
        tuple(d for _, d, _ in inputs.blocks),
        d_t,
        tuple(k_labels),
        table,
        A,
    )


@dataclass(frozen=True)
class StorageSpec:
    """Probabilities ``p_j`` over input irreps of the storage state ``(+)_j sqrt(p_j/d_j)|I_j>>``."""

    group: str
    probs: tuple[tuple[int, float], ...]

    def __post_init__(self):
        probs = tuple((int(j), float(q)) for j, q in self.probs)
        if any(q < 0 for _, q in probs):
            raise ValueError("negative probability")
        if abs(sum(q for _, q in probs) - 1) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(q for _, q in probs)!r}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_mapping(cls, group: str, probs: Mapping[int, float]) -> "StorageSpec":
        return cls(group, tuple(probs.items()))

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.probs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(groups.irrep_dim(self.group, j) for j in self.labels)

    def as_dict(self) -> dict[int, float]:
        return dict(self.probs)

    def vector(self, labels: Sequence[int]) -> np.ndarray:
        probs = self.as_dict()
        unknown = set(probs) - set(labels)
        if unknown:
            raise IrrepMismatch(f"irreps {sorted(unknown)} are not among {tuple(labels)}")
        return np.array([probs.get(j, 0.0) for j in labels])


@dataclass(frozen=True, eq=False)
class FidelityReport:
    fidelity: float
    storage: StorageSpec
    problem: LearningProblem
    eigenvalue: float
    iterations: int
    amplitudes: np.ndarray = field(repr=False, default=None)


def _normalized_spec(group, labels, weights) -> StorageSpec:
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    return StorageSpec(group, tuple(zip(labels, weights)))


def principal_eigenpair(A: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000,
                        squarings: int = 10) -> tuple[float, np.ndarray, int]:
    """Power iteration for the leading eigenpair of a symmetric nonnegative matrix.

    The iteration runs on ``A^(2^squarings)`` (rescaled), which has the same
    eigenvectors and a much larger spectral gap; convergence is declared when the
    Rayleigh quotient of ``A`` changes by less than ``tol``.
    """
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0]), np.ones(1), 0
    B = A / max(np.abs(A).max(), np.finfo(float).tiny)
    for _ in range(squarings):
        B = B @ B
        B /= max(B.max(), np.finfo(float).tiny)
    x = np.full(n, 1 / math.sqrt(n))
    lam = float(x @ A @ x)
    for it in range(1, max_iter + 1):
        y = B @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            raise ConvergenceFailure("power iteration collapsed to the null space")
        x = y / norm
        new = float(x @ A @ x)
        if abs(new - lam) < tol and it > 1:
            return new, x, it
        lam = new
    raise ConvergenceFailure(f"no convergence after {max_iter} iterations")


def _projected_ascent(A: np.ndarray, iters: int = 20_000, tol: float = 1e-14) -> np.ndarray:
    n = A.shape[0]
    x = np.full(n, 1 / math.sqrt(n))
    step = 1.0 / max(np.linalg.norm(A, 2), 1e-300)
    val = x @ A @ x
    for _ in range(iters):
        y = np.maximum(x + step * (A @ x), 0)
        y /= np.linalg.norm(y)
        new = y @ A @ y
        x = y
        if abs(new - val) < tol:
            break
        val = new
    return x


def optimal_amplitudes(A: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000):
    """Unit ``x >= 0`` maximizing ``x^T A x``; returns ``(value, x, iterations)``."""
    n = A.shape[0]
    n_comp, comp = connected_components(A > 0, directed=False)
    best = None
    total_iters = 0
    for c in range(n_comp):
        idx = np.flatnonzero(comp == c)
        lam, v, it = principal_eigenpair(A[np.ix_(idx, idx)], tol, max_iter)
        total_iters += it
        if v.sum() < 0:
            v = -v
        if v.min() < -1e-10:
            v = _projected_ascent(A[np.ix_(idx, idx)])
        v = np.clip(v, 0, None)
        v /= np.linalg.norm(v)
        lam = float(v @ A[np.ix_(idx, idx)] @ v)
        if best is None or lam > best[0]:
            best = (lam, idx, v)
    lam, idx, v = best
    x = np.zeros(n)
    x[idx] = v
    return float(x @ A @ x), x, total_iters


def optimize_storage(p: LearningProblem, tol: float = 1e-13, max_iter: int = 100_000) -> FidelityReport:
    """Optimal storage probabilities and the resulting fidelity ``F_est``."""
    if p.figure == "single_copy" and p.m > 1:
        report = optimize_storage(p.with_(m=1, figure="global"), tol, max_iter)
        return replace(report, problem=p)
    mm = multiplicity_matrix(p)
    value, x, iters = optimal_amplitudes(mm.A, tol, max_iter)
    spec = _normalized_spec(p.group, mm.input_irreps, x ** 2)
    return FidelityReport(value, spec, p, value, iters, x)


def fidelity_of_storage(spec: StorageSpec, p: LearningProblem) -> float:
    """``(1/d_T^2) sum_K (sum_j m_K^(j) sqrt(p_j))^2`` for the given storage state."""
    if p.figure == "single_copy":
        p = p.with_(m=1, figure="global")
    mm = multiplicity_matrix(p)
    if spec.group != p.group:
        raise IrrepMismatch(f"{spec.group} storage state for a {p.group} problem")
    x = np.sqrt(spec.vector(mm.input_irreps))
    amplitudes = mm.table @ x
    return float(amplitudes @ amplitudes) / mm.target_dim ** 2


def single_copy_fidelity(p: LearningProblem) -> float:
    """Single-copy fidelity of the measure-and-rotate strategy: the M=1 optimum for every M."""
    return optimize_storage(p.with_(m=1, figure="global")).fidelity


def likelihood_state(p: LearningProblem) -> StorageSpec:
    inputs = input_decomposition(p)
    return _normalized_spec(p.group, inputs.labels, [d * d for _, d, _ in inputs.blocks])


def asymptotic_state(p: LearningProblem) -> StorageSpec:
    """Large-N sine states.

    u1: ``p_k = 2/(N+1) sin^2(pi (k + 1/2)/(N+1))`` over the weights in
    descending order. su2: ``p_j`` proportional to ``sin^2(2 pi j / N)``, which is
    the weight of ``sin(2 pi j/N)/sqrt(2j+1) |I_j>>`` once the norm ``sqrt(2j+1)`` of
    ``|I_j>>`` is accounted for.
    """
    if p.m != 1:
        raise UnsupportedM("sine states are defined for M = 1 only")
    labels = input_decomposition(p).labels
    if p.group == "u1":
        n = len(labels)
        k = np.arange(n)
        weights = np.sin(np.pi * (k + 0.5) / n) ** 2
    else:
        weights = np.array([math.sin(math.pi * twoJ / p.n) ** 2 for twoJ in labels])
        weights[np.abs(weights) < 1e-15] = 0.0
        if weights.sum() <= 0:
            raise ValueError(f"sine state vanishes identically for N={p.n}")
    return _normalized_spec(p.group, labels, weights)


def storage_state(p: LearningProblem, kind: str) -> StorageSpec:
    if kind == "optimal":
        return optimize_storage(p).storage
    if kind == "likelihood":
        return likelihood_state(p)
    if kind == "sine":
        return asymptotic_state(p)
    raise ValueError(f"unknown storage state {kind!r}")


# ---------------------------------------------------------------------------
# memory states and the covariant POVM


def memory_state(spec: StorageSpec, g, p: LearningProblem) -> np.ndarray:
    """``(+)_j sqrt(p_j/d_j) |U_j(g)>>`` as one concatenated vector (blocks in spec order)."""
    blocks = []
    for j, q in spec.probs:
        U = groups.irrep_matrix(p.group, j, g)
        blocks.append(math.sqrt(q / U.shape[0]) * U.reshape(-1))
    return np.concatenate(blocks)


def memory_overlap(spec: StorageSpec, g, h, p: LearningProblem) -> complex:
    """``<phi_g|phi_h> = sum_j (p_j/d_j) Tr[U_j(g)^dag U_j(h)]``."""
    rel = groups.multiply(p.group, groups.inverse(p.group, g), h)
    return complex(sum(q / groups.irrep_dim(p.group, j) * groups.character(p.group, j, rel)
                       for j, q in spec.probs))


def povm_overlap(spec: StorageSpec, g, g_hat, p: LearningProblem) -> np.ndarray:
    """``<eta_ghat|phi_g> = sum_j sqrt(p_j) Tr[U_j(ghat)^dag U_j(g)]``, batched over ``g_hat``."""
    rel = groups.multiply(p.group, groups.inverse(p.group, g_hat), g)
    return sum(math.sqrt(q) * groups.character(p.group, j, rel) for j, q in spec.probs)


def povm_density(spec: StorageSpec, g, g_hat, p: LearningProblem) -> np.ndarray:
    return np.abs(povm_overlap(spec, g, g_hat, p)) ** 2


def goal_function(p: LearningProblem, g, g_hat) -> np.ndarray:
    """``f_M = (|Tr[U(g)^dag U(g_hat)]| / d)^(2M)``, batched."""
    if p.group == "u1":
        delta = np.asarray(g_hat, dtype=float) - np.asarray(g, dtype=float)
        tr = 2 * np.cos(delta)
    else:
        G, H = np.asarray(g), np.asarray(g_hat)
        tr = np.einsum("...ij,...ij->...", G.conj(), H)
    return (np.abs(tr) / p.base_dim) ** (2 * p.m)
