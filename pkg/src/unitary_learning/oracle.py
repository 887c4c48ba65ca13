"""Brute-force check in the full space ``(C^2)^{(x)N}``.

The block-form objects are embedded into the qubit tensor product, the whole
measure-and-rotate learning network is assembled as one comb operator ``L`` on
``H_0 ... H_{2N+3}``, and the fidelity is recomputed by integrating
``<<U|<<U*|^N L |U*>>^N |U>>`` over the group.

Label layout of ``L``: ``H0`` and ``H{2N+1}`` are one-dimensional; example ``n``
takes its input on ``H{2n-1}`` and returns its output on ``H{2n}``; the fresh
input arrives on ``H{2N+2}`` and the result leaves on ``H{2N+3}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import groups
from .comb import ChoiOperator, CombSpec, is_comb
from .learning import LearningProblem, StorageSpec, input_decomposition
from .simulator import DegreeTooLow
from .tensor import LabeledOperator, System

MAX_N = 3


class CapExceeded(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BlockEmbedding:
    """Isometry ``W`` from ``(+)_j (C^{m_j} (x) H_j)`` onto ``(C^2)^{(x)N}``.

    Columns are ordered by irrep label, then multiplicity copy, then basis index
    (``m`` descending for su2).
    """

    group: str
    n: int
    W: np.ndarray
    decomposition: groups.Decomposition
    offsets: dict  # (label, copy) -> first column

    def columns(self, label: int, copy: int = 0) -> np.ndarray:
        start = self.offsets[label, copy]
        return self.W[:, start:start + groups.irrep_dim(self.group, label)]

    def multiplicity_columns(self, label: int, u) -> np.ndarray:
        """Copy of ``H_j`` selected by the unit multiplicity vector ``u``."""
        return sum(c * self.columns(label, k) for k, c in enumerate(u))

    def block_matrix(self, g) -> np.ndarray:
        """``(+)_j (I_{m_j} (x) U_j(g))`` in the column order of ``W``."""
        size = self.W.shape[1]
        out = np.zeros((size, size), dtype=complex)
        for (label, _), start in self.offsets.items():
            d = groups.irrep_dim(self.group, label)
            out[start:start + d, start:start + d] = groups.irrep_matrix(self.group, label, g)
        return out


def _check_cap(n, cap):
    if n > cap:
        raise CapExceeded(f"N={n} exceeds the oracle cap {cap}")


def build_embedding(group: str, n: int, cap: int = MAX_N) -> BlockEmbedding:
    _check_cap(n, cap)
    if group == "u1":
        blocks: dict[int, list[np.ndarray]] = {}
        for idx in range(2 ** n):
            bits = format(idx, f"0{n}b")
            w = bits.count("0") - bits.count("1")
            e = np.zeros((2 ** n, 1))
            e[idx] = 1
            blocks.setdefault(w, []).append(e)
    elif group == "su2":
        coupled = [(1, np.eye(2))]
        for _ in range(n - 1):
            nxt = []
            for j, V in coupled:
                for J in (j - 1, j + 1):
                    if J >= 0:
                        nxt.append((J, np.kron(V, np.eye(2)) @ groups.coupling_isometry(j, 1, J)))
            coupled = nxt
        blocks = {}
        for j, V in coupled:
            blocks.setdefault(j, []).append(V)
    else:
        raise groups.GroupMismatch(group)
    dec = groups.tensor_power(group, [groups.base_rep(group)] * n)
    cols, offsets, start = [], {}, 0
    for label in dec.labels:
        for copy, V in enumerate(blocks[label]):
            offsets[label, copy] = start
            cols.append(V)
            start += V.shape[1]
    return BlockEmbedding(group, n, np.hstack(cols).astype(complex), dec, offsets)


def _power(U: np.ndarray, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, U)
    return out


def intertwiner_residual(emb: BlockEmbedding, g) -> float:
    U = groups.defining_matrix(emb.group, g)
    lhs = _power(U, emb.n) @ emb.W
    return float(np.abs(lhs - emb.W @ emb.block_matrix(g)).max())


def comb_labels(n: int) -> list[System]:
    dims = [1] + [2] * (2 * n) + [1, 2, 2]
    return [System(f"H{k}", d) for k, d in enumerate(dims)]


def learning_comb_spec(n: int) -> CombSpec:
    labels = comb_labels(n)
    return CombSpec(tuple((labels[2 * k], labels[2 * k + 1]) for k in range(n + 2)))


def _default_multiplicity_vectors(emb: BlockEmbedding) -> dict:
    out = {}
    for label, _, m in emb.decomposition.blocks:
        u = np.zeros(m)
        u[0] = 1
        out[label] = u
    return out


def storage_vector(emb: BlockEmbedding, spec: StorageSpec, mult_vectors=None) -> np.ndarray:
    """``|phi>`` as an (O, B) matrix: example inputs by ancilla."""
    mult_vectors = mult_vectors or _default_multiplicity_vectors(emb)
    phi = np.zeros((2 ** emb.n, 2 ** emb.n), dtype=complex)
    for j, q in spec.probs:
        d = groups.irrep_dim(emb.group, j)
        phi += math.sqrt(q / d) * emb.multiplicity_columns(j, mult_vectors[j]) @ emb.columns(j).T
    return phi


def stored_state(emb: BlockEmbedding, spec: StorageSpec, g, mult_vectors=None) -> np.ndarray:
    """``(U^{(x)N} (x) I)|phi>`` flattened over (E, B)."""
    U = _power(groups.defining_matrix(emb.group, g), emb.n)
    return (U @ storage_vector(emb, spec, mult_vectors)).reshape(-1)


def embed_memory_state(emb: BlockEmbedding, spec: StorageSpec, block_vector: np.ndarray,
                       mult_vectors=None) -> np.ndarray:
    """Map a block memory state ``(+)_j |X_j>>`` into the (E, B) space."""
    mult_vectors = mult_vectors or _default_multiplicity_vectors(emb)
    out = np.zeros((2 ** emb.n, 2 ** emb.n), dtype=complex)
    pos = 0
    for j, _ in spec.probs:
        d = groups.irrep_dim(emb.group, j)
        X = block_vector[pos:pos + d * d].reshape(d, d)
        out += emb.multiplicity_columns(j, mult_vectors[j]) @ X @ emb.columns(j).T
        pos += d * d
    return out.reshape(-1)


def _povm_vectors(emb: BlockEmbedding, nodes, mult_vectors) -> np.ndarray:
    """``|eta_g> = (+)_j sqrt(d_j) |U_j(g)>>`` on (E, B) for each node, as (nodes, E, B)."""
    out = np.zeros((len(nodes), 2 ** emb.n, 2 ** emb.n), dtype=complex)
    for j in emb.decomposition.labels:
        d = groups.irrep_dim(emb.group, j)
        left = emb.multiplicity_columns(j, mult_vectors[j])
        right = emb.columns(j)
        for k, g in enumerate(nodes):
            out[k] += math.sqrt(d) * left @ groups.irrep_matrix(emb.group, j, g) @ right.T
    return out


def _complement_basis(emb: BlockEmbedding, mult_vectors) -> np.ndarray:
    cols = []
    for j in emb.decomposition.labels:
        left = emb.multiplicity_columns(j, mult_vectors[j])
        cols.append(np.kron(left, emb.columns(j)))
    Q = np.hstack(cols)
    P = np.eye(Q.shape[0]) - Q @ Q.conj().T
    w, V = np.linalg.eigh(P)
    return V[:, w > 0.5].T.reshape(-1, 2 ** emb.n, 2 ** emb.n)


def _interleave(n: int, X: np.ndarray) -> np.ndarray:
    """Reorder an (E_1..E_N, O_1..O_N) vector batch to (O_1, E_1, ..., O_N, E_N)."""
    t = X.reshape((len(X),) + (2,) * (2 * n))
    perm = [0]
    for k in range(n):
        perm += [1 + n + k, 1 + k]
    return t.transpose(perm).reshape(len(X), -1)


def oracle_degree(group: str, n: int) -> int:
    return 2 * n + 2 if group == "su2" else n + 1


def full_learning_choi(p: LearningProblem, spec: StorageSpec, degree: int | None = None,
                       mult_vectors=None, cap: int = MAX_N) -> ChoiOperator:
    """Comb of the parallel-storage, measure-and-rotate learning network.

    The covariant POVM is discretized on the group quadrature, which reproduces
    the continuous POVM exactly when ``degree`` covers the integrand bandwidth. The
    null outcome (memory outside its support) triggers a complete depolarization.
    """
    _check_cap(p.n, cap)
    if p.m != 1 or p.example_reps is not None:
        raise ValueError("the oracle covers M = 1 with identical qubit examples")
    need = oracle_degree(p.group, p.n)
    degree = need if degree is None else degree
    if degree < need:
        raise DegreeTooLow(f"degree {degree} < {need}")
    emb = build_embedding(p.group, p.n, cap)
    mult_vectors = mult_vectors or _default_multiplicity_vectors(emb)
    unknown = set(spec.labels) - set(emb.decomposition.labels)
    if unknown:
        raise ValueError(f"storage irreps {sorted(unknown)} not in U^(x)N")
    q = groups.quadrature(p.group, degree)
    phi = storage_vector(emb, spec, mult_vectors)

    # tester elements T = |X>><<X|, X = conj(eta) phi^T on (E, O)
    eta = _povm_vectors(emb, q.nodes, mult_vectors)
    X = _interleave(p.n, np.conj(eta) @ phi.T)
    rest = _complement_basis(emb, mult_vectors)
    Xr = _interleave(p.n, np.conj(rest) @ phi.T) if len(rest) else np.zeros((0, X.shape[1]))

    U_hat = groups.defining_matrix(p.group, q.nodes)
    if p.task == "invert":
        U_hat = np.conj(np.swapaxes(U_hat, -1, -2))
    # Choi of the rotation in (input, output) order: vec(U^T)
    c = np.swapaxes(U_hat, -1, -2).reshape(len(q), 4)
    tester = np.einsum("k,ka,kb,kc,kd->acbd", q.weights, X, X.conj(), c, c.conj())
    dim_t = X.shape[1]
    L = tester.reshape(dim_t * 4, dim_t * 4)
    if len(Xr):
        T_null = Xr.T @ Xr.conj()
        L = L + np.kron(T_null, np.eye(4) / 2)
    labels = comb_labels(p.n)
    op = LabeledOperator(tuple(labels), L)
    ids = [s.id for s in labels]
    return ChoiOperator(op, frozenset(ids[0::2]), frozenset(ids[1::2]))


def _test_vectors(p: LearningProblem, U: np.ndarray) -> np.ndarray:
    """``|U*>>^N |U>>`` (or ``|U^dag>>`` as target) in the label order of ``L``."""
    ex = np.conj(U).T.reshape(-1)  # (O, E) order of <<U*| output-first
    vec = np.ones(1, dtype=complex)
    for _ in range(p.n):
        vec = np.kron(vec, ex)
    target = np.conj(U).reshape(-1) if p.task == "invert" else U.T.reshape(-1)
    return np.kron(vec, target)


def full_fidelity(p: LearningProblem, spec: StorageSpec, degree: int | None = None,
                  L: ChoiOperator | None = None) -> float:
    """``(1/d^2) int <<U|<<U*|^N L |U*>>^N |U>> dU`` by exact quadrature."""
    L = L if L is not None else full_learning_choi(p, spec, degree)
    need = oracle_degree(p.group, p.n)
    q = groups.quadrature(p.group, max(degree or need, need))
    Us = groups.defining_matrix(p.group, q.nodes)
    vecs = np.array([_test_vectors(p, U) for U in Us])
    vals = np.einsum("ka,ab,kb->k", vecs.conj(), L.matrix, vecs)
    return float(np.real(np.sum(q.weights * vals))) / p.base_dim ** 2


def covariance_operator(p: LearningProblem, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``U_out (x) V*_in (x) (V_O (x) U*_E)^N`` (emulation) in label order; inversion swaps the last pair."""
    op = np.ones((1, 1), dtype=complex)
    for _ in range(p.n):
        op = np.kron(op, np.kron(V, np.conj(U)))
    if p.task == "invert":
        return np.kron(op, np.kron(np.conj(U), V))
    return np.kron(op, np.kron(np.conj(V), U))


def covariance_residual(L: ChoiOperator, p: LearningProblem, rng: np.random.Generator,
                        pairs: int = 100) -> float:
    worst = 0.0
    for _ in range(pairs):
        U = groups.defining_matrix(p.group, groups.haar_sample(p.group, rng))
        V = groups.defining_matrix(p.group, groups.haar_sample(p.group, rng))
        W = covariance_operator(p, U, V)
        worst = max(worst, float(np.abs(L.matrix @ W - W @ L.matrix).max()))
    return worst


def verify(p: LearningProblem, spec: StorageSpec, rng: np.random.Generator, pairs: int = 100,
           tol_comb: float = 1e-9, tol_cov: float = 1e-8) -> dict:
    """Run the structural and fidelity checks for one problem and storage state."""
    from .learning import fidelity_of_storage

    L = full_learning_choi(p, spec)
    check = is_comb(L, learning_comb_spec(p.n), tol_comb)
    cov = covariance_residual(L, p, rng, pairs)
    full = full_fidelity(p, spec, L=L)
    block = fidelity_of_storage(spec, p)
    emb = build_embedding(p.group, p.n)
    inter = max(intertwiner_residual(emb, groups.haar_sample(p.group, rng)) for _ in range(pairs))
    return {
        "comb_ok": bool(check),
        "comb_level": check.level,
        "comb_residual": check.residual,
        "covariance_residual": cov,
        "intertwiner_residual": inter,
        "full_fidelity": full,
        "block_fidelity": block,
        "fidelity_gap": abs(full - block),
        "ok": bool(check) and cov <= tol_cov and inter <= 1e-10 and abs(full - block) <= 1e-6,
    }
