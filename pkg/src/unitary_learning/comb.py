"""Choi operators, the link product, and channel / comb normalization checks."""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import (
    HERMITIAN_TOL,
    LabeledOperator,
    ShapeMismatch,
    System,
    TensorError,
    embed,
    identity,
    is_psd,
    partial_trace,
    vectorize,
)


class LabelClash(TensorError):
    pass


class NotUnitary(TensorError):
    pass


@dataclass(frozen=True, eq=False)
class ChoiOperator:
    op: LabeledOperator
    inputs: frozenset
    outputs: frozenset

    def __post_init__(self):
        inputs, outputs = frozenset(self.inputs), frozenset(self.outputs)
        if inputs & outputs or (inputs | outputs) != set(self.op.ids):
            raise LabelClash(
                f"inputs {sorted(inputs)} / outputs {sorted(outputs)} do not partition {self.op.ids}"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @property
    def labels(self) -> tuple[System, ...]:
        return self.op.labels

    def is_positive(self, tol: float = HERMITIAN_TOL) -> bool:
        return is_psd(self.op.matrix, tol)


def state(rho, labels: Sequence[System]) -> ChoiOperator:
    """A state is a channel with a one-dimensional input."""
    labels = tuple(labels)
    return ChoiOperator(LabeledOperator(labels, rho), frozenset(), frozenset(s.id for s in labels))


def choi(matrix, out_labels: Sequence[System], in_labels: Sequence[System]) -> ChoiOperator:
    out_labels, in_labels = tuple(out_labels), tuple(in_labels)
    return ChoiOperator(
        LabeledOperator(out_labels + in_labels, matrix),
        frozenset(s.id for s in in_labels),
        frozenset(s.id for s in out_labels),
    )


def choi_of_unitary(U, out_labels: Sequence[System], in_labels: Sequence[System],
                    tol: float = 1e-10) -> ChoiOperator:
    """``|U>><<U|`` with the output systems first."""
    matrix = U.matrix if isinstance(U, LabeledOperator) else np.asarray(U, dtype=complex)
    if matrix.shape[0] != matrix.shape[1]:
        raise NotUnitary(f"non-square operator {matrix.shape}")
    err = np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0])).max()
    if err > tol:
        raise NotUnitary(f"|U^dag U - I| = {err:.3e}")
    v = vectorize(matrix, out_labels, in_labels).entries
    return choi(np.outer(v, v.conj()), out_labels, in_labels)


def link(C: ChoiOperator, D: ChoiOperator) -> ChoiOperator:
    """Link product ``D * C``: contract the systems the two operators share.

    Shared ids must be an output of one operator and an input of the other. The
    result acts on D's remaining systems followed by C's remaining systems.
    """
    shared = set(C.op.ids) & set(D.op.ids)
    for s in shared:
        if not ((s in C.outputs and s in D.inputs) or (s in C.inputs and s in D.outputs)):
            raise LabelClash(f"shared label {s!r} is not an output/input pair")
        if C.op.system(s).dim != D.op.system(s).dim:
            raise ShapeMismatch(f"shared label {s!r} has different dimensions")

    letters = iter(string.ascii_letters)
    row, col = {}, {}
    for s in D.op.ids + tuple(i for i in C.op.ids if i not in shared):
        row[s], col[s] = next(letters), next(letters)
    d_sub = "".join(row[s] for s in D.op.ids) + "".join(col[s] for s in D.op.ids)
    c_sub = "".join(row[s] for s in C.op.ids) + "".join(col[s] for s in C.op.ids)
    keep = [s for s in D.op.ids if s not in shared] + [s for s in C.op.ids if s not in shared]
    out = "".join(row[s] for s in keep) + "".join(col[s] for s in keep)
    t = np.einsum(f"{d_sub},{c_sub}->{out}", D.op.tensor(), C.op.tensor())

    labels = tuple(D.op.system(s) for s in keep if s in D.op.ids) + tuple(
        C.op.system(s) for s in keep if s not in D.op.ids
    )
    dim = int(np.prod([s.dim for s in labels])) if labels else 1
    return ChoiOperator(
        LabeledOperator(labels, t.reshape(dim, dim)),
        (C.inputs | D.inputs) - shared,
        (C.outputs | D.outputs) - shared,
    )


def apply_channel(C: ChoiOperator, rho) -> LabeledOperator:
    """``C(rho) = Tr_in[C (I_out (x) rho^T)]``."""
    if not isinstance(rho, LabeledOperator):
        labels = [C.op.system(s) for s in C.op.ids if s in C.inputs]
        rho = LabeledOperator(tuple(labels), rho)
    if set(rho.ids) != set(C.inputs):
        raise ShapeMismatch(f"state labels {rho.ids} do not match channel inputs {sorted(C.inputs)}")
    for s in rho.labels:
        if C.op.system(s.id).dim != s.dim:
            raise ShapeMismatch(f"dimension mismatch on {s.id!r}")
    out = link(state(rho.matrix, rho.labels), C)
    return out.op


def is_channel(C: ChoiOperator, tol: float = HERMITIAN_TOL) -> bool:
    if not C.is_positive(tol):
        return False
    out_ids = [s for s in C.op.ids if s in C.outputs]
    in_labels = [s for s in C.op.labels if s.id in C.inputs]
    reduced = partial_trace(C.op, out_ids) if out_ids else C.op
    if not in_labels:
        return abs(complex(reduced if np.isscalar(reduced) else reduced.trace()) - 1) <= tol
    reduced = embed(reduced, in_labels) if isinstance(reduced, LabeledOperator) else reduced
    return bool(np.abs(reduced.matrix - np.eye(reduced.dim)).max() <= tol)


def random_channel(rng: np.random.Generator, out_labels, in_labels, rank: int | None = None) -> ChoiOperator:
    """Random Choi operator, normalized by congruence with ``Tr_out[C]^{-1/2}``."""
    d_out = int(np.prod([s.dim for s in out_labels])) if out_labels else 1
    d_in = int(np.prod([s.dim for s in in_labels])) if in_labels else 1
    rank = rank or d_out * d_in
    G = rng.normal(size=(d_out * d_in, rank)) + 1j * rng.normal(size=(d_out * d_in, rank))
    C = G @ G.conj().T
    T = np.einsum("aiaj->ij", C.reshape(d_out, d_in, d_out, d_in))
    w, V = np.linalg.eigh(T)
    S = np.kron(np.eye(d_out), V @ np.diag(w ** -0.5) @ V.conj().T)
    return choi(S @ C @ S, out_labels, in_labels)


@dataclass(frozen=True)
class CombSpec:
    """Causally ordered teeth ``(input, output)``; slot k receives ``input`` then emits ``output``."""

    slots: tuple[tuple[System, System], ...]

    def __post_init__(self):
        slots = tuple((a, b) for a, b in self.slots)
        ids = [s.id for slot in slots for s in slot]
        if len(set(ids)) != len(ids):
            raise LabelClash(f"comb labels not distinct: {ids}")
        object.__setattr__(self, "slots", slots)

    @property
    def labels(self) -> tuple[System, ...]:
        return tuple(s for slot in self.slots for s in slot)


@dataclass(frozen=True)
class CombCheck:
    ok: bool
    level: int | None = None
    residual: float = 0.0
    reason: str = ""

    def __bool__(self):
        return self.ok


def comb_residuals(L: LabeledOperator, spec: CombSpec) -> list[float]:
    """Residual of the recursive normalization at every level, highest level first."""
    residuals = []
    current = L
    for k in range(len(spec.slots) - 1, -1, -1):
        s_in, s_out = spec.slots[k]
        traced = partial_trace(current, [s_out.id])
        if k == 0:
            expected = identity(traced.labels)
            residuals.append(float(np.abs(traced.matrix - expected.matrix).max()))
            break
        lower = partial_trace(traced, [s_in.id])
        lower = LabeledOperator(lower.labels, lower.matrix / s_in.dim)
        expected = embed(lower, traced.labels)
        residuals.append(float(np.abs(traced.matrix - expected.matrix).max()))
        current = lower
    return residuals


def is_comb(L, spec: CombSpec, tol: float = HERMITIAN_TOL) -> CombCheck:
    """Check positivity and ``Tr_{out_k} L^(k) = I_{in_k} (x) L^(k-1)`` for every level k.

    The witness is the first (highest) violated level.
    """
    op = L.op if isinstance(L, ChoiOperator) else L
    if set(op.ids) != {s.id for s in spec.labels}:
        return CombCheck(False, None, float("inf"), "labels do not match comb spec")
    if not is_psd(op.matrix, tol):
        evals = np.linalg.eigvalsh((op.matrix + op.matrix.conj().T) / 2)
        return CombCheck(False, None, float(-evals[0]), "not positive semidefinite")
    n = len(spec.slots)
    for i, r in enumerate(comb_residuals(op, spec)):
        if r > tol:
            return CombCheck(False, n - 1 - i, r, "normalization violated")
    return CombCheck(True)
