"""Dense linear algebra over ordered lists of labeled subsystems.

Every operator carries the list of systems it acts on. Matrices use row-major
flattening of the multi-index, leftmost label most significant, and each label
has a fixed computational basis ``0..dim-1`` that all transposes and
vectorizations refer to.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_TOTAL_DIM = 4096
HERMITIAN_TOL = 1e-10


class TensorError(ValueError):
    pass


class DuplicateLabel(TensorError):
    pass


class UnknownLabel(TensorError):
    pass


class InvalidPermutation(TensorError):
    pass


class NotHermitian(TensorError):
    pass


class ShapeMismatch(TensorError):
    pass


class DimensionCapExceeded(TensorError):
    pass


@dataclass(frozen=True)
class System:
    """A Hilbert space factor with a unique id."""

    id: str
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"system {self.id!r} has dimension {self.dim} < 1")


def _as_systems(labels) -> tuple[System, ...]:
    labels = tuple(labels)
    ids = [s.id for s in labels]
    if len(set(ids)) != len(ids):
        raise DuplicateLabel(f"repeated label ids in {ids}")
    return labels


def _total_dim(labels: Sequence[System]) -> int:
    return int(np.prod([s.dim for s in labels], dtype=np.int64)) if labels else 1


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    labels: tuple[System, ...]
    matrix: np.ndarray

    def __post_init__(self):
        labels = _as_systems(self.labels)
        dim = _total_dim(labels)
        if dim > MAX_TOTAL_DIM:
            raise DimensionCapExceeded(f"total dimension {dim} exceeds cap {MAX_TOTAL_DIM}")
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (dim, dim):
            raise ShapeMismatch(f"matrix shape {matrix.shape} does not match labels ({dim}, {dim})")
        matrix = matrix.copy()
        matrix.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", matrix)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.labels)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def system(self, label_id: str) -> System:
        for s in self.labels:
            if s.id == label_id:
                return s
        raise UnknownLabel(label_id)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def tensor(self) -> np.ndarray:
        """Matrix reshaped to axes (row_0, ..., row_{n-1}, col_0, ..., col_{n-1})."""
        return self.matrix.reshape(self.dims * 2)

    def __repr__(self):
        return f"LabeledOperator({', '.join(f'{s.id}:{s.dim}' for s in self.labels)})"


@dataclass(frozen=True, eq=False)
class LabeledVector:
    labels: tuple[System, ...]
    entries: np.ndarray

    def __post_init__(self):
        labels = _as_systems(self.labels)
        entries = np.asarray(self.entries, dtype=complex).reshape(-1).copy()
        if entries.size != _total_dim(labels):
            raise ShapeMismatch(f"vector length {entries.size} does not match labels")
        entries.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entries", entries)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.labels)

    def projector(self) -> LabeledOperator:
        return LabeledOperator(self.labels, np.outer(self.entries, self.entries.conj()))


def operator(matrix, labels: Iterable[System]) -> LabeledOperator:
    return LabeledOperator(tuple(labels), matrix)


def identity(labels: Iterable[System]) -> LabeledOperator:
    labels = tuple(labels)
    return LabeledOperator(labels, np.eye(_total_dim(labels)))


def _check_ids(A: LabeledOperator, ids) -> set[str]:
    ids = {ids} if isinstance(ids, str) else set(ids)
    unknown = ids - set(A.ids)
    if unknown:
        raise UnknownLabel(f"labels {sorted(unknown)} not in {A.ids}")
    return ids


def tensor(A: LabeledOperator, B: LabeledOperator) -> LabeledOperator:
    common = set(A.ids) & set(B.ids)
    if common:
        raise DuplicateLabel(f"labels {sorted(common)} appear in both factors")
    return LabeledOperator(A.labels + B.labels, np.kron(A.matrix, B.matrix))


def partial_trace(A: LabeledOperator, over) -> LabeledOperator | complex:
    """Trace out the systems in ``over``.

    Returns a scalar when every label is traced out.
    """
    over = _check_ids(A, over)
    n = len(A.labels)
    letters = string.ascii_letters
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for i, s in enumerate(A.labels):
        if s.id in over:
            cols[i] = rows[i]
    keep = [i for i, s in enumerate(A.labels) if s.id not in over]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    t = np.einsum("".join(rows) + "".join(cols) + "->" + out, A.tensor())
    if not keep:
        return complex(t)
    labels = tuple(A.labels[i] for i in keep)
    d = _total_dim(labels)
    return LabeledOperator(labels, t.reshape(d, d))


def partial_transpose(A: LabeledOperator, over) -> LabeledOperator:
    over = _check_ids(A, over)
    n = len(A.labels)
    axes = list(range(2 * n))
    for i, s in enumerate(A.labels):
        if s.id in over:
            axes[i], axes[n + i] = n + i, i
    return LabeledOperator(A.labels, A.tensor().transpose(axes).reshape(A.dim, A.dim))


def reorder(A: LabeledOperator, new_order: Sequence[str]) -> LabeledOperator:
    new_order = list(new_order)
    if sorted(new_order) != sorted(A.ids) or len(set(new_order)) != len(new_order):
        raise InvalidPermutation(f"{new_order} is not a permutation of {A.ids}")
    n = len(A.labels)
    perm = [A.ids.index(i) for i in new_order]
    t = A.tensor().transpose(perm + [n + p for p in perm])
    return LabeledOperator(tuple(A.labels[p] for p in perm), t.reshape(A.dim, A.dim))


def embed(A: LabeledOperator, labels: Sequence[System]) -> LabeledOperator:
    """Extend ``A`` by identities to act on ``labels`` (in that order)."""
    extra = [s for s in labels if s.id not in A.ids]
    out = tensor(A, identity(extra)) if extra else A
    return reorder(out, [s.id for s in labels])


def vectorize(A, out_labels: Sequence[System], in_labels: Sequence[System]) -> LabeledVector:
    """Double-ket ``|A>> = sum_{m,n} <m|A|n> |m>|n>`` with the output factor first."""
    matrix = A.matrix if isinstance(A, LabeledOperator) else np.asarray(A, dtype=complex)
    d_out, d_in = _total_dim(out_labels), _total_dim(in_labels)
    if matrix.shape != (d_out, d_in):
        raise ShapeMismatch(f"operator shape {matrix.shape} != ({d_out}, {d_in})")
    return LabeledVector(tuple(out_labels) + tuple(in_labels), matrix.reshape(-1))


def devectorize(v: LabeledVector, n_out: int) -> np.ndarray:
    """Inverse of :func:`vectorize`; the first ``n_out`` labels index rows."""
    d_out = _total_dim(v.labels[:n_out])
    return v.entries.reshape(d_out, -1).copy()


def hermitian_eig(A, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvector columns of a Hermitian operator."""
    matrix = A.matrix if isinstance(A, LabeledOperator) else np.asarray(A, dtype=complex)
    skew = np.abs(matrix - matrix.conj().T).max(initial=0.0)
    if skew > tol:
        raise NotHermitian(f"max |A - A^dag| = {skew:.3e} > {tol:.1e}")
    return np.linalg.eigh((matrix + matrix.conj().T) / 2)


def is_psd(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    try:
        evals, _ = hermitian_eig(matrix, tol)
    except NotHermitian:
        return False
    return bool(evals.size == 0 or evals[0] >= -tol)
