"""Representation theory of U(1) and SU(2).

Irrep labels are integers: the weight ``w`` for U(1) (``U(theta) = exp(i theta sigma_z)``
has weights +1 and -1) and the doubled spin ``twoJ`` for SU(2). Multiplicities are
kept in exact integer arithmetic; only matrices are floating point.

Group elements are plain arrays: angles for U(1) and 2x2 special-unitary
matrices for SU(2). Batched functions accept a leading sample axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.linalg import expm

GROUPS = ("u1", "su2")


class GroupMismatch(ValueError):
    pass


def _check_group(group: str) -> str:
    if group not in GROUPS:
        raise GroupMismatch(f"unknown group {group!r}; expected one of {GROUPS}")
    return group


def irrep_dim(group: str, label: int) -> int:
    return 1 if _check_group(group) == "u1" else int(label) + 1


@dataclass(frozen=True)
class Decomposition:
    """Multiset of irreps ``{label: multiplicity}`` of one group."""

    group: str
    mults: tuple[tuple[int, int], ...]

    def __post_init__(self):
        _check_group(self.group)
        merged: dict[int, int] = {}
        for label, m in self.mults:
            label, m = int(label), int(m)
            if self.group == "su2" and label < 0:
                raise ValueError(f"negative twoJ {label}")
            if m < 0:
                raise ValueError(f"negative multiplicity {m}")
            if m:
                merged[label] = merged.get(label, 0) + m
        # u1: weights descending, su2: spins ascending
        key = (lambda w: -w) if self.group == "u1" else (lambda j: j)
        object.__setattr__(self, "mults", tuple(sorted(merged.items(), key=lambda kv: key(kv[0]))))

    @classmethod
    def from_mapping(cls, group: str, mults: Mapping[int, int]) -> "Decomposition":
        return cls(group, tuple(mults.items()))

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(label for label, _ in self.mults)

    @property
    def blocks(self) -> tuple[tuple[int, int, int], ...]:
        """``(label, d_j, m_j)`` triples."""
        return tuple((label, irrep_dim(self.group, label), m) for label, m in self.mults)

    @property
    def dim(self) -> int:
        return sum(d * m for _, d, m in self.blocks)

    def mult(self, label: int) -> int:
        return dict(self.mults).get(int(label), 0)

    def as_dict(self) -> dict[int, int]:
        return dict(self.mults)


def base_rep(group: str) -> Decomposition:
    if _check_group(group) == "u1":
        return Decomposition("u1", ((1, 1), (-1, 1)))
    return Decomposition("su2", ((1, 1),))


def fuse(group: str, a: int, b: int) -> Decomposition:
    if _check_group(group) == "u1":
        return Decomposition("u1", ((a + b, 1),))
    if a < 0 or b < 0:
        raise ValueError("twoJ must be nonnegative")
    return Decomposition("su2", tuple((k, 1) for k in range(abs(a - b), a + b + 1, 2)))


def fuse_decompositions(x: Decomposition, y: Decomposition) -> Decomposition:
    if x.group != y.group:
        raise GroupMismatch(f"{x.group} vs {y.group}")
    out: dict[int, int] = {}
    u1 = x.group == "u1"
    for a, ma in x.mults:
        for b, mb in y.mults:
            # same rule as fuse(), without building a Decomposition per pair
            ks = (a + b,) if u1 else range(abs(a - b), a + b + 1, 2)
            for k in ks:
                out[k] = out.get(k, 0) + ma * mb
    return Decomposition.from_mapping(x.group, out)


def tensor_power(group: str, reps: Sequence[Decomposition]) -> Decomposition:
    """Decomposition of the tensor product of ``reps`` by iterated fusion."""
    if not reps:
        raise ValueError("need at least one representation")
    for r in reps:
        if r.group != group:
            raise GroupMismatch(f"{r.group} representation in a {group} product")
    return _fold(tuple(reps))


@lru_cache(maxsize=512)
def _fold(reps: tuple[Decomposition, ...]) -> Decomposition:
    out = reps[0]
    for r in reps[1:]:
        out = fuse_decompositions(out, r)
    return out


def conjugate(group: str, label: int) -> int:
    return -label if _check_group(group) == "u1" else label


def conjugate_decomposition(d: Decomposition) -> Decomposition:
    return Decomposition(d.group, tuple((conjugate(d.group, k), m) for k, m in d.mults))


def closed_form_multiplicity(group: str, n: int, label: int) -> int:
    """Multiplicity of ``label`` in the n-fold power of the defining representation."""
    if _check_group(group) == "u1":
        if (n - label) % 2 or abs(label) > n:
            return 0
        return math.comb(n, (n - label) // 2)
    if (n - label) % 2 or label > n or label < 0:
        return 0
    k = (n - label) // 2
    return math.comb(n, k) - (math.comb(n, k - 1) if k >= 1 else 0)


# ---------------------------------------------------------------------------
# SU(2) matrices


def spin_matrices(twoJ: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(J_x, J_y, J_z)`` in the basis ``m = j, j-1, ..., -j``."""
    return _spin_matrices(int(twoJ))


@lru_cache(maxsize=None)
def _spin_matrices(twoJ):
    j = twoJ / 2
    m = j - np.arange(twoJ + 1)
    jz = np.diag(m).astype(complex)
    jp = np.zeros((twoJ + 1, twoJ + 1), dtype=complex)
    for i in range(1, twoJ + 1):
        jp[i - 1, i] = math.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    jm = jp.conj().T
    mats = ((jp + jm) / 2, (jp - jm) / 2j, jz)
    for a in mats:
        a.flags.writeable = False
    return mats


def su2_from_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    a = q[..., 0] + 1j * q[..., 3]
    b = q[..., 2] + 1j * q[..., 1]
    g = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    g[..., 0, 0], g[..., 0, 1] = a, -b.conj()
    g[..., 1, 0], g[..., 1, 1] = b, a.conj()
    return g


def rotation_vector(g: np.ndarray) -> np.ndarray:
    """``omega * n`` with ``g = exp(-i omega n.sigma / 2)``."""
    a, b = g[0, 0], g[1, 0]
    sn = np.array([-b.imag, b.real, -a.imag])
    s = np.linalg.norm(sn)
    if s < 1e-15:
        return np.zeros(3) if a.real > 0 else np.array([0.0, 0.0, 2 * np.pi])
    omega = 2 * math.atan2(s, a.real)
    return omega * sn / s


def wigner_matrix(twoJ: int, g: np.ndarray) -> np.ndarray:
    """Irrep matrix by exponentiating the spin generators."""
    if twoJ == 0:
        return np.ones((1, 1), dtype=complex)
    v = rotation_vector(np.asarray(g))
    jx, jy, jz = spin_matrices(twoJ)
    return expm(-1j * (v[0] * jx + v[1] * jy + v[2] * jz))


def clebsch_gordan(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> float:
    """``<j1 m1; j2 m2 | J M>`` (Condon-Shortley), arguments as doubled integers."""
    return _cg(tj1, tm1, tj2, tm2, tJ, tM)


@lru_cache(maxsize=None)
def _cg(tj1, tm1, tj2, tm2, tJ, tM):
    if tm1 + tm2 != tM:
        return 0.0
    if not (abs(tj1 - tj2) <= tJ <= tj1 + tj2) or (tj1 + tj2 + tJ) % 2:
        return 0.0
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tJ:
        return 0.0
    if (tj1 + tm1) % 2 or (tj2 + tm2) % 2 or (tJ + tM) % 2:
        return 0.0
    f = math.factorial
    h = lambda x: x // 2  # noqa: E731  exact: parity checked above
    pref = Fraction(
        (tJ + 1) * f(h(tJ + tj1 - tj2)) * f(h(tJ - tj1 + tj2)) * f(h(tj1 + tj2 - tJ)),
        f(h(tj1 + tj2 + tJ) + 1),
    ) * (f(h(tJ + tM)) * f(h(tJ - tM)) * f(h(tj1 - tm1)) * f(h(tj1 + tm1))
         * f(h(tj2 - tm2)) * f(h(tj2 + tm2)))
    total = Fraction(0)
    for k in range(0, h(tj1 + tj2 - tJ) + 1):
        args = (
            h(tj1 + tj2 - tJ) - k,
            h(tj1 - tm1) - k,
            h(tj2 + tm2) - k,
            h(tJ - tj2 + tm1) + k,
            h(tJ - tj1 - tm2) + k,
        )
        if min(args) < 0:
            continue
        denom = f(k)
        for x in args:
            denom *= f(x)
        total += Fraction((-1) ** k, denom)
    return float(math.copysign(math.sqrt(pref), 1) * total)


def coupling_isometry(tj1: int, tj2: int, tJ: int) -> np.ndarray:
    """Columns ``|J M>`` (M descending) in the product basis ``|j1 m1>|j2 m2>``."""
    C = np.zeros(((tj1 + 1) * (tj2 + 1), tJ + 1))
    for c, tM in enumerate(range(tJ, -tJ - 1, -2)):
        for i, tm1 in enumerate(range(tj1, -tj1 - 1, -2)):
            for k, tm2 in enumerate(range(tj2, -tj2 - 1, -2)):
                C[i * (tj2 + 1) + k, c] = clebsch_gordan(tj1, tm1, tj2, tm2, tJ, tM)
    return C


def wigner_matrix_cg(twoJ: int, g: np.ndarray) -> np.ndarray:
    """Irrep matrix by iterated Clebsch-Gordan projection of ``D^{j-1/2} (x) g``."""
    g = np.asarray(g, dtype=complex)
    D = np.ones((1, 1), dtype=complex)
    for t in range(1, twoJ + 1):
        C = coupling_isometry(t - 1, 1, t)
        D = C.T @ np.kron(D, g) @ C
    return D


# ---------------------------------------------------------------------------
# group elements


def identity_element(group: str):
    return 0.0 if _check_group(group) == "u1" else np.eye(2, dtype=complex)


def multiply(group: str, g, h):
    if _check_group(group) == "u1":
        return np.mod(np.asarray(g) + np.asarray(h), 2 * np.pi)
    return np.asarray(g) @ np.asarray(h)


def inverse(group: str, g):
    if _check_group(group) == "u1":
        return np.mod(-np.asarray(g), 2 * np.pi)
    return np.conj(np.swapaxes(np.asarray(g), -1, -2))


def defining_matrix(group: str, g) -> np.ndarray:
    """Matrix of the defining qubit representation (batched)."""
    if _check_group(group) == "u1":
        theta = np.asarray(g, dtype=float)
        out = np.zeros(theta.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = np.exp(1j * theta)
        out[..., 1, 1] = np.exp(-1j * theta)
        return out
    return np.asarray(g, dtype=complex)


def irrep_matrix(group: str, label: int, g) -> np.ndarray:
    if _check_group(group) == "u1":
        return np.array([[np.exp(1j * label * float(g))]])
    if label < 0:
        raise GroupMismatch(f"su2 label must be nonnegative, got {label}")
    return wigner_matrix(int(label), np.asarray(g))


def character(group: str, label: int, g) -> np.ndarray:
    """Trace of the irrep matrix, vectorized over a batch of elements."""
    if _check_group(group) == "u1":
        return np.exp(1j * label * np.asarray(g, dtype=float))
    return chebyshev_characters(half_trace(g), label)[label]


def half_trace(g) -> np.ndarray:
    """``cos(omega/2) = Re Tr g / 2`` for SU(2) elements (batched)."""
    g = np.asarray(g)
    return np.real(g[..., 0, 0] + g[..., 1, 1]) / 2


def chebyshev_characters(x, max_twoJ: int) -> np.ndarray:
    """SU(2) characters ``chi_{twoJ} = U_{twoJ}(x)`` for all ``twoJ <= max_twoJ``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((max_twoJ + 1,) + x.shape)
    out[0] = 1.0
    if max_twoJ >= 1:
        out[1] = 2 * x
    for n in range(2, max_twoJ + 1):
        out[n] = 2 * x * out[n - 1] - out[n - 2]
    return out


def haar_sample(group: str, rng: np.random.Generator, size: int | None = None):
    """Haar-random elements: uniform angles (u1) or normalized Gaussian quaternions (su2)."""
    if _check_group(group) == "u1":
        return rng.uniform(0.0, 2 * np.pi, size=size)
    shape = (4,) if size is None else (size, 4)
    q = rng.normal(size=shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return su2_from_quaternion(q)


class Quadrature(NamedTuple):
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def euler_element(alpha, beta, gamma) -> np.ndarray:
    """``R_z(alpha) R_y(beta) R_z(gamma)`` (batched)."""
    alpha, beta, gamma = np.broadcast_arrays(alpha, beta, gamma)
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    ep, em = np.exp(-0.5j * (alpha + gamma)), np.exp(-0.5j * (alpha - gamma))
    g = np.empty(alpha.shape + (2, 2), dtype=complex)
    g[..., 0, 0] = ep * c
    g[..., 0, 1] = -em * s
    g[..., 1, 0] = em.conj() * s
    g[..., 1, 1] = ep.conj() * c
    return g


@lru_cache(maxsize=64)
def _quadrature(group, degree):
    if group == "u1":
        n = 2 * degree + 1
        nodes = 2 * np.pi * np.arange(n) / n
        return Quadrature(nodes, np.full(n, 1.0 / n))
    # exact for every matrix element with twoJ <= degree
    n_alpha = degree // 2 + 1
    n_gamma = degree + 1
    n_beta = degree // 4 + 1
    x, wx = np.polynomial.legendre.leggauss(n_beta)
    alpha = 2 * np.pi * np.arange(n_alpha) / n_alpha
    gamma = 4 * np.pi * np.arange(n_gamma) / n_gamma
    A, B, G = np.meshgrid(alpha, np.arccos(x), gamma, indexing="ij")
    W = np.broadcast_to((wx / 2)[None, :, None], A.shape) / (n_alpha * n_gamma)
    return Quadrature(euler_element(A, B, G).reshape(-1, 2, 2), W.reshape(-1).copy())


def quadrature(group: str, degree: int) -> Quadrature:
    """Nodes and weights integrating every irrep matrix element of label size <= degree exactly.

    For u1 the degree bounds ``|w|``; for su2 it bounds ``twoJ``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    q = _quadrature(_check_group(group), int(degree))
    return Quadrature(q.nodes.copy(), q.weights.copy())
