import numpy as np
import pytest

from unitary_learning.comb import (
    ChoiOperator,
    CombSpec,
    LabelClash,
    NotUnitary,
    apply_channel,
    choi,
    choi_of_unitary,
    comb_residuals,
    is_channel,
    is_comb,
    link,
    random_channel,
    state,
)
from unitary_learning.tensor import LabeledOperator, System, reorder, tensor

from conftest import random_density, random_unitary

X = np.array([[0, 1], [1, 0]])
Z = np.diag([1, -1])


def q(name):
    return System(name, 2)


def test_choi_of_identity():
    C = choi_of_unitary(np.eye(2), [q("o")], [q("i")])
    assert C.op.ids == ("o", "i")
    assert C.op.trace() == pytest.approx(2)
    v = np.array([1, 0, 0, 1])
    assert np.allclose(C.matrix, np.outer(v, v))


def test_choi_of_pauli_x():
    C = choi_of_unitary(X, [q("o")], [q("i")])
    v = np.array([0, 1, 1, 0]) / np.sqrt(2)
    assert np.allclose(C.matrix, 2 * np.outer(v, v))
    assert np.linalg.matrix_rank(C.matrix) == 1


def test_choi_of_unitary_rejects_non_unitary():
    with pytest.raises(NotUnitary):
        choi_of_unitary(np.diag([1, 2]), [q("o")], [q("i")])


def test_apply_unitary_channel(rng):
    U = random_unitary(2, rng)
    rho = random_density(2, rng)
    out = apply_channel(choi_of_unitary(U, [q("o")], [q("i")]), rho)
    assert out.ids == ("o",)
    assert np.allclose(out.matrix, U @ rho @ U.conj().T, atol=1e-12)


def test_depolarizing_channel():
    C = choi(np.eye(4) / 2, [q("o")], [q("i")])
    for rho in (np.diag([1, 0]), np.full((2, 2), 0.5)):
        assert np.allclose(apply_channel(C, rho).matrix, np.eye(2) / 2)


def test_sigma_z_maps_plus_to_minus():
    plus = np.full((2, 2), 0.5)
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
    out = apply_channel(choi_of_unitary(Z, [q("o")], [q("i")]), plus)
    assert np.allclose(out.matrix, minus)


def test_random_channels_preserve_trace(rng):
    for _ in range(100):
        C = random_channel(rng, [q("o")], [q("i")])
        assert is_channel(C, 1e-9)
        out = apply_channel(C, random_density(2, rng))
        assert out.trace() == pytest.approx(1, abs=1e-10)


def test_is_channel_cases(rng):
    U = random_unitary(2, rng)
    C = choi_of_unitary(U, [q("o")], [q("i")])
    assert is_channel(C)
    assert not is_channel(choi(2 * C.matrix, [q("o")], [q("i")]))
    assert not is_channel(choi(-C.matrix, [q("o")], [q("i")]))


def test_is_channel_state():
    assert is_channel(state(np.diag([0.25, 0.75]), [q("s")]))
    assert not is_channel(state(np.diag([0.5, 0.75]), [q("s")]))


def test_link_composes_unitaries(rng):
    U, V = random_unitary(2, rng), random_unitary(2, rng)
    CU = choi_of_unitary(U, [q("b")], [q("a")])
    CV = choi_of_unitary(V, [q("c")], [q("b")])
    out = link(CU, CV)
    expected = choi_of_unitary(V @ U, [q("c")], [q("a")])
    assert out.op.ids == ("c", "a")
    assert out.inputs == {"a"} and out.outputs == {"c"}
    assert np.allclose(out.matrix, expected.matrix, atol=1e-12)


def test_link_identities():
    I1 = choi_of_unitary(np.eye(2), [q("b")], [q("a")])
    I2 = choi_of_unitary(np.eye(2), [q("c")], [q("b")])
    assert np.allclose(link(I1, I2).matrix, choi_of_unitary(np.eye(2), [q("c")], [q("a")]).matrix)


def test_link_with_state_is_channel_application(rng):
    C = random_channel(rng, [q("o")], [q("i")])
    rho = random_density(2, rng)
    out = link(state(rho, [q("i")]), C)
    direct = np.einsum("aibi->ab", (C.matrix @ np.kron(np.eye(2), rho.T)).reshape(2, 2, 2, 2))
    assert np.allclose(out.matrix, direct, atol=1e-12)


def test_link_commutative_up_to_reorder(rng):
    C = random_channel(rng, [q("b"), q("x")], [q("a")])
    D = random_channel(rng, [q("c")], [q("b")])
    dc, cd = link(C, D), link(D, C)
    assert np.allclose(reorder(cd.op, dc.op.ids).matrix, dc.matrix, atol=1e-10)


def test_link_associative(rng):
    C1 = random_channel(rng, [q("b")], [q("a")])
    C2 = random_channel(rng, [q("c")], [q("b")])
    C3 = random_channel(rng, [q("d")], [q("c")])
    left = link(link(C1, C2), C3)
    right = link(C1, link(C2, C3))
    assert np.allclose(reorder(right.op, left.op.ids).matrix, left.matrix, atol=1e-10)


def test_link_without_shared_labels_is_tensor(rng):
    C = random_channel(rng, [q("b")], [q("a")])
    D = random_channel(rng, [q("d")], [q("c")])
    out = link(C, D)
    assert np.allclose(out.matrix, tensor(D.op, C.op).matrix)


def test_link_rejects_input_input_sharing(rng):
    C = random_channel(rng, [q("b")], [q("a")])
    D = random_channel(rng, [q("c")], [q("a")])
    with pytest.raises(LabelClash):
        link(C, D)


def test_choi_partition_checked():
    op = LabeledOperator((q("a"), q("b")), np.eye(4))
    with pytest.raises(LabelClash):
        ChoiOperator(op, frozenset({"a"}), frozenset({"a", "b"}))


def one_slot_spec():
    return CombSpec(((System("h0", 1), System("h1", 1)), (q("i"), q("o"))))


def test_single_channel_is_comb(rng):
    C = random_channel(rng, [q("o")], [q("i")])
    L = tensor(LabeledOperator((System("h0", 1), System("h1", 1)), np.eye(1)), C.op)
    assert is_comb(L, one_slot_spec())


def test_sequential_channels_form_comb(rng):
    # two independent channels arranged in causal order, plus a channel linked through memory
    spec = CombSpec(((q("a0"), q("a1")), (q("a2"), q("a3"))))
    C1 = random_channel(rng, [q("a1")], [q("a0")])
    C2 = random_channel(rng, [q("a3")], [q("a2")])
    assert is_comb(tensor(C1.op, C2.op), spec, 1e-9)
    E1 = random_channel(rng, [q("a1"), q("m")], [q("a0")])
    E2 = random_channel(rng, [q("a3")], [q("a2"), q("m")])
    L = link(E1, E2)
    assert is_comb(L, spec, 1e-9)
    assert max(comb_residuals(L.op, spec)) <= 1e-9


def test_signaling_operator_is_not_comb():
    # identity channel from the later input a2 back to the earlier output a1
    spec = CombSpec(((q("a0"), q("a1")), (q("a2"), q("a3"))))
    back = choi_of_unitary(np.eye(2), [q("a1")], [q("a2")])
    fwd = choi(np.eye(4) / 2, [q("a3")], [q("a0")])
    L = reorder(tensor(back.op, fwd.op), ["a0", "a1", "a2", "a3"])
    check = is_comb(L, spec, 1e-9)
    assert not check
    assert check.level == 1
    assert check.residual > 0.1


def test_is_comb_reports_positivity_failure():
    spec = one_slot_spec()
    L = LabeledOperator(spec.labels, -np.eye(4) / 2)
    check = is_comb(L, spec)
    assert not check and check.level is None


def test_comb_spec_rejects_repeated_labels():
    with pytest.raises(LabelClash):
        CombSpec(((q("a"), q("b")), (q("b"), q("c"))))
