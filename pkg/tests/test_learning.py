import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import block_diag

from unitary_learning import groups
from unitary_learning.learning import (
    ConvergenceFailure,
    IrrepMismatch,
    LearningProblem,
    StorageSpec,
    UnsupportedM,
    asymptotic_state,
    fidelity_of_storage,
    input_decomposition,
    likelihood_state,
    memory_overlap,
    memory_state,
    multiplicity_matrix,
    optimal_amplitudes,
    optimize_storage,
    povm_density,
    povm_overlap,
    principal_eigenpair,
    single_copy_fidelity,
    storage_state,
    target_decomposition,
)

from oracles import CLOSED_FORMS, brute_multiplicities, grid_search, u1_sequence


def P(group, n, m=1, **kw):
    return LearningProblem(group, n, m, **kw)


def test_problem_validation():
    with pytest.raises(ValueError):
        P("u1", 0)
    with pytest.raises(ValueError):
        P("u1", 1, task="clone")
    assert P("u1", 1, figure="single-copy").figure == "single_copy"
    with pytest.raises(ValueError):
        P("su2", 2, example_reps=(groups.base_rep("su2"),))
    with pytest.raises(groups.GroupMismatch):
        P("su2", 1, example_reps=(groups.base_rep("u1"),))


def test_target_decomposition():
    assert target_decomposition(P("su2", 1)).as_dict() == {1: 1}
    assert target_decomposition(P("u1", 1, 2)).as_dict() == {2: 1, 0: 2, -2: 1}
    inv = target_decomposition(P("u1", 1, task="invert"))
    assert set(inv.labels) == {1, -1}
    assert inv.as_dict() == target_decomposition(P("u1", 1)).as_dict()
    assert target_decomposition(P("u1", 1, 3, task="invert")).as_dict() == {-3: 1, -1: 3, 1: 3, 3: 1}


def test_multiplicity_matrix_su2():
    mm = multiplicity_matrix(P("su2", 1))
    assert np.allclose(mm.A, [[0.5]])
    mm = multiplicity_matrix(P("su2", 2))
    assert mm.input_irreps == (0, 2)
    assert np.allclose(mm.A, np.array([[1, 1], [1, 2]]) / 4)
    assert mm.support(1) == (0, 2) and mm.support(3) == (2,)


def test_multiplicity_matrix_u1_path():
    mm = multiplicity_matrix(P("u1", 2))
    assert mm.input_irreps == (2, 0, -2)
    expected = np.array([[2, 1, 0], [1, 2, 1], [0, 1, 2]]) / 4
    assert np.allclose(mm.A, expected)


@pytest.mark.parametrize("group", groups.GROUPS)
@pytest.mark.parametrize("n,m", [(1, 1), (2, 1), (3, 2), (4, 3), (5, 1)])
@pytest.mark.parametrize("task", ["emulate", "invert"])
def test_multiplicity_table_against_enumeration(group, n, m, task):
    mm = multiplicity_matrix(P(group, n, m, task=task))
    brute = brute_multiplicities(group, n, m, task)
    assert set(mm.input_irreps) == set(brute)
    for j in mm.input_irreps:
        col = {K: mm.mult(K, j) for K in mm.k_labels if mm.mult(K, j)}
        assert col == brute[j]
    assert np.allclose(mm.A, mm.A.T)
    assert (mm.A >= 0).all()


@pytest.mark.parametrize("key", sorted(CLOSED_FORMS))
def test_closed_forms(key):
    group, n, m = key
    report = optimize_storage(P(group, n, m))
    assert report.fidelity == pytest.approx(CLOSED_FORMS[key], abs=1e-12)
    grid, _ = grid_search(group, n, m)
    assert report.fidelity >= grid - 1e-12
    assert report.fidelity - grid <= 1e-5


def test_optimal_probabilities():
    p = optimize_storage(P("su2", 2)).storage.as_dict()
    assert p[0] == pytest.approx((5 - math.sqrt(5)) / 10, abs=1e-9)
    assert p[2] == pytest.approx((5 + math.sqrt(5)) / 10, abs=1e-9)
    p = optimize_storage(P("u1", 2)).storage.as_dict()
    assert [p[2], p[0], p[-2]] == pytest.approx([0.25, 0.5, 0.25], abs=1e-9)
    assert optimize_storage(P("u1", 1)).storage.as_dict() == pytest.approx({1: 0.5, -1: 0.5})
    assert optimize_storage(P("u1", 1, 2)).storage.as_dict() == pytest.approx({1: 0.5, -1: 0.5})
    assert optimize_storage(P("su2", 1)).storage.as_dict() == {1: 1.0}


def test_u1_sequence():
    for n in range(1, 65):
        assert optimize_storage(P("u1", n)).fidelity == pytest.approx(u1_sequence(n), abs=1e-9)


def test_report_fields():
    r = optimize_storage(P("su2", 4))
    x = r.amplitudes
    mm = multiplicity_matrix(r.problem)
    assert x @ mm.A @ x == pytest.approx(r.eigenvalue, abs=1e-12)
    assert 1 / 4 <= r.fidelity <= 1
    assert r.iterations >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 31))
def test_power_iteration_matches_eigh(n, seed):
    r = np.random.default_rng(seed)
    G = r.uniform(0.01, 1, size=(n, n))
    A = G + G.T
    lam, v, _ = principal_eigenpair(A)
    w, V = np.linalg.eigh(A)
    assert lam == pytest.approx(w[-1], rel=1e-11)
    assert abs(abs(v @ V[:, -1]) - 1) <= 1e-9


def test_reducible_matrix_uses_best_block():
    A = block_diag(np.array([[1.0, 0.5], [0.5, 1.0]]), np.array([[3.0]]))
    value, x, _ = optimal_amplitudes(A)
    assert value == pytest.approx(3.0)
    assert np.allclose(x, [0, 0, 1])


def test_negative_entries_fall_back_to_simplex_ascent():
    A = np.array([[1.0, -0.9], [-0.9, 1.0]])
    value, x, _ = optimal_amplitudes(A)
    assert (x >= 0).all()
    # best nonnegative unit vector is a basis vector
    assert value == pytest.approx(1.0, abs=1e-6)


def test_convergence_failure():
    A = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-9]])
    with pytest.raises(ConvergenceFailure):
        principal_eigenpair(A, tol=0.0, max_iter=3, squarings=0)


def test_fidelity_of_storage_examples():
    p = P("u1", 2)
    sine = StorageSpec.from_mapping("u1", {2: 1 / 6, 0: 2 / 3, -2: 1 / 6})
    assert fidelity_of_storage(sine, p) == pytest.approx(5 / 6, abs=1e-12)
    best = optimize_storage(p)
    assert fidelity_of_storage(best.storage, p) == pytest.approx(best.fidelity, abs=1e-12)
    for n in range(1, 20):
        q = P("u1", n)
        assert fidelity_of_storage(likelihood_state(q), q) == pytest.approx(1 - 1 / (2 * (n + 1)), abs=1e-12)
    assert fidelity_of_storage(likelihood_state(P("u1", 4)), P("u1", 4)) == pytest.approx(0.9)


def test_fidelity_of_storage_mismatch():
    with pytest.raises(IrrepMismatch):
        fidelity_of_storage(StorageSpec.from_mapping("su2", {5: 1.0}), P("su2", 2))
    with pytest.raises(IrrepMismatch):
        fidelity_of_storage(StorageSpec.from_mapping("u1", {0: 1.0}), P("su2", 2))


def test_storage_spec_validation():
    with pytest.raises(ValueError):
        StorageSpec.from_mapping("u1", {1: 0.5, -1: 0.4})
    with pytest.raises(ValueError):
        StorageSpec.from_mapping("u1", {1: 1.5, -1: -0.5})


def test_likelihood_state():
    assert likelihood_state(P("u1", 3)).as_dict() == pytest.approx({3: 0.25, 1: 0.25, -1: 0.25, -3: 0.25})
    assert likelihood_state(P("su2", 2)).as_dict() == pytest.approx({0: 0.1, 2: 0.9})
    assert sum(likelihood_state(P("su2", 7)).as_dict().values()) == pytest.approx(1, abs=1e-12)


def test_asymptotic_state():
    assert asymptotic_state(P("u1", 1)).as_dict() == pytest.approx({1: 0.5, -1: 0.5})
    assert asymptotic_state(P("u1", 2)).as_dict() == pytest.approx({2: 1 / 6, 0: 2 / 3, -2: 1 / 6})
    with pytest.raises(UnsupportedM):
        asymptotic_state(P("u1", 2, 2))
    with pytest.raises(ValueError):
        asymptotic_state(P("su2", 2))


@pytest.mark.parametrize("group", groups.GROUPS)
def test_sine_state_approaches_optimum(group):
    gaps = []
    for n in (4, 16, 64):
        p = P(group, n)
        F_sine = fidelity_of_storage(asymptotic_state(p), p)
        F_opt = optimize_storage(p).fidelity
        assert F_sine <= F_opt + 1e-12
        gaps.append(F_opt - F_sine)
    assert gaps[-1] < gaps[0]
    assert gaps[-1] < 1e-3


def test_single_copy_fidelity():
    assert single_copy_fidelity(P("su2", 2, 5, figure="single_copy")) == pytest.approx((3 + math.sqrt(5)) / 8)
    assert single_copy_fidelity(P("u1", 1, 3, figure="single_copy")) == pytest.approx(0.75)
    for group in groups.GROUPS:
        for m in (2, 3):
            glob = optimize_storage(P(group, 3, m)).fidelity
            assert single_copy_fidelity(P(group, 3, m, figure="single_copy")) >= glob
            assert optimize_storage(P(group, 3, m, figure="single_copy")).fidelity == \
                single_copy_fidelity(P(group, 3, 1))


@pytest.mark.parametrize("group", groups.GROUPS)
def test_monotone_in_n_and_m(group):
    for m in (1, 2):
        values = [optimize_storage(P(group, n, m)).fidelity for n in range(1, 13)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    for n in (1, 3, 5):
        values = [optimize_storage(P(group, n, m)).fidelity for m in range(1, 5)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("group", groups.GROUPS)
def test_inversion_symmetry(group):
    for n in range(1, 9):
        for m in (1, 2):
            a = optimize_storage(P(group, n, m)).fidelity
            b = optimize_storage(P(group, n, m, task="invert")).fidelity
            assert abs(a - b) <= 1e-12


def test_memory_state_at_identity():
    p = P("su2", 3)
    spec = optimize_storage(p).storage
    vec = memory_state(spec, np.eye(2), p)
    expected = np.concatenate([math.sqrt(q / (j + 1)) * np.eye(j + 1).reshape(-1) for j, q in spec.probs])
    assert np.allclose(vec, expected)
    assert np.linalg.norm(vec) == pytest.approx(1)


@pytest.mark.parametrize("group", groups.GROUPS)
def test_memory_overlaps(group, rng):
    p = P(group, 4)
    spec = likelihood_state(p)
    for _ in range(10):
        g, h = groups.haar_sample(group, rng), groups.haar_sample(group, rng)
        a, b = memory_state(spec, g, p), memory_state(spec, h, p)
        assert np.linalg.norm(a) == pytest.approx(1, abs=1e-12)
        assert abs(np.vdot(a, b) - memory_overlap(spec, g, h, p)) <= 1e-12


def test_memory_marginal_is_invariant(rng):
    # reduced state on the acted-on factor: (+)_j p_j I_j / d_j for every g
    p = P("su2", 3)
    spec = optimize_storage(p).storage
    g = groups.haar_sample("su2", rng)
    blocks = []
    pos = 0
    vec = memory_state(spec, g, p)
    for j, q in spec.probs:
        d = j + 1
        X = vec[pos:pos + d * d].reshape(d, d)
        blocks.append(X @ X.conj().T)
        pos += d * d
        assert np.allclose(blocks[-1], q * np.eye(d) / d, atol=1e-12)


def test_povm_overlap_peak_and_completeness(rng):
    p = P("su2", 3)
    spec = optimize_storage(p).storage
    g = groups.haar_sample("su2", rng)
    peak = povm_overlap(spec, g, g, p)
    assert peak == pytest.approx(sum(math.sqrt(q) * (j + 1) for j, q in spec.probs))
    q = groups.quadrature("su2", 2 * max(spec.labels))
    assert np.sum(q.weights * povm_density(spec, g, q.nodes, p)) == pytest.approx(1, abs=1e-10)


def test_povm_density_u1_single_example():
    p = P("u1", 1)
    spec = StorageSpec.from_mapping("u1", {1: 0.5, -1: 0.5})
    theta = np.linspace(0, 2 * np.pi, 50)
    dens = povm_density(spec, 0.3, theta, p)
    assert np.allclose(dens, 2 * np.cos(theta - 0.3) ** 2)
    q = groups.quadrature("u1", 2)
    assert np.sum(q.weights * povm_density(spec, 1.1, q.nodes, p)) == pytest.approx(1)


def test_storage_state_dispatch():
    p = P("u1", 3)
    assert storage_state(p, "likelihood").as_dict() == likelihood_state(p).as_dict()
    with pytest.raises(ValueError):
        storage_state(p, "bogus")


def test_heterogeneous_examples():
    base = groups.base_rep("su2")
    same = P("su2", 2, example_reps=(base, base))
    assert optimize_storage(same).fidelity == pytest.approx(optimize_storage(P("su2", 2)).fidelity)
    spin1 = groups.Decomposition("su2", ((2, 1),))
    mixed = P("su2", 2, example_reps=(base, spin1))
    assert input_decomposition(mixed).as_dict() == {1: 1, 3: 1}
    F = optimize_storage(mixed).fidelity
    # a spin-1 example carries more information than a second qubit
    assert optimize_storage(P("su2", 2)).fidelity < F <= 1
