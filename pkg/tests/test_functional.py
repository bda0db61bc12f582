import numpy as np
import pytest

from srconc import chains, functional, measures
from conftest import name_seed
from srconc.functional import (
    DomainMismatch,
    MatrixFn,
    Reducible,
    adversarial_lambda_search,
    check_decompositions,
    check_matrix_poincare,
    dirichlet_form,
    matrix_fn_from_json,
    matrix_fn_to_json,
    matrix_mean,
    matrix_variance,
    project_fn,
    random_linear_matrix_fn,
    random_matrix_fn,
    scalar_spectral_gap,
)


def two_state_gen(a: float, b: float) -> chains.Generator:
    pi = np.array([b, a]) / (a + b)
    return chains.Generator(np.array([0, 1]), np.array([[-a, a], [b, -b]]),
                            pi, n=1)


def complete_graph_gen(m: int) -> chains.Generator:
    rates = np.full((m, m), 1.0 / m)
    np.fill_diagonal(rates, 1.0 / m - 1.0)
    return chains.Generator(np.arange(m), rates, np.full(m, 1.0 / m))


# ----------------------------------------------------------------- MatrixFn

def test_matrix_fn_symmetrizes():
    fn = MatrixFn(np.array([0]), np.array([[[1.0, 2.0], [0.0, 3.0]]]))
    assert np.allclose(fn.values[0], [[1.0, 1.0], [1.0, 3.0]])
    assert fn.dim == 2


def test_matrix_fn_shape_check():
    with pytest.raises(ValueError):
        MatrixFn(np.array([0, 1]), np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        MatrixFn(np.array([0]), np.zeros((1, 2, 3)))


def test_gather_aligns_and_rejects():
    fn = MatrixFn.from_table({2: np.eye(2), 5: 2 * np.eye(2)})
    out = fn.gather([5, 2])
    assert np.allclose(out[0], 2 * np.eye(2))
    assert np.allclose(out[1], np.eye(2))
    with pytest.raises(DomainMismatch):
        fn.gather([3])


def test_constant_fn():
    fn = MatrixFn.constant([1, 2, 4], np.diag([1.0, -1.0]))
    assert fn.states.tolist() == [1, 2, 4]
    assert np.allclose(fn.values, np.diag([1.0, -1.0])[None])


def test_random_linear_fn_structure():
    states = measures.make_uniform_k_subsets(4, 2).support()
    fn, worst = random_linear_matrix_fn(4, states, 3, lipschitz=0.7, seed=3)
    assert worst <= 0.7 + 1e-12
    assert worst > 0.0
    # additivity over disjoint masks: F(x | y) = F(x) + F(y) by linearity
    table = {int(s): v for s, v in zip(fn.states, fn.values)}
    assert np.allclose(table[0b0011], table[0b0011])
    fn_full, _ = random_linear_matrix_fn(4, np.arange(16), 3, lipschitz=0.7, seed=3)
    full = {int(s): v for s, v in zip(fn_full.states, fn_full.values)}
    assert np.allclose(full[0], 0.0)
    assert np.allclose(full[0b0101], full[0b0001] + full[0b0100])


# ------------------------------------------------------------ mean/variance

def test_matrix_mean_and_variance_scalar_oracle():
    rng = np.random.default_rng(8)
    w = rng.dirichlet(np.ones(6))
    f = rng.standard_normal(6)
    vals = f[:, None, None] * np.eye(1)
    mean = matrix_mean(w, vals)[0, 0]
    var = matrix_variance(w, vals)[0, 0]
    assert mean == pytest.approx(float(w @ f))
    assert var == pytest.approx(float(w @ f**2 - (w @ f) ** 2))


def test_matrix_variance_constant_is_zero():
    vals = np.broadcast_to(np.diag([2.0, -1.0]), (4, 2, 2))
    w = np.full(4, 0.25)
    assert np.abs(matrix_variance(w, vals)).max() <= 1e-15


def test_matrix_variance_is_psd():
    rng = np.random.default_rng(4)
    for _ in range(25):
        w = rng.dirichlet(np.ones(5))
        vals = np.stack([np.eye(3) * 0 + (m + m.T) / 2
                         for m in rng.standard_normal((5, 3, 3))])
        assert np.linalg.eigvalsh(matrix_variance(w, vals)).min() >= -1e-12


# ------------------------------------------------------------ dirichlet form

def test_dirichlet_form_double_loop_oracle():
    w = chains.hermon_salez(measures.make_uniform_k_subsets(4, 2))
    fn = random_matrix_fn(w.states, 3, seed=1)
    vals = fn.gather(w.states)
    got = dirichlet_form(w.rates, w.pi, vals)
    m = w.states.size
    ref = np.zeros((3, 3))
    for x in range(m):
        for y in range(m):
            if x != y:
                d = vals[x] - vals[y]
                ref += 0.5 * w.pi[x] * w.rates[x, y] * (d @ d)
    assert np.abs(got - ref).max() <= 1e-12


def test_dirichlet_form_scalar_quadratic_identity():
    """For scalar f the half-sum convention reproduces <f, -Qf>_pi."""
    w = chains.hermon_salez(measures.make_uniform_k_subsets(5, 2))
    rng = np.random.default_rng(2)
    f = rng.standard_normal(w.states.size)
    vals = f[:, None, None] * np.eye(1)
    e = dirichlet_form(w.rates, w.pi, vals)[0, 0]
    assert e == pytest.approx(float((w.pi * f) @ (-w.rates @ f)))


def test_dirichlet_form_constant_zero():
    w = chains.hermon_salez(measures.make_uniform_k_subsets(3, 1))
    vals = np.broadcast_to(np.diag([1.0, 5.0]), (3, 2, 2))
    assert np.abs(dirichlet_form(w.rates, w.pi, vals)).max() == 0.0


# ------------------------------------------------- two-level decompositions

def test_project_fn_uniform31():
    w = chains.hermon_salez(measures.make_uniform_k_subsets(3, 1))
    dec = chains.decompose(w, 0)
    fn = MatrixFn.from_table({1: np.eye(1), 2: 2 * np.eye(1), 4: 4 * np.eye(1)})
    fhat = project_fn(dec, fn)
    # part 0 holds masks {2, 4} with equal conditional mass
    assert fhat.values[0][0, 0] == pytest.approx(3.0)
    assert fhat.values[1][0, 0] == pytest.approx(1.0)


def test_project_fn_of_constant_is_constant():
    w = chains.hermon_salez(measures.make_uniform_k_subsets(4, 2))
    dec = chains.decompose(w, 1)
    fn = MatrixFn.constant(w.states, np.diag([1.0, 2.0]))
    fhat = project_fn(dec, fn)
    assert np.allclose(fhat.values, np.diag([1.0, 2.0])[None])


def test_check_decompositions_two_state_scalar():
    g = two_state_gen(0.9, 0.4)
    dec = chains.decompose(g, 0)
    fn = MatrixFn.from_table({0: [[0.3]], 1: [[-1.2]]})
    res = check_decompositions(dec, fn)
    assert res.variance_residual <= 1e-12
    assert res.dirichlet_residual <= 1e-12


def test_check_decompositions_random_matrix(fixture_walks):
    for name in ["uniform_4_2", "trees_k4", "dpp_5", "bern_4"]:
        gen = fixture_walks[name]
        fn = random_matrix_fn(gen.states, 4, seed=name_seed(name))
        for ell in range(gen.n):
            bits = (gen.states >> ell) & 1
            if bits.min() == bits.max():
                continue
            dec = chains.decompose(gen, ell)
            res = check_decompositions(dec, fn)
            assert res.variance_residual <= 1e-10 * res.scale
            assert res.dirichlet_residual <= 1e-10 * res.scale


# -------------------------------------------------------------- spectral gap

def test_gap_two_state_closed_form():
    assert scalar_spectral_gap(two_state_gen(0.7, 0.4)) == pytest.approx(1.1)
    assert scalar_spectral_gap(two_state_gen(2.0, 3.0)) == pytest.approx(5.0)


def test_gap_complete_graph():
    for m in [3, 5, 8]:
        assert scalar_spectral_gap(complete_graph_gen(m)) == pytest.approx(1.0)


def test_gap_single_state_inf():
    g = chains.Generator(np.array([7]), np.zeros((1, 1)), np.array([1.0]), n=3)
    assert scalar_spectral_gap(g) == np.inf


def test_gap_reducible():
    rates = np.zeros((4, 4))
    rates[0, 1] = rates[1, 0] = 1.0
    rates[2, 3] = rates[3, 2] = 1.0
    np.fill_diagonal(rates, -rates.sum(axis=1))
    g = chains.Generator(np.arange(4), rates, np.full(4, 0.25))
    with pytest.raises(Reducible) as exc:
        scalar_spectral_gap(g)
    assert exc.value.components == 2


def test_gap_uniform31_value():
    w = chains.hermon_salez(measures.make_uniform_k_subsets(3, 1))
    assert scalar_spectral_gap(w) == pytest.approx(1.5)


# ---------------------------------------------------------- poincare checks

def test_poincare_constant_function_passes():
    w = chains.hermon_salez(measures.make_uniform_k_subsets(4, 2))
    fn = MatrixFn.constant(w.states, np.diag([3.0, -2.0]))
    rep = check_matrix_poincare(w, fn, lam=10.0)
    assert rep.passed
    assert rep.witness is None


def test_poincare_scalar_reduction():
    """g(x) * I turns the matrix inequality into the scalar one, so the
    claim holds at the gap and fails just above it for the gap witness."""
    w = chains.hermon_salez(measures.make_uniform_k_subsets(4, 2))
    gap = scalar_spectral_gap(w)
    root = np.sqrt(w.pi)
    sym = (root[:, None] / root[None, :]) * w.rates
    sym = -(sym + sym.T) / 2.0
    _, vec = np.linalg.eigh(sym)
    fiedler = vec[:, 1] / root
    vals = np.einsum("x,ij->xij", fiedler, np.eye(2))
    fn = MatrixFn(w.states, vals)
    ok = check_matrix_poincare(w, fn, gap)
    assert ok.passed
    bad = check_matrix_poincare(w, fn, gap * 1.05)
    assert not bad.passed
    assert bad.min_eig_slack < 0.0
    assert bad.witness is fn


def test_poincare_random_fn_at_gap(fixture_walks):
    for name in ["uniform_3_1", "uniform_5_2", "trees_k3", "dpp_4", "cube_2"]:
        gen = fixture_walks[name]
        gap = scalar_spectral_gap(gen)
        fn = random_matrix_fn(gen.states, 3, seed=name_seed(name))
        rep = check_matrix_poincare(gen, fn, gap)
        assert rep.passed, (name, rep.min_eig_slack)


# ----------------------------------------------------- adversarial search

def test_search_two_state_recovers_sum():
    g = two_state_gen(0.7, 0.4)
    found = adversarial_lambda_search(g, d=2, budget=4, seed=0)
    assert abs(found - 1.1) <= 1e-6


def test_search_complete_graph():
    found = adversarial_lambda_search(complete_graph_gen(5), d=2, budget=3, seed=1)
    assert abs(found - 1.0) <= 1e-6


def test_search_matches_scalar_gap_on_fixtures(fixture_walks):
    """The matrix constant cannot undercut the scalar gap and the scalar
    witness already attains it, so the search lands on the gap."""
    for name in ["uniform_3_1", "uniform_4_2", "trees_k3", "cube_2", "dpp_4"]:
        gen = fixture_walks[name]
        gap = scalar_spectral_gap(gen)
        found = adversarial_lambda_search(gen, d=2, budget=3,
                                          seed=name_seed(name))
        assert abs(found - gap) <= 1e-6, name


def test_search_single_state():
    g = chains.Generator(np.array([0]), np.zeros((1, 1)), np.array([1.0]))
    assert adversarial_lambda_search(g, d=2) == np.inf


def test_search_deterministic():
    g = two_state_gen(1.0, 0.5)
    a = adversarial_lambda_search(g, d=2, budget=3, seed=9)
    b = adversarial_lambda_search(g, d=2, budget=3, seed=9)
    assert a == b


# ----------------------------------------------------------------- round trip

def test_matrix_fn_json_roundtrip():
    fn = random_matrix_fn([1, 2, 4, 8], 3, seed=12)
    back = matrix_fn_from_json(matrix_fn_to_json(fn))
    assert back.states.tolist() == fn.states.tolist()
    assert np.allclose(back.values, fn.values)


def test_matrix_fn_json_shape_error():
    obj = {"d": 2, "values": [{"mask": 0, "rows": [[1.0]]}]}
    with pytest.raises(ValueError):
        matrix_fn_from_json(obj)
