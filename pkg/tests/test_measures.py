import itertools

import numpy as np
import pytest

from srconc import measures
from srconc.measures import (
    DisconnectedGraph,
    NegativeMass,
    NotAProjection,
    NotNormalized,
    ScpResult,
    StateSpaceTooLarge,
    SubsetMeasure,
    ZeroMassEvent,
    condition,
    covers,
    generating_polynomial,
    homogeneity_degree,
    make_bernoulli_product,
    make_projection_dpp,
    make_spanning_tree_measure,
    make_uniform_k_subsets,
    measure_covers,
    popcount,
    scp_check,
    validate,
)
from conftest import C5_EDGES, K3_EDGES, K4_EDGES, random_projection_kernel


def test_validate_accepts_normalized_pair():
    validate(SubsetMeasure(1, np.array([0.5, 0.5])))


def test_validate_rejects_unnormalized():
    with pytest.raises(NotNormalized):
        validate(SubsetMeasure(1, np.array([0.7, 0.4])))


def test_validate_rejects_negative_mass():
    with pytest.raises(NegativeMass):
        validate(SubsetMeasure(1, np.array([-0.1, 1.1])))


def test_storage_cap():
    with pytest.raises(StateSpaceTooLarge):
        SubsetMeasure(21, np.zeros(1 << 21))


def test_generating_polynomial_pinned_points():
    m = make_uniform_k_subsets(3, 1)
    assert generating_polynomial(m, [1.0, 1.0, 1.0]) == pytest.approx(1.0, abs=1e-12)
    # (1/3)(3 + 0 + 0)
    assert generating_polynomial(m, [3.0, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
    point = SubsetMeasure(2, np.array([0.0, 0.0, 0.0, 1.0]))
    assert generating_polynomial(point, [2.0, 5.0]) == pytest.approx(10.0)


def test_generating_polynomial_matches_explicit_expansion():
    rng = np.random.default_rng(4)
    probs = rng.dirichlet(np.ones(16))
    m = SubsetMeasure(4, probs)
    z = rng.uniform(-2.0, 2.0, size=4)
    expected = 0.0
    for mask in range(16):
        term = probs[mask]
        for i in range(4):
            if (mask >> i) & 1:
                term *= z[i]
        expected += term
    assert generating_polynomial(m, z) == pytest.approx(expected, rel=1e-12)


def test_generating_polynomial_at_ones_is_total_mass(fixture_measures):
    for name, (m, _) in fixture_measures.items():
        assert generating_polynomial(m, np.ones(m.n)) == pytest.approx(1.0, abs=1e-12), name


@pytest.mark.parametrize("n,k", [(n, k) for n in range(9) for k in range(n + 1)])
def test_homogeneity_of_uniform_k_subsets(n, k):
    assert homogeneity_degree(make_uniform_k_subsets(n, k)) == k


def test_homogeneity_absent_for_product():
    assert homogeneity_degree(make_bernoulli_product([0.5, 0.5])) is None


def test_homogeneity_of_empty_set_point_mass():
    m = SubsetMeasure(2, np.array([1.0, 0.0, 0.0, 0.0]))
    assert homogeneity_degree(m) == 0


def test_condition_pinned_example():
    # uniform singletons of a 3-set given coordinate 2 absent
    m = make_uniform_k_subsets(3, 1)
    c = condition(m, [2], [0])
    assert c.n == 2
    assert np.allclose(c.probs, [0.0, 0.5, 0.5, 0.0])


def test_condition_empty_set_is_identity():
    m = make_bernoulli_product([0.2, 0.7])
    c = condition(m, [], [])
    assert c.n == m.n and np.array_equal(c.probs, m.probs)


def test_condition_zero_mass_event():
    point = SubsetMeasure(1, np.array([0.0, 1.0]))
    with pytest.raises(ZeroMassEvent):
        condition(point, [0], [0])


def test_condition_matches_dict_oracle():
    rng = np.random.default_rng(9)
    probs = rng.dirichlet(np.ones(16))
    m = SubsetMeasure(4, probs)
    coords, bits = [1, 3], [1, 0]
    # oracle: filter, renormalize, repack surviving coordinates 0 and 2
    table = {}
    for mask in range(16):
        if (mask >> 1) & 1 == 1 and (mask >> 3) & 1 == 0:
            packed = (mask & 1) | (((mask >> 2) & 1) << 1)
            table[packed] = table.get(packed, 0.0) + probs[mask]
    total = sum(table.values())
    c = condition(m, coords, bits)
    assert c.n == 2
    for packed, mass in table.items():
        assert c.probs[packed] == pytest.approx(mass / total, rel=1e-12)


def test_covers_relation():
    assert covers(0b101, 0b101)
    assert covers(0b101, 0b001)
    assert not covers(0b001, 0b101)   # one-directional
    assert not covers(0b110, 0b001)
    assert not covers(0b111, 0b001)   # two extra bits


def test_measure_covers_reflexive_diagonal():
    m = make_uniform_k_subsets(3, 2)
    table = measure_covers(m, m)
    assert table is not None
    assert table.max_marginal_deviation() < 1e-10
    assert table.off_support_mass() == 0.0


def test_measure_covers_point_masses():
    up = SubsetMeasure(1, np.array([0.0, 1.0]))
    down = SubsetMeasure(1, np.array([1.0, 0.0]))
    table = measure_covers(up, down)
    assert table is not None
    assert table.mass[0, 0] == pytest.approx(1.0)
    assert measure_covers(down, up) is None


def test_measure_covers_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        measure_covers(make_uniform_k_subsets(2, 1), make_uniform_k_subsets(3, 1))


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (4, 2), (5, 2), (5, 3)])
def test_scp_uniform_k_subsets(n, k):
    assert scp_check(make_uniform_k_subsets(n, k))


@pytest.mark.parametrize("ps", [[0.5], [0.3, 0.8], [0.2, 0.5, 0.9],
                                [0.35, 0.6, 0.75, 0.5]])
def test_scp_bernoulli_products(ps):
    assert scp_check(make_bernoulli_product(ps))


def test_scp_spanning_trees_and_dpps(fixture_measures):
    for name in ("trees_k3", "trees_c5", "dpp_4", "dpp_5"):
        m, _ = fixture_measures[name]
        assert scp_check(m), name


def test_scp_violation_witness():
    # mass only on the empty set and the full pair: conditioning on
    # coordinate 0 flips the other coordinate deterministically upward,
    # the wrong direction for covering
    bad = SubsetMeasure(2, np.array([0.5, 0.0, 0.0, 0.5]))
    result = scp_check(bad)
    assert isinstance(result, ScpResult)
    assert not result
    coords, x_bits, y_bits = result.witness
    assert len(coords) == len(x_bits) == len(y_bits)
    high = condition(bad, coords, x_bits)
    low = condition(bad, coords, y_bits)
    assert measure_covers(low, high) is None


def test_scp_check_limit():
    probs = np.zeros(1 << 15)
    probs[0] = 1.0
    with pytest.raises(StateSpaceTooLarge):
        scp_check(SubsetMeasure(15, probs))


def test_make_uniform_singletons():
    m = make_uniform_k_subsets(3, 1)
    for mask in (0b001, 0b010, 0b100):
        assert m.mass(mask) == pytest.approx(1.0 / 3.0)
    assert m.probs.sum() == pytest.approx(1.0)


def test_projection_dpp_axis_kernel():
    m = make_projection_dpp(np.diag([1.0, 0.0]))
    assert m.mass(0b01) == pytest.approx(1.0)
    assert m.support().tolist() == [1]


def test_projection_dpp_rejects_non_projection():
    with pytest.raises(NotAProjection):
        make_projection_dpp(np.array([[0.5, 0.0], [0.0, 0.5]]))
    with pytest.raises(NotAProjection):
        make_projection_dpp(np.array([[1.0, 0.2], [0.0, 1.0]]))


def test_projection_dpp_matches_minor_determinants():
    kern = random_projection_kernel(5, 2, seed=17)
    m = make_projection_dpp(kern)
    assert homogeneity_degree(m) == 2
    for mask in m.support():
        idx = [i for i in range(5) if (mask >> i) & 1]
        det = np.linalg.det(kern[np.ix_(idx, idx)])
        assert m.mass(int(mask)) == pytest.approx(det, rel=1e-9)
    # single-element marginals of a projection DPP equal the diagonal
    for i in range(5):
        marg = sum(m.mass(int(s)) for s in m.support() if (int(s) >> i) & 1)
        assert marg == pytest.approx(kern[i, i], abs=1e-9)


def tree_count_oracle(edges, vertices):
    """Matrix-tree theorem: det of the reduced Laplacian."""
    lap = np.zeros((vertices, vertices))
    for u, v in edges:
        lap[u, u] += 1
        lap[v, v] += 1
        lap[u, v] -= 1
        lap[v, u] -= 1
    return int(round(np.linalg.det(lap[1:, 1:])))


@pytest.mark.parametrize("edges,vertices,count", [
    (K3_EDGES, 3, 3),
    (K4_EDGES, 4, 16),
    (C5_EDGES, 5, 5),
])
def test_spanning_tree_measure_counts(edges, vertices, count):
    assert tree_count_oracle(edges, vertices) == count
    m = make_spanning_tree_measure(edges, vertices)
    supp = m.support()
    assert supp.size == count
    assert np.allclose(m.probs[supp], 1.0 / count)
    # every support mask really is a spanning tree: right size, acyclic
    for mask in supp:
        assert int(popcount(mask)) == vertices - 1
        assert measures.is_spanning_tree(int(mask), edges, vertices)


def test_spanning_tree_measure_rejects_disconnected():
    with pytest.raises(DisconnectedGraph):
        make_spanning_tree_measure([(0, 1), (2, 3)], 4)


def test_spanning_tree_measure_rejects_self_loop():
    with pytest.raises(ValueError):
        make_spanning_tree_measure([(0, 0), (0, 1)], 2)


def test_measure_json_roundtrip(fixture_measures):
    for name, (m, _) in fixture_measures.items():
        back = measures.measure_from_json(measures.measure_to_json(m))
        assert back.n == m.n, name
        assert np.allclose(back.probs, m.probs, atol=1e-15), name


def test_measure_from_json_validates():
    with pytest.raises(NotNormalized):
        measures.measure_from_json(
            {"n": 1, "entries": [{"mask": 0, "p": 0.5}, {"mask": 1, "p": 0.6}]})


def test_graph_from_json():
    vertices, edges = measures.graph_from_json(
        {"vertices": 3, "edges": [[0, 1], [1, 2]]})
    assert vertices == 3 and edges == [(0, 1), (1, 2)]


def test_feasible_coupling_reports_shortfall():
    # disjointly supported marginals with no allowed pairs at all
    table, value = measures.feasible_coupling(
        np.array([0]), np.array([1.0]), np.array([3]), np.array([1.0]),
        np.array([[False]]))
    assert table is None and value == 0.0


def test_conditional_covering_instance_by_hand():
    # uniform 2-subsets of [4]: conditioning coordinate 3 to 0 vs 1 gives
    # uniform 2-subsets vs uniform 1-subsets of the remaining 3 elements,
    # and the former covers the latter elementwise
    m = make_uniform_k_subsets(4, 2)
    low = condition(m, [3], [0])
    high = condition(m, [3], [1])
    table = measure_covers(low, high)
    assert table is not None
    assert table.max_marginal_deviation() < 1e-10
    for i, x in enumerate(table.rows):
        for j, y in enumerate(table.cols):
            if table.mass[i, j] > 0:
                assert covers(int(x), int(y))
