from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.special import zeta
from scipy.stats import kstest

from vmcoal.compositions import graded
from vmcoal.errors import PreconditionError, ValidationError
from vmcoal.mst import (
    DisjointSet,
    EdgeLengthModel,
    HostGraph,
    exhaustive_mst,
    kruskal,
    largest_component_fraction,
    mst_monte_carlo,
    mst_series,
    mst_term,
    mst_term_quadrature,
    percolation_threshold,
    shell_sum,
)
from vmcoal.simulator import make_rng

ZETA3 = float(zeta(3))
BIP = [[0.0, 1.0], [1.0, 0.0]]
K3 = (np.ones((3, 3)) - np.eye(3)).tolist()
V2 = [[0.6, 1.0], [1.0, 0.4]]


def test_scalar_terms_are_inverse_cubes():
    for n in range(1, 30):
        assert mst_term((n,), [1.0], [[1.0]]) == pytest.approx(n**-3.0, rel=1e-12)
        assert shell_sum([1.0], [[1.0]], n) == pytest.approx(n**-3.0, rel=1e-12)


def test_shell_sum_matches_term_sum():
    for n in range(1, 7):
        direct = sum(mst_term(x, [1.0, 2.0], V2) for x in graded(2, n, n_min=n))
        assert shell_sum([1.0, 2.0], V2, n) == pytest.approx(direct, rel=1e-12)


def test_terms_match_quadrature():
    for x in [(1, 0), (1, 1), (2, 1), (3, 2)]:
        assert mst_term(x, [1.0, 2.0], V2) == pytest.approx(mst_term_quadrature(x, [1.0, 2.0], V2), rel=1e-7)


@pytest.mark.parametrize(
    "alpha,V,factor",
    [([1.0], [[1.0]], 1.0), ([1.0, 1.0], BIP, 2.0), ([1.0, 1.0, 1.0], K3, 1.5)],
)
def test_series_limits(alpha, V, factor):
    rep = mst_series(alpha, V)
    assert rep.tail_flag
    assert abs(rep.partial_sum - factor * ZETA3) <= 1e-3
    assert np.all(np.diff(np.cumsum(rep.shells)) > 0)


def test_series_fixed_truncation():
    rep = mst_series([1.0], [[1.0]], n_max=10)
    assert rep.n_max == 10
    assert rep.partial_sum == pytest.approx(sum(n**-3.0 for n in range(1, 11)), rel=1e-13)
    with pytest.raises(ValidationError):
        mst_series([1.0], [[1.0]], n_max=0)


@pytest.mark.parametrize("v", [0.5, 1.0, 2.0])
def test_edge_lengths_are_beta(v):
    model = EdgeLengthModel(v)
    sample = model.sample(make_rng(31, int(v * 10)), 20_000)
    assert np.all((sample >= 0) & (sample < 1))
    assert kstest(sample, "beta", args=(1, v)).pvalue > 0.01
    assert kstest(sample, lambda x: model.cdf(x)).pvalue > 0.01


def test_edge_length_small_values_accurate():
    u = np.array([1e-18, 1e-10])
    # two-term series of 1 - (1 - u)^(1/4)
    np.testing.assert_allclose(EdgeLengthModel(4.0).from_uniform(u), u / 4 + 3 * u**2 / 32, rtol=1e-14)
    with pytest.raises(ValidationError):
        EdgeLengthModel(0.0)


def test_disjoint_set():
    ds = DisjointSet(5)
    assert ds.union(0, 1) and ds.union(3, 4)
    assert not ds.union(1, 0)
    assert ds.components == 3
    assert ds.find(1) == ds.find(0) != ds.find(3)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31), st.floats(0.0, 0.6))
def test_kruskal_matches_exhaustive(n, seed, drop):
    rng = np.random.default_rng(seed)
    W = np.full((n, n), np.inf)
    us, vs, ws = [], [], []
    for a in range(n):
        for b in range(a + 1, n):
            # keep a path so the graph stays connected
            if b == a + 1 or rng.random() >= drop:
                w = rng.random()
                W[a, b] = W[b, a] = w
                us.append(a)
                vs.append(b)
                ws.append(w)
    total, comps = kruskal(n, us, vs, ws)
    assert comps == 1
    assert total == pytest.approx(exhaustive_mst(n, W), rel=1e-12)


def test_kruskal_matches_scipy_on_larger_graph():
    rng = np.random.default_rng(8)
    n = 60
    a, b = np.triu_indices(n, 1)
    w = rng.random(len(a))
    total, comps = kruskal(n, a, b, w)
    M = np.zeros((n, n))
    M[a, b] = w
    assert comps == 1
    assert total == pytest.approx(minimum_spanning_tree(M).sum(), rel=1e-12)


def test_kruskal_forest():
    total, comps = kruskal(4, [0, 2], [1, 3], [0.5, 0.25])
    assert comps == 2
    assert total == 0.75


def test_exhaustive_limit():
    with pytest.raises(PreconditionError):
        exhaustive_mst(9, np.zeros((9, 9)))


def test_host_graph_blocks():
    g = HostGraph([3, 2], np.array(V2))
    assert g.n_vertices == 5
    assert g.n_edges == 3 + 6 + 1
    for bi, (i, j, m, _) in enumerate(g.blocks):
        a, b = g.endpoints(bi, np.arange(m))
        pairs = {(int(p), int(q)) for p, q in zip(a, b)}
        assert len(pairs) == m
        assert all(p < q or i != j for p, q in pairs)
    assert not HostGraph([3, 0], np.array(BIP)).is_connected(BIP)


def test_single_edge_mean_is_half():
    rep = mst_monte_carlo([1.0], [[1.0]], 2, 4000, seed=5)
    assert abs(rep.mean - 0.5) <= 3 * rep.se


def test_monte_carlo_deterministic_and_thread_independent():
    a = mst_monte_carlo([1.0, 1.0], BIP, 40, 8, seed=3, threads=1)
    b = mst_monte_carlo([1.0, 1.0], BIP, 40, 8, seed=3, threads=4)
    np.testing.assert_array_equal(a.lengths, b.lengths)


def test_monte_carlo_near_limits():
    for alpha, V, factor in [([1.0], [[1.0]], 1.0), ([1.0, 1.0], BIP, 2.0)]:
        rep = mst_monte_carlo(alpha, V, 300, 200, seed=1, threads=4)
        assert abs(rep.mean - factor * ZETA3) / (factor * ZETA3) <= 0.05


def test_monte_carlo_exact_mst_agrees_with_full_kruskal():
    # the thresholded search must return the same tree length as using every edge
    from vmcoal.mst import _mst_length

    g = HostGraph([30, 20], np.array(V2))
    rng_a, rng_b = make_rng(4), make_rng(4)
    fast = _mst_length(g, rng_a)
    lengths = [EdgeLengthModel(v).sample(rng_b, m) for (_, _, m, v) in g.blocks]
    us, vs = zip(*(g.endpoints(bi, np.arange(len(ell))) for bi, ell in enumerate(lengths)))
    total, _ = kruskal(g.n_vertices, np.concatenate(us), np.concatenate(vs), np.concatenate(lengths))
    assert fast == pytest.approx(total, rel=1e-14)


def test_percolation_threshold_examples():
    assert percolation_threshold([1.0], [[1.0]], 1000) == pytest.approx(1e-3)
    assert percolation_threshold([1.0, 1.0], BIP, 1000) == pytest.approx(1e-3)
    assert percolation_threshold([1.0, 2.0], V2, 2000) == pytest.approx(0.5 * percolation_threshold([1.0, 2.0], V2, 1000))


def test_largest_component_jumps_across_threshold():
    n = 2000
    pc = percolation_threshold([1.0, 1.0], BIP, n)
    below = np.mean([largest_component_fraction([1.0, 1.0], BIP, n, 0.8 * pc, make_rng(6, r)) for r in range(3)])
    above = np.mean([largest_component_fraction([1.0, 1.0], BIP, n, 1.2 * pc, make_rng(7, r)) for r in range(3)])
    assert above >= 3 * below


def test_series_against_known_value():
    assert mst_series([1.0], [[1.0]], n_max=1000).partial_sum == pytest.approx(ZETA3, abs=1e-6)
    assert math.isclose(ZETA3, 1.2020569031595942)
