from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmcoal.compositions import factorial, graded, unit
from vmcoal.errors import PreconditionError, ValidationError
from vmcoal.trees import (
    TreeMethod,
    abel_tau_literal_sides,
    abel_tau_sides,
    abramson_sides,
    all_methods,
    bareiss_det,
    enumerator_brute_force,
    enumerator_closed,
    enumerator_cofactor,
    enumerator_rank_one,
    multipartite_tx,
    partition_tau,
    prufer_edges,
    rank_one_weight_matrix,
    rec_tx_sides,
    s_coefficient,
    tx_table,
    vertex_labels,
    weighted_laplacian,
    weighted_multipartite_tx,
)

BIP = np.array([[0.0, 1.0], [1.0, 0.0]])
K3 = np.ones((3, 3)) - np.eye(3)


def subset_oracle(x, V):
    """Sum of edge-weight products over acyclic (n-1)-edge subsets; independent of Prufer codes."""
    lab = vertex_labels(x)
    n = len(lab)
    if n == 1:
        return 1.0
    edges = [(a, b, V[lab[a], lab[b]]) for a, b in itertools.combinations(range(n), 2) if V[lab[a], lab[b]] > 0]
    total = 0.0
    for subset in itertools.combinations(edges, n - 1):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        ok = True
        for a, b, _ in subset:
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        if ok:
            total += math.prod(w for _, _, w in subset)
    return total


def small_cases():
    def build(args):
        k, vals, x = args
        A = np.array(vals).reshape(k, k)
        A = np.triu(A) + np.triu(A, 1).T
        return tuple(x[:k]), A

    return st.integers(1, 3).flatmap(
        lambda k: st.tuples(
            st.just(k),
            st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.7, 2.0]), min_size=k * k, max_size=k * k),
            st.lists(st.integers(0, 3), min_size=3, max_size=3).filter(lambda v: 0 < sum(v[:k]) <= 6),
        )
    ).map(build)


def test_laplacian_examples():
    np.testing.assert_array_equal(weighted_laplacian((2,), [[1.0]]), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(weighted_laplacian((1, 1), BIP), [[1, -1], [-1, 1]])


@settings(max_examples=40, deadline=None)
@given(small_cases())
def test_laplacian_rows_sum_to_zero(case):
    x, V = case
    L = weighted_laplacian(x, V)
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_array_equal(L, L.T)


def test_laplacian_dimension_mismatch():
    with pytest.raises(ValidationError):
        weighted_laplacian((1, 1, 1), BIP)


def test_cofactor_examples():
    assert enumerator_cofactor((3,), [[1.0]]).value == 3
    assert enumerator_cofactor((2, 2), BIP).value == 4
    assert enumerator_cofactor((1, 0), BIP).value == 1


def test_cofactor_independent_of_minor():
    rng = np.random.default_rng(3)
    A = rng.uniform(0.2, 2.0, (3, 3))
    V = np.triu(A) + np.triu(A, 1).T
    x = (2, 1, 3)
    ref = enumerator_cofactor(x, V).value
    for _ in range(10):
        i, j = rng.integers(0, 6, 2)
        assert enumerator_cofactor(x, V, int(i), int(j)).value == pytest.approx(ref, rel=1e-10)


def test_cofactor_disconnected_is_zero():
    V = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    rep = enumerator_cofactor((1, 1, 1), V, exact=False)
    assert rep.value == 0.0
    assert enumerator_closed((1, 1, 1), V).value == 0.0
    # a single type with no self-edges cannot be spanned
    assert enumerator_closed((3, 0), BIP).value == 0.0


def test_rank_one_examples():
    assert enumerator_rank_one((2,), [[1.0]], [1, 1], [1, 1]).value == pytest.approx(1.0)
    assert enumerator_rank_one((2, 2), BIP).value == pytest.approx(4.0)
    rng = np.random.default_rng(5)
    for _ in range(5):
        a, b = rng.uniform(-1, 2, 3), rng.uniform(-1, 2, 3)
        assert enumerator_rank_one((3,), [[1.0]], a, b, exact=False).value == pytest.approx(3.0, rel=1e-9)


def test_rank_one_zero_sum_rejected():
    with pytest.raises(PreconditionError):
        enumerator_rank_one((3,), [[1.0]], [1, -1, 0], [1, 1, 1])


def test_partition_tau_examples():
    assert partition_tau((5, 0), BIP) == 1.0
    assert partition_tau((2, 2), BIP) == pytest.approx(4.0)
    assert partition_tau((1, 1, 1), K3) == pytest.approx(3.0)


def test_closed_form_examples():
    assert enumerator_closed((2, 2), BIP).value == 4
    assert enumerator_closed((4,), [[1.0]]).value == 16
    assert enumerator_closed((1, 1, 1), K3).value == 3


def test_brute_force_examples():
    assert enumerator_brute_force((3,), [[1.0]]).value == pytest.approx(3.0)
    assert enumerator_brute_force((2, 1), BIP).value == pytest.approx(1.0)
    c = 2.75
    assert enumerator_brute_force((1, 1), [[0, c], [c, 0]]).value == pytest.approx(c, rel=1e-15)


def test_brute_force_refuses_large():
    with pytest.raises(PreconditionError):
        enumerator_brute_force((10,), [[1.0]])


@pytest.mark.parametrize("n", range(1, 8))
def test_prufer_codes_give_cayley_count(n):
    edges = prufer_edges(n)
    assert len(edges) == max(1, n ** (n - 2)) if n > 1 else True
    if n > 2:
        # each code gives a distinct tree
        keys = {tuple(sorted(tuple(sorted(e)) for e in tree.tolist())) for tree in edges}
        assert len(keys) == n ** (n - 2)


@settings(max_examples=40, deadline=None)
@given(small_cases())
def test_all_methods_match_subset_oracle(case):
    x, V = case
    expected = subset_oracle(x, V)
    for method, rep in all_methods(x, V).items():
        assert rep.value == pytest.approx(expected, rel=1e-9, abs=1e-12), method


def test_exact_integer_path():
    V = np.array([[1.0, 2.0, 0.0], [2.0, 0.0, 3.0], [0.0, 3.0, 1.0]])
    for x in graded(3, 5):
        reps = all_methods(x, V)
        exact = {m: r.exact for m, r in reps.items() if r.exact is not None}
        assert TreeMethod.COFACTOR in exact and TreeMethod.CLOSED_FORM in exact
        assert len(set(exact.values())) == 1, (x, exact)
        assert round(subset_oracle(x, V)) == exact[TreeMethod.COFACTOR]


def test_bareiss_against_fractions():
    rng = np.random.default_rng(11)
    for _ in range(20):
        M = rng.integers(-5, 6, (5, 5))
        # Fraction Gaussian elimination as an independent exact oracle
        A = [[Fraction(int(v)) for v in row] for row in M]
        det = Fraction(1)
        for c in range(5):
            p = next((r for r in range(c, 5) if A[r][c] != 0), None)
            if p is None:
                det = Fraction(0)
                break
            if p != c:
                A[c], A[p] = A[p], A[c]
                det = -det
            det *= A[c][c]
            for r in range(c + 1, 5):
                f = A[r][c] / A[c][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
        assert bareiss_det(M) == det


@pytest.mark.parametrize("n", range(1, 11))
def test_cayley_formula(n):
    assert enumerator_closed((n,), [[1]]).exact == max(1, n ** (n - 2)) if n > 1 else 1


@pytest.mark.parametrize("x", [(1, 1), (2, 3), (4, 1), (3, 3), (5, 2)])
def test_complete_bipartite_formula(x):
    a, b = x
    assert enumerator_cofactor(x, BIP).exact == a ** (b - 1) * b ** (a - 1)


def test_complete_multipartite_formula():
    for x in graded(3, 7):
        if sum(1 for v in x if v > 0) < 2:
            continue
        assert enumerator_cofactor(x, K3).exact == multipartite_tx(x)


def test_s_coefficient_examples():
    assert s_coefficient(unit(3, 1), K3) == 1.0
    assert s_coefficient((4,), [[1.0]]) == pytest.approx(2 / 3, rel=1e-14)
    assert s_coefficient((2, 2), BIP) == pytest.approx(1.0, rel=1e-14)


def test_rec_tx_exact():
    V = np.array([[1.0, 2.0], [2.0, 1.0]])
    T = tx_table(V, 7, exact=True)
    for x in graded(2, 7, n_min=2):
        lhs, rhs = rec_tx_sides(x, V, T)
        assert lhs == rhs


def test_abel_tau_substituted_form_holds():
    rng = np.random.default_rng(2)
    A = rng.uniform(0.3, 2.0, (3, 3))
    V = np.triu(A) + np.triu(A, 1).T
    for x in graded(3, 6, n_min=2):
        lhs, rhs = abel_tau_sides(x, V)
        assert lhs == pytest.approx(rhs, rel=1e-9)


def test_abel_tau_literal_form_fails_for_one_type():
    # with a single type tau = 1 and the literal recursion reads 1 = n 2^(n-3)
    for n in range(2, 9):
        lhs, rhs = abel_tau_literal_sides((n,), [[1.0]])
        assert lhs == pytest.approx(1.0)
        assert rhs == pytest.approx(n * 2.0 ** (n - 3), rel=1e-12)


@pytest.mark.parametrize("k", [2, 3])
def test_abramson_identity(k):
    for n in range(max(k, 2), 11):
        lhs, rhs = abramson_sides(k, n)
        assert lhs == rhs
    assert abramson_sides(2, 2) == (2, 2)


def test_weighted_multipartite_formula():
    rng = np.random.default_rng(9)
    for k in (2, 3, 4):
        w = rng.uniform(0.3, 2.0, k)
        V = rank_one_weight_matrix(w)
        for x in graded(k, 5):
            ref = enumerator_cofactor(x, V, exact=False).value
            assert weighted_multipartite_tx(x, w) == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_eigenvalue_multiplicity():
    rng = np.random.default_rng(4)
    A = rng.uniform(0.3, 2.0, (3, 3))
    V = np.triu(A) + np.triu(A, 1).T
    x = (3, 2, 4)
    ev = np.linalg.eigvalsh(weighted_laplacian(x, V))
    Vx = V @ np.array(x, dtype=float)
    for m in range(3):
        mult = int(np.sum(np.abs(ev - Vx[m]) < 1e-9 * max(1.0, Vx[m])))
        assert mult >= x[m] - 1


def test_exact_and_log_values_agree_for_large_counts():
    rep = enumerator_closed((12,), [[1]])
    assert rep.exact == 12**10
    assert rep.value_log == pytest.approx(10 * math.log(12), rel=1e-14)
    big = enumerator_closed((400,), [[1.0]])
    assert big.value is None
    assert big.value_log == pytest.approx(398 * math.log(400), rel=1e-12)


def test_factorial_helper():
    assert factorial((2, 3)) == 12


def test_abel_tau_sides_with_unspannable_parts():
    # (3, 0, 0) has no edges when v_11 = 0, so both sides vanish
    assert abel_tau_sides((3, 0, 0), K3) == (0.0, 0.0)
    lhs, rhs = abel_tau_sides((4, 0, 1), K3)
    assert lhs == pytest.approx(rhs, rel=1e-12)
