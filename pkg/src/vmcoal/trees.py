"""Weighted spanning-tree enumerators ``T_x(V)``.

``K_x(V)`` is the complete multipartite graph with ``x_i`` vertices of
type ``i`` and edge weight ``v_ij`` between a type-``i`` and a type-``j``
vertex (including same-type pairs when ``v_ii > 0``).  ``T_x`` is the sum
over its spanning trees of the product of edge weights.

Four independent routes are provided: a Laplacian cofactor, the rank-one
(Klee-Stamps) determinant, the closed form through the partition graph,
and brute force over Pruefer sequences.  Integer ``V`` with small ``n_x``
also gets exact integer values from fraction-free determinants.

Vertex indices are 0-based throughout.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .compositions import as_composition, factorial, log_factorial, multinomial, shell, splits, support
from .errors import InternalConsistencyError, PreconditionError, ValidationError
from .linalg import WeightMatrix

MAX_BRUTE_FORCE = 9
MAX_EXACT = 12
LOG_REPRESENTABLE = 700.0


class TreeMethod(str, enum.Enum):
    COFACTOR = "Cofactor"
    RANK_ONE = "RankOne"
    CLOSED_FORM = "ClosedForm"
    BRUTE_FORCE = "BruteForce"


@dataclass(frozen=True)
class TreeEnumeratorReport:
    """``T_x`` as a natural log, with the float value when it is representable.

    ``exact`` holds the integer value when the fraction-free path ran.
    """

    value_log: float
    method: TreeMethod
    exact: int | None = None
    value: float | None = field(init=False)

    def __post_init__(self):
        if self.value_log == -math.inf:
            v = 0.0
        elif abs(self.value_log) < LOG_REPRESENTABLE:
            v = math.exp(self.value_log)
        else:
            v = None
        if self.exact is not None and abs(self.value_log) < LOG_REPRESENTABLE:
            v = float(self.exact)
        object.__setattr__(self, "value", v)

    @classmethod
    def from_exact(cls, value: int, method: TreeMethod) -> "TreeEnumeratorReport":
        if value < 0:
            raise ValidationError(f"negative tree count {value}")
        return cls(math.log(value) if value > 0 else -math.inf, method, exact=int(value))


def _prep(x, V):
    V = WeightMatrix.of(V)
    x = as_composition(x, V.k)
    return x, V


def vertex_labels(x) -> np.ndarray:
    """Type of each of the ``n_x`` vertices: ``x_1`` zeros, then ``x_2`` ones, ..."""
    return np.repeat(np.arange(len(x)), x)


def weighted_laplacian(x, V) -> np.ndarray:
    """``n_x x n_x`` Laplacian of ``K_x(V)``; rows sum to zero."""
    x, V = _prep(x, V)
    lab = vertex_labels(x)
    W = V.v[np.ix_(lab, lab)].copy()
    np.fill_diagonal(W, 0.0)
    return np.diag(W.sum(axis=1)) - W


def is_connected(x, V) -> bool:
    """Whether ``K_x(V)`` is connected, i.e. ``T_x > 0``."""
    x, V = _prep(x, V)
    sup = support(x)
    if len(sup) == 1:
        i = sup[0]
        return x[i] == 1 or V.v[i, i] > 0
    adj = V.v[np.ix_(sup, sup)] > 0
    np.fill_diagonal(adj, False)
    seen = {0}
    stack = [0]
    while stack:
        a = stack.pop()
        for b in np.flatnonzero(adj[a]):
            if b not in seen:
                seen.add(int(b))
                stack.append(int(b))
    return len(seen) == len(sup)


# ---------------------------------------------------------------- exact path


def bareiss_det(M) -> int:
    """Exact determinant of an integer matrix by fraction-free elimination."""
    A = [[int(v) for v in row] for row in M]
    n = len(A)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for c in range(n - 1):
        if A[c][c] == 0:
            for r in range(c + 1, n):
                if A[r][c] != 0:
                    A[c], A[r] = A[r], A[c]
                    sign = -sign
                    break
            else:
                return 0
        p = A[c][c]
        for r in range(c + 1, n):
            for s in range(c + 1, n):
                A[r][s] = (A[r][s] * p - A[r][c] * A[c][s]) // prev
            A[r][c] = 0
        prev = p
    return sign * A[n - 1][n - 1]


def _integer_matrix(M) -> list[list[int]] | None:
    M = np.asarray(M)
    R = np.round(M)
    if not np.all(R == M):
        return None
    return [[int(v) for v in row] for row in R]


def _exact_ok(V: WeightMatrix, n: int) -> bool:
    return V.is_integer and n <= MAX_EXACT


def _minor(M, i: int, j: int):
    M = np.asarray(M)
    return np.delete(np.delete(M, i, axis=0), j, axis=1)


def _signed_logdet(M) -> tuple[float, float]:
    if M.shape[0] == 0:
        return 1.0, 0.0
    sign, logdet = np.linalg.slogdet(M)
    return float(sign), float(logdet)


# ----------------------------------------------------------- determinant routes


def enumerator_cofactor(x, V, i: int = 0, j: int = 0, exact: bool | None = None) -> TreeEnumeratorReport:
    """``T_x = (-1)^(i+j) det`` of the ``(i, j)`` minor of ``L_x``."""
    x, V = _prep(x, V)
    n = sum(x)
    if not (0 <= i < n and 0 <= j < n):
        raise PreconditionError(f"cofactor indices ({i}, {j}) out of range for n_x = {n}")
    if n == 1:
        return TreeEnumeratorReport.from_exact(1, TreeMethod.COFACTOR)
    if not is_connected(x, V):
        return TreeEnumeratorReport.from_exact(0, TreeMethod.COFACTOR)
    L = weighted_laplacian(x, V)
    minor = _minor(L, i, j)
    if exact is None:
        exact = _exact_ok(V, n)
    if exact:
        val = (-1) ** (i + j) * bareiss_det(_integer_matrix(minor))
        return TreeEnumeratorReport.from_exact(val, TreeMethod.COFACTOR)
    sign, logdet = _signed_logdet(minor)
    if sign * (-1) ** (i + j) <= 0:
        raise ValidationError("cofactor has the wrong sign; the Laplacian is badly conditioned")
    return TreeEnumeratorReport(logdet, TreeMethod.COFACTOR)


def enumerator_rank_one(x, V, a=None, b=None, exact: bool | None = None) -> TreeEnumeratorReport:
    """``T_x = det(L_x + |a><b|) / (<a|1> <b|1>)``; ``a`` and ``b`` default to all-ones."""
    x, V = _prep(x, V)
    n = sum(x)
    a = np.ones(n) if a is None else np.asarray(a, dtype=float)
    b = np.ones(n) if b is None else np.asarray(b, dtype=float)
    if a.shape != (n,) or b.shape != (n,):
        raise ValidationError(f"rank-one vectors must have length n_x = {n}")
    sa, sb = float(a.sum()), float(b.sum())
    if sa == 0 or sb == 0:
        raise PreconditionError("rank-one vectors need nonzero coordinate sums")
    if not is_connected(x, V):
        return TreeEnumeratorReport.from_exact(0, TreeMethod.RANK_ONE)
    M = weighted_laplacian(x, V) + np.outer(a, b)
    if exact is None:
        exact = _exact_ok(V, n)
    Mi = _integer_matrix(M) if exact else None
    if Mi is not None:
        val = Fraction(bareiss_det(Mi), int(round(sa)) * int(round(sb)))
        if val.denominator != 1:
            raise ValidationError(f"rank-one route produced a non-integer count {val}")
        return TreeEnumeratorReport.from_exact(int(val), TreeMethod.RANK_ONE)
    sign, logdet = _signed_logdet(M)
    if sign * math.copysign(1.0, sa * sb) <= 0:
        raise ValidationError("rank-one determinant has the wrong sign")
    return TreeEnumeratorReport(logdet - math.log(abs(sa * sb)), TreeMethod.RANK_ONE)


# ------------------------------------------------------------- partition route


def partition_weights(x, V) -> np.ndarray:
    """Edge weights ``x_i x_j v_ij`` of the partition graph on ``support(x)``."""
    x, V = _prep(x, V)
    sup = support(x)
    xs = np.array([x[i] for i in sup], dtype=float)
    W = xs[:, None] * V.v[np.ix_(sup, sup)] * xs[None, :]
    np.fill_diagonal(W, 0.0)
    return W


def _weights_connected(W) -> bool:
    s = W.shape[0]
    seen = {0}
    stack = [0]
    while stack:
        a = stack.pop()
        for b in np.flatnonzero(W[a] > 0):
            if int(b) not in seen:
                seen.add(int(b))
                stack.append(int(b))
    return len(seen) == s


def _tau_from_weights(W, exact: bool):
    s = W.shape[0]
    if s == 1:
        return 1 if exact else 0.0
    if not _weights_connected(W):
        return 0 if exact else -math.inf
    L = np.diag(W.sum(axis=1)) - W
    minor = L[1:, 1:]
    if exact:
        return bareiss_det(_integer_matrix(minor))
    sign, logdet = _signed_logdet(minor)
    if sign <= 0:
        return -math.inf
    return logdet


def partition_tau(x, V) -> float:
    """``tau(K_k, x_i x_j v_ij)``: spanning-tree weight of the partition graph on ``support(x)``."""
    x, V = _prep(x, V)
    W = partition_weights(x, V)
    if V.is_integer:
        return float(_tau_from_weights(W, exact=True))
    return math.exp(_tau_from_weights(W, exact=False))


def log_partition_tau(x, V) -> float:
    x, V = _prep(x, V)
    return float(_tau_from_weights(partition_weights(x, V), exact=False))


def enumerator_closed(x, V, exact: bool | None = None) -> TreeEnumeratorReport:
    """``T_x = tau(K_k, x_i x_j v_ij) / x^1 * prod_i <e_i|V|x>^(x_i - 1)`` on ``support(x)``."""
    x, V = _prep(x, V)
    n = sum(x)
    sup = support(x)
    Vx = V.v @ np.asarray(x, dtype=float)
    if not is_connected(x, V):
        return TreeEnumeratorReport.from_exact(0, TreeMethod.CLOSED_FORM)
    if exact is None:
        exact = _exact_ok(V, n)
    if exact:
        tau = _tau_from_weights(partition_weights(x, V), exact=True)
        Vxi = [int(round(Vx[i])) for i in sup]
        val = Fraction(tau, math.prod(x[i] for i in sup))
        val *= math.prod(Vxi[m] ** (x[i] - 1) for m, i in enumerate(sup))
        if val.denominator != 1:
            raise InternalConsistencyError(f"closed form produced a non-integer count {val}")
        return TreeEnumeratorReport.from_exact(int(val), TreeMethod.CLOSED_FORM)
    log_tau = _tau_from_weights(partition_weights(x, V), exact=False)
    log_val = log_tau - sum(math.log(x[i]) for i in sup)
    log_val += sum((x[i] - 1) * math.log(Vx[i]) for i in sup if x[i] > 1)
    return TreeEnumeratorReport(log_val, TreeMethod.CLOSED_FORM)


# ---------------------------------------------------------------- brute force


@lru_cache(maxsize=4)
def prufer_edges(n: int) -> np.ndarray:
    """Edge arrays of every labeled tree on ``n`` vertices, shape ``(n^(n-2), n-1, 2)``.

    Trees are listed in the lexicographic order of their Pruefer sequences.
    """
    if n < 1:
        raise PreconditionError("need at least one vertex")
    if n == 1:
        return np.zeros((1, 0, 2), dtype=np.int8)
    if n == 2:
        return np.array([[[0, 1]]], dtype=np.int8)
    m = n - 2
    N = n**m
    # all sequences in lexicographic order via base-n digits
    codes = np.arange(N, dtype=np.int64)
    seq = np.empty((N, m), dtype=np.int8)
    for p in range(m - 1, -1, -1):
        seq[:, p] = codes % n
        codes //= n
    deg = np.ones((N, n), dtype=np.int8)
    rows = np.arange(N)
    for p in range(m):
        deg[rows, seq[:, p]] += 1
    edges = np.empty((N, n - 1, 2), dtype=np.int8)
    for p in range(m):
        leaf = np.argmax(deg == 1, axis=1)
        edges[:, p, 0] = leaf
        edges[:, p, 1] = seq[:, p]
        deg[rows, leaf] = 0
        deg[rows, seq[:, p]] -= 1
    last = np.argsort(deg != 1, axis=1, kind="stable")[:, :2]
    edges[:, m, 0] = last[:, 0]
    edges[:, m, 1] = last[:, 1]
    edges.setflags(write=False)
    return edges


def brute_force_weights(x, V) -> np.ndarray:
    """Weight of every labeled spanning tree of ``K_x(V)`` (Pruefer order)."""
    x, V = _prep(x, V)
    n = sum(x)
    if n > MAX_BRUTE_FORCE:
        raise PreconditionError(f"brute force is limited to n_x <= {MAX_BRUTE_FORCE}, got {n}")
    tl = vertex_labels(x)[prufer_edges(n)]
    return np.prod(V.v[tl[..., 0], tl[..., 1]], axis=1)


@lru_cache(maxsize=4096)
def tree_signatures(x: tuple[int, ...]):
    """Group the labeled spanning trees of ``K_x`` by how many edges join each type pair.

    Returns ``(pairs, counts, multiplicity)``: ``pairs`` lists the type
    pairs ``(a, b)`` with ``a <= b``, row ``u`` of ``counts`` is one edge
    signature and ``multiplicity[u]`` the number of trees sharing it.  A
    tree's weight only depends on its signature.
    """
    k = len(x)
    n = sum(x)
    pairs = np.array([(a, b) for a in range(k) for b in range(a, k)], dtype=np.int64).reshape(-1, 2)
    code = np.full((k, k), -1, dtype=np.int64)
    for p, (a, b) in enumerate(pairs):
        code[a, b] = code[b, a] = p
    edges = prufer_edges(n)
    if n == 1:
        counts = np.zeros((1, len(pairs)), dtype=np.int64)
        return pairs, counts, np.ones(1, dtype=np.int64)
    tl = vertex_labels(x)[edges]
    pc = code[tl[..., 0], tl[..., 1]]
    # a signature has entries below n, so it packs into one base-n integer
    base = np.int64(n) ** np.arange(len(pairs), dtype=np.int64)
    keys, mult = np.unique(base[pc].sum(axis=1), return_counts=True)
    sig = (keys[:, None] // base[None, :]) % n
    for a in (pairs, sig, mult):
        a.setflags(write=False)
    return pairs, sig, mult


def enumerator_brute_force(x, V) -> TreeEnumeratorReport:
    """Sum of edge-weight products over all ``n_x^(n_x - 2)`` labeled spanning trees."""
    x, V = _prep(x, V)
    n = sum(x)
    if n > MAX_BRUTE_FORCE:
        raise PreconditionError(f"brute force is limited to n_x <= {MAX_BRUTE_FORCE}, got {n}")
    pairs, sig, mult = tree_signatures(x)
    pv = V.v[pairs[:, 0], pairs[:, 1]]
    if V.is_integer:
        pvi = [int(v) for v in pv]
        total = 0
        for row, m in zip(sig.tolist(), mult.tolist()):
            total += m * math.prod(v**c for v, c in zip(pvi, row))
        return TreeEnumeratorReport.from_exact(total, TreeMethod.BRUTE_FORCE)
    w = np.prod(pv[None, :] ** sig, axis=1)
    total = float(np.dot(mult, w))
    return TreeEnumeratorReport(math.log(total) if total > 0 else -math.inf, TreeMethod.BRUTE_FORCE)


# ------------------------------------------------------------------ wrappers


def enumerator(x, V, method: TreeMethod | str = TreeMethod.CLOSED_FORM) -> TreeEnumeratorReport:
    method = TreeMethod(method)
    if method is TreeMethod.COFACTOR:
        return enumerator_cofactor(x, V)
    if method is TreeMethod.RANK_ONE:
        return enumerator_rank_one(x, V)
    if method is TreeMethod.BRUTE_FORCE:
        return enumerator_brute_force(x, V)
    return enumerator_closed(x, V)


def all_methods(x, V) -> dict[TreeMethod, TreeEnumeratorReport]:
    """Every applicable method for ``x`` (brute force only when ``n_x`` is small)."""
    x, V = _prep(x, V)
    out = {
        TreeMethod.COFACTOR: enumerator_cofactor(x, V),
        TreeMethod.RANK_ONE: enumerator_rank_one(x, V),
        TreeMethod.CLOSED_FORM: enumerator_closed(x, V),
    }
    if sum(x) <= MAX_BRUTE_FORCE:
        out[TreeMethod.BRUTE_FORCE] = enumerator_brute_force(x, V)
    return out


def log_tx(x, V) -> float:
    """``log T_x`` by the closed form, float arithmetic."""
    return enumerator_closed(x, V, exact=False).value_log


def log_s_coefficient(x, V) -> float:
    """``log S_x = log T_x - log x!``."""
    x, V = _prep(x, V)
    return log_tx(x, V) - log_factorial(x)


def s_coefficient(x, V) -> float:
    return math.exp(log_s_coefficient(x, V))


def tx_table(V, n_max: int, exact: bool = False) -> dict[tuple[int, ...], float | int]:
    """``T_x`` for every composition with ``n_x <= n_max``.

    Values are ints on the exact path and floats (possibly ``inf``) otherwise.
    """
    V = WeightMatrix.of(V)
    out: dict[tuple[int, ...], float | int] = {}
    for n in range(1, n_max + 1):
        for x in shell(V.k, n):
            if exact:
                out[x] = enumerator_closed(x, V, exact=True).exact
            else:
                lv = enumerator_closed(x, V, exact=False).value_log
                out[x] = math.exp(lv) if lv < LOG_REPRESENTABLE else math.inf
    return out


# ---------------------------------------------------------------- identities


def rec_tx_sides(x, V, T: dict | None = None):
    """Both sides of the splitting recursion ``2 (n_x - 1) T_x = sum C(x; y) <y|V|z> T_y T_z``.

    ``T`` maps compositions to enumerator values (ints give exact sides).
    """
    x, V = _prep(x, V)
    if T is None:
        T = tx_table(V, sum(x), exact=V.is_integer)
    lhs = 2 * (sum(x) - 1) * T[x]
    rhs = 0
    for y, z in splits(x):
        yVz = float(np.asarray(y, dtype=float) @ V.v @ np.asarray(z, dtype=float))
        if V.is_integer and isinstance(T[y], int):
            yVz = int(round(yVz))
        rhs += multinomial(x, y) * yVz * T[y] * T[z]
    return lhs, rhs


def _tau_value(x, V) -> float:
    return math.exp(log_partition_tau(x, V))


def abel_tau_literal_sides(x, V):
    """Sides of the tau recursion written with ``tau`` in place of ``T``.

    ``tau_x = 1/(2(n_x - 1)) sum x!/(y! z!) <y|V|z> tau_y tau_z``.  This
    form does not hold in general (for ``k = 1`` it reads ``1 = n 2^(n-3)``).
    """
    x, V = _prep(x, V)
    n = sum(x)
    lhs = _tau_value(x, V)
    rhs = 0.0
    for y, z in splits(x):
        yVz = float(np.asarray(y, dtype=float) @ V.v @ np.asarray(z, dtype=float))
        rhs += multinomial(x, y) * yVz * _tau_value(y, V) * _tau_value(z, V)
    return lhs, rhs / (2 * (n - 1))


def _closed_factor(x, V) -> float:
    # (V x)^(x - 1) / x^1 on the support, i.e. T_x / tau_x
    xv = np.asarray(x, dtype=float)
    Vx = V.v @ xv
    sup = support(x)
    if any(x[i] > 1 and Vx[i] <= 0 for i in sup):
        return 0.0
    return math.exp(
        sum((x[i] - 1) * math.log(Vx[i]) for i in sup if x[i] > 1) - sum(math.log(x[i]) for i in sup)
    )


def abel_tau_sides(x, V):
    """The tau recursion obtained by writing ``T = tau (Vx)^(x-1) / x^1`` in the splitting recursion.

    ``2 (n_x - 1) tau_x c_x = sum x!/(y! z!) <y|V|z> tau_y c_y tau_z c_z``
    with ``c_x = (Vx)^(x-1) / x^1``.
    """
    x, V = _prep(x, V)
    lhs = 2 * (sum(x) - 1) * _tau_value(x, V) * _closed_factor(x, V)
    rhs = 0.0
    for y, z in splits(x):
        yVz = float(np.asarray(y, dtype=float) @ V.v @ np.asarray(z, dtype=float))
        rhs += (
            multinomial(x, y) * yVz
            * _tau_value(y, V) * _closed_factor(y, V)
            * _tau_value(z, V) * _closed_factor(z, V)
        )
    return lhs, rhs


def abramson_sides(k: int, n: int) -> tuple[Fraction, int]:
    """``sum_{|x| = n} n!/x! prod_i (n - x_i)^(x_i - 1)`` against ``k (k-1)^(n-1) n^(n-k)``, exactly."""
    lhs = Fraction(0)
    nf = math.factorial(n)
    for x in shell(k, n):
        term = Fraction(nf, factorial(x))
        for xi in x:
            term *= Fraction(n - xi) ** (xi - 1)
        lhs += term
    rhs = Fraction(k * (k - 1) ** (n - 1)) * Fraction(n) ** (n - k)
    return lhs, rhs


def multipartite_tx(x) -> int:
    """``T_x`` for ``V = |1><1| - I``: ``n^(s-2) prod_i (n - x_i)^(x_i - 1)`` over the ``s`` support types."""
    x = as_composition(x)
    n = sum(x)
    sup = support(x)
    val = Fraction(n) ** (len(sup) - 2)
    for i in sup:
        val *= Fraction(n - x[i]) ** (x[i] - 1)
    if val.denominator != 1:
        raise ValidationError(f"multipartite count is not an integer: {val}")
    return int(val)


def rank_one_weight_matrix(w) -> np.ndarray:
    """``V = |w><w| - D[w^2]``."""
    w = np.asarray(w, dtype=float)
    return np.outer(w, w) - np.diag(w**2)


def weighted_multipartite_tx(x, w) -> float:
    """``T_x = w^1 <w|x>^(s-2) (Vx)^(x-1)`` for ``V = |w><w| - D[w^2]``, on the support of ``x``."""
    x = as_composition(x, len(w))
    w = np.asarray(w, dtype=float)
    sup = support(x)
    V = rank_one_weight_matrix(w)
    Vx = V @ np.asarray(x, dtype=float)
    wx = float(np.dot(w, x))
    if len(sup) == 1 and x[sup[0]] > 1:
        return 0.0
    log_val = sum(math.log(w[i]) for i in sup) + (len(sup) - 2) * math.log(wx)
    log_val += sum((x[i] - 1) * math.log(Vx[i]) for i in sup if x[i] > 1)
    return math.exp(log_val)


def relative_error(a: float, b: float) -> float:
    """``|a - b| / max(|a|, |b|)``, zero when both vanish."""
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def compositions_upto(k: int, n_max: int):
    return itertools.chain.from_iterable(shell(k, n) for n in range(1, n_max + 1))
