"""Random minimal spanning trees on multipartite graphs.

The host graph ``K_{alpha[n]}`` has ``alpha_i[n]`` vertices of type ``i``.
A type-``i`` and a type-``j`` vertex are joined when ``v_ij > 0`` (same-type
pairs included when ``v_ii > 0``), and the edge gets an independent
Beta(1, v_ij) length with density ``v (1 - x)^(v - 1)``.

As ``n`` grows the mean MST length converges to

    sum_x (n_x - 1)! / x! * alpha^x * T_x * <x|V|alpha>^(-n_x),

which :func:`mst_series` sums shell by shell.  :func:`mst_monte_carlo`
estimates the finite-``n`` mean directly with Kruskal's algorithm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .compositions import as_composition, shell_array
from .errors import PreconditionError, ValidationError
from .kinetics import gelation_time, log_zeta_coefficient, zeta_closed
from .linalg import WeightMatrix, as_mass_vector, rho_scaled
from .simulator import alpha_n, make_rng
from .trees import is_connected, prufer_edges

TAIL_TOL = 1e-6
N_MAX_CAP = 2000


def _prep(alpha, V):
    V = WeightMatrix.of(V).require_irreducible()
    return as_mass_vector(alpha, V.k, "alpha"), V


# ---------------------------------------------------------------- series


@dataclass(frozen=True)
class MstSeriesReport:
    partial_sum: float
    n_max: int
    last_shell: float
    tail_flag: bool
    shells: np.ndarray  # shells[n - 1] is the sum over n_x = n


def mst_term(x, alpha, V) -> float:
    """``(n_x - 1)! / x! * alpha^x * T_x * <x|V|alpha>^(-n_x)``."""
    alpha, V = _prep(alpha, V)
    x = as_composition(x, V.k)
    c, r = log_zeta_coefficient(x, alpha, V)
    n = sum(x)
    if c == -math.inf:
        return 0.0
    return math.exp(c + math.lgamma(n) - n * math.log(r))


def shell_sum(alpha, V, n: int) -> float:
    """Sum of :func:`mst_term` over all compositions with ``n_x = n``, vectorized."""
    alpha, V = _prep(alpha, V)
    return float(np.exp(_shell_log_terms(alpha, V.v, n)).sum())


def _shell_log_terms(alpha: np.ndarray, V: np.ndarray, n: int) -> np.ndarray:
    X = shell_array(V.shape[0], n)
    Xf = X.astype(float)
    Vx = Xf @ V
    r = Xf @ (V @ alpha)
    pos = X > 0
    logx = np.log(np.where(pos, Xf, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        logVx = np.log(Vx)
        powr = np.where(X > 1, (Xf - 1) * logVx, 0.0)
    log_tau = np.full(len(X), -np.inf)
    masks = pos @ (1 << np.arange(V.shape[0]))
    for mask in np.unique(masks):
        rows = np.flatnonzero(masks == mask)
        sup = np.flatnonzero(pos[rows[0]])
        if len(sup) == 1:
            log_tau[rows] = 0.0
            continue
        xs = Xf[np.ix_(rows, sup)]
        W = xs[:, :, None] * V[np.ix_(sup, sup)][None] * xs[:, None, :]
        idx = np.arange(len(sup))
        W[:, idx, idx] = 0.0
        L = -W
        L[:, idx, idx] = W.sum(axis=2)
        sign, ld = np.linalg.slogdet(L[:, 1:, 1:])
        log_tau[rows] = np.where(sign > 0, ld, -np.inf)
    log_T = log_tau - logx.sum(axis=1) + powr.sum(axis=1)
    log_T = np.where(np.isnan(log_T), -np.inf, log_T)
    lf = special.gammaln(Xf + 1).sum(axis=1)
    la = Xf @ np.log(alpha)
    return math.lgamma(n) - lf + la + log_T - n * np.log(r)


def mst_series(alpha, V, n_max: int | None = None, tail_tol: float = TAIL_TOL, n_cap: int = N_MAX_CAP) -> MstSeriesReport:
    """Truncated limit series.

    With ``n_max`` given, sum shells ``1..n_max``.  Otherwise keep adding
    shells until one falls below ``tail_tol`` (or ``n_cap`` is reached).
    """
    alpha, V = _prep(alpha, V)
    if n_max is not None and n_max < 1:
        raise ValidationError("n_max must be at least 1")
    shells: list[float] = []
    limit = n_max if n_max is not None else n_cap
    for n in range(1, limit + 1):
        shells.append(float(np.exp(_shell_log_terms(alpha, V.v, n)).sum()))
        if n_max is None and shells[-1] < tail_tol:
            break
    arr = np.array(shells)
    return MstSeriesReport(
        partial_sum=float(math.fsum(arr)),
        n_max=len(arr),
        last_shell=float(arr[-1]),
        tail_flag=bool(arr[-1] < tail_tol),
        shells=arr,
    )


def mst_term_quadrature(x, alpha, V, span: float = 40.0) -> float:
    """``int_0^inf zeta_x(t) dt``: adaptive quadrature on ``[0, span T_gel]`` plus the exact gamma tail."""
    alpha, V = _prep(alpha, V)
    x = as_composition(x, V.k)
    c, r = log_zeta_coefficient(x, alpha, V)
    if c == -math.inf:
        return 0.0
    n = sum(x)
    T = span * gelation_time(alpha, V)
    # split at the peak of t^(n-1) e^(-r t) so the integrator sees the bump
    peak = min(max((n - 1) / r, 0.0), T)
    pts = [0.0] + ([peak] if 0 < peak < T else []) + [T]
    body = 0.0
    for a, b in zip(pts, pts[1:]):
        val, _ = integrate.quad(lambda t: float(zeta_closed(x, alpha, V, t)), a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        body += val
    tail = math.exp(c + math.lgamma(n) - n * math.log(r)) * special.gammaincc(n, r * T)
    return body + tail


# ---------------------------------------------------------------- edge model


@dataclass(frozen=True)
class EdgeLengthModel:
    """Beta(1, v) lengths: ``P(l <= x) = 1 - (1 - x)^v`` on ``(0, 1)``."""

    v: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValidationError("Beta(1, v) needs v > 0")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.from_uniform(rng.random(size))

    def from_uniform(self, u) -> np.ndarray:
        # inverse transform 1 - (1 - u)^(1/v), written to keep small values accurate
        return -np.expm1(np.log1p(-np.asarray(u)) / self.v)

    def cdf(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return -np.expm1(self.v * np.log1p(-x))


# ---------------------------------------------------------------- Kruskal


class DisjointSet:
    """Union-find with path compression and union by rank."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.components = n

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        self.components -= 1
        return True


def kruskal(n_vertices: int, u, v, w) -> tuple[float, int]:
    """MST (or forest) weight of the graph with edges ``(u[e], v[e], w[e])``.

    Returns ``(total_weight, number_of_components)``.
    """
    w = np.asarray(w, dtype=float)
    order = np.argsort(w, kind="stable")
    ds = DisjointSet(n_vertices)
    total = 0.0
    uu = np.asarray(u)[order].tolist()
    vv = np.asarray(v)[order].tolist()
    ww = w[order].tolist()
    for a, b, c in zip(uu, vv, ww):
        if ds.union(a, b):
            total += c
            if ds.components == 1:
                break
    return total, ds.components


def exhaustive_mst(n_vertices: int, weights) -> float:
    """Minimum spanning-tree weight by trying every labeled tree (``n <= 8``).

    ``weights`` is a symmetric matrix with ``inf`` for missing edges.
    """
    if n_vertices > 8:
        raise PreconditionError("exhaustive MST is limited to 8 vertices")
    W = np.asarray(weights, dtype=float)
    if n_vertices == 1:
        return 0.0
    edges = prufer_edges(n_vertices)
    totals = W[edges[..., 0], edges[..., 1]].sum(axis=1)
    return float(totals.min())


# ---------------------------------------------------------------- host graph


@lru_cache(maxsize=16)
def _triu(n: int):
    a, b = np.triu_indices(n, 1)
    return a.astype(np.int64), b.astype(np.int64)


class HostGraph:
    """Edge blocks of ``K_{alpha[n]}``, one per type pair with ``v_ij > 0``."""

    def __init__(self, counts, V: np.ndarray):
        self.counts = np.asarray(counts, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)])
        self.n_vertices = int(self.offsets[-1])
        self.blocks = []  # (i, j, number_of_edges, v_ij)
        k = len(self.counts)
        for i in range(k):
            for j in range(i, k):
                if V[i, j] <= 0:
                    continue
                ci, cj = int(self.counts[i]), int(self.counts[j])
                m = ci * (ci - 1) // 2 if i == j else ci * cj
                if m > 0:
                    self.blocks.append((i, j, m, float(V[i, j])))
        self.n_edges = sum(b[2] for b in self.blocks)
        self.weight = sum(b[2] * b[3] for b in self.blocks)

    def endpoints(self, block: int, e: np.ndarray):
        i, j, _, _ = self.blocks[block]
        if i == j:
            a, b = _triu(int(self.counts[i]))
            return self.offsets[i] + a[e], self.offsets[i] + b[e]
        cj = self.counts[j]
        return self.offsets[i] + e // cj, self.offsets[j] + e % cj

    def is_connected(self, V) -> bool:
        return self.n_vertices == 1 or is_connected(tuple(int(c) for c in self.counts), V)


def _mst_length(graph: HostGraph, rng: np.random.Generator) -> float:
    lengths = [EdgeLengthModel(v).sample(rng, m) for (_, _, m, v) in graph.blocks]
    N = graph.n_vertices
    if N == 1:
        return 0.0
    # only short edges can be in the MST; start with a cut that keeps
    # roughly 8 N log N edges and widen it if the kept graph is disconnected
    c = min(1.0, 8.0 * N * max(math.log(N), 1.0) / graph.weight)
    while True:
        us, vs, ws = [], [], []
        for bi, ell in enumerate(lengths):
            e = np.flatnonzero(ell < c) if c < 1.0 else np.arange(len(ell))
            a, b = graph.endpoints(bi, e)
            us.append(a)
            vs.append(b)
            ws.append(ell[e])
        total, comps = kruskal(N, np.concatenate(us), np.concatenate(vs), np.concatenate(ws))
        if comps == 1:
            return total
        if c >= 1.0:
            raise ValidationError("host graph is disconnected")
        c = min(1.0, 2.0 * c)


@dataclass(frozen=True)
class MstMonteCarloReport:
    mean: float
    se: float
    lengths: np.ndarray
    n: int
    seed: int


def mst_monte_carlo(alpha, V, n: int, replicas: int, seed: int = 0, threads: int = 1) -> MstMonteCarloReport:
    """Mean MST length over ``replicas`` independent samples of ``K_{alpha[n]}``."""
    alpha, V = _prep(alpha, V)
    if replicas < 1:
        raise ValidationError("need at least one replica")
    graph = HostGraph(alpha_n(alpha, n), V.v)
    if not graph.is_connected(V):
        raise ValidationError("host graph is disconnected")

    def one(r):
        return _mst_length(graph, make_rng(seed, r))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lengths = np.array(list(pool.map(one, range(replicas))))
    else:
        lengths = np.array([one(r) for r in range(replicas)])
    se = float(lengths.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return MstMonteCarloReport(float(lengths.mean()), se, lengths, int(n), int(seed))


# ---------------------------------------------------------------- percolation


def percolation_threshold(alpha, V, n: int) -> float:
    """Predicted giant-component threshold ``p_c = 1 / (n rho(V D[alpha]))``."""
    alpha, V = _prep(alpha, V)
    if n < 1:
        raise ValidationError("n must be positive")
    return 1.0 / (n * rho_scaled(V.v, alpha))


def largest_component_fraction(alpha, V, n: int, p: float, rng: np.random.Generator) -> float:
    """Largest-component share of vertices when each host edge is kept iff its length is below ``p``."""
    alpha, V = _prep(alpha, V)
    graph = HostGraph(alpha_n(alpha, n), V.v)
    rows, cols = [], []
    for bi, (_, _, m, v) in enumerate(graph.blocks):
        keep = np.flatnonzero(EdgeLengthModel(v).sample(rng, m) < p)
        a, b = graph.endpoints(bi, keep)
        rows.append(a)
        cols.append(b)
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    g = coo_matrix((np.ones(len(r)), (r, c)), shape=(graph.n_vertices,) * 2)
    _, labels = connected_components(g, directed=False)
    return float(np.bincount(labels).max() / graph.n_vertices)
