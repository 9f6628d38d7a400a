"""Exact stochastic simulation of the finite vector-multiplicative coalescent.

The process starts with ``alpha[n]`` singletons and merges each unordered
pair of clusters ``{a, b}`` at rate ``<x_a|V|x_b> / n``.  Events follow
the Gillespie direct method.  The total rate comes from the bilinear
identity

    sum_{a<b} <x_a|V|x_b> = (<m|V|m> - sum_a <x_a|V|x_a>) / 2

with ``m`` the conserved total mass, so only ``S = sum_a <x_a|V|x_a>``
needs updating per merge.  Pairs are drawn at the particle level: a type
pair ``(i, j)`` with probability proportional to ``m_i v_ij m_j``, then one
particle of each type uniformly, rejecting draws that land in the same
cluster.  When rejections pile up (one giant cluster) an exact
cluster-level draw takes over.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compositions import Composition, as_composition, format_composition
from .errors import DomainError, InternalConsistencyError, ValidationError
from .linalg import WeightMatrix, as_mass_vector

MAX_REJECTIONS = 50
RATE_TOL = 1e-9


def make_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, replica)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(replica),))))


def alpha_n(alpha, n: int) -> np.ndarray:
    """Round-half-up of ``alpha * n`` per coordinate."""
    a = np.floor(np.asarray(alpha, dtype=float) * n + 0.5).astype(np.int64)
    if a.sum() < 1:
        raise ValidationError(f"alpha * n rounds to an empty system (n = {n})")
    return a


@dataclass(frozen=True)
class SimConfig:
    alpha: np.ndarray
    n: int
    V: WeightMatrix
    t_max: float
    seed: int = 0
    record_times: tuple = ()

    def __post_init__(self):
        V = WeightMatrix.of(self.V).require_irreducible()
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "alpha", as_mass_vector(self.alpha, V.k, "alpha"))
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"scale n must be a positive integer, got {self.n!r}")
        if not self.t_max >= 0:
            raise ValidationError("t_max must be nonnegative")
        rt = tuple(float(t) for t in self.record_times) or (float(self.t_max),)
        if any(b <= a for a, b in zip(rt, rt[1:])) or rt[0] < 0 or rt[-1] > self.t_max:
            raise ValidationError("record_times must increase within [0, t_max]")
        object.__setattr__(self, "record_times", rt)
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    @property
    def initial_counts(self) -> np.ndarray:
        return alpha_n(self.alpha, self.n)


@dataclass
class ClusterState:
    """Multiset of cluster compositions with the conserved type mass."""

    counts: dict
    type_mass_invariant: np.ndarray

    @classmethod
    def singletons(cls, type_counts) -> "ClusterState":
        tc = np.asarray(type_counts, dtype=np.int64)
        k = len(tc)
        counts = {}
        for i, c in enumerate(tc):
            if c > 0:
                counts[tuple(1 if j == i else 0 for j in range(k))] = int(c)
        return cls(counts, tc.copy())

    @classmethod
    def from_counts(cls, counts: dict) -> "ClusterState":
        clean = {}
        for x, c in counts.items():
            x = as_composition(x)
            if int(c) != c or c < 0:
                raise ValidationError(f"cluster count must be a nonnegative integer: {c!r}")
            if c:
                clean[x] = clean.get(x, 0) + int(c)
        if not clean:
            raise ValidationError("empty cluster state")
        k = len(next(iter(clean)))
        mass = np.zeros(k, dtype=np.int64)
        for x, c in clean.items():
            if len(x) != k:
                raise ValidationError("compositions of different lengths")
            mass += c * np.asarray(x, dtype=np.int64)
        return cls(clean, mass)

    @property
    def k(self) -> int:
        return len(self.type_mass_invariant)

    @property
    def mass(self) -> np.ndarray:
        m = np.zeros(self.k, dtype=np.int64)
        for x, c in self.counts.items():
            m += c * np.asarray(x, dtype=np.int64)
        return m

    @property
    def n_clusters(self) -> int:
        return sum(self.counts.values())

    def clusters(self) -> list[Composition]:
        """One entry per cluster, in canonical (sorted) order."""
        out = []
        for x in sorted(self.counts):
            out.extend([x] * self.counts[x])
        return out

    def check(self):
        if not np.array_equal(self.mass, self.type_mass_invariant):
            raise InternalConsistencyError("cluster state lost mass")

    def copy(self) -> "ClusterState":
        return ClusterState(dict(self.counts), self.type_mass_invariant.copy())


def _self_sum(state: ClusterState, V: np.ndarray) -> float:
    s = 0.0
    for x, c in state.counts.items():
        xv = np.asarray(x, dtype=float)
        s += c * float(xv @ V @ xv)
    return s


def direct_pair_rate(state: ClusterState, V, n: int) -> float:
    """Sum of pairwise merge rates by explicit enumeration over compositions."""
    V = WeightMatrix.of(V).v
    keys = list(state.counts)
    X = np.array(keys, dtype=float).reshape(-1, V.shape[0])
    c = np.array([state.counts[x] for x in keys], dtype=float)
    K = X @ V @ X.T
    cross = 0.5 * (c @ K @ c - np.sum(c * c * np.diag(K)))
    same = np.sum(c * (c - 1) / 2 * np.diag(K))
    return float((cross + same) / n)


def total_rate(state: ClusterState, V, n: int) -> float:
    """``(<m|V|m> - sum_a <x_a|V|x_a>) / (2 n)``."""
    Vm = WeightMatrix.of(V).v
    m = state.mass.astype(float)
    r = (float(m @ Vm @ m) - _self_sum(state, Vm)) / (2 * n)
    if r < 0:
        direct = direct_pair_rate(state, Vm, n)
        if abs(direct - r) > RATE_TOL * max(1.0, float(m @ Vm @ m) / n):
            raise InternalConsistencyError(f"rate identity broke: {r!r} vs {direct!r}")
        return max(direct, 0.0)
    return r


def pair_sampler(state: ClusterState, V, rng: np.random.Generator) -> tuple[Composition, Composition]:
    """Draw an unordered pair of distinct clusters with probability proportional to ``<x_a|V|x_b>``.

    Particles are drawn by type pair ``(i, j)`` with weight ``m_i v_ij m_j``
    and the draw is repeated while both land in the same cluster; after
    ``MAX_REJECTIONS`` attempts the first cluster is drawn with weight
    ``<x_a|V|m - x_a>`` and the second with weight ``<x_a|V|x_b>``.
    """
    V = WeightMatrix.of(V).v
    clusters = state.clusters()
    if len(clusters) < 2:
        raise ValidationError("pair sampling needs at least two clusters")
    X = np.array(clusters, dtype=np.int64)
    m = X.sum(axis=0)
    # particle p of type i belongs to cluster owner[i][p]
    owner = [np.repeat(np.arange(len(clusters)), X[:, i]) for i in range(X.shape[1])]
    W = m[:, None] * V * m[None, :]
    cum = np.cumsum(W.ravel())
    k = X.shape[1]
    for _ in range(MAX_REJECTIONS):
        ij = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), k * k - 1)
        i, j = divmod(ij, k)
        a = owner[i][rng.integers(m[i])]
        b = owner[j][rng.integers(m[j])]
        if a != b:
            return clusters[a], clusters[b]
    Xf = X.astype(float)
    K = Xf @ V @ Xf.T
    np.fill_diagonal(K, 0.0)
    ra = np.cumsum(K.sum(axis=1))
    a = min(int(np.searchsorted(ra, rng.random() * ra[-1], side="right")), len(clusters) - 1)
    rb = np.cumsum(K[a])
    b = min(int(np.searchsorted(rb, rng.random() * rb[-1], side="right")), len(clusters) - 1)
    return clusters[a], clusters[b]


@dataclass
class SimTrajectory:
    """Snapshots of cluster counts at the record times, plus every merge time."""

    times: tuple
    snapshots: list
    n: int
    seed: int
    replica: int
    merge_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def snapshot_at(self, t: float) -> dict:
        """Counts at the last record time not after ``t``."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise DomainError(f"time {t!r} is outside the recorded range [{self.times[0]}, {self.times[-1]}]")
        i = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.snapshots[max(i, 0)]


def empirical_density(traj: SimTrajectory, x, t: float) -> float:
    """``counts(x) / n`` at the last snapshot not after ``t``."""
    snap = traj.snapshot_at(t)
    x = as_composition(x)
    return snap.get(x, 0) / traj.n


class _Uniforms:
    """Block-buffered uniforms from a Generator; the stream is fixed by the seed."""

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.i = 0

    def __call__(self) -> float:
        if self.i == self.block:
            self.buf = self.rng.random(self.block)
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return float(u)


def simulate(cfg: SimConfig, replica: int = 0, initial: ClusterState | None = None) -> SimTrajectory:
    """Run one trajectory to ``t_max`` (or absorption) and snapshot at the record times."""
    V = cfg.V.v
    k = cfg.V.k
    n = int(cfg.n)
    state0 = initial if initial is not None else ClusterState.singletons(cfg.initial_counts)
    state0.check()
    rng = make_rng(cfg.seed, replica)
    unif = _Uniforms(rng)

    # particles are numbered type by type; parent[] is the union-find forest
    m = state0.type_mass_invariant.astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(m)]).astype(np.int64)
    P = int(offsets[-1])
    parent = list(range(P))
    size = [1] * P
    comp: dict[int, tuple] = {}
    # lay out the initial clusters over consecutive particles of each type
    cursor = offsets[:-1].copy()
    for x in sorted(state0.counts):
        for _ in range(state0.counts[x]):
            members = []
            for i, xi in enumerate(x):
                members.extend(range(int(cursor[i]), int(cursor[i]) + xi))
                cursor[i] += xi
            root = members[0]
            for p in members[1:]:
                parent[p] = root
            size[root] = len(members)
            comp[root] = x
    counts = dict(state0.counts)

    mf = m.astype(float)
    mVm = float(mf @ V @ mf)
    S = _self_sum(state0, V)
    W = mf[:, None] * V * mf[None, :]
    cum_i = np.cumsum(W.sum(axis=1))
    cum_i = cum_i / cum_i[-1] if cum_i[-1] > 0 else cum_i
    cum_j = [np.cumsum(W[i]) / W[i].sum() if W[i].sum() > 0 else None for i in range(k)]

    def find(p):
        root = p
        while parent[root] != root:
            root = parent[root]
        while parent[p] != root:
            parent[p], p = root, parent[p]
        return root

    def xVy(a, b):
        return float(np.asarray(a, dtype=float) @ V @ np.asarray(b, dtype=float))

    def exact_pair():
        roots = list(comp)
        X = np.array([comp[r] for r in roots], dtype=float)
        K = X @ V @ X.T
        np.fill_diagonal(K, 0.0)
        ra = np.cumsum(K.sum(axis=1))
        ia = min(int(np.searchsorted(ra, unif() * ra[-1], side="right")), len(roots) - 1)
        rb = np.cumsum(K[ia])
        ib = min(int(np.searchsorted(rb, unif() * rb[-1], side="right")), len(roots) - 1)
        return roots[ia], roots[ib]

    times = cfg.record_times
    snaps: list[dict] = []
    merges: list[float] = []
    t = 0.0
    next_rec = 0
    while next_rec < len(times):
        rate = (mVm - S) / (2 * n)
        if rate <= RATE_TOL * max(1.0, mVm / n) or len(comp) < 2:
            dt = math.inf
        else:
            dt = -math.log(1.0 - unif()) / rate
        while next_rec < len(times) and times[next_rec] < t + dt:
            snaps.append(dict(counts))
            next_rec += 1
        if next_rec == len(times) or dt == math.inf:
            break
        t += dt
        for _ in range(MAX_REJECTIONS):
            i = min(int(np.searchsorted(cum_i, unif(), side="right")), k - 1)
            j = min(int(np.searchsorted(cum_j[i], unif(), side="right")), k - 1)
            a = find(int(offsets[i]) + min(int(unif() * m[i]), int(m[i]) - 1))
            b = find(int(offsets[j]) + min(int(unif() * m[j]), int(m[j]) - 1))
            if a != b:
                break
        else:
            a, b = exact_pair()
        xa, xb = comp.pop(a), comp.pop(b)
        xn = tuple(u + v for u, v in zip(xa, xb))
        S += 2.0 * xVy(xa, xb)
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        comp[a] = xn
        for x in (xa, xb):
            counts[x] -= 1
            if counts[x] == 0:
                del counts[x]
        counts[xn] = counts.get(xn, 0) + 1
        merges.append(t)
    while len(snaps) < len(times):
        snaps.append(dict(counts))

    final = ClusterState(dict(counts), m.copy())
    final.check()
    return SimTrajectory(tuple(times), snaps, n, int(cfg.seed), int(replica), np.array(merges))


def ensemble(cfg: SimConfig, replicas: int, threads: int = 1, start: int = 0) -> list[SimTrajectory]:
    """Independent replicas ``start .. start + replicas - 1``, returned in replica order."""
    if replicas < 1:
        raise ValidationError("need at least one replica")
    ids = range(start, start + replicas)
    if threads <= 1:
        return [simulate(cfg, r) for r in ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: simulate(cfg, r), ids))


def ensemble_density(trajs: list[SimTrajectory], keys, times) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``counts(x) / n`` over replicas.

    Both arrays have shape ``(len(times), len(keys))``.
    """
    keys = [as_composition(x) for x in keys]
    data = np.array(
        [[[empirical_density(tr, x, t) for x in keys] for t in times] for tr in trajs]
    )
    mean = data.mean(axis=0)
    se = data.std(axis=0, ddof=1) / math.sqrt(len(trajs)) if len(trajs) > 1 else np.zeros_like(mean)
    return mean, se


def trajectory_rows(traj: SimTrajectory):
    """CSV rows ``(t, composition, count)`` in time order, compositions sorted."""
    for t, snap in zip(traj.times, traj.snapshots):
        for x in sorted(snap):
            yield t, format_composition(x), snap[x]
