"""Property suites behind ``vmcoal validate``.

Every suite returns a list of :class:`Check` records holding the measured
value, the threshold and the verdict.  Randomness (test matrices,
simulation streams) is derived from a single seed, so reruns produce
identical records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .compositions import graded
from .inversion import (
    inversion_residual,
    invert_minimal,
    minimal_curve,
    ode_flow_invert,
)
from .kinetics import (
    KineticsConfig,
    flory_residuals,
    gelation_time,
    integrate_truncated,
    partial_sums,
    second_moments,
    total_mass,
    va_derivative_error,
    zeta_table,
)
from .linalg import is_irreducible, rho_scaled
from .mst import mst_monte_carlo, mst_series
from .simulator import SimConfig, ensemble, ensemble_density
from . import trees as tr

DEFAULT_SEED = 1
SUITES = ("inversion", "trees", "kinetics", "simulator", "mst")


@dataclass(frozen=True)
class Check:
    suite: str
    criterion: str
    measured: float
    threshold: float
    passed: bool
    relation: str = "<="

    def row(self):
        return (self.suite, self.criterion, float(self.measured), self.relation, float(self.threshold), bool(self.passed))


CSV_HEADER = ("suite", "criterion", "measured", "relation", "threshold", "pass")


def _check(suite, name, measured, threshold, relation="<="):
    m = float(measured)
    if relation == "<=":
        ok = m <= threshold
    elif relation == "<":
        ok = m < threshold
    elif relation == ">=":
        ok = m >= threshold
    elif relation == ">":
        ok = m > threshold
    elif relation == "==":
        ok = m == threshold
    else:
        raise ValueError(relation)
    return Check(suite, name, m, float(threshold), bool(ok and math.isfinite(m)), relation)


# ---------------------------------------------------------------- test families


def random_weight_matrix(rng: np.random.Generator, k: int, zero_prob: float = 0.25, low: float = 0.2, high: float = 2.0) -> np.ndarray:
    """Symmetric irreducible matrix with entries in ``[low, high)``, some set to zero."""
    while True:
        A = rng.uniform(low, high, (k, k))
        A[rng.random((k, k)) < zero_prob] = 0.0
        A = np.triu(A) + np.triu(A, 1).T
        if is_irreducible(A):
            return A


def random_integer_weight_matrix(rng: np.random.Generator, k: int, high: int = 4) -> np.ndarray:
    """Symmetric irreducible matrix with integer entries in ``[0, high)``."""
    while True:
        A = rng.integers(0, high, (k, k)).astype(float)
        A = np.triu(A) + np.triu(A, 1).T
        if is_irreducible(A):
            return A


def scalar_oracle(z: float) -> float:
    """Smaller root of ``y e^{-y} = z e^{-z}`` for ``z > 1``, by bracketing on ``(0, 1)``."""
    u = z * math.exp(-z)
    return brentq(lambda y: y * math.exp(-y) - u, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


BIPARTITE = np.array([[0.0, 1.0], [1.0, 0.0]])
COMPLETE3 = np.ones((3, 3)) - np.eye(3)


# ---------------------------------------------------------------- inversion


def inversion_suite(seed: int = DEFAULT_SEED) -> list[Check]:
    S = "inversion"
    rng = np.random.default_rng([seed, 3])
    out = []

    round_trip = 0.0
    forward = 0.0
    for i in range(100):
        k = int(rng.integers(1, 5))
        V = random_weight_matrix(rng, k)
        z = rng.uniform(0.1, 1.0, k)
        target = 1.0 if i % 10 == 0 else rng.uniform(0.05, 1.0)
        z = z * target / rho_scaled(V, z)
        res = invert_minimal(z, V)
        round_trip = max(round_trip, float(np.max(np.abs(res.y - z))))
        forward = max(forward, inversion_residual(res.y, z, V))
    out.append(_check(S, "round trip on closed region |y - z|", round_trip, 1e-8))

    min_gap = np.inf
    rho_excess = -np.inf
    agree = 0.0
    for i in range(50):
        k = int(rng.integers(1, 5))
        V = random_weight_matrix(rng, k)
        z = rng.uniform(0.1, 1.0, k)
        target = rng.uniform(1.0005, 1.02) if i % 5 == 0 else rng.uniform(1.02, 3.0)
        z = z * target / rho_scaled(V, z)
        res = invert_minimal(z, V)
        forward = max(forward, res.residual)
        min_gap = min(min_gap, float(np.min(1.0 - res.y / z)))
        rho_excess = max(rho_excess, res.rho_y - 1.0)
        fp = invert_minimal(z, V, method="fixed_point")
        ode = ode_flow_invert(z, V)
        agree = max(agree, float(np.max(np.abs(fp.y - ode.y))))
    out.append(_check(S, "forward consistency |psi(y) - psi(z)|", forward, 1e-10))
    out.append(_check(S, "strict minimality min(1 - y/z) on exterior", min_gap, 0.0, ">"))
    out.append(_check(S, "rho(V D[y]) - 1 on exterior", rho_excess, 1e-10))
    out.append(_check(S, "fixed point vs ODE flow |y_fp - y_ode|", agree, 1e-7))

    y2 = invert_minimal([2.0], [[1.0]]).y[0]
    out.append(_check(S, "scalar y(2) vs bracketing oracle", abs(y2 - scalar_oracle(2.0)), 1e-6))
    out.append(_check(S, "scalar y(2) vs 0.4063757", abs(y2 - 0.4063757), 1e-6))

    for label, alpha, V in (("1-D", [1.0], [[1.0]]), ("2-D symmetric", [1.0, 1.0], BIPARTITE)):
        tg = gelation_time(alpha, V)
        ratios = []
        for f in (2, 4, 8, 16):
            t = f * tg
            ratios.append(float(np.max(minimal_curve(alpha, V, t) / (np.asarray(alpha) * t))))
        steps = float(np.max(np.diff(ratios)))
        out.append(_check(S, f"{label} y(t)/(alpha t) strictly decreasing (max step)", steps, 0.0, "<"))
        out.append(_check(S, f"{label} y(t)/(alpha t) at 16 T_gel", ratios[-1], 1e-3, "<"))
    return out


# ---------------------------------------------------------------- trees


def _max_rel(values) -> float:
    vals = list(values)
    return max(tr.relative_error(vals[0], v) for v in vals)


def trees_exactness_checks(seed: int = DEFAULT_SEED) -> list[Check]:
    S = "trees"
    rng = np.random.default_rng([seed, 1])
    out = []
    worst_real = 0.0
    for k in range(1, 5):
        for _ in range(5):
            V = random_weight_matrix(rng, k)
            for x in tr.compositions_upto(k, 8):
                worst_real = max(worst_real, _max_rel(r.value for r in tr.all_methods(x, V).values()))
    out.append(_check(S, "real V: cofactor = rank-one = closed = brute force (rel)", worst_real, 1e-9))

    mismatches = 0
    for k in range(1, 5):
        for _ in range(5):
            V = random_integer_weight_matrix(rng, k)
            for x in tr.compositions_upto(k, 8):
                vals = {r.exact for r in tr.all_methods(x, V).values()}
                mismatches += len(vals) != 1 or None in vals
    out.append(_check(S, "integer V: exact equality of all four methods (mismatches)", mismatches, 0, "=="))

    bad = 0
    for n in range(1, 11):
        V = np.ones((1, 1))
        ref = n ** (n - 2) if n >= 2 else 1
        reps = [tr.enumerator_cofactor((n,), V), tr.enumerator_rank_one((n,), V), tr.enumerator_closed((n,), V)]
        if n <= tr.MAX_BRUTE_FORCE:
            reps.append(tr.enumerator_brute_force((n,), V))
        bad += sum(r.exact != ref for r in reps)
    out.append(_check(S, "T_n = n^(n-2) for n <= 10 (mismatches)", bad, 0, "=="))

    bad = 0
    for n in range(2, 9):
        for x1 in range(1, n):
            x = (x1, n - x1)
            ref = x1 ** (x[1] - 1) * x[1] ** (x1 - 1)
            bad += sum(r.exact != ref for r in tr.all_methods(x, BIPARTITE).values())
    out.append(_check(S, "T_(x1,x2) = x1^(x2-1) x2^(x1-1) (mismatches)", bad, 0, "=="))

    bad = 0
    for x in tr.compositions_upto(3, 7):
        ref = tr.multipartite_tx(x)
        bad += sum(r.exact != ref for r in tr.all_methods(x, COMPLETE3).values())
    out.append(_check(S, "complete 3-partite closed form, n_x <= 7 (mismatches)", bad, 0, "=="))
    return out


def trees_identity_checks(seed: int = DEFAULT_SEED) -> list[Check]:
    S = "trees"
    rng = np.random.default_rng([seed, 2])
    out = []

    worst = 0.0
    exact_bad = 0
    for k in (1, 2, 3):
        V = random_weight_matrix(rng, k, zero_prob=0.0)
        T = tr.tx_table(V, 7)
        for x in tr.compositions_upto(k, 7):
            if sum(x) > 1:
                worst = max(worst, tr.relative_error(*tr.rec_tx_sides(x, V, T)))
        Vi = random_integer_weight_matrix(rng, k)
        Ti = tr.tx_table(Vi, 7, exact=True)
        for x in tr.compositions_upto(k, 7):
            if sum(x) > 1:
                lhs, rhs = tr.rec_tx_sides(x, Vi, Ti)
                exact_bad += lhs != rhs
    out.append(_check(S, "splitting recursion for T_x, n_x <= 7 (rel)", worst, 1e-9))
    out.append(_check(S, "splitting recursion, integer V (exact mismatches)", exact_bad, 0, "=="))

    V3 = random_weight_matrix(rng, 3, zero_prob=0.0)
    literal = 0.0
    substituted = 0.0
    for x in tr.compositions_upto(3, 8):
        if sum(x) > 1:
            literal = max(literal, tr.relative_error(*tr.abel_tau_literal_sides(x, V3)))
            substituted = max(substituted, tr.relative_error(*tr.abel_tau_sides(x, V3)))
    out.append(_check(S, "tau recursion as printed (tau for T), k=3, n_x <= 8 (rel)", literal, 1e-9))
    out.append(_check(S, "tau recursion via T = tau (Vx)^(x-1)/x^1, k=3, n_x <= 8 (rel)", substituted, 1e-9))

    bad = 0
    for k in (2, 3):
        for n in range(1, 11):
            lhs, rhs = tr.abramson_sides(k, n)
            bad += lhs != rhs
    out.append(_check(S, "Abramson multinomial identity, k in {2,3}, n <= 10 (mismatches)", bad, 0, "=="))

    worst = 0.0
    for k in (2, 3, 4):
        for _ in range(3):
            w = rng.uniform(0.3, 2.0, k)
            V = tr.rank_one_weight_matrix(w)
            for x in tr.compositions_upto(k, 6):
                worst = max(worst, tr.relative_error(tr.weighted_multipartite_tx(x, w), tr.enumerator_cofactor(x, V).value))
    out.append(_check(S, "weighted multipartite closed form vs cofactor, n_x <= 6 (rel)", worst, 1e-9))
    return out


def trees_suite(seed: int = DEFAULT_SEED) -> list[Check]:
    return trees_exactness_checks(seed) + trees_identity_checks(seed)


# ---------------------------------------------------------------- kinetics


def kinetics_checks(seed: int = DEFAULT_SEED) -> list[Check]:
    S = "kinetics"
    rng = np.random.default_rng([seed, 4])
    out = []

    ode_err = 0.0
    mse = 0.0
    for k in (1, 2, 3):
        V = random_weight_matrix(rng, k, zero_prob=0.0)
        alpha = rng.uniform(0.5, 2.0, k)
        tg = gelation_time(alpha, V)
        grid = np.linspace(0.0, 2.0 * tg, 41)
        cfg = KineticsConfig(alpha, V, 6, grid)
        ode_err = max(ode_err, float(np.max(np.abs(integrate_truncated(cfg).values - zeta_table(alpha, V, 6, grid).values))))
        for t in grid[1:]:
            r, scale, _ = flory_residuals(alpha, V, 6, t)
            mse = max(mse, float(np.max(r / np.where(scale > 0, scale, 1.0))))
    out.append(_check(S, "closed form vs truncated ODE on [0, 2 T_gel], n_x <= 6", ode_err, 1e-6))
    out.append(_check(S, "modified-system residual of closed form (rel to scale)", mse, 1e-8))

    cons = 0.0
    decrease = -np.inf
    for k, alpha, V in ((1, [1.0], [[1.0]]), (2, [1.0, 2.0], [[0.5, 1.0], [1.0, 0.0]])):
        alpha = np.asarray(alpha)
        tg = gelation_time(alpha, V)
        for f in (0.1, 0.5, 0.9, 1.0):
            cons = max(cons, float(np.max(np.abs(total_mass(alpha, V, f * tg) - alpha))))
        masses = [total_mass(alpha, V, f * tg) for f in (1.05, 1.5, 2.0, 4.0, 8.0)]
        decrease = max(decrease, float(np.max(np.diff(np.array(masses), axis=0))))
        decrease = max(decrease, float(np.max(masses[0] - alpha)))
    out.append(_check(S, "total mass = alpha for t <= T_gel", cons, 1e-8))
    out.append(_check(S, "total mass strictly decreasing after T_gel (max step)", decrease, 0.0, "<"))

    A = second_moments([1.0], [[1.0]], 0.5).A
    series = partial_sums([1.0], [[1.0]], 40, 0.5)["second"][-1]
    out.append(_check(S, "A(0.5 T_gel) closed form vs n_max=40 sum (k=1)", float(np.max(np.abs(A - series))), 1e-3))

    fd = 0.0
    for alpha, V in (([1.0], [[1.0]]), ([1.0, 2.0], [[0.5, 1.0], [1.0, 0.0]]), ([1.0, 0.5, 1.5], COMPLETE3)):
        tg = gelation_time(alpha, V)
        fd = max(fd, va_derivative_error(alpha, V, np.linspace(0.05, 0.9, 18) * tg))
    out.append(_check(S, "d(VA)/dt = (VA)^2 by finite differences", fd, 1e-6))

    blow = float(np.max(np.abs(second_moments([1.0], [[1.0]], 1.0 - 1e-7).A)))
    out.append(_check(S, "|A| at T_gel (1 - 1e-7), scalar case", blow, 1e6, ">="))
    return out


def kinetics_suite(seed: int = DEFAULT_SEED) -> list[Check]:
    return kinetics_checks(seed) + gelation_checks()


def gelation_checks() -> list[Check]:
    S = "kinetics"
    return [
        _check(S, "T_gel scalar alpha=1 V=[1] vs 1", abs(gelation_time([1.0], [[1.0]]) - 1.0), 1e-9),
        _check(S, "T_gel bipartite alpha=(1,1) vs 1", abs(gelation_time([1.0, 1.0], BIPARTITE) - 1.0), 1e-9),
        _check(S, "T_gel bipartite alpha=(4,1) vs 0.5", abs(gelation_time([4.0, 1.0], BIPARTITE) - 0.5), 1e-9),
    ]


# ---------------------------------------------------------------- simulator


SIM_CASES = (
    (1, np.array([1.0]), np.array([[1.0]])),
    (2, np.array([1.0, 1.0]), np.array([[0.6, 1.0], [1.0, 0.4]])),
)


def simulator_suite(seed: int = DEFAULT_SEED, replicas: int = 200, threads: int = 1) -> list[Check]:
    S = "simulator"
    out = []
    for k, alpha, V in SIM_CASES:
        tg = gelation_time(alpha, V)
        times = [0.3 * tg, 0.6 * tg, 0.9 * tg]
        keys = graded(k, 4)
        exact = zeta_table(alpha, V, 4, times).values
        sup = {}
        for n in (500, 2000):
            cfg = SimConfig(alpha, n, V, times[-1], seed=seed, record_times=times)
            trajs = ensemble(cfg, replicas, threads=threads)
            mean, se = ensemble_density(trajs, keys, times)
            err = np.abs(mean - exact)
            sup[n] = float(err.max())
            if n == 2000:
                with np.errstate(divide="ignore", invalid="ignore"):
                    z = np.where(se > 0, err / se, np.where(err > 0, np.inf, 0.0))
                out.append(_check(S, f"k={k} n=2000: max |mean - zeta| / s.e.", float(z.max()), 3.0))
        out.append(_check(S, f"k={k} sup error n=2000 / n=500", sup[2000] / sup[500], 1.0, "<"))
    return out


# ---------------------------------------------------------------- mst


MST_CASES = (
    ("k=1", [1.0], [[1.0]], 1.0),
    ("k=2", [1.0, 1.0], BIPARTITE, 2.0),
    ("k=3", [1.0, 1.0, 1.0], COMPLETE3, 1.5),
)

ZETA3 = 1.2020569031595942


def mst_suite(seed: int = DEFAULT_SEED, replicas: int = 200, n: int = 300, threads: int = 1) -> list[Check]:
    S = "mst"
    out = []
    for label, alpha, V, factor in MST_CASES:
        limit = factor * ZETA3
        rep = mst_series(alpha, V)
        out.append(_check(S, f"{label} series vs {factor} zeta(3) (n_max={rep.n_max})", abs(rep.partial_sum - limit), 1e-3))
        mc = mst_monte_carlo(alpha, V, n, replicas, seed=seed, threads=threads)
        out.append(_check(S, f"{label} Monte Carlo n={n} relative gap to limit", abs(mc.mean - limit) / limit, 0.05))
    return out


# ---------------------------------------------------------------- driver


def run_suite(name: str, seed: int = DEFAULT_SEED, threads: int = 1) -> list[Check]:
    if name == "all":
        out = []
        for s in SUITES:
            out.extend(run_suite(s, seed, threads))
        return out
    if name == "inversion":
        return inversion_suite(seed)
    if name == "trees":
        return trees_suite(seed)
    if name == "kinetics":
        return kinetics_suite(seed)
    if name == "simulator":
        return simulator_suite(seed, threads=threads)
    if name == "mst":
        return mst_suite(seed, threads=threads)
    raise ValueError(f"unknown suite {name!r}")
