"""Modified Smoluchowski (Flory) kinetics with the vector-multiplicative kernel.

Closed-form cluster densities ``zeta_x(t)``, a truncated direct-ODE
oracle, total mass through the minimal inverse, second moments ``A(t)``
and the gelation time ``T_gel = 1 / rho(V D[alpha])``.

The modified system couples ``x`` only to compositions ``y, z`` with
``y + z = x``, so truncating it at ``n_x <= n_max`` is exact for the kept
coordinates.  The classical system has a loss term summing over all
clusters; truncating it replaces that sum by a partial sum and is only
an approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .compositions import Composition, as_composition, graded, log_factorial, splits
from .errors import ConvergenceError, DomainError, ValidationError
from .inversion import minimal_curve
from .linalg import TOL_REGION, WeightMatrix, as_mass_vector, rho_scaled
from .trees import log_tx

ODE_TOL = 1e-9
ODE_ATOL = 1e-14


@dataclass(frozen=True)
class KineticsConfig:
    alpha: np.ndarray
    V: WeightMatrix
    n_max: int
    t_grid: np.ndarray
    ode_tol: float = ODE_TOL

    def __post_init__(self):
        V = WeightMatrix.of(self.V).require_irreducible()
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "alpha", as_mass_vector(self.alpha, V.k, "alpha"))
        t = np.atleast_1d(np.asarray(self.t_grid, dtype=float))
        if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
            raise ValidationError("t_grid must be a strictly increasing list of nonnegative times")
        object.__setattr__(self, "t_grid", t)
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError(f"n_max must be a positive integer, got {self.n_max!r}")
        if not self.ode_tol > 0:
            raise ValidationError("ode_tol must be positive")


@dataclass(frozen=True)
class Trajectory:
    """``values[i, j]`` is observable ``keys[j]`` at time ``t[i]``."""

    t: np.ndarray
    keys: list
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def series(self, key) -> np.ndarray:
        return self.values[:, self.keys.index(key)]


@dataclass(frozen=True)
class MomentMatrix:
    A: np.ndarray
    t: float


def _prep(alpha, V):
    V = WeightMatrix.of(V).require_irreducible()
    return as_mass_vector(alpha, V.k, "alpha"), V


# ---------------------------------------------------------------- gelation


def gelation_time(alpha, V) -> float:
    """``T_gel = 1 / rho(V D[alpha])``."""
    alpha, V = _prep(alpha, V)
    return 1.0 / rho_scaled(V.v, alpha)


def critical_time(alpha, V) -> float:
    """Blow-up time of the second moments; it coincides with the gelation time."""
    return gelation_time(alpha, V)


# ---------------------------------------------------------------- closed form


def log_zeta_coefficient(x, alpha, V) -> tuple[float, float]:
    """``(log(alpha^x T_x / x!), <x|V|alpha>)`` so that ``zeta_x(t) = e^c t^(n-1) e^(-r t)``."""
    alpha, V = _prep(alpha, V)
    x = as_composition(x, V.k)
    lt = log_tx(x, V)
    if lt == -math.inf:
        return -math.inf, float(np.dot(x, V.v @ alpha))
    c = float(np.dot(x, np.log(alpha))) + lt - log_factorial(x)
    return c, float(np.dot(x, V.v @ alpha))


def log_zeta_closed(x, alpha, V, t):
    """``log zeta_x(t)``; ``-inf`` marks an exact zero."""
    c, r = log_zeta_coefficient(x, alpha, V)
    n = sum(as_composition(x))
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("time must be nonnegative")
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    out = c - r * t + (n - 1) * logt if n > 1 else c - r * t
    return out if np.ndim(out) else float(out)


def zeta_closed(x, alpha, V, t):
    """``zeta_x(t) = alpha^x T_x e^(-<x|V|alpha> t) t^(n_x - 1) / x!``."""
    return np.exp(log_zeta_closed(x, alpha, V, t))


class _Shell:
    """Compositions with ``n_x <= n_max`` and the coefficient data of their closed form."""

    def __init__(self, alpha, V: WeightMatrix, n_max: int):
        self.keys: list[Composition] = graded(V.k, n_max)
        self.index = {x: i for i, x in enumerate(self.keys)}
        self.X = np.array(self.keys, dtype=float).reshape(-1, V.k)
        self.n = self.X.sum(axis=1)
        self.rate = self.X @ (V.v @ alpha)
        self.logc = np.array([log_zeta_coefficient(x, alpha, V)[0] for x in self.keys])

    def closed(self, t) -> np.ndarray:
        """``zeta`` for every key at each time; shape ``(len(t), len(keys))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            logt = np.log(t)[:, None]
            powr = np.where(self.n[None, :] > 1, (self.n[None, :] - 1) * logt, 0.0)
            lz = self.logc[None, :] - self.rate[None, :] * t[:, None] + powr
        return np.exp(lz)


def zeta_table(alpha, V, n_max: int, t) -> Trajectory:
    """Closed-form ``zeta_x(t)`` for every ``x`` with ``n_x <= n_max`` on the given times."""
    alpha, V = _prep(alpha, V)
    sh = _Shell(alpha, V, n_max)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return Trajectory(t, list(sh.keys), sh.closed(t), {"source": "closed", "n_max": n_max})


# ---------------------------------------------------------------- ODE oracle


def _pair_index(keys, index, V: WeightMatrix):
    """Ordered pairs ``(y, z)`` with ``y + z = x`` inside the truncation, and their rates."""
    iy, iz, ix, w = [], [], [], []
    for j, x in enumerate(keys):
        for y, z in splits(x):
            iy.append(index[y])
            iz.append(index[z])
            ix.append(j)
            w.append(float(np.asarray(y, dtype=float) @ V.v @ np.asarray(z, dtype=float)))
    return np.array(iy, dtype=np.intp), np.array(iz, dtype=np.intp), np.array(ix, dtype=np.intp), np.array(w)


def _initial(keys, alpha) -> np.ndarray:
    z0 = np.zeros(len(keys))
    for j, x in enumerate(keys):
        if sum(x) == 1:
            z0[j] = alpha[x.index(1)]
    return z0


def _integrate(rhs, z0, t_grid, tol: float):
    t_grid = np.asarray(t_grid, dtype=float)
    t_end = float(t_grid[-1])
    if t_end == 0:
        return np.tile(z0, (len(t_grid), 1))
    sol = solve_ivp(
        rhs, (0.0, t_end), z0, method="RK45", t_eval=t_grid, rtol=tol, atol=ODE_ATOL * max(1.0, z0.max()),
    )
    if not sol.success:
        raise ConvergenceError(f"ODE integration failed: {sol.message}", last_iterate=sol.y[:, -1])
    return sol.y.T


def integrate_truncated(cfg: KineticsConfig) -> Trajectory:
    """Integrate the modified system for all ``n_x <= n_max`` from monodisperse initial data."""
    alpha, V = cfg.alpha, cfg.V
    keys = graded(V.k, cfg.n_max)
    index = {x: i for i, x in enumerate(keys)}
    iy, iz, ix, w = _pair_index(keys, index, V)
    X = np.array(keys, dtype=float).reshape(-1, V.k)
    rate = X @ (V.v @ alpha)
    m = len(keys)

    def rhs(_t, z):
        gain = 0.5 * np.bincount(ix, weights=w * z[iy] * z[iz], minlength=m)
        return gain - rate * z

    values = _integrate(rhs, _initial(keys, alpha), cfg.t_grid, cfg.ode_tol)
    meta = {"source": "modified-ode", "n_max": cfg.n_max, "ode_tol": cfg.ode_tol}
    return Trajectory(cfg.t_grid.copy(), list(keys), values, meta)


def integrate_truncated_classical(cfg: KineticsConfig) -> Trajectory:
    """Classical system with the loss sum ``sum_y zeta_y <x|V|y>`` cut at ``n_y <= n_max``."""
    alpha, V = cfg.alpha, cfg.V
    keys = graded(V.k, cfg.n_max)
    index = {x: i for i, x in enumerate(keys)}
    iy, iz, ix, w = _pair_index(keys, index, V)
    X = np.array(keys, dtype=float).reshape(-1, V.k)
    XV = X @ V.v
    m = len(keys)

    def rhs(_t, z):
        gain = 0.5 * np.bincount(ix, weights=w * z[iy] * z[iz], minlength=m)
        return gain - z * (XV @ (X.T @ z))

    values = _integrate(rhs, _initial(keys, alpha), cfg.t_grid, cfg.ode_tol)
    meta = {"source": "classical-ode-partial-sum", "n_max": cfg.n_max, "ode_tol": cfg.ode_tol}
    return Trajectory(cfg.t_grid.copy(), list(keys), values, meta)


@dataclass(frozen=True)
class WindowReport:
    t: np.ndarray
    deviation: np.ndarray  # max over x of |classical - modified| at each time
    n_max: int

    @property
    def sup_deviation(self) -> float:
        return float(self.deviation.max())


def smoluchowski_vs_flory_window(cfg: KineticsConfig) -> WindowReport:
    """Deviation of the truncated classical system from the exact modified solution.

    Before gelation the two infinite systems coincide, so the deviation
    measures truncation error and should shrink as ``n_max`` grows.
    """
    tg = gelation_time(cfg.alpha, cfg.V)
    if cfg.t_grid[-1] > tg * (1 + TOL_REGION):
        raise DomainError(f"the comparison window ends at T_gel = {tg!r}")
    classical = integrate_truncated_classical(cfg)
    sh = _Shell(cfg.alpha, cfg.V, cfg.n_max)
    exact = sh.closed(cfg.t_grid)
    dev = np.max(np.abs(classical.values - exact), axis=1)
    return WindowReport(cfg.t_grid.copy(), dev, cfg.n_max)


# ---------------------------------------------------------------- residuals


def flory_residuals(alpha, V, n_max: int, t: float) -> tuple[np.ndarray, np.ndarray, list]:
    """Plug the closed form into the modified system at time ``t > 0``.

    Returns ``(residual, scale, keys)`` per composition, where ``scale`` is
    the largest magnitude among the derivative, loss and gain terms.
    """
    alpha, V = _prep(alpha, V)
    if not t > 0:
        raise ValidationError("residual check needs t > 0")
    sh = _Shell(alpha, V, n_max)
    iy, iz, ix, w = _pair_index(sh.keys, sh.index, V)
    z = sh.closed(t)[0]
    dz = z * ((sh.n - 1) / t - sh.rate)
    loss = sh.rate * z
    gain = 0.5 * np.bincount(ix, weights=w * z[iy] * z[iz], minlength=len(sh.keys))
    resid = np.abs(dz - (gain - loss))
    scale = np.maximum.reduce([np.abs(dz), loss, gain])
    return resid, scale, list(sh.keys)


# ---------------------------------------------------------------- moments


def total_mass(alpha, V, t: float) -> np.ndarray:
    """``sum_x x zeta_x(t) = y(t) / t``; equal to ``alpha`` up to the gelation time."""
    alpha, V = _prep(alpha, V)
    if not t > 0:
        raise ValidationError("total_mass needs t > 0")
    return minimal_curve(alpha, V, t) / t


def second_moments(alpha, V, t: float, tol: float = TOL_REGION) -> MomentMatrix:
    """``A(t) = D[alpha] (I - t V D[alpha])^(-1)`` for ``0 <= t < T_gel``."""
    alpha, V = _prep(alpha, V)
    tg = gelation_time(alpha, V)
    if t < 0:
        raise ValidationError("time must be nonnegative")
    if t >= tg * (1.0 - tol):
        raise DomainError(f"second moments diverge at t_c = T_gel = {tg!r}; got t = {t!r}")
    k = V.k
    M = np.eye(k) - t * V.v * alpha[None, :]
    A = alpha[:, None] * np.linalg.inv(M)
    return MomentMatrix(0.5 * (A + A.T), float(t))


def partial_sums(alpha, V, n_max: int, t: float) -> dict:
    """Cumulative sums over ``n_x <= n`` for ``n = 1..n_max`` at time ``t``.

    Keys: ``clusters`` (number density), ``mass`` (k-vectors) and
    ``second`` (k x k matrices).
    """
    alpha, V = _prep(alpha, V)
    sh = _Shell(alpha, V, n_max)
    z = sh.closed(t)[0] if t > 0 else _initial(sh.keys, alpha)
    clusters = np.zeros(n_max)
    mass = np.zeros((n_max, V.k))
    second = np.zeros((n_max, V.k, V.k))
    for n in range(1, n_max + 1):
        sel = sh.n == n
        zs, Xs = z[sel], sh.X[sel]
        clusters[n - 1] = zs.sum()
        mass[n - 1] = zs @ Xs
        second[n - 1] = (Xs * zs[:, None]).T @ Xs
    return {
        "clusters": np.cumsum(clusters),
        "mass": np.cumsum(mass, axis=0),
        "second": np.cumsum(second, axis=0),
    }


def va_derivative_error(alpha, V, t_grid, h: float = 1e-4) -> float:
    """Max abs gap between a 5-point derivative of ``V A(t)`` and ``(V A(t))^2``."""
    alpha, V = _prep(alpha, V)
    worst = 0.0

    def VA(s):
        return V.v @ second_moments(alpha, V, s).A

    for t in np.atleast_1d(t_grid):
        d = (-VA(t + 2 * h) + 8 * VA(t + h) - 8 * VA(t - h) + VA(t - 2 * h)) / (12 * h)
        worst = max(worst, float(np.max(np.abs(d - VA(t) @ VA(t)))))
    return worst
