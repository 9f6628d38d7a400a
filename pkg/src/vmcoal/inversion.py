"""Multidimensional Lambert-Euler inversion.

For a symmetric nonnegative irreducible ``V`` the forward map is
``psi(z)_j = z_j exp(-<e_j|V|z>)``.  Given ``z`` we look for the
componentwise-minimal ``y`` with ``psi(y) = psi(z)``; it is the unique
solution with ``rho(V D[y]) <= 1``.

Two independent solvers are provided:

* a monotone fixed point ``y <- u * exp(V y)`` started at ``u = psi(z)``,
  optionally finished by Newton steps, and
* a constructive route: an ``eta`` certificate on the critical surface
  followed by an ODE flow whose ``f_z`` residual decays linearly to zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InternalConsistencyError, PreconditionError
from .linalg import (
    TOL_REGION,
    RegionLabel,
    WeightMatrix,
    as_mass_vector,
    perron_vector,
    rho_scaled,
)

TOL_INV = 1e-10
FP_REL_TOL = 1e-13
FP_MAX_ITER = 100_000
FP_NEWTON_AFTER = 2_000
NEAR_BOUNDARY = 1.02
ODE_STEP = 1e-3
ODE_MAX_STEP = 0.05
ODE_MIN_STEP = 1e-15
ODE_TOL = 1e-11


class Method(str, enum.Enum):
    FIXED_POINT = "FixedPoint"
    ODE_FLOW = "OdeFlow"
    NEWTON_POLISH = "NewtonPolish"


@dataclass(frozen=True)
class InversionResult:
    y: np.ndarray
    region_of_input: RegionLabel
    method: Method
    iterations: int
    residual: float
    rho_y: float = float("nan")
    # max deviation of f_z(x(t)) from (1-t) f_z(x(0)) along the ODE flow
    flow_monitor: float | None = None


@dataclass(frozen=True)
class EtaCertificate:
    eta: np.ndarray
    delta: float
    f_value: np.ndarray
    iterations: int = 0
    eta1_residual: float = float("nan")
    rho_eta: float = float("nan")

    @property
    def eta_tilde(self) -> np.ndarray:
        return (1.0 - self.delta) * self.eta


def _prep(z, V):
    V = WeightMatrix.of(V).require_irreducible()
    z = as_mass_vector(z, V.k, "z")
    return z, V


def psi(z, V) -> np.ndarray:
    """Forward map ``u_j = z_j exp(-<e_j|V|z>)``."""
    V = WeightMatrix.of(V)
    z = as_mass_vector(z, V.k, "z")
    return z * np.exp(-(V.v @ z))


def inversion_residual(y, z, V) -> float:
    """``max_j |y_j exp(-<e_j|V|y>) - z_j exp(-<e_j|V|z>)|``."""
    V = np.asarray(V, dtype=float)
    return float(np.max(np.abs(y * np.exp(-(V @ y)) - z * np.exp(-(V @ z)))))


def jacobian_F(x, z, V) -> np.ndarray:
    """Jacobian of ``F(x; z) = x - D[z] exp(V (x - z))``: ``I - D[z_j e^{<e_j|V|x-z>}] V``."""
    V = WeightMatrix.of(V)
    x = as_mass_vector(x, V.k, "x")
    z = as_mass_vector(z, V.k, "z")
    d = z * np.exp(V.v @ (x - z))
    return np.eye(V.k) - d[:, None] * V.v


def fixed_point_iterates(u, V, max_iter: int = FP_MAX_ITER):
    """Yield the monotone iterates ``y^(m+1) = u * exp(V y^(m))`` from ``y^(0) = u``."""
    V = np.asarray(V, dtype=float)
    y = np.array(u, dtype=float)
    yield y
    for _ in range(max_iter):
        y = u * np.exp(V @ y)
        yield y


def _newton_polish(y, z, V, steps: int = 30):
    """Newton on ``F(x; z)`` from an iterate below the minimal root.

    ``F`` is concave with an M-matrix Jacobian on that side, so the
    iterates increase monotonically toward the minimal solution.
    """
    best = y
    best_res = inversion_residual(y, z, V)
    for _ in range(steps):
        d = z * np.exp(V @ (y - z))
        J = np.eye(len(y)) - d[:, None] * V
        F = y - d
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
        y = y - step
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            break
        res = inversion_residual(y, z, V)
        if res < best_res:
            best, best_res = y, res
        if np.max(np.abs(step) / y) < 1e-15:
            break
    return best, best_res


def _fixed_point(z, V, max_iter: int, newton_after: int):
    """Monotone fixed point with per-iteration monotonicity assertion.

    Returns ``(y, iterations, converged, polished)``.
    """
    u = z * np.exp(-(V @ z))
    y = u.copy()
    for it in range(1, max_iter + 1):
        y_new = u * np.exp(V @ y)
        if np.any(y_new < y * (1 - 1e-14)):
            raise ConvergenceError("fixed-point iteration lost monotonicity", last_iterate=y_new)
        if not np.all(np.isfinite(y_new)):
            raise ConvergenceError("fixed-point iteration diverged", last_iterate=y)
        rel = np.max(np.abs(y_new - y) / y_new)
        y = y_new
        if rel < FP_REL_TOL:
            return y, it, True, False
        if it >= newton_after:
            y_pol, res = _newton_polish(y, z, V)
            if res <= TOL_INV and rho_scaled(V, y_pol) <= 1 + TOL_REGION and np.all(y_pol <= z * (1 + 1e-12)):
                return y_pol, it, True, True
            newton_after = max_iter + 1
    return y, max_iter, False, False


def eta_fixed_point(z, V, max_iter: int = FP_MAX_ITER) -> EtaCertificate:
    """Certificate ``eta`` on the critical surface for an exterior point ``z``.

    Runs ``eta_i = 1 / (1 + <e_i|V D[z]|w>)``, ``w = 1 - eta`` from
    ``w = eps * u`` (``u`` the Perron vector of ``V D[z]``), then picks
    ``delta`` so that ``f_z((1 - delta) eta) > 0`` componentwise.
    """
    z, Vm = _prep(z, V)
    V = Vm.v
    rho = rho_scaled(V, z)
    if rho <= 1.0 + TOL_REGION:
        raise PreconditionError(f"eta certificate needs rho(V D[z]) > 1, got {rho!r}")
    M = V * z[None, :]
    u = perron_vector(M)

    eps = 1e-3 * float(np.min(u))
    for _ in range(60):
        w = eps * u
        eta0 = 1.0 - w
        eta1 = 1.0 / (1.0 + M @ w)
        if np.all(eta1 < eta0):
            break
        eps *= 0.5
    else:
        raise ConvergenceError("could not seed the eta recursion", last_iterate=eta0)

    eta = eta0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta_new = 1.0 / (1.0 + M @ (1.0 - eta))
        if np.any(eta_new > eta * (1 + 1e-14)):
            raise ConvergenceError("eta recursion is not monotone", last_iterate=eta_new)
        change = np.max(np.abs(eta_new - eta))
        eta = eta_new
        if change < 1e-16:
            converged = True
            break
        if it % FP_NEWTON_AFTER == 0:
            # Newton on g(eta) = eta (1 + M (1 - eta)) - 1; eta = 1 is also a
            # root, so a candidate must keep descending and sit on rho = 1
            cand = eta
            for _ in range(30):
                g = cand * (1.0 + M @ (1.0 - cand)) - 1.0
                J = np.diag(1.0 + M @ (1.0 - cand)) - cand[:, None] * M
                try:
                    step = np.linalg.solve(J, g)
                except np.linalg.LinAlgError:
                    break
                trial = cand - step
                if np.any(trial <= 0) or np.any(trial >= 1):
                    break
                cand = trial
                if np.max(np.abs(step)) < 1e-16:
                    break
            resid = np.max(np.abs(M @ (1.0 - cand) - (1.0 / cand - 1.0)))
            if (
                resid < 1e-13
                and np.all(cand <= eta * (1 + 1e-12))
                and abs(rho_scaled(V, z * cand) - 1.0) < 1e-9
            ):
                eta = cand
                converged = True
                break
    if not converged:
        raise ConvergenceError("eta recursion did not converge", last_iterate=eta)
    if np.any(eta <= 0) or np.any(eta >= 1):
        raise ConvergenceError("eta left the open unit cube", last_iterate=eta)

    eta1_res = float(np.max(np.abs(M @ (1.0 - eta) - (1.0 / eta - 1.0))))
    delta = 1e-3
    for _ in range(41):
        f = f_z((1.0 - delta) * eta, z, V)
        if np.all(f > 0):
            break
        delta *= 0.5
    else:
        raise ConvergenceError("no delta makes f_z((1-delta) eta) positive", last_iterate=eta)
    return EtaCertificate(
        eta=eta,
        delta=delta,
        f_value=f,
        iterations=it,
        eta1_residual=eta1_res,
        rho_eta=rho_scaled(V, z * eta),
    )


def f_z(xi, z, V) -> np.ndarray:
    """``ln xi + V D[z] (1 - xi)``."""
    V = np.asarray(V, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return np.log(xi) + V @ (z * (1.0 - xi))


def _flow_rhs(s, z, V, f0, eye):
    # d ln x / dt = -(I - V D[z x])^{-1} f0
    A = eye - V * (z * np.exp(s))[None, :]
    return -np.linalg.solve(A, f0)


def _rk4(s, h, z, V, f0, eye):
    k1 = _flow_rhs(s, z, V, f0, eye)
    k2 = _flow_rhs(s + 0.5 * h * k1, z, V, f0, eye)
    k3 = _flow_rhs(s + 0.5 * h * k2, z, V, f0, eye)
    k4 = _flow_rhs(s + h * k3, z, V, f0, eye)
    return s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def flow_path(z, V, cert: EtaCertificate, t_eval, h: float = ODE_STEP, min_step: float = ODE_MIN_STEP):
    """Integrate the flow from ``x(0) = (1 - delta) eta`` and return ``x(t)`` at each ``t_eval``.

    Classical RK4 in ``ln x`` with a step-doubling (Richardson) check.
    Integration starts at step ``h``; a step is halved while the two
    estimates disagree by more than ``ODE_TOL`` (failing below
    ``min_step``) and doubled, up to ``ODE_MAX_STEP``, while they agree
    comfortably.
    """
    z, Vm = _prep(z, V)
    V = Vm.v
    f0 = np.asarray(cert.f_value, dtype=float)
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    if np.any(np.diff(t_eval) < 0) or np.any(t_eval < 0) or np.any(t_eval > 1):
        raise PreconditionError("t_eval must be nondecreasing within [0, 1]")
    s = np.log(cert.eta_tilde)
    eye = np.eye(len(z))
    t = 0.0
    out = []
    step = h
    for target in t_eval:
        while t < target - 1e-15:
            hh = min(step, target - t)
            try:
                full = _rk4(s, hh, z, V, f0, eye)
                half = _rk4(_rk4(s, hh / 2, z, V, f0, eye), hh / 2, z, V, f0, eye)
            except np.linalg.LinAlgError:
                full, half = None, None
            if full is None or not np.all(np.isfinite(half)):
                err = np.inf
            else:
                err = float(np.max(np.abs(half - full))) / 15.0
            if err <= ODE_TOL:
                s = half + (half - full) / 15.0
                t += hh
                if err < ODE_TOL / 64:
                    step = min(ODE_MAX_STEP, 2 * step)
                continue
            step = hh / 2
            if step < min_step:
                raise ConvergenceError(
                    f"flow step fell below {min_step} at t={t:.6g}", last_iterate=np.exp(s)
                )
        out.append(np.exp(s))
    return np.array(out)


def ode_flow_invert(z, V, cert: EtaCertificate | None = None) -> InversionResult:
    """Minimal solution for exterior ``z`` via the certificate + ODE flow."""
    z, Vm = _prep(z, V)
    if cert is None:
        cert = eta_fixed_point(z, Vm)
    grid = np.linspace(0.0, 1.0, 11)
    xs = flow_path(z, Vm, cert, grid)
    monitor = max(
        float(np.max(np.abs(f_z(x, z, Vm.v) - (1.0 - t) * cert.f_value))) for t, x in zip(grid, xs)
    )
    y = z * xs[-1]
    return InversionResult(
        y=y,
        region_of_input=RegionLabel.EXTERIOR,
        method=Method.ODE_FLOW,
        iterations=cert.iterations,
        residual=inversion_residual(y, z, Vm.v),
        rho_y=rho_scaled(Vm.v, y),
        flow_monitor=monitor,
    )


def invert_minimal(
    z,
    V,
    tol: float = TOL_INV,
    max_iter: int = FP_MAX_ITER,
    method: str = "auto",
) -> InversionResult:
    """Componentwise-minimal ``y`` with ``psi(y) = psi(z)``.

    ``method`` is ``"auto"``, ``"fixed_point"`` or ``"ode"``.  In auto
    mode boundary inputs return ``z`` untouched, exterior inputs with
    ``rho(V D[z]) <= 1.02`` go straight to the ODE flow, and everything
    else runs the fixed point (Newton-finished if it slows down, ODE flow
    if it never converges).  ``"fixed_point"`` never touches the ODE flow
    and ``"ode"`` never touches the fixed point.
    """
    if method not in ("auto", "fixed_point", "ode"):
        raise PreconditionError(f"unknown inversion method {method!r}")
    z, Vm = _prep(z, V)
    V = Vm.v
    rho = rho_scaled(V, z)
    if abs(rho - 1.0) <= TOL_REGION:
        region = RegionLabel.BOUNDARY
    else:
        region = RegionLabel.INTERIOR if rho < 1.0 else RegionLabel.EXTERIOR

    if method == "auto" and region is RegionLabel.BOUNDARY:
        return InversionResult(z.copy(), region, Method.FIXED_POINT, 0, 0.0, rho)

    use_ode = method == "ode" or (
        method == "auto" and region is RegionLabel.EXTERIOR and rho <= NEAR_BOUNDARY
    )
    if method == "ode" and region is not RegionLabel.EXTERIOR:
        raise PreconditionError("the ODE flow route needs an exterior input")

    if use_ode:
        res = ode_flow_invert(z, Vm)
        y = res.y
        if res.residual > tol:
            y, _ = _newton_polish(y, z, V)
            res = InversionResult(
                y, region, Method.NEWTON_POLISH, res.iterations,
                inversion_residual(y, z, V), rho_scaled(V, y), res.flow_monitor,
            )
    else:
        y, iters, converged, polished = _fixed_point(z, V, max_iter, FP_NEWTON_AFTER)
        if not converged:
            if region is not RegionLabel.EXTERIOR or method == "fixed_point":
                raise ConvergenceError("fixed point did not converge", last_iterate=y)
            res = ode_flow_invert(z, Vm)
            res = InversionResult(
                res.y, region, res.method, iters + res.iterations,
                res.residual, res.rho_y, res.flow_monitor,
            )
        else:
            res = InversionResult(
                y,
                region,
                Method.NEWTON_POLISH if polished else Method.FIXED_POINT,
                iters,
                inversion_residual(y, z, V),
                rho_scaled(V, y),
            )
    if res.rho_y > 1.0 + TOL_REGION:
        raise InternalConsistencyError(
            f"inverse landed outside the closed region: rho(V D[y]) = {res.rho_y!r}"
        )
    return res


def minimal_curve(alpha, V, t: float, **kw) -> np.ndarray:
    """``y(t)``: the minimal solution of ``y e^{-Vy} = alpha t e^{-t V alpha}``."""
    V = WeightMatrix.of(V)
    alpha = as_mass_vector(alpha, V.k, "alpha")
    if not t > 0:
        raise PreconditionError("minimal_curve needs t > 0")
    return invert_minimal(alpha * t, V, **kw).y
