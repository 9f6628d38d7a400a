"""Dense linear algebra shared by every module.

Spectral radius and Perron vector of nonnegative matrices, diagonal
scaling, and the three-way region classification of a positive vector
``z`` by ``rho(V D[z])``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError

TOL_EIG = 1e-12
TOL_REGION = 1e-9
MAX_ITER = 10_000


class RegionLabel(str, enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    EXTERIOR = "Exterior"


def _support_connected(support: np.ndarray) -> bool:
    """Strong connectivity of the digraph ``i -> j`` iff ``support[i, j]``."""
    k = support.shape[0]
    if k == 1:
        return bool(support[0, 0])
    for adj in (support, support.T):
        seen = np.zeros(k, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(adj[i] & ~seen):
                seen[j] = True
                queue.append(j)
        if not seen.all():
            return False
    return True


def is_irreducible(M) -> bool:
    M = np.asarray(M, dtype=float)
    return _support_connected(M > 0)


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric nonnegative ``k x k`` rate matrix with a recorded irreducibility flag."""

    v: np.ndarray
    irreducible: bool = field(init=False)

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] == 0:
            raise ValidationError(f"weight matrix must be square and non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("weight matrix has non-finite entries")
        if np.any(v < 0):
            raise ValidationError("weight matrix has negative entries")
        if not np.array_equal(v, v.T):
            raise ValidationError("weight matrix is not symmetric")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "irreducible", _support_connected(v > 0))

    @classmethod
    def of(cls, V) -> "WeightMatrix":
        return V if isinstance(V, WeightMatrix) else cls(V)

    @property
    def k(self) -> int:
        return self.v.shape[0]

    @property
    def is_integer(self) -> bool:
        return bool(np.all(self.v == np.round(self.v)))

    def require_irreducible(self) -> "WeightMatrix":
        if not self.irreducible:
            raise ValidationError("weight matrix is reducible (support graph is disconnected)")
        return self

    def __array__(self, dtype=None, copy=None):
        return self.v if dtype is None else self.v.astype(dtype)


def as_mass_vector(x, k: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate a strictly positive real vector (optionally of length ``k``)."""
    a = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    if a.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if k is not None and a.shape[0] != k:
        raise ValidationError(f"{name} has length {a.shape[0]}, expected {k}")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValidationError(f"{name} must have strictly positive finite entries")
    return a


def _as_nonneg_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise ValidationError("matrix must have finite nonnegative entries")
    return M


def diag_scale(x, M, side: str = "right") -> np.ndarray:
    """Return ``D[x] M`` (side='left') or ``M D[x]`` (side='right')."""
    x = np.asarray(x, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or x.shape != (M.shape[0],) or M.shape[0] != M.shape[1]:
        raise ValidationError("dimension mismatch in diagonal scaling")
    if side == "left":
        return x[:, None] * M
    if side == "right":
        return M * x[None, :]
    raise ValidationError(f"side must be 'left' or 'right', got {side!r}")


def _power_iteration(M: np.ndarray, tol: float, max_iter: int):
    """Power iteration on ``M + I`` with Collatz-Wielandt bounds.

    Shifting by the identity makes an irreducible nonnegative matrix
    primitive, so periodic matrices such as [[0,1],[1,0]] still converge.
    Returns ``(rho, vector, converged)``.
    """
    k = M.shape[0]
    A = M + np.eye(k)
    u = np.ones(k)
    lo, hi = 0.0, np.inf
    best_gap = np.inf
    stall = 0
    for _ in range(max_iter):
        w = A @ u
        if np.any(u <= 0) or np.any(w <= 0):
            return None, u, False
        ratios = w / u
        lo, hi = ratios.min(), ratios.max()
        u = w / w.max()
        gap = hi - lo
        if gap <= tol:
            rho = 0.5 * (lo + hi) - 1.0
            return max(rho, 0.0), u, True
        if gap < 0.999 * best_gap:
            best_gap = gap
            stall = 0
        else:
            stall += 1
            if stall > 200:
                break
    return 0.5 * (lo + hi) - 1.0, u, False


def _dense_radius(M: np.ndarray, sym_weights: np.ndarray | None = None):
    if sym_weights is not None:
        # M = V D[x] is similar to D[sqrt x] V D[sqrt x]
        s = np.sqrt(sym_weights)
        V = M / sym_weights[None, :]
        S = s[:, None] * V * s[None, :]
        w, vecs = np.linalg.eigh(S)
        i = int(np.argmax(np.abs(w)))
        vec = np.abs(vecs[:, i]) / s
        return float(abs(w[i])), vec / vec.max()
    w, vecs = np.linalg.eig(M)
    i = int(np.argmax(np.abs(w)))
    vec = np.abs(np.real(vecs[:, i]))
    if vec.max() > 0:
        vec = vec / vec.max()
    return float(np.abs(w[i])), vec


def spectral_radius(M, tol: float = TOL_EIG, max_iter: int = MAX_ITER, fallback: bool = True) -> float:
    """Largest absolute eigenvalue of a nonnegative square matrix.

    Power iteration is tried first; if it stalls or the matrix is reducible
    a dense eigensolve takes over. With ``fallback=False`` a stalled
    iteration raises :class:`ConvergenceError` carrying the last iterate.
    """
    M = _as_nonneg_square(M)
    if M.shape[0] == 1:
        return float(M[0, 0])
    rho, u, ok = _power_iteration(M, tol, max_iter)
    if ok:
        return float(rho)
    if not fallback:
        raise ConvergenceError("power iteration did not converge", last_iterate=u)
    return _dense_radius(M)[0]


def perron_vector(M, tol: float = TOL_EIG, max_iter: int = MAX_ITER) -> np.ndarray:
    """Strictly positive Perron eigenvector of an irreducible nonnegative matrix, max entry 1."""
    M = _as_nonneg_square(M)
    if not is_irreducible(M):
        raise ValidationError("Perron vector requested for a reducible matrix")
    if M.shape[0] == 1:
        return np.ones(1)
    rho, u, ok = _power_iteration(M, tol, max_iter)
    if not ok:
        rho, u = _dense_radius(M)
    return u / u.max()


def rho_scaled(V, x) -> float:
    """``rho(V D[x])`` for symmetric nonnegative ``V`` and positive ``x``."""
    V = np.asarray(V, dtype=float)
    x = np.asarray(x, dtype=float)
    if V.shape[0] == 1:
        return float(V[0, 0] * x[0])
    M = V * x[None, :]
    rho, _, ok = _power_iteration(M, TOL_EIG, MAX_ITER)
    if ok:
        return float(rho)
    return _dense_radius(M, sym_weights=x)[0]


def classify_region(z, V, tol: float = TOL_REGION) -> RegionLabel:
    """Interior / Boundary / Exterior according to ``rho(V D[z])`` versus 1."""
    V = WeightMatrix.of(V)
    z = as_mass_vector(z, V.k, "z")
    rho = rho_scaled(V.v, z)
    if abs(rho - 1.0) <= tol:
        return RegionLabel.BOUNDARY
    return RegionLabel.INTERIOR if rho < 1.0 else RegionLabel.EXTERIOR
