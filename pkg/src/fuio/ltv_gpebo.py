"""Copy observer with fundamental matrix for LTV integrator chains.

For an integrator chain with output ``y = c_1 x_1 + ... + c_beta x_beta`` the
first ``beta - 1`` states form the companion system::

    w' = R(t) w + D(t) y,      w = (x_1, ..., x_(beta-1))

The observer is a copy of it together with the fundamental matrix ``Phi``::

    xi'  = R(t) xi + D(t) y
    Phi' = R(t) Phi,           Phi(0) = I

so the error obeys ``w(t) - xi(t) = Phi(t) (w(0) - xi(0))``.  Convergence
needs the companion matrix to be stable along the trajectory; no
time-varying stability criterion is available, so :func:`frozen_stability_scan`
offers a frozen-time heuristic only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExprEvalError, InfeasibleDesign
from .system_model import LtvCanonicalSystem, beta_index
from .time_expr import compile_time_expr, to_text

__all__ = [
    "ReducedLtvSystem", "GpeboState", "reduce_to_w", "gpebo_rhs",
    "functional_matrix_ltv", "reconstruct_x_beta", "frozen_stability_scan",
    "StabilityScan",
]


@dataclass(frozen=True)
class ReducedLtvSystem:
    """Companion system of order ``beta - 1`` built from the coefficients."""

    beta: int
    coefficients: tuple  # c_1 .. c_beta as TimeExpr

    def __post_init__(self):
        object.__setattr__(self, "_fns", tuple(compile_time_expr(c) for c in self.coefficients))

    @property
    def order(self):
        return self.beta - 1

    def _values(self, t):
        vals = np.array([f(t) for f in self._fns])
        if vals[-1] == 0.0:
            raise ExprEvalError(f"c_{self.beta}(t) vanishes", t)
        return vals

    def R(self, t: float) -> np.ndarray:
        vals = self._values(t)
        k = self.order
        R = np.eye(k, k=1)
        R[-1, :] = -vals[:-1] / vals[-1]
        return R

    def D(self, t: float) -> np.ndarray:
        vals = self._values(t)
        D = np.zeros(self.order)
        D[-1] = 1.0 / vals[-1]
        return D

    def R_D(self, t: float):
        """Both matrices from a single coefficient evaluation."""
        vals = self._values(t)
        k = self.order
        R = np.eye(k, k=1)
        R[-1, :] = -vals[:-1] / vals[-1]
        D = np.zeros(k)
        D[-1] = 1.0 / vals[-1]
        return R, D

    def to_dict(self):
        return {"type": "gpebo", "beta": self.beta, "c": [to_text(c) for c in self.coefficients]}


@dataclass
class GpeboState:
    xi: np.ndarray
    Phi: np.ndarray

    @classmethod
    def initial(cls, xi0):
        xi0 = np.asarray(xi0, dtype=float)
        return cls(xi0.copy(), np.eye(xi0.size))

    def pack(self):
        return np.concatenate([self.xi, self.Phi.ravel()])

    @classmethod
    def unpack(cls, vec, k):
        vec = np.asarray(vec)
        return cls(vec[:k], vec[k:].reshape(k, k))


def reduce_to_w(sys: LtvCanonicalSystem) -> ReducedLtvSystem:
    beta = beta_index(sys)
    return ReducedLtvSystem(beta, sys.c[:beta])


def gpebo_rhs(state: GpeboState, R_t, D_t, y: float):
    """Derivatives ``(R xi + D y, R Phi)``."""
    R_t = np.atleast_2d(R_t)
    return R_t @ state.xi + np.ravel(D_t) * y, R_t @ state.Phi


def functional_matrix_ltv(n: int, beta: int) -> np.ndarray:
    """``[I_(beta-1) 0]`` selecting the estimable states."""
    if not 2 <= beta <= n:
        raise ValueError(f"beta must satisfy 2 <= beta <= n = {n}, got {beta}")
    return np.eye(beta - 1, n)


def reconstruct_x_beta(xhat, y: float, sys: LtvCanonicalSystem, t: float) -> float:
    """Estimate of ``x_beta`` from the output equation and ``xhat_1..xhat_(beta-1)``."""
    xhat = np.ravel(xhat)
    beta = xhat.size + 1
    c = [ci(t) for ci in sys.c[:beta]]
    if c[-1] == 0.0:
        raise ExprEvalError(f"c_{beta}(t) vanishes, x_{beta} cannot be reconstructed", t)
    return (y - float(np.dot(c[:-1], xhat))) / c[-1]


@dataclass(frozen=True)
class StabilityScan:
    margin: float
    t_argmin: float
    note: str = ("frozen-time eigenvalue scan: a positive margin is a necessary-style "
                 "heuristic only and does not certify stability of the time-varying system")

    @property
    def stable(self):
        return self.margin > 0


def frozen_stability_scan(red: ReducedLtvSystem, t_grid) -> StabilityScan:
    """Smallest ``-max Re eig(R(t))`` over ``t_grid`` and where it occurs."""
    t_grid = np.ravel(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0:
        raise ValueError("empty time grid")
    margins = np.empty(t_grid.size)
    for k, t in enumerate(t_grid):
        try:
            eig = np.linalg.eigvals(red.R(t))
        except np.linalg.LinAlgError as exc:
            raise InfeasibleDesign(f"eigenvalue computation failed at t={t}: {exc}") from exc
        margins[k] = -eig.real.max()
    k = int(np.argmin(margins))
    return StabilityScan(float(margins[k]), float(t_grid[k]))
