"""Fixed-step simulation of plants, observers and reference oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError, InfeasibleDesign
from .ltv_gpebo import reduce_to_w
from .system_model import (
    LtiSystem,
    LtvCanonicalSystem,
    RelativeDegreeProfile,
    build_N,
    build_P,
    compute_relative_degrees,
    upshift,
)
from .time_expr import as_time_expr, compile_time_expr, compile_time_expr_array
from .uio_synth import FunctionalObserverRealization, design_uio, place_observer_gain

__all__ = [
    "Trajectory", "ScenarioResult", "ErrorMetrics", "OracleComparison",
    "rk4_integrate", "rk4_linear", "run_mimo_scenario", "derivative_feed_oracle", "compare_oracle",
    "run_ltv_scenario", "run_bilinear_demo", "error_metrics", "window_peaks",
    "BILINEAR_X0",
]

DEFAULT_DT = 1e-3
MAX_STEPS = 50_000_000
BILINEAR_X0 = (0.1, 0.0, -0.05, 0.0)


@dataclass
class Trajectory:
    """Samples ``x[k]`` at times ``t[k]``; the last step may be shorter than ``dt``."""

    t: np.ndarray
    x: np.ndarray
    dt: float

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def steps(self):
        return len(self.t) - 1

    @property
    def final(self):
        return self.x[-1]


def rk4_integrate(field, x0, t0, t_final, dt=DEFAULT_DT, *, bound=None, bound_slice=slice(None),
                  max_steps=MAX_STEPS) -> Trajectory:
    """Classic fourth-order Runge-Kutta with a fixed step.

    ``field(t, x)`` returns the derivative.  The final step is shortened to
    land exactly on ``t_final``.  A non-finite state, or one whose
    ``bound_slice`` part exceeds ``bound`` in max-norm, raises
    :class:`DivergenceError`; the partial trajectory is attached to the
    exception as ``trajectory``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_final < t0:
        raise ValueError("t_final must not precede t0")
    span = t_final - t0
    full = int(math.floor(span / dt + 1e-9))
    rem = span - full * dt
    steps = full + (1 if rem > 1e-12 * max(1.0, abs(t_final)) else 0)
    if steps > max_steps:
        raise ValueError(f"{steps} steps exceed the budget of {max_steps}")

    x = np.array(x0, dtype=float)
    out = np.empty((steps + 1, x.size))
    ts = np.empty(steps + 1)
    out[0] = x
    ts[0] = t0
    t = t0
    for k in range(steps):
        h = dt if k < full else t_final - t
        k1 = field(t, x)
        k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = field(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t_final if k + 1 == steps else t0 + (k + 1) * dt
        bad = not np.all(np.isfinite(x))
        if not bad and bound is not None:
            bad = np.abs(x[bound_slice]).max() > bound
        if bad:
            exc = DivergenceError("state diverged", k + 1, t, k)
            exc.trajectory = Trajectory(ts[: k + 1].copy(), out[: k + 1].copy(), dt)
            raise exc
        out[k + 1] = x
        ts[k + 1] = t
    return Trajectory(ts, out, dt)


def _rk4_linear_maps(A, h):
    """Step matrices of one RK4 step of ``x' = A x + b(t)``.

    ``x+ = Ad x + E0 b(t) + Em b(t + h/2) + E1 b(t + h)`` reproduces the four
    stages exactly.
    """
    I = np.eye(A.shape[0])
    A2 = A @ A
    A3 = A2 @ A
    Ad = I + h * A + h**2 / 2 * A2 + h**3 / 6 * A3 + h**4 / 24 * (A3 @ A)
    E0 = h / 6 * (I + h * A + h**2 / 2 * A2 + h**3 / 4 * A3)
    Em = h / 6 * (4 * I + 2 * h * A + h**2 / 2 * A2)
    E1 = h / 6 * I
    return Ad, E0, Em, E1


def rk4_linear(A, B, u, x0, t0, t_final, dt=DEFAULT_DT) -> Trajectory:
    """RK4 for ``x' = A x + B u(t)`` with the stages folded into step matrices.

    Same grid and same arithmetic as :func:`rk4_integrate` on the linear
    field, but ``u`` is evaluated on whole arrays of times (it must accept
    one and return shape ``(len(t), m)``), which makes long runs at small
    ``dt`` cheap.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not dt > 0:
        raise ValueError("dt must be positive")
    span = t_final - t0
    if span < 0:
        raise ValueError("t_final must not precede t0")
    full = int(math.floor(span / dt + 1e-9))
    rem = span - full * dt
    steps = full + (1 if rem > 1e-12 * max(1.0, abs(t_final)) else 0)
    if steps > MAX_STEPS:
        raise ValueError(f"{steps} steps exceed the budget of {MAX_STEPS}")
    ts = t0 + dt * np.arange(steps + 1)
    ts[-1] = t_final if steps else t0
    h = np.full(steps, dt)
    if steps > full:
        h[-1] = t_final - ts[-2]
    tl = ts[:-1]
    drive = np.zeros((steps, A.shape[0]))
    Ad, E0, Em, E1 = _rk4_linear_maps(A, dt)
    maps = [(slice(0, full), Ad, E0, Em, E1)]
    if steps > full:
        maps.append((slice(full, steps), *_rk4_linear_maps(A, h[-1])))
    for sl, _, e0, em, e1 in maps:
        hh = h[sl]
        drive[sl] = (u(tl[sl]) @ B.T) @ e0.T + (u(tl[sl] + hh / 2) @ B.T) @ em.T + (u(tl[sl] + hh) @ B.T) @ e1.T
    out = np.empty((steps + 1, A.shape[0]))
    x = np.array(x0, dtype=float)
    out[0] = x
    for k in range(steps):
        step = Ad if k < full else maps[-1][1]
        x = step @ x + drive[k]
        out[k + 1] = x
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        k = int(np.argmax(bad))
        exc = DivergenceError("state diverged", k, float(ts[k]), k - 1)
        exc.trajectory = Trajectory(ts[:k].copy(), out[:k].copy(), dt)
        raise exc
    return Trajectory(ts, out, dt)


@dataclass(frozen=True)
class ErrorMetrics:
    final_norm: float
    decay_rate: float  # slope of log |e|_inf over the tail half; -inf when exact
    time_to_threshold: float | None
    exact: bool = False
    threshold: float = 1e-3


@dataclass
class ScenarioResult:
    t: np.ndarray
    x: np.ndarray
    xbar: np.ndarray
    err: np.ndarray
    extras: dict = field(default_factory=dict)

    def metrics(self, eps=1e-3) -> ErrorMetrics:
        return error_metrics(self, eps=eps)


def error_metrics(res, t=None, eps=1e-3) -> ErrorMetrics:
    """Final error, tail decay rate and settling time for an error history.

    ``res`` is a :class:`ScenarioResult` or an error array (samples x
    channels, or 1-D) with times ``t``.
    """
    if isinstance(res, ScenarioResult):
        t, err = res.t, res.err
    else:
        err = np.asarray(res, dtype=float)
        if t is None:
            raise ValueError("times are required with a raw error array")
    t = np.asarray(t, dtype=float)
    err = err.reshape(len(t), -1)
    if len(t) == 0:
        raise ValueError("empty result")
    norms = np.abs(err).max(axis=1)
    final = float(norms[-1])
    if not np.any(norms > 0):
        return ErrorMetrics(final, -math.inf, float(t[0]), True, eps)
    half = t[0] + 0.5 * (t[-1] - t[0])
    tail = (t >= half) & (norms > 0)
    if tail.sum() >= 2:
        rate = float(np.polyfit(t[tail], np.log(norms[tail]), 1)[0])
    else:
        rate = -math.inf
    above = np.nonzero(norms >= eps)[0]
    if above.size == 0:
        settle = float(t[0])
    elif above[-1] == len(t) - 1:
        settle = None
    else:
        settle = float(t[above[-1] + 1])
    return ErrorMetrics(final, rate, settle, False, eps)


def window_peaks(t, err, window):
    """Peak of ``|e|_inf`` over consecutive windows of length ``window``."""
    t = np.asarray(t)
    norms = np.abs(np.asarray(err).reshape(len(t), -1)).max(axis=1)
    if not window > 0:
        raise ValueError("window must be positive")
    count = max(1, int(math.ceil((t[-1] - t[0]) / window - 1e-9)))
    peaks = []
    for j in range(count):
        a = t[0] + j * window
        sel = (t >= a) & (t < a + window) if j < count - 1 else (t >= a)
        if sel.any():
            peaks.append(norms[sel].max())
    return np.array(peaks)


def _input_array_fn(exprs, m):
    """Map an array of times to the ``(len(t), m)`` input samples."""
    if isinstance(exprs, (str, int, float)):
        exprs = [exprs]
    exprs = [as_time_expr(e) for e in exprs]
    if len(exprs) != m:
        raise DimensionError(f"expected {m} input expressions, got {len(exprs)}")
    fns = [compile_time_expr_array(e) for e in exprs]
    return lambda t: np.column_stack([f(t) for f in fns])


# ---------------------------------------------------------------------------
# MIMO LTI


def run_mimo_scenario(plant: LtiSystem, real: FunctionalObserverRealization, f, x0, z0=None,
                      t_final=10.0, dt=DEFAULT_DT, xhat0=None) -> ScenarioResult:
    """Co-simulate ``x' = A x + B f(t)`` and the derivative-free observer.

    ``z0`` defaults to zero; passing ``xhat0`` instead chooses ``z0`` so the
    implied full-state estimate at ``t = 0`` equals ``xhat0``.
    """
    n = plant.n
    x0 = np.asarray(x0, dtype=float)
    if x0.size != n or real.n != n:
        raise DimensionError("initial state and observer must match the plant order")
    if xhat0 is not None:
        if z0 is not None:
            raise ValueError("give either z0 or xhat0, not both")
        z0 = real.z_for_estimate(xhat0, x0, plant)
    z0 = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float)
    u = _input_array_fn(f, plant.m)
    Abig = np.block([[plant.A, np.zeros((n, n))], [real.injection @ plant.C, real.F]])
    Bbig = np.vstack([plant.B, np.zeros((n, plant.m))])
    traj = rk4_linear(Abig, Bbig, u, np.concatenate([x0, z0]), 0.0, t_final, dt)
    x, z = traj.x[:, :n], traj.x[:, n:]
    xbar = z @ real.Q.T + (x @ plant.C.T) @ real.Theta.T
    err = x @ real.Q.T - xbar
    return ScenarioResult(traj.t, x, xbar, err, {"z": z})


def derivative_feed_oracle(plant: LtiSystem, gains, r: RelativeDegreeProfile, f, x0, xhat0,
                           t_final=10.0, dt=DEFAULT_DT):
    """Ideal observer fed with exact output derivatives.

    ``y_i^(r_i) = C_i A^r_i x + C_i A^(r_i-1) B f`` is formed from the true
    state, i.e. ``y^(r) = P x + N f``.  Returns ``(plant, estimate)``
    trajectories.
    """
    n = plant.n
    P, N = build_P(plant, r), build_N(plant, r)
    u = _input_array_fn(f, plant.m)
    Abig = np.block([[plant.A, np.zeros((n, n))], [gains.L @ plant.C + gains.G @ P, gains.F]])
    Bbig = np.vstack([plant.B, gains.G @ N])
    s0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(xhat0, dtype=float)])
    traj = rk4_linear(Abig, Bbig, u, s0, 0.0, t_final, dt)
    return Trajectory(traj.t, traj.x[:, :n], dt), Trajectory(traj.t, traj.x[:, n:], dt)


@dataclass(frozen=True)
class OracleComparison:
    max_deviation: float
    t_worst: float
    t: np.ndarray
    deviation: np.ndarray  # |Q xhat_oracle - xbar_hat|_inf per sample
    linear_law_error: float  # max |x_tilde(t) - expm(F t) x_tilde(0)|_inf on the grid


def compare_oracle(plant: LtiSystem, real: FunctionalObserverRealization, f, x0, xhat0=None,
                   t_final=10.0, dt=1e-4, check_every=None) -> OracleComparison:
    """Run the ideal observer and the realization side by side.

    The realization starts from the ``z0`` matched to ``xhat0`` (default
    zero), so the two functional estimates coincide exactly in exact
    arithmetic.  Also reports how far the oracle error departs from
    ``expm(F t) x_tilde(0)``.
    """
    import scipy.linalg

    n, l, m = plant.n, plant.l, plant.m
    x0 = np.asarray(x0, dtype=float)
    xhat0 = np.zeros(n) if xhat0 is None else np.asarray(xhat0, dtype=float)
    z0 = real.z_for_estimate(xhat0, x0, plant)
    P, N = build_P(plant, real.r), build_N(plant, real.r)
    u = _input_array_fn(f, m)
    Z = np.zeros((n, n))
    Abig = np.block([
        [plant.A, Z, Z],
        [real.L @ plant.C + real.G @ P, real.F, Z],
        [real.injection @ plant.C, Z, real.F],
    ])
    Bbig = np.vstack([plant.B, real.G @ N, np.zeros((n, m))])
    traj = rk4_linear(Abig, Bbig, u, np.concatenate([x0, xhat0, z0]), 0.0, t_final, dt)
    x, xh, z = traj.x[:, :n], traj.x[:, n:2 * n], traj.x[:, 2 * n:]
    dev = np.abs(xh @ real.Q.T - (z @ real.Q.T + (x @ plant.C.T) @ real.Theta.T)).max(axis=1)
    k = int(np.argmax(dev))

    stride = check_every or max(1, len(traj.t) // 200)
    idx = np.arange(0, len(traj.t), stride)
    xt0 = x0 - xhat0
    law = 0.0
    for i in idx:
        pred = scipy.linalg.expm(real.F * traj.t[i]) @ xt0
        law = max(law, float(np.abs((x[i] - xh[i]) - pred).max()))
    return OracleComparison(float(dev[k]), float(traj.t[k]), traj.t, dev, law)


# ---------------------------------------------------------------------------
# LTV integrator chain


def _check_chain_plant(plant_A, plant_B, n):
    if plant_A.shape != (n, n) or plant_B.shape not in ((n,), (n, 1)):
        raise DimensionError(f"plant matrices must be {n} x {n} and {n} x 1")
    if not np.allclose(plant_A[:-1], upshift(n)[:-1], atol=0.0):
        raise InfeasibleDesign("plant A must be an integrator chain above its last row")
    b = np.ravel(plant_B)
    if np.any(b[:-1] != 0):
        raise InfeasibleDesign("plant B must act on the last state only")


def run_ltv_scenario(plant_A, plant_B, sys: LtvCanonicalSystem, u, x0, xi0=None,
                     t_final=20.0, dt=DEFAULT_DT) -> ScenarioResult:
    """Simulate a chain plant with time-varying output and the copy observer.

    Any last-row feedback in ``plant_A`` is absorbed into the unknown input,
    so the plant only needs the integrator-chain structure above its last
    row.  Estimates are ``xi`` (for ``x_1..x_(beta-1)``) plus ``x_beta``
    reconstructed from the output; ``extras['identity_residual']`` holds
    ``|(w - xi) - Phi (w(0) - xi(0))|_inf``.
    """
    plant_A = np.atleast_2d(np.asarray(plant_A, dtype=float))
    plant_B = np.asarray(plant_B, dtype=float)
    n = sys.n
    _check_chain_plant(plant_A, plant_B, n)
    red = reduce_to_w(sys)
    beta, k = red.beta, red.order
    cfns = [compile_time_expr(c) for c in sys.c[:beta]]
    ufn = compile_time_expr(as_time_expr(u))
    b = np.ravel(plant_B)
    x0 = np.asarray(x0, dtype=float)
    if x0.size != n:
        raise DimensionError(f"x0 must have {n} entries")
    xi0 = np.zeros(k) if xi0 is None else np.asarray(xi0, dtype=float)
    if xi0.size != k:
        raise DimensionError(f"xi0 must have {k} entries")

    def field(t, s):
        x = s[:n]
        xi = s[n:n + k]
        Phi = s[n + k:].reshape(k, k)
        y = sum(cf(t) * x[i] for i, cf in enumerate(cfns))
        R, D = red.R_D(t)
        return np.concatenate([plant_A @ x + b * ufn(t), R @ xi + D * y, (R @ Phi).ravel()])

    s0 = np.concatenate([x0, xi0, np.eye(k).ravel()])
    traj = rk4_integrate(field, s0, 0.0, t_final, dt)
    x = traj.x[:, :n]
    xi = traj.x[:, n:n + k]
    Phi = traj.x[:, n + k:].reshape(-1, k, k)
    cvals = np.array([[cf(t) for cf in cfns] for t in traj.t])
    if np.any(cvals[:, -1] == 0.0):
        raise DivergenceError(f"c_{beta}(t) crosses zero", 0, float(traj.t[np.argmax(cvals[:, -1] == 0)]), 0)
    y = np.einsum("ij,ij->i", cvals, x[:, :beta])
    x_beta_hat = (y - np.einsum("ij,ij->i", cvals[:, :-1], xi)) / cvals[:, -1]
    xbar = np.column_stack([xi, x_beta_hat])
    err = x[:, :beta] - xbar
    e0 = x0[:k] - xi0
    identity = np.abs((x[:, :k] - xi) - Phi @ e0).max(axis=1)
    extras = {
        "Phi": Phi,
        "identity_residual": identity,
        "phi_norm": np.linalg.norm(Phi, ord=2, axis=(1, 2)),
        "phi_det": np.linalg.det(Phi),
        "y": y,
        "beta": beta,
    }
    return ScenarioResult(traj.t, x, xbar, err, extras)


# ---------------------------------------------------------------------------
# Bilinear cascade


def bilinear_plant():
    """Fourth-order chain with ``B = e_4`` and ``y = x_1 + x_2`` (relative degree 3)."""
    return LtiSystem(upshift(4), np.eye(4)[:, [3]], [[1.0, 1.0, 0.0, 0.0]])


def run_bilinear_demo(K=None, x0=BILINEAR_X0, t_final=10.0, dt=DEFAULT_DT, *,
                      uio_poles=(-1.0, -4.0, -5.0, -6.0), k_poles=(-2.0, -3.0, -4.0, -5.0),
                      exact_init=False, bound=1e3) -> ScenarioResult:
    """Full-state estimation of ``x' = A x + B x_1 x_3`` through a cascade.

    A functional unknown-input observer, treating ``x_1 x_3`` as the
    unknown input, estimates ``x_1`` and ``x_2``.  Those estimates and the
    derivative of the first one feed the observer::

        xi'  = A zeta + K (y - C zeta) - B (d/dt xhat_1) y - B xhat_1 xhat_2
        zeta = xi + B xhat_1 y

    which needs no output derivative.  ``exact_init`` starts every observer
    at the true state.

    The plant has an invariant zero at ``s = -1``; it stays an eigenvalue of
    ``F`` whatever ``L`` is, so ``uio_poles`` must contain it.
    """
    plant = bilinear_plant()
    A, B, C = plant.A, plant.B, plant.C
    if K is None:
        K = place_observer_gain(A, C, k_poles)
    K = np.asarray(K, dtype=float).reshape(4, 1)
    if np.linalg.eigvals(A - K @ C).real.max() >= 0:
        raise InfeasibleDesign("A - K C is not Hurwitz")
    design = design_uio(plant, compute_relative_degrees(plant), uio_poles, mode="full")
    real = design.realization
    if not np.allclose(real.Q, np.eye(2, 4), atol=1e-12):
        raise InfeasibleDesign(f"unexpected functional matrix {real.Q}")
    if np.abs(real.Theta[0]).max() > 1e-12:
        raise InfeasibleDesign("xhat_1 carries a direct output term; its derivative is not measurable")

    x0 = np.asarray(x0, dtype=float)
    b = B[:, 0]
    c = C[0]
    kv = K[:, 0]
    F, inj, Q, Theta = real.F, real.injection[:, 0], real.Q, real.Theta[:, 0]
    if exact_init:
        z0 = real.z_for_estimate(x0, x0, plant)
        xi0 = x0 - b * x0[0] * (c @ x0)
    else:
        z0 = np.zeros(4)
        xi0 = np.zeros(4)

    def field(t, s):
        x, z, xi = s[:4], s[4:8], s[8:]
        y = c @ x
        xh = Q @ z + Theta * y
        zdot = F @ z + inj * y
        xh1_dot = Q[0] @ zdot
        zeta = xi + b * (xh[0] * y)
        xidot = A @ zeta + kv * (y - c @ zeta) - b * (xh1_dot * y) - b * (xh[0] * xh[1])
        xdot = A @ x + b * (x[0] * x[2])
        return np.concatenate([xdot, zdot, xidot])

    traj = rk4_integrate(field, np.concatenate([x0, z0, xi0]), 0.0, t_final, dt,
                         bound=bound, bound_slice=slice(0, 4))
    x, z, xi = traj.x[:, :4], traj.x[:, 4:8], traj.x[:, 8:]
    y = x @ c
    xh = z @ Q.T + np.outer(y, Theta)
    zeta = xi + np.outer(xh[:, 0] * y, b)
    return ScenarioResult(traj.t, x, zeta, x - zeta,
                          {"functional_error": x[:, :2] - xh, "K": K, "design": design})
