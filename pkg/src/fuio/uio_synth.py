"""Unknown-input observer synthesis for LTI MIMO plants of any relative degree.

Pipeline::

    r, P, N      (system_model)
    G = B (N^T N)^-1 N^T          decoupling gain, B - G N = 0
    M = A - G P
    L              places eig(F), F = M - L C
    T = [B, AB, ..., A^(r_max-2) B]
    Q              rows span the orthogonal complement of col(T)
    realization    z' = F z + (Gamma + L) y,  xbar_hat = Q z + Theta y

The ideal observer ``xhat' = F xhat + L y + G y^(r)`` needs output
derivatives.  Writing ``xhat = z + sum_i sum_k F^k G e_i y_i^(r_i-1-k)`` moves
every derivative into the output map; ``Q`` annihilates all of them except
the undifferentiated ``k = r_i - 1`` term, which leaves the measurable
realization above with ``Gamma_i = F^r_i G e_i`` and
``Theta_i = Q F^(r_i-1) G e_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionError, InfeasibleDesign
from .system_model import (
    LtiSystem,
    RelativeDegreeProfile,
    build_N,
    build_P,
    check_detectability,
    numerical_rank,
    unobservable_modes,
)

__all__ = [
    "UioGains", "FunctionalObserverRealization", "compute_G", "compute_M",
    "place_observer_gain", "build_T", "functional_matrix", "verify_functional_condition",
    "build_realization", "realization_rhs", "design_uio", "normalize_poles",
    "PolePlacementError", "ConditionCheck",
]

log = logging.getLogger(__name__)

DECOUPLING_TOL = 1e-9
CONDITION_TOL = 1e-9
POLE_TOL = 1e-6


class PolePlacementError(InfeasibleDesign):
    pass


def _rank_tol_abs(X, rank_tol):
    s = np.linalg.svd(X, compute_uv=False) if X.size else np.zeros(0)
    smax = s[0] if s.size else 0.0
    rel = max(X.shape) * np.finfo(float).eps if rank_tol is None else rank_tol
    return s, rel * smax


# ---------------------------------------------------------------------------
# Gains


@dataclass(frozen=True)
class UioGains:
    G: np.ndarray
    M: np.ndarray
    L: np.ndarray
    F: np.ndarray
    poles: tuple

    def to_dict(self):
        return {"G": self.G.tolist(), "M": self.M.tolist(), "L": self.L.tolist(),
                "F": self.F.tolist(), "poles": _poles_to_json(self.poles)}


def compute_G(B, N, rank_tol=None) -> np.ndarray:
    """Decoupling gain ``G = B (N^T N)^-1 N^T``.

    Requires ``N`` of full column rank and ``rank(N) == rank(B)``; raises
    :class:`InfeasibleDesign` otherwise.  The residual ``B - G N`` is checked
    against ``1e-9 * |B|``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    if B.shape[1] != N.shape[1]:
        raise DimensionError(f"B has {B.shape[1]} columns but N has {N.shape[1]}")
    rank_N = numerical_rank(N, rank_tol)
    rank_B = numerical_rank(B, rank_tol)
    if rank_N != rank_B:
        raise InfeasibleDesign(
            f"decoupling condition rank(N) = rank(B) fails: rank(N) = {rank_N}, rank(B) = {rank_B}"
        )
    if rank_N < N.shape[1]:
        raise InfeasibleDesign(
            f"N^T N is singular: rank(N) = {rank_N} < {N.shape[1]} columns"
        )
    G = B @ np.linalg.solve(N.T @ N, N.T)
    resid = np.abs(B - G @ N).max(initial=0.0)
    if resid > DECOUPLING_TOL * max(np.abs(B).max(initial=0.0), 1.0):
        raise InfeasibleDesign(f"B - G N residual {resid:.3e} exceeds tolerance")
    return G


def compute_M(A, G, P) -> np.ndarray:
    return np.asarray(A, dtype=float) - np.asarray(G, dtype=float) @ np.asarray(P, dtype=float)


def normalize_poles(poles, tol=1e-9):
    """Validate a pole multiset and return it as a tuple of complex numbers.

    Poles must be distinct, closed under conjugation and strictly in the
    left half plane.
    """
    p = np.array([complex(v) for v in np.ravel(np.asarray(poles, dtype=complex))])
    if p.size == 0:
        raise ValueError("no poles given")
    scale = max(1.0, np.abs(p).max())
    for i in range(p.size):
        for j in range(i + 1, p.size):
            if abs(p[i] - p[j]) <= tol * scale:
                raise PolePlacementError(f"repeated pole {p[i]}: only distinct poles are supported")
    for v in p:
        if abs(v.imag) > tol * scale and np.min(np.abs(p - np.conj(v))) > tol * scale:
            raise ValueError(f"pole {v} has no conjugate partner")
        if v.real >= 0:
            raise ValueError(f"pole {v} is not in the open left half plane")
    return tuple(complex(v.real, 0.0) if abs(v.imag) <= tol * scale else complex(v) for v in p)


def place_observer_gain(M, C, poles, pole_tol=POLE_TOL, stability_margin=0.0) -> np.ndarray:
    """Gain ``L`` with ``eig(M - L C)`` equal to ``poles``.

    Eigenstructure assignment on the dual pair ``(M^T, C^T)``: for every pole
    ``lam`` a vector ``(v, w)`` from the kernel of ``[M^T - lam I, C^T]`` is
    picked, greedily keeping the ``v`` columns as independent as possible;
    then ``K = -W V^-1`` and ``L = K^T``.  Complex poles take the conjugate of
    their partner's eigenvector so ``K`` is real.

    Raises :class:`PolePlacementError` for repeated poles, undetectable
    ``(M, C)`` or when the achieved spectrum misses the request by more than
    ``pole_tol`` (relative).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n) or C.shape[1] != n:
        raise DimensionError(f"incompatible shapes M {M.shape}, C {C.shape}")
    poles = normalize_poles(poles)
    if len(poles) != n:
        raise ValueError(f"need {n} poles, got {len(poles)}")
    if not check_detectability(M, C, stability_margin):
        raise PolePlacementError("(M, C) is not detectable: an unstable mode cannot be moved")
    fixed = unobservable_modes(M, C)
    missing = [mu for mu in fixed if min(abs(mu - p) for p in poles) > 1e-6 * max(1.0, abs(mu))]
    if missing:
        raise PolePlacementError(
            "requested poles must include the fixed (unobservable) modes of (M, C): "
            + ", ".join(f"{mu.real:.6g}" if abs(mu.imag) < 1e-12 else f"{mu:.6g}" for mu in missing)
        )

    Mt, Ct = M.T, C.T
    V = np.zeros((n, n), dtype=complex)
    W = np.zeros((C.shape[0], n), dtype=complex)
    done = np.zeros(n, dtype=bool)
    col = 0
    order = sorted(range(n), key=lambda k: (poles[k].real, abs(poles[k].imag)))
    for k in order:
        if done[k]:
            continue
        lam = poles[k]
        if lam.imag < 0:
            # filled in together with its upper-half-plane partner
            continue
        kern = scipy.linalg.null_space(np.hstack([Mt - lam * np.eye(n), Ct]))
        if kern.shape[1] == 0:
            raise PolePlacementError(f"no eigenvector available for pole {lam}")
        v, w = _pick_direction(kern[:n], kern[n:], V[:, :col])
        V[:, col], W[:, col] = v, w
        done[k] = True
        col += 1
        if lam.imag != 0:
            partner = int(np.argmin([abs(p - np.conj(lam)) for p in poles]))
            V[:, col], W[:, col] = np.conj(v), np.conj(w)
            done[partner] = True
            col += 1
    if np.linalg.cond(V) > 1e12:
        raise PolePlacementError("eigenvector matrix is singular; poles may clash with fixed modes")
    K = -W @ np.linalg.inv(V)
    if np.abs(K.imag).max(initial=0.0) > 1e-8 * max(1.0, np.abs(K.real).max(initial=0.0)):
        log.warning("discarding imaginary part %.2e of the dual gain", np.abs(K.imag).max())
    L = K.real.T
    _check_spectrum(M - L @ C, poles, pole_tol)
    return L


def _pick_direction(Vb, Wb, chosen):
    """Combination of kernel columns whose v-part is most orthogonal to ``chosen``."""
    if chosen.shape[1]:
        q, _ = np.linalg.qr(chosen)
        proj = Vb - q @ (q.conj().T @ Vb)
    else:
        proj = Vb
    _, s, vh = np.linalg.svd(proj)
    c = vh[0].conj()
    v, w = Vb @ c, Wb @ c
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise PolePlacementError("pole coincides with an unobservable mode")
    # fix the phase so results are reproducible
    phase = v[np.argmax(np.abs(v))]
    phase = phase / abs(phase)
    return v / (nv * phase), w / (nv * phase)


def _check_spectrum(F, poles, pole_tol):
    achieved = np.linalg.eigvals(F)
    wanted = list(poles)
    for a in achieved:
        j = int(np.argmin([abs(a - p) for p in wanted]))
        p = wanted.pop(j)
        if abs(a - p) > pole_tol * max(1.0, abs(p)):
            raise PolePlacementError(
                f"achieved eigenvalue {a:.6g} misses requested pole {p:.6g} (tolerance {pole_tol})"
            )


def spectrum_error(F, poles) -> float:
    """Largest relative distance between ``eig(F)`` and ``poles`` after matching."""
    achieved = np.sort_complex(np.linalg.eigvals(F))
    wanted = list(poles)
    worst = 0.0
    for a in achieved:
        j = int(np.argmin([abs(a - p) for p in wanted]))
        p = wanted.pop(j)
        worst = max(worst, abs(a - p) / max(1.0, abs(p)))
    return worst


# ---------------------------------------------------------------------------
# Functional matrix


def build_T(A, B, r_max: int) -> np.ndarray:
    """``[B, AB, ..., A^(r_max-2) B]``; empty (n x 0) when ``r_max == 1``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    blocks = []
    AkB = B
    for _ in range(r_max - 1):
        blocks.append(AkB)
        AkB = A @ AkB
    if not blocks:
        return np.zeros((A.shape[0], 0))
    return np.hstack(blocks)


def _gram_schmidt_rows(Pmat, tol):
    """Orthonormal rows from the columns of a projector, taken in index order.

    When the subspace is spanned by unit vectors this returns exactly those
    unit vectors, which keeps ``Q`` readable.
    """
    basis = []
    for j in range(Pmat.shape[1]):
        v = Pmat[:, j].copy()
        for _ in range(2):
            for b in basis:
                v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > tol:
            basis.append(v / nv)
    if not basis:
        return np.zeros((0, Pmat.shape[0]))
    return np.vstack(basis)


def functional_matrix(T, C=None, r: RelativeDegreeProfile | None = None, rank_tol=None,
                      mode: str = "full") -> np.ndarray:
    """Orthonormal rows spanning the orthogonal complement of ``col(T)``.

    ``mode="reduced"`` additionally removes the direction of the output row
    with the largest relative degree (first such output on ties), since that
    combination is measured anyway.
    """
    if mode not in ("full", "reduced"):
        raise ValueError(f"mode must be 'full' or 'reduced', got {mode!r}")
    T = np.atleast_2d(np.asarray(T, dtype=float))
    n = T.shape[0]
    if T.shape[1]:
        s, tol = _rank_tol_abs(T, rank_tol)
        U, _, _ = np.linalg.svd(T, full_matrices=False)
        U = U[:, : int(np.sum(s > tol))]
    else:
        U = np.zeros((n, 0))
    proj = np.eye(n) - U @ U.T
    if mode == "reduced":
        if C is None or r is None:
            raise ValueError("reduced mode needs C and the relative-degree profile")
        C = np.atleast_2d(np.asarray(C, dtype=float))
        i = int(np.argmax(r.r))
        c = proj @ C[i]
        if np.linalg.norm(c) > 1e-12 * max(1.0, np.linalg.norm(C[i])):
            c = c / np.linalg.norm(c)
            proj = proj - np.outer(c, c)
    Q = _gram_schmidt_rows(proj, 1e-8)
    if Q.shape[0] == 0:
        raise InfeasibleDesign("orthogonal complement of span{B, AB, ...} is empty: rank(T) = n")
    return Q


@dataclass(frozen=True)
class ConditionCheck:
    ok: bool
    residuals: tuple  # max |Q A^i B| for i = 0..r_max-2

    def __bool__(self):
        return self.ok


def verify_functional_condition(Q, A, B, r_max: int, tol=CONDITION_TOL) -> ConditionCheck:
    """Check ``Q A^i B = 0`` for ``i = 0..r_max-2`` relative to ``|Q| |A^i B|``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    AiB = np.atleast_2d(np.asarray(B, dtype=float))
    ok = True
    res = []
    for _ in range(max(r_max - 1, 0)):
        val = np.abs(Q @ AiB).max(initial=0.0)
        scale = max(1.0, np.abs(Q).sum(axis=1).max(initial=0.0) * np.abs(AiB).max(initial=0.0))
        res.append(float(val))
        ok = ok and bool(val <= tol * scale)
        AiB = A @ AiB
    return ConditionCheck(ok, tuple(res))


# ---------------------------------------------------------------------------
# Realization


@dataclass(frozen=True)
class FunctionalObserverRealization:
    """Derivative-free observer ``z' = F z + (Gamma + L) y``, ``xbar_hat = Q z + Theta y``.

    ``Gamma[:, i] = F^r_i G e_i`` and ``Theta[:, i] = Q F^(r_i-1) G e_i``.
    """

    F: np.ndarray
    L: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    r: RelativeDegreeProfile
    Gamma: np.ndarray
    Theta: np.ndarray
    poles: tuple = ()
    injection: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "injection", self.Gamma + self.L)

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def q(self):
        return self.Q.shape[0]

    def rhs(self, z, y):
        return realization_rhs(self, z, y)

    def output(self, z, y):
        return self.Q @ z + self.Theta @ y

    def z_for_estimate(self, xhat0, x0, plant: LtiSystem):
        """Initial ``z`` making the implied full-state estimate equal ``xhat0``.

        The output derivatives ``y_i^(j)(0) = C_i A^j x0`` (exact for
        ``j < r_i``) come from the plant's initial state.
        """
        z0 = np.array(xhat0, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        FkG = _powers_times(self.F, self.G, self.r.r_max)
        for i, ri in enumerate(self.r.r):
            for k in range(ri):
                deriv = plant.C[i] @ np.linalg.matrix_power(plant.A, ri - 1 - k) @ x0
                z0 -= FkG[k][:, i] * deriv
        return z0

    def to_dict(self):
        return {
            "type": "uio",
            "F": self.F.tolist(),
            "L": self.L.tolist(),
            "G": self.G.tolist(),
            "Q": self.Q.tolist(),
            "Gamma": self.Gamma.T.tolist(),
            "Theta": self.Theta.T.tolist(),
            "r": list(self.r.r),
            "poles": _poles_to_json(self.poles),
        }

    @classmethod
    def from_dict(cls, d):
        F = np.array(d["F"], dtype=float)
        n = F.shape[0]
        Q = np.atleast_2d(np.array(d["Q"], dtype=float))
        r = RelativeDegreeProfile(tuple(d["r"]))
        Gamma = np.array(d["Gamma"], dtype=float).reshape(len(r), n).T
        Theta = np.array(d["Theta"], dtype=float).reshape(len(r), Q.shape[0]).T
        return cls(F, np.array(d["L"], dtype=float).reshape(n, len(r)),
                   np.array(d["G"], dtype=float).reshape(n, len(r)), Q, r, Gamma, Theta,
                   _poles_from_json(d.get("poles", [])))


def _powers_times(F, G, kmax):
    out = [np.array(G, dtype=float)]
    for _ in range(kmax):
        out.append(F @ out[-1])
    return out


def build_realization(gains: UioGains, Q, r: RelativeDegreeProfile, plant: LtiSystem | None = None,
                      tol=CONDITION_TOL) -> FunctionalObserverRealization:
    """Assemble the derivative-free realization.

    Besides ``Q A^i B = 0`` (checked when ``plant`` is given) the exact
    requirement ``Q F^k G e_i = 0`` for ``k <= r_i - 2`` is verified directly:
    the two agree when ``C A^j B = 0`` for the orders involved but can differ
    for mixed relative degrees, and only the latter removes every output
    derivative from the estimate.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    F, G = gains.F, gains.G
    n = F.shape[0]
    if Q.shape[1] != n:
        raise DimensionError(f"Q has {Q.shape[1]} columns, expected {n}")
    if G.shape[1] != len(r.r):
        raise DimensionError(f"G has {G.shape[1]} columns, profile has {len(r.r)} outputs")
    if plant is not None:
        chk = verify_functional_condition(Q, plant.A, plant.B, r.r_max, tol)
        if not chk:
            raise InfeasibleDesign(f"Q A^i B = 0 violated, residuals {chk.residuals}")
    eig = np.linalg.eigvals(F)
    if eig.real.max() >= 0:
        raise InfeasibleDesign(f"F is not Hurwitz: max Re eig = {eig.real.max():.4g}")

    FkG = _powers_times(F, G, r.r_max)
    qscale = np.abs(Q).sum(axis=1).max()
    for i, ri in enumerate(r.r):
        for k in range(ri - 1):
            val = np.abs(Q @ FkG[k][:, i]).max()
            if val > tol * max(1.0, qscale * np.abs(FkG[k][:, i]).max()):
                raise InfeasibleDesign(
                    f"Q F^{k} G e_{i + 1} = {val:.3e} != 0: output {i + 1} derivative "
                    "would enter the estimate"
                )
    Gamma = np.column_stack([FkG[ri][:, i] for i, ri in enumerate(r.r)])
    Theta = np.column_stack([Q @ FkG[ri - 1][:, i] for i, ri in enumerate(r.r)])
    return FunctionalObserverRealization(F, gains.L, G, Q, r, Gamma, Theta, tuple(gains.poles))


def realization_rhs(real: FunctionalObserverRealization, z, y):
    """``(z', xbar_hat)`` for the current observer state and measured output."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.asarray(z, dtype=float)
    return real.F @ z + real.injection @ y, real.Q @ z + real.Theta @ y


# ---------------------------------------------------------------------------
# One-call design


@dataclass(frozen=True)
class UioDesign:
    plant: LtiSystem
    r: RelativeDegreeProfile
    P: np.ndarray
    N: np.ndarray
    gains: UioGains
    T: np.ndarray
    Q: np.ndarray
    realization: FunctionalObserverRealization
    condition: ConditionCheck


def design_uio(plant: LtiSystem, r: RelativeDegreeProfile, poles, mode="full",
               rank_tol=None, pole_tol=POLE_TOL) -> UioDesign:
    """Run the whole synthesis for ``plant`` with profile ``r``."""
    P = build_P(plant, r)
    N = build_N(plant, r)
    G = compute_G(plant.B, N, rank_tol)
    M = compute_M(plant.A, G, P)
    if not check_detectability(plant.A, plant.C):
        log.warning("(A, C) is not detectable")
    L = place_observer_gain(M, plant.C, poles, pole_tol)
    gains = UioGains(G, M, L, M - L @ plant.C, normalize_poles(poles))
    T = build_T(plant.A, plant.B, r.r_max)
    Q = functional_matrix(T, plant.C, r, rank_tol, mode)
    cond = verify_functional_condition(Q, plant.A, plant.B, r.r_max)
    real = build_realization(gains, Q, r, plant)
    return UioDesign(plant, r, P, N, gains, T, Q, real, cond)


def _poles_to_json(poles):
    return [p.real if p.imag == 0 else [p.real, p.imag] for p in (complex(v) for v in poles)]


def _poles_from_json(items):
    return tuple(complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in items)
