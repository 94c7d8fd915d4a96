"""Plant representations and relative-degree data.

Two plant families are supported:

* :class:`LtiSystem` -- ``x' = A x + B f``, ``y = C x`` with constant matrices
  and an unknown input ``f``.
* :class:`LtvCanonicalSystem` -- an integrator chain of order ``n`` whose scalar
  output is ``y = sum_i c_i(t) x_i`` with coefficients given as time
  expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InfeasibleDesign
from .time_expr import as_time_expr, is_structurally_zero, to_text

__all__ = [
    "LtiSystem", "LtvCanonicalSystem", "RelativeDegreeProfile", "ValidationReport",
    "validate_lti", "compute_relative_degrees", "apply_r_override", "build_P", "build_N",
    "beta_index", "check_detectability", "unobservable_modes", "numerical_rank", "upshift",
]

DEFAULT_ZERO_TOL = 1e-9


def upshift(n: int) -> np.ndarray:
    """n x n matrix with ones on the first superdiagonal."""
    return np.eye(n, k=1)


def numerical_rank(X, rank_tol=None) -> int:
    """Rank with singular values below ``max(shape) * eps * sigma_max`` treated as zero.

    ``rank_tol`` overrides the relative factor (``max(shape) * eps``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0
    rel = max(X.shape) * np.finfo(float).eps if rank_tol is None else rank_tol
    return int(np.sum(s > rel * s[0]))


@dataclass(frozen=True)
class LtiSystem:
    """Constant-coefficient plant ``x' = A x + B f``, ``y = C x``.

    Arrays are coerced to 2-D float on construction; use :func:`validate_lti`
    to check consistency.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1) if name == "B" else arr.reshape(1, -1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.C.shape[0]


@dataclass(frozen=True)
class ValidationReport:
    n: int
    m: int
    l: int  # noqa: E741
    rank_B: int
    warnings: tuple = ()

    @property
    def ok(self):
        return True


def validate_lti(sys: LtiSystem) -> ValidationReport:
    """Check shapes and finiteness; report ``rank(B)``.

    Raises :class:`DimensionError` for inconsistent shapes or non-finite
    entries.  A zero ``B`` is legal but flagged in ``warnings``.
    """
    A, B, C = sys.A, sys.B, sys.C
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    n = A.shape[0]
    if n < 1:
        raise DimensionError("state dimension must be at least 1")
    if B.ndim != 2 or B.shape[0] != n or B.shape[1] < 1:
        raise DimensionError(f"B must be {n} x m with m >= 1, got {B.shape}")
    if C.ndim != 2 or C.shape[1] != n or C.shape[0] < 1:
        raise DimensionError(f"C must be l x {n} with l >= 1, got {C.shape}")
    for name, arr in (("A", A), ("B", B), ("C", C)):
        if not np.all(np.isfinite(arr)):
            raise DimensionError(f"{name} has non-finite entries")
    rank_B = numerical_rank(B)
    warnings = ()
    if rank_B == 0:
        warnings = ("rank(B) = 0: the unknown input does not enter the plant",)
    return ValidationReport(n, B.shape[1], C.shape[0], rank_B, warnings)


@dataclass(frozen=True)
class RelativeDegreeProfile:
    """Per-output relative degrees.

    ``exact[i]`` is False when ``r[i]`` came from a user override rather than
    the structural computation.
    """

    r: tuple
    exact: tuple = None

    def __post_init__(self):
        r = tuple(int(v) for v in self.r)
        if not r:
            raise ValueError("relative-degree profile is empty")
        if any(v < 1 for v in r):
            raise ValueError(f"relative degrees must be >= 1, got {r}")
        object.__setattr__(self, "r", r)
        exact = (True,) * len(r) if self.exact is None else tuple(bool(v) for v in self.exact)
        if len(exact) != len(r):
            raise ValueError("exact flags must match r in length")
        object.__setattr__(self, "exact", exact)

    @property
    def r_max(self) -> int:
        return max(self.r)

    def __len__(self):
        return len(self.r)

    def __iter__(self):
        return iter(self.r)


def _row_tol(row_vec, B, zero_tol):
    scale = max(1.0, np.abs(row_vec).max(initial=0.0) * np.abs(B).sum(axis=0).max(initial=0.0))
    return zero_tol * scale


def compute_relative_degrees(sys: LtiSystem, zero_tol: float = DEFAULT_ZERO_TOL) -> RelativeDegreeProfile:
    """Structural relative degree of every output.

    ``r_i`` is the smallest ``j >= 1`` with ``C_i A^(j-1) B`` not zero.  An entry
    counts as zero when its magnitude is at most
    ``zero_tol * max(1, |C_i A^(j-1)|_max * |B|_1)``.
    """
    validate_lti(sys)
    A, B, C = sys.A, sys.B, sys.C
    r = []
    for i in range(sys.l):
        row = C[i].copy()
        for j in range(1, sys.n + 1):
            val = row @ B
            if np.abs(val).max() > _row_tol(row, B, zero_tol):
                r.append(j)
                break
            row = row @ A
        else:
            raise InfeasibleDesign(
                f"output {i + 1} has no relative degree: C_{i + 1} A^(j-1) B vanishes for j = 1..{sys.n}"
            )
    return RelativeDegreeProfile(tuple(r))


def apply_r_override(profile: RelativeDegreeProfile, override) -> RelativeDegreeProfile:
    """Replace structural degrees by user values that do not exceed them."""
    override = tuple(int(v) for v in override)
    if len(override) != len(profile.r):
        raise DimensionError(f"r_override has {len(override)} entries, system has {len(profile.r)} outputs")
    for i, (o, s) in enumerate(zip(override, profile.r)):
        if o < 1:
            raise ValueError(f"r_override[{i}] = {o} must be >= 1")
        if o > s:
            raise InfeasibleDesign(
                f"r_override[{i}] = {o} exceeds the structural relative degree {s}"
            )
    exact = tuple(o == s for o, s in zip(override, profile.r))
    return RelativeDegreeProfile(override, exact)


def _check_profile(sys, r):
    if len(r.r) != sys.l:
        raise DimensionError(f"profile has {len(r.r)} entries, system has {sys.l} outputs")
    if r.r_max > sys.n:
        raise ValueError(f"relative degree {r.r_max} exceeds n = {sys.n}")


def build_P(sys: LtiSystem, r: RelativeDegreeProfile) -> np.ndarray:
    """Stack the rows ``C_i A^(r_i)`` (l x n)."""
    _check_profile(sys, r)
    return np.vstack([sys.C[i] @ np.linalg.matrix_power(sys.A, ri) for i, ri in enumerate(r.r)])


def build_N(sys: LtiSystem, r: RelativeDegreeProfile) -> np.ndarray:
    """Matrix with entries ``C_i A^(r_i - 1) B_k`` (l x m)."""
    _check_profile(sys, r)
    return np.vstack([sys.C[i] @ np.linalg.matrix_power(sys.A, ri - 1) @ sys.B for i, ri in enumerate(r.r)])


def unobservable_modes(A, C, rank_tol: float = 1e-8) -> list:
    """Eigenvalues of ``A`` that fail the PBH rank test against ``C``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    modes = []
    for lam in np.linalg.eigvals(A):
        pbh = np.vstack([lam * np.eye(n) - A, C.astype(complex)])
        s = np.linalg.svd(pbh, compute_uv=False)
        if s[-1] <= rank_tol * max(s[0], 1.0):
            modes.append(complex(lam))
    return modes


def check_detectability(A, C, stability_margin: float = 0.0, rank_tol: float = 1e-8) -> bool:
    """PBH detectability test.

    Every eigenvalue ``lam`` of ``A`` with ``Re(lam) >= -stability_margin`` must
    give ``rank [lam I - A; C] = n``.  Singular values below
    ``rank_tol * sigma_max`` count as zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionError(f"C must have {n} columns, got {C.shape}")
    try:
        eigs = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleDesign(f"eigenvalue computation failed: {exc}") from exc
    for lam in eigs:
        if lam.real < -stability_margin:
            continue
        pbh = np.vstack([lam * np.eye(n) - A, C.astype(complex)])
        s = np.linalg.svd(pbh, compute_uv=False)
        if s[-1] <= rank_tol * max(s[0], 1.0):
            return False
    return True


@dataclass(frozen=True)
class LtvCanonicalSystem:
    """Integrator chain of order ``n`` with output row ``c(t)``.

    ``A`` is implicitly :func:`upshift` ``(n)`` and ``B`` the last unit column.
    """

    n: int
    c: tuple = field(default_factory=tuple)

    def __post_init__(self):
        c = tuple(as_time_expr(v) for v in self.c)
        if self.n < 1:
            raise DimensionError("chain order must be at least 1")
        if len(c) != self.n:
            raise DimensionError(f"expected {self.n} coefficients, got {len(c)}")
        object.__setattr__(self, "c", c)

    @property
    def A(self):
        return upshift(self.n)

    @property
    def B(self):
        return np.eye(self.n)[:, [-1]]

    def output_row(self, t: float) -> np.ndarray:
        return np.array([ci(t) for ci in self.c])

    def coefficient_texts(self):
        return [to_text(ci) for ci in self.c]


def beta_index(sys: LtvCanonicalSystem) -> int:
    """1-based index of the last coefficient that is not structurally zero.

    Raises :class:`InfeasibleDesign` when every coefficient is zero or when the
    index is 1 (nothing left to observe after the reduction).
    """
    nonzero = [i for i, ci in enumerate(sys.c, start=1) if not is_structurally_zero(ci)]
    if not nonzero:
        raise InfeasibleDesign("output row C(t) is identically zero")
    beta = nonzero[-1]
    if beta == 1:
        raise InfeasibleDesign("beta = 1: no reducible dynamics (the w-system is empty)")
    return beta
