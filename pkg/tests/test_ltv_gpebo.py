import numpy as np
import pytest
import scipy.integrate

from fuio import cases
from fuio.errors import ExprEvalError
from fuio.ltv_gpebo import (
    GpeboState,
    ReducedLtvSystem,
    frozen_stability_scan,
    functional_matrix_ltv,
    gpebo_rhs,
    reconstruct_x_beta,
    reduce_to_w,
)
from fuio.system_model import LtvCanonicalSystem
from fuio.time_expr import parse_time_expr


def ltv():
    return LtvCanonicalSystem(4, cases.LTV_C)


def test_companion_matrices():
    red = reduce_to_w(ltv())
    assert red.beta == 3 and red.order == 2
    R, D = red.R_D(0.0)
    assert np.allclose(R, [[0, 1], [-1.0, -2.0]])
    assert np.allclose(D, [0, 1.0])
    assert np.array_equal(red.R(1.3), red.R_D(1.3)[0])
    assert np.array_equal(red.D(1.3), red.R_D(1.3)[1])


def test_w_dynamics_reproduce_chain():
    # w' = R w + D y must agree with the chain's own x1' = x2, x2' = x3
    red = reduce_to_w(ltv())
    sys = ltv()
    rng = np.random.default_rng(0)
    for t in (0.0, 2.0, 7.5):
        x = rng.normal(size=4)
        y = sys.output_row(t) @ x
        R, D = red.R_D(t)
        assert np.allclose(R @ x[:2] + D * y, [x[1], x[2]])


def test_vanishing_leading_coefficient():
    red = ReducedLtvSystem(2, (parse_time_expr("1"), parse_time_expr("t-1")))
    with pytest.raises(ExprEvalError):
        red.R(1.0)


def test_functional_matrix_and_reconstruction():
    assert np.array_equal(functional_matrix_ltv(4, 3), np.eye(2, 4))
    with pytest.raises(ValueError):
        functional_matrix_ltv(4, 1)
    sys = ltv()
    x = np.array([0.3, -0.2, 0.7, 1.1])
    t = 0.4
    y = sys.output_row(t) @ x
    assert np.isclose(reconstruct_x_beta(x[:2], y, sys, t), x[2])


def test_state_pack_round_trip():
    s = GpeboState.initial([1.0, 2.0])
    back = GpeboState.unpack(s.pack(), 2)
    assert np.array_equal(back.xi, [1.0, 2.0]) and np.array_equal(back.Phi, np.eye(2))
    dxi, dPhi = gpebo_rhs(s, np.array([[0, 1], [-1, -1]]), np.array([0, 1]), 2.0)
    assert np.allclose(dxi, [2, -1]) and np.allclose(dPhi, [[0, 1], [-1, -1]])


def test_frozen_scan_margin():
    red = reduce_to_w(ltv())
    scan = frozen_stability_scan(red, np.linspace(0, 20, 2001))
    # worst case a = c2/c3 = 3: roots of s^2 + 3 s + 1, margin (3 - sqrt 5) / 2
    assert abs(scan.margin - (3 - np.sqrt(5)) / 2) < 1e-6
    assert scan.stable
    assert "heuristic" in scan.note
    with pytest.raises(ValueError):
        frozen_stability_scan(red, [])


def test_identity_against_scipy():
    # the copy observer's error is propagated by an independently integrated Phi
    red = reduce_to_w(ltv())

    def rhs(t, s):
        R = red.R(t)
        return np.concatenate([R @ s[:2], (R @ s[2:].reshape(2, 2)).ravel()])

    e0 = np.array([0.7, -0.4])
    sol = scipy.integrate.solve_ivp(rhs, (0, 5), np.concatenate([e0, np.eye(2).ravel()]),
                                    rtol=1e-11, atol=1e-13)
    Phi = sol.y[2:, -1].reshape(2, 2)
    assert np.allclose(sol.y[:2, -1], Phi @ e0, atol=1e-9)


def test_to_dict():
    d = reduce_to_w(ltv()).to_dict()
    assert d["type"] == "gpebo" and d["beta"] == 3 and len(d["c"]) == 3
