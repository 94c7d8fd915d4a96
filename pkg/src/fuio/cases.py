"""Built-in plants and experiments used by the demos and the test-suite."""

import numpy as np

# Five-state, two-output plant.  Row 4 of A is the chain row [0 0 0 0 1];
# with it, M = A - G P comes out as the published observer matrix.
MIMO_A = np.array([
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
    [-1.0, -2.0, -3.0, -5.0, -5.0],
])
# As printed in the source; inconsistent with the published G, M.
MIMO_A_PRINTED = MIMO_A.copy()
MIMO_A_PRINTED[3] = [0.0, 0.0, 0.0, 1.0, 1.0]
MIMO_B = np.array([[0.0], [0.0], [0.0], [0.0], [1.0]])
MIMO_C = np.array([[1.0, 1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 1.0, 0.0, 0.0]])
MIMO_R_OVERRIDE = (3, 3)
MIMO_POLES = (-4.0, -5.0, -6.0, -7.0, -8.0)
MIMO_X0 = (1.0, -1.0, 0.3, -0.5, 0.0)
MIMO_F = "sin(2*t) + 0.5*cos(5*t)"

# Published design, for comparison.
MIMO_G_PUBLISHED = np.array([[0, 0], [0, 0], [0, 0], [0, 0], [0, 1.0]])
MIMO_M_PUBLISHED = np.array([
    [0, 1, 0, 0, 0],
    [0, 0, 1, 0, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
    [0, 0, 0, -1, 0],
], dtype=float)
MIMO_L_PUBLISHED = np.array([
    [-11.20, 0.30],
    [23.28, 0.58],
    [7.42, 17.62],
    [-66.96, 102.93],
    [-129.54, 174.26],
])
MIMO_Q_PUBLISHED = np.eye(3, 5)

# Chain of four integrators with y = x1 + x2 (relative degree 3).
KERNEL_A = np.eye(4, k=1)
KERNEL_B = np.array([[0.0], [0.0], [0.0], [1.0]])
KERNEL_C = np.array([[1.0, 1.0, 0.0, 0.0]])
KERNEL_T_PUBLISHED = np.array([[0, 0], [0, 0], [0, 1], [1, 0]], dtype=float)

# Fourth-order LTV plant with a time-varying output row.
LTV_PLANT_A = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [-1.0, -4.0, -6.0, -4.0],
])
LTV_PLANT_B = np.array([[0.0], [0.0], [0.0], [1.0]])
LTV_C = ("1", "2+sin(0.3*t)", "1", "0")
LTV_X0 = (1.0, 0.5, -0.5, 0.0)
LTV_U = "0"


def mimo_system_dict():
    return {
        "type": "lti",
        "A": MIMO_A.tolist(),
        "B": MIMO_B.tolist(),
        "C": MIMO_C.tolist(),
        "r_override": list(MIMO_R_OVERRIDE),
    }


def mimo_scenario_dict():
    return {"x0": list(MIMO_X0), "z0": "zero", "f": [MIMO_F], "t_final": 3.0, "dt": 1e-3}


def kernel_system_dict():
    return {"type": "lti", "A": KERNEL_A.tolist(), "B": KERNEL_B.tolist(), "C": KERNEL_C.tolist()}


def ltv_system_dict():
    return {
        "type": "ltv_chain",
        "n": 4,
        "c": list(LTV_C),
        "plant_A": LTV_PLANT_A.tolist(),
        "plant_B": LTV_PLANT_B.tolist(),
    }


def ltv_scenario_dict():
    return {"x0": list(LTV_X0), "u": LTV_U, "t_final": 20.0, "dt": 1e-3}
