"""Compare the derivative-free observer with the observer fed exact output derivatives.

Both start from matching states, so their functional estimates should
agree to rounding level.  The run covers the five-state plant and a
batch of random feasible plants.
"""

import numpy as np

from fuio import cases
from fuio.random_systems import random_cases
from fuio.sim_engine import compare_oracle
from fuio.system_model import LtiSystem, RelativeDegreeProfile
from fuio.uio_synth import design_uio

plant = LtiSystem(cases.MIMO_A, cases.MIMO_B, cases.MIMO_C)
d = design_uio(plant, RelativeDegreeProfile(cases.MIMO_R_OVERRIDE), cases.MIMO_POLES)
cmp = compare_oracle(plant, d.realization, cases.MIMO_F, cases.MIMO_X0, None, 10.0, 1e-4)
print(f"five-state plant: deviation {cmp.max_deviation:.2e}, expm law {cmp.linear_law_error:.2e}")

for c in random_cases(10, seed=2024):
    f = ["sin(1.3*t)", "cos(2*t)"][: c.plant.m]
    x0 = np.cos(np.arange(c.plant.n) + 1.0)
    r = compare_oracle(c.plant, c.design.realization, f, x0, None, 10.0, 1e-3)
    print(f"n={c.plant.n} m={c.plant.m} r={c.design.r.r}: deviation {r.max_deviation:.1e}")
