"""Functional matrix for a chain of four integrators measured through x1 + x2.

T = [B, AB] spans e3, e4; the full-mode Q selects x1, x2 and the reduced
mode also drops the output direction, leaving (x1 - x2)/sqrt(2).
"""

import numpy as np

from fuio import cases
from fuio.system_model import LtiSystem, compute_relative_degrees, unobservable_modes
from fuio.uio_synth import build_T, design_uio, functional_matrix

plant = LtiSystem(cases.KERNEL_A, cases.KERNEL_B, cases.KERNEL_C)
r = compute_relative_degrees(plant)
T = build_T(plant.A, plant.B, r.r_max)
print("r =", r.r)
print("T =\n", T)
print("Q full    =", functional_matrix(T, mode="full").round(6).tolist())
print("Q reduced =", functional_matrix(T, plant.C, r, mode="reduced").round(6).tolist())

d = design_uio(plant, r, (-1.0, -4.0, -5.0, -6.0), mode="reduced")
print("fixed modes of (M, C):", unobservable_modes(d.gains.M, plant.C))
print("eig(F) =", np.sort(np.linalg.eigvals(d.gains.F).real))
