"""Seeded generator of random plants that admit a functional UIO design.

Plants are shifted to have no eigenvalue with positive real part, so
absolute error tolerances stay meaningful over long horizons.  Every output
gets the same relative degree ``r`` by drawing the rows of
``C`` from the orthogonal complement of ``span{B, AB, ..., A^(r-2) B}``.
With more outputs than inputs a generic plant has no invariant zeros, so
``(M, C)`` is observable and any distinct pole set can be placed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InfeasibleDesign
from .system_model import LtiSystem, compute_relative_degrees
from .uio_synth import UioDesign, build_T, design_uio

__all__ = ["RandomCase", "random_feasible_system", "random_cases"]


@dataclass(frozen=True)
class RandomCase:
    seed: int
    plant: LtiSystem
    poles: tuple
    design: UioDesign


def _random_poles(rng, n):
    while True:
        re = -rng.uniform(1.0, 6.0, size=n)
        poles = list(re)
        if n >= 2 and rng.random() < 0.4:
            a, b = -rng.uniform(1.0, 4.0), rng.uniform(0.5, 3.0)
            poles[:2] = [complex(a, b), complex(a, -b)]
        pts = np.array(poles, dtype=complex)
        gaps = np.abs(pts[:, None] - pts[None, :]) + np.eye(n) * 10
        if gaps.min() > 0.3:
            return tuple(poles)


def random_feasible_system(rng, n_max=6, mode="full", max_tries=200):
    """Draw plants until one passes the whole synthesis; returns (plant, poles, design)."""
    for _ in range(max_tries):
        n = int(rng.integers(3, n_max + 1))
        m = int(rng.integers(1, 3))
        r = int(rng.integers(1, 4))
        free = n - (r - 1) * m
        l = m + 1  # noqa: E741
        if free < l:
            continue
        A = rng.normal(size=(n, n)) / np.sqrt(n)
        # shift so the plant state stays bounded over long horizons
        abscissa = np.linalg.eigvals(A).real.max()
        A -= max(0.0, abscissa + rng.uniform(0.0, 0.5)) * np.eye(n)
        B = rng.normal(size=(n, m))
        T = build_T(A, B, r)
        basis = scipy.linalg.null_space(T.T) if T.shape[1] else np.eye(n)
        C = rng.normal(size=(l, basis.shape[1])) @ basis.T
        plant = LtiSystem(A, B, C)
        try:
            prof = compute_relative_degrees(plant)
            if prof.r != (r,) * l:
                continue
            poles = _random_poles(rng, n)
            design = design_uio(plant, prof, poles, mode=mode)
        except InfeasibleDesign:
            continue
        if np.linalg.cond(design.gains.L) > 1e8 or np.abs(design.gains.L).max() > 1e4:
            continue
        return plant, poles, design
    raise RuntimeError("no feasible random system found")


def random_cases(count=20, seed=2024, n_max=6):
    """``count`` reproducible feasible cases."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        plant, poles, design = random_feasible_system(rng, n_max)
        out.append(RandomCase(seed, plant, poles, design))
    return out
