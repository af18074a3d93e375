"""Brute-force oracles the trainer tests check against."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar


def leaf_objective_min(g, h, lam: float) -> float:
    """Minimum over v of sum_i (g_i*v + 0.5*h_i*v^2) + 0.5*lam*v^2, found by
    scalar search over v rather than the closed form."""

    def obj(v: float) -> float:
        acc = math.fsum(gi * v + 0.5 * hi * v * v for gi, hi in zip(g, h))
        return acc + 0.5 * lam * v * v

    res = minimize_scalar(obj, method="brent", options={"xtol": 1e-12})
    return float(res.fun)


def brute_force_gain(g, h, left_mask, lam: float, gamma: float) -> float:
    """Objective decrease of replacing one leaf by two, each at its optimal
    value (computed by direct evaluation, independent of the gain formula)."""
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    parent = leaf_objective_min(g, h, lam) + gamma
    left = leaf_objective_min(g[left_mask], h[left_mask], lam) + gamma
    right = leaf_objective_min(g[~left_mask], h[~left_mask], lam) + gamma
    return parent - (left + right)
