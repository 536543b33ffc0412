"""Closed-form trajectories of the two-area heater, for checking the
integrator independently of it."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq


def heater(a: float, b: float, u: float, t: float) -> tuple[float, float]:
    """State at time ``t`` from ``(a, b)`` with heater input ``u``."""
    e = math.exp(-t)
    return u + (a - u) * e, u + ((a - u) * t + (b - u)) * e


def safe_violation(p) -> float:
    t1, t2 = p
    return max(-t1, t1 - 1, -t2, t2 - 1, abs(t1 - t2) - 0.25)


def exit_time(a: float, b: float, u: float, t_max: float, dt: float = 1e-3) -> float | None:
    """First time the closed-form trajectory leaves the safe region, or None.

    Scans for a sign change of the violation and refines with Brent's method.
    """
    g = lambda t: safe_violation(heater(a, b, u, t))  # noqa: E731
    if g(0.0) > 0:
        raise ValueError("start outside the safe region")
    prev = 0.0
    for t in np.arange(dt, t_max + dt, dt):
        if g(t) > 0:
            return brentq(g, prev, float(t), xtol=1e-14, rtol=1e-15)
        prev = float(t)
    return None


def random_safe_starts(rng: np.random.Generator, count: int) -> list[tuple[float, float]]:
    out = []
    while len(out) < count:
        p = tuple(float(x) for x in rng.uniform(0, 1, 2))
        if safe_violation(p) <= 0:
            out.append(p)
    return out
