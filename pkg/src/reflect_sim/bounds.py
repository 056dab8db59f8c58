"""Closed-form estimates of the local-time total variation.

Inputs that overflow double precision evaluate to ``inf`` (a valid, if
useless, upper bound) instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import INFINITE_RADIUS


@dataclass(frozen=True)
class BoundInputs:
    q: float = 1.0
    omega: float = 0.0
    sup_osc: float = 0.0
    beta: float | None = None
    delta: float | None = None
    r0: float = INFINITE_RADIUS
    R0: float | None = None
    sup_xi: float | None = None

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be at least 1")
        for name in ("omega", "sup_osc", "sup_xi"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.beta is not None and self.beta < 1:
            raise ValueError("beta must be at least 1")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive (use inf for convex domains)")


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def G(a: float, beta: float, delta: float, r0: float = INFINITE_RADIUS) -> float:
    """4 (1 + beta e) e with e = exp(beta (2 delta + a) / (2 r0)); e == 1 when r0 is infinite."""
    if a < 0:
        raise ValueError("G is defined for a >= 0")
    e = 1.0 if math.isinf(r0) else _exp(beta * (2.0 * delta + a) / (2.0 * r0))
    return 4.0 * (1.0 + beta * e) * e


def local_time_bound_AB(inp: BoundInputs) -> float:
    """Bound on ||phi||_[s,t] under the exterior-sphere and normal-direction conditions."""
    if inp.beta is None or inp.delta is None:
        raise ValueError("beta and delta are required")
    if not inp.delta > 0:
        raise ValueError("delta must be positive")
    if inp.sup_osc == 0.0:
        return 0.0
    g = G(inp.sup_osc, inp.beta, inp.delta, inp.r0)
    if math.isinf(g):
        return math.inf
    try:
        inner = (g / inp.delta + 1.0) ** inp.q * inp.omega + 1.0
    except OverflowError:
        return math.inf
    return inp.beta * inner * (g + 2.0) * inp.sup_osc


def local_time_bound_convex(inp: BoundInputs) -> float:
    """Bound on ||phi||_[s,t] for a convex domain containing a closed ball of radius R0 around x0.

    ``sup_xi`` is max_t |xi(t) - x0| over the whole horizon.
    """
    if inp.R0 is None or inp.sup_xi is None:
        raise ValueError("R0 and sup_xi are required")
    if not inp.R0 > 0:
        raise ValueError("R0 must be positive")
    if inp.sup_osc == 0.0:
        return 0.0
    growth = 1.0 + 4.0 * inp.sup_xi ** 2 / inp.R0 ** 2
    try:
        inner = (16.0 / inp.R0 * math.sqrt(growth) + 1.0) ** inp.q * inp.omega + 1.0
    except OverflowError:
        return math.inf
    return 10.0 * inner * growth * inp.sup_osc


def G_convex_limit(R: float, R0: float) -> float:
    """G with r0 -> inf and the truncated-domain beta: 4 (1 + sqrt(1 + (2R/R0)^2))."""
    return 4.0 * (1.0 + math.sqrt(1.0 + (2.0 * R / R0) ** 2))
