"""Reflecting SDE integrators.

``wong_zakai_batch`` integrates the reflecting ODE driven by the piecewise
linear interpolant of a Brownian path; each coarse interval is split into
``substeps`` explicit substeps followed by one boundary correction.
``euler_batch`` takes one frozen-coefficient step per interval with the true
Brownian increment and the Stratonovich-corrected drift, then corrects once.

Both work on batches of paths at once; the single-path functions are thin
wrappers that also attach push records.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import Coefficients, fd_dsigma
from .errors import ConfigurationError, SubstepTooCoarseError
from .geometry import BOUNDARY_TOL, Domain
from .paths import SampledPath, TimeGrid
from .skorokhod import push_records_from

INTEGRATORS = ("heun", "euler")


@dataclass
class BatchResult:
    """Node values recorded every ``stride`` coarse steps, plus optional substep arrays."""

    x: np.ndarray
    phi: np.ndarray
    tv: np.ndarray
    y: np.ndarray
    failed: np.ndarray
    stride: int
    sub: dict = field(default_factory=dict)


@dataclass
class TrajectoryPair:
    X: SampledPath
    Phi: SampledPath
    tv: np.ndarray
    Y: SampledPath
    scheme: str
    level: int
    substeps: int = 1
    push_records: list = field(default_factory=list)

    def nodes(self) -> np.ndarray:
        """X at the level-N grid nodes."""
        return self.X.values[:: self.substeps]

    def to_csv(self, fh) -> None:
        d = self.X.dim
        fh.write(f"# scheme={self.scheme},level={self.level}\n")
        cols = ["t"] + [f"xi_{i + 1}" for i in range(d)] + [f"phi_{i + 1}" for i in range(d)] + ["tv"]
        fh.write(",".join(cols) + "\n")
        for t, x, p, v in zip(self.X.grid.nodes, self.X.values, self.Phi.values, self.tv):
            fh.write(",".join(f"{u:.17g}" for u in (t, *x, *p, v)) + "\n")


def _check_start(domain: Domain, coeff: Coefficients, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.size != domain.dimension or coeff.dim != domain.dimension:
        raise ValueError("dimensions of domain, coefficients and start point disagree")
    if not domain.contains(x0, BOUNDARY_TOL):
        raise ValueError(f"start point {x0} lies outside the closed domain")
    return x0


class _Recorder:
    def __init__(self, P, steps, stride, d, substeps=0):
        if steps % stride:
            raise ValueError("record stride must divide the step count")
        n = steps // stride + 1
        self.stride = stride
        self.x = np.empty((P, n, d))
        self.phi = np.zeros((P, n, d))
        self.tv = np.zeros((P, n))
        self.y = np.empty((P, n, d))
        self.sub = {}
        if substeps:
            K = steps * substeps
            self.sub = {"x": np.empty((P, K + 1, d)), "phi": np.zeros((P, K + 1, d)),
                        "tv": np.zeros((P, K + 1)), "y": np.empty((P, K + 1, d)),
                        "corr": np.zeros((P, K, d))}

    def node(self, k, x, phi, tv, y):
        if k % self.stride == 0:
            i = k // self.stride
            self.x[:, i], self.phi[:, i], self.tv[:, i], self.y[:, i] = x, phi, tv, y

    def substep(self, j, x, phi, tv, y, corr=None):
        if self.sub:
            s = self.sub
            s["x"][:, j], s["phi"][:, j], s["tv"][:, j], s["y"][:, j] = x, phi, tv, y
            if corr is not None:
                s["corr"][:, j - 1] = corr


class _Corrector:
    """Boundary correction with failure tracking shared by both schemes."""

    def __init__(self, domain: Domain, P: int):
        self.correct = domain.correct
        self.convex = domain.convex
        self.limit = 0.5 * domain.exterior_radius
        self.failed = np.zeros(P, dtype=bool)
        self.any_failed = False

    def __call__(self, x, dy):
        pre = x + dy
        y, bad = self.correct(pre)
        if not self.convex:
            bad = bad | (np.sqrt(np.einsum("pi,pi->p", dy, dy)) >= self.limit)
        if self.any_failed or bad.any():
            self.failed |= bad
            self.any_failed = True
            y = np.where(self.failed[:, None], x, y)
            dy = np.where(self.failed[:, None], 0.0, dy)
            pre = x + dy
        elif y is pre:
            # nothing left the domain
            return y, None, dy
        return y, y - pre, dy


def _norms(c):
    return np.sqrt(np.einsum("pi,pi->p", c, c))


def wong_zakai_batch(domain: Domain, coeff: Coefficients, B: np.ndarray, horizon: float, N: int,
                     substeps: int, x0, stride: int = 1, record_substeps: bool = False,
                     integrator: str = "heun") -> BatchResult:
    """Wong-Zakai scheme for a (P, K+1, n) batch of driver paths on a K-step grid.

    Each coarse interval has constant driver velocity ``dB_k / Delta``; the
    reflecting ODE is advanced in ``substeps`` explicit steps (Heun by default,
    forward Euler optionally) with a boundary correction after each.
    """
    if integrator not in INTEGRATORS:
        raise ValueError(f"integrator must be one of {INTEGRATORS}")
    if substeps < 1:
        raise ValueError("need at least one substep")
    x0 = _check_start(domain, coeff, x0)
    P, K1, n = B.shape
    r = TimeGrid(horizon, K1 - 1).ratio_to(N)
    coarse = B[:, ::r]
    delta = horizon / N
    h = delta / substeps
    vel = np.diff(coarse, axis=1) / delta
    d = domain.dimension

    rec = _Recorder(P, N, stride, d, substeps if record_substeps else 0)
    corrector = _Corrector(domain, P)
    x = np.broadcast_to(x0, (P, d)).copy()
    phi = np.zeros((P, d))
    tv = np.zeros(P)
    y = x.copy()
    rec.node(0, x, phi, tv, y)
    rec.substep(0, x, phi, tv, y)
    b = coeff.const_drift
    field_at = (lambda z, v: coeff.sigma_times(z, v) + b) if b is not None else \
        (lambda z, v: coeff.sigma_times(z, v) + coeff.drift(z))
    # with additive noise and constant drift the field is state-free: one evaluation per interval
    state_free = coeff.additive and b is not None
    j = 0
    for k in range(N):
        v = vel[:, k]
        if state_free:
            step = h * field_at(x, v)
        for _ in range(substeps):
            if state_free:
                dy = step
            elif integrator == "heun":
                f1 = field_at(x, v)
                dy = 0.5 * h * (f1 + field_at(x + h * f1, v))
            else:
                dy = h * field_at(x, v)
            x, c, dy = corrector(x, dy)
            y = y + dy
            if c is not None:
                phi = phi + c
                tv = tv + _norms(c)
            j += 1
            rec.substep(j, x, phi, tv, y, c)
        rec.node(k + 1, x, phi, tv, y)
    return BatchResult(rec.x, rec.phi, rec.tv, rec.y, corrector.failed, stride, rec.sub)


def euler_batch(domain: Domain, coeff: Coefficients, B: np.ndarray, horizon: float, N: int, x0,
                stride: int = 1, correction: bool = True, exact_dsigma: bool = True) -> BatchResult:
    """Projected Euler scheme with Stratonovich-corrected drift, one correction per interval."""
    x0 = _check_start(domain, coeff, x0)
    P, K1, n = B.shape
    r = TimeGrid(horizon, K1 - 1).ratio_to(N)
    dB = np.diff(B[:, ::r], axis=1)
    delta = horizon / N
    d = domain.dimension

    rec = _Recorder(P, N, stride, d, 1)
    corrector = _Corrector(domain, P)
    x = np.broadcast_to(x0, (P, d)).copy()
    phi = np.zeros((P, d))
    tv = np.zeros(P)
    y = x.copy()
    rec.node(0, x, phi, tv, y)
    rec.substep(0, x, phi, tv, y)
    for k in range(N):
        drift = coeff.drift(x)
        if correction:
            ds = coeff.dsigma(x) if (exact_dsigma and coeff.dsigma is not None) else fd_dsigma(coeff, x)
            drift = drift + 0.5 * np.einsum("...ikj,...jk->...i", ds, coeff.sigma(x))
        dy = coeff.sigma_times(x, dB[:, k]) + drift * delta
        x, c, dy = corrector(x, dy)
        y = y + dy
        if c is not None:
            phi = phi + c
            tv = tv + _norms(c)
        rec.substep(k + 1, x, phi, tv, y, c)
        rec.node(k + 1, x, phi, tv, y)
    return BatchResult(rec.x, rec.phi, rec.tv, rec.y, corrector.failed, stride, rec.sub)


def _single(res: BatchResult, horizon: float, N: int, substeps: int, scheme: str) -> TrajectoryPair:
    if res.failed[0]:
        raise SubstepTooCoarseError("boundary correction failed: substep too coarse for the domain")
    s = res.sub
    grid = TimeGrid(horizon, N * substeps)
    return TrajectoryPair(SampledPath(grid, s["x"][0]), SampledPath(grid, s["phi"][0]), s["tv"][0],
                          SampledPath(grid, s["y"][0]), scheme, N, substeps, push_records_from(s["corr"][0]))


def solve_wong_zakai(domain: Domain, coeff: Coefficients, B: SampledPath, N: int, substeps: int = 16,
                     x0=None, integrator: str = "heun") -> TrajectoryPair:
    """Wong-Zakai approximation X^N on the substep grid of level ``N``."""
    res = wong_zakai_batch(domain, coeff, B.values[None], B.grid.horizon, N, substeps, x0,
                           record_substeps=True, integrator=integrator)
    return _single(res, B.grid.horizon, N, substeps, "wong_zakai")


def solve_euler(domain: Domain, coeff: Coefficients, B: SampledPath, N: int, x0=None,
                correction: bool = True, exact_dsigma: bool = True) -> TrajectoryPair:
    """Euler approximation on the level-``N`` grid."""
    res = euler_batch(domain, coeff, B.values[None], B.grid.horizon, N, x0,
                      correction=correction, exact_dsigma=exact_dsigma)
    return _single(res, B.grid.horizon, N, 1, "euler")


MIN_REFERENCE_RATIO = 8


def check_reference(reference_level: int, study_levels) -> None:
    top = max(study_levels)
    if reference_level < MIN_REFERENCE_RATIO * top:
        raise ConfigurationError(
            f"reference level {reference_level} must be at least {MIN_REFERENCE_RATIO}x the largest study level {top}")
    for N in study_levels:
        if reference_level % N:
            raise ConfigurationError(f"study level {N} does not divide the reference level {reference_level}")


def solve_reference(domain: Domain, coeff: Coefficients, B: SampledPath, substeps: int = 16, x0=None,
                    study_levels=None, integrator: str = "heun") -> TrajectoryPair:
    """Finest-level Wong-Zakai solution used as a proxy for the exact solution."""
    if study_levels is not None:
        check_reference(B.grid.steps, study_levels)
    traj = solve_wong_zakai(domain, coeff, B, B.grid.steps, substeps, x0, integrator)
    traj.scheme = "reference"
    return traj
