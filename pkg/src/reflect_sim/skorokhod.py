"""Deterministic Skorohod problem for piecewise-linear inputs.

The discrete scheme advances along each substep of the input and then
applies one boundary correction (nearest-point projection for convex
domains, radial pushback for the exterior of a ball).  The local-time term is
the running sum of those corrections.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SubstepTooCoarseError
from .geometry import BOUNDARY_TOL, Domain, inverse_two_r0, sample_near
from .paths import SampledPath, TimeGrid, linear_refine

INTERIOR_TOL = 1e-6
PUSH_TOL = 1e-12


@dataclass(frozen=True)
class PushRecord:
    step: int
    normal: np.ndarray
    magnitude: float


@dataclass
class SkorohodSolution:
    xi: SampledPath
    phi: SampledPath
    tv: np.ndarray
    push_records: list = field(default_factory=list)

    def to_csv(self, fh, header_comment: str | None = None) -> None:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        d = self.xi.dim
        cols = ["t"] + [f"xi_{i + 1}" for i in range(d)] + [f"phi_{i + 1}" for i in range(d)] + ["tv"]
        fh.write(",".join(cols) + "\n")
        for t, x, p, v in zip(self.xi.grid.nodes, self.xi.values, self.phi.values, self.tv):
            fh.write(",".join(f"{u:.17g}" for u in (t, *x, *p, v)) + "\n")


def push_records_from(corrections: np.ndarray) -> list:
    """Push records from a (K, d) array of per-substep corrections; step j is the substep ending at node j+1."""
    mags = np.linalg.norm(corrections, axis=1)
    return [PushRecord(int(j) + 1, corrections[j] / mags[j], float(mags[j]))
            for j in np.flatnonzero(mags > 0.0)]


def reflect_increments(domain: Domain, x0: np.ndarray, increments: np.ndarray):
    """Advance-then-correct along a batch of increment sequences.

    ``x0`` has shape (P, d) and ``increments`` (P, K, d).  Returns
    ``(xi, phi, tv, corrections, failed)``: ``xi``/``phi`` of shape
    (P, K+1, d), ``tv`` of shape (P, K+1), ``corrections`` (P, K, d) and a
    per-path failure mask.  Failed paths are frozen at their last good state.
    """
    P, K, d = increments.shape
    xi = np.empty((P, K + 1, d))
    phi = np.zeros((P, K + 1, d))
    tv = np.zeros((P, K + 1))
    corr = np.zeros((P, K, d))
    failed = np.zeros(P, dtype=bool)
    limit = 0.5 * domain.exterior_radius
    x = np.array(x0, dtype=np.float64)
    xi[:, 0] = x
    for j in range(K):
        dx = increments[:, j]
        pre = x + dx
        y, bad = domain.correct(pre)
        if not domain.convex:
            bad = bad | (np.linalg.norm(dx, axis=-1) >= limit)
        bad = bad & ~failed
        failed |= bad
        y = np.where(failed[:, None], x, y)
        c = np.where(failed[:, None], 0.0, y - pre)
        corr[:, j] = c
        phi[:, j + 1] = phi[:, j] + c
        tv[:, j + 1] = tv[:, j] + np.linalg.norm(c, axis=-1)
        xi[:, j + 1] = y
        x = y
    return xi, phi, tv, corr, failed


def solve_halfline(w: SampledPath) -> SkorohodSolution:
    """Explicit reflection map on [0, inf): phi(t) = max(0, max_{s<=t} -w(s))."""
    if w.dim != 1:
        raise ValueError("half-line map needs a one-dimensional path")
    v = w.values[:, 0]
    if v[0] < 0:
        raise ValueError("path must start in [0, inf)")
    # extrema of a linear segment sit at its nodes, so the running max over nodes is exact
    phi = np.maximum(np.maximum.accumulate(-v), 0.0)
    xi = v + phi
    dphi = np.diff(phi)
    records = [PushRecord(int(j) + 1, np.array([1.0]), float(dphi[j])) for j in np.flatnonzero(dphi > 0)]
    return SkorohodSolution(SampledPath(w.grid, xi), SampledPath(w.grid, phi), phi.copy(), records)


def solve_discrete(domain: Domain, w: SampledPath, substeps: int = 1) -> SkorohodSolution:
    """Solve on the ``substeps``-times refined grid of ``w``."""
    if substeps < 1:
        raise ValueError("need at least one substep")
    if w.dim != domain.dimension:
        raise ValueError("path and domain dimensions differ")
    if not domain.contains(w.values[0], BOUNDARY_TOL):
        raise ValueError("path must start in the closed domain")
    fine = linear_refine(w.values, substeps)
    xi, phi, tv, corr, failed = reflect_increments(domain, fine[None, 0], np.diff(fine, axis=0)[None])
    if failed[0]:
        raise SubstepTooCoarseError("a substep moved too far outside the non-convex domain")
    grid = TimeGrid(w.grid.horizon, w.grid.steps * substeps)
    return SkorohodSolution(SampledPath(grid, xi[0]), SampledPath(grid, phi[0]), tv[0],
                            push_records_from(corr[0]))


@dataclass
class VerificationReport:
    boundary_violation: float
    identity_residual: float
    interior_pushes: int
    cone_violation: float
    status: str
    tolerances: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


DEFAULT_TOLERANCES = {
    "boundary": BOUNDARY_TOL,
    "identity": 1e-12,
    "interior": INTERIOR_TOL,
    "cone": 1e-6,
}


def verify(domain: Domain, w: SampledPath, sol: SkorohodSolution, tolerances: dict | None = None,
           z_samples: int = 64, seed: int = 0) -> VerificationReport:
    """Check properties (i)-(iii) of a computed solution on its grid."""
    tol = dict(DEFAULT_TOLERANCES, **(tolerances or {}))
    xi, phi = sol.xi.values, sol.phi.values
    if len(w) != len(xi):
        w = SampledPath(sol.xi.grid, linear_refine(w.values, sol.xi.grid.ratio_to(w.grid.steps)))
    wv = w.values

    boundary = float(np.max(domain.outside_distance(xi)))
    boundary = max(boundary, float(np.max(np.abs(xi[0] - wv[0]))), float(np.max(np.abs(phi[0]))))
    residual = float(np.max(np.abs(xi - wv - phi)))

    dphi = np.linalg.norm(np.diff(phi, axis=0), axis=1)
    dtv = np.diff(sol.tv)
    active = (dphi > PUSH_TOL) | (np.abs(dtv) > PUSH_TOL)
    dist = domain.boundary_distance(xi[1:])
    interior = int(np.count_nonzero(active & (dist > tol["interior"])))
    if np.any(dtv < 0):
        interior += int(np.count_nonzero(dtv < 0))

    rng = np.random.default_rng(seed)
    r0 = domain.exterior_radius
    radius = min(1.0, 2.0 * r0) if math.isfinite(r0) else 1.0
    worst = 0.0
    c = inverse_two_r0(r0)
    for j in np.flatnonzero(dphi > PUSH_TOL):
        y = xi[j + 1]
        n = (phi[j + 1] - phi[j]) / dphi[j]
        z = sample_near(domain, y, radius, z_samples, rng)
        z = np.concatenate([z, domain.sample_boundary(8, rng, center=y, radius=radius)])
        diff = z - y
        margin = float(np.min(diff @ n + c * np.sum(diff * diff, axis=1))) if len(z) else 0.0
        worst = min(worst, margin)
    cone = max(0.0, -worst)

    ok = (boundary <= tol["boundary"] and residual <= tol["identity"]
          and interior == 0 and cone <= tol["cone"])
    return VerificationReport(boundary, residual, interior, cone, "pass" if ok else "fail", tol)
