"""Reflecting domains: membership, projection, boundary correction, normal
cones, and sampled certificates for the exterior-sphere condition (A) and the
normal-direction condition (B).

Points are arrays whose last axis is the space dimension; most methods accept
a single point ``(d,)`` or a batch ``(..., d)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotOnBoundaryError,
    SubstepTooCoarseError,
    UnsupportedOperationError,
)

# exterior-sphere radius of convex domains; 1/(2*INFINITE_RADIUS) == 0.0 exactly
INFINITE_RADIUS = math.inf

BOUNDARY_TOL = 1e-9
CONTAINS_TOL = 1e-12


def inverse_two_r0(r0: float) -> float:
    return 0.0 if math.isinf(r0) else 1.0 / (2.0 * r0)


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def _random_unit(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _random_in_ball(rng: np.random.Generator, center, radius: float, count: int) -> np.ndarray:
    dim = len(center)
    u = _random_unit(rng, count, dim)
    r = radius * rng.random(count) ** (1.0 / dim)
    return np.asarray(center) + u * r[:, None]


class Domain:
    """Common interface of all domain variants."""

    dimension: int
    variant: str = ""

    @property
    def convex(self) -> bool:
        return True

    @property
    def exterior_radius(self) -> float:
        """Radius r0 of the uniform exterior sphere condition."""
        return INFINITE_RADIUS

    def contains(self, x, tol: float = CONTAINS_TOL):
        raise NotImplementedError

    def project(self, x):
        raise UnsupportedOperationError(f"{self.variant} has no nearest-point projection")

    def outside_distance(self, x):
        """Euclidean distance from ``x`` to the closed domain (0 inside)."""
        x = _as_points(x, self.dimension)
        return np.linalg.norm(self.project(x) - x, axis=-1)

    def boundary_distance(self, x):
        raise NotImplementedError

    def normals_at(self, x) -> np.ndarray:
        """Inward unit normals spanning the normal cone at boundary point ``x``, shape (k, d)."""
        raise NotImplementedError

    def sample_boundary(self, count: int, rng: np.random.Generator, center=None, radius=None) -> np.ndarray:
        raise NotImplementedError

    def special_points(self) -> np.ndarray:
        """Corners and other boundary points a sampler should never miss."""
        return np.empty((0, self.dimension))

    def scale(self) -> float:
        """Characteristic length used to size sampling neighbourhoods."""
        return 1.0

    def correct(self, x):
        """Batched boundary correction.

        Returns ``(y, failed)``: ``y`` is the corrected point (``x`` itself for
        points already in the closure) and ``failed`` flags points that could
        not be corrected.
        """
        x = _as_points(x, self.dimension)
        ok = np.zeros(x.shape[:-1], dtype=bool)
        if self.contains(x).all():
            return x, ok
        return self.project(x), ok

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class HalfSpace(Domain):
    """Closed half-space ``{x : (normal, x) >= offset}``."""

    normal: np.ndarray
    offset: float
    dimension: int = field(init=False)
    variant = "HalfSpace"

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("half-space normal must have unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "dimension", n.size)

    def _gap(self, x):
        return x @ self.normal - self.offset

    def contains(self, x, tol=CONTAINS_TOL):
        return self._gap(_as_points(x, self.dimension)) >= -tol

    def project(self, x):
        x = _as_points(x, self.dimension)
        gap = self._gap(x)
        inside = gap >= -CONTAINS_TOL
        y = x - np.minimum(gap, 0.0)[..., None] * self.normal
        return np.where(inside[..., None], x, y)

    def boundary_distance(self, x):
        return np.abs(self._gap(_as_points(x, self.dimension)))

    def normals_at(self, x):
        if self.boundary_distance(x) > BOUNDARY_TOL:
            raise NotOnBoundaryError(f"{x} is not on the boundary")
        return self.normal[None, :].copy()

    def sample_boundary(self, count, rng, center=None, radius=None):
        center = self.offset * self.normal if center is None else np.asarray(center, float)
        radius = 4.0 if radius is None else radius
        pts = _random_in_ball(rng, center, radius, count)
        return pts - self._gap(pts)[:, None] * self.normal

    def to_dict(self):
        return {"variant": self.variant, "dimension": self.dimension,
                "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Box(Domain):
    """Axis-aligned box; ``-inf``/``inf`` (or None in JSON) mark unbounded ends."""

    lower: np.ndarray
    upper: np.ndarray
    dimension: int = field(init=False)
    variant = "Box"

    def __post_init__(self):
        lo = np.array([-np.inf if v is None else v for v in np.atleast_1d(self.lower)], dtype=np.float64)
        hi = np.array([np.inf if v is None else v for v in np.atleast_1d(self.upper)], dtype=np.float64)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lo >= hi):
            raise ValueError("box requires lower < upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "dimension", lo.size)

    def contains(self, x, tol=CONTAINS_TOL):
        x = _as_points(x, self.dimension)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def project(self, x):
        x = _as_points(x, self.dimension)
        return np.clip(x, self.lower, self.upper)

    def boundary_distance(self, x):
        x = _as_points(x, self.dimension)
        with np.errstate(invalid="ignore"):
            gaps = np.minimum(np.abs(x - self.lower), np.abs(self.upper - x))
        inside = np.min(gaps, axis=-1)
        out = self.outside_distance(x)
        return np.where(out > 0.0, out, inside)

    def normals_at(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.boundary_distance(x) > BOUNDARY_TOL:
            raise NotOnBoundaryError(f"{x} is not on the boundary")
        eye = np.eye(self.dimension)
        normals = [eye[i] for i in range(self.dimension) if abs(x[i] - self.lower[i]) <= BOUNDARY_TOL]
        normals += [-eye[i] for i in range(self.dimension) if abs(x[i] - self.upper[i]) <= BOUNDARY_TOL]
        return np.array(normals)

    def _finite_window(self, extent=4.0):
        lo, hi = self.lower, self.upper
        flo, fhi = np.isfinite(lo), np.isfinite(hi)
        new_lo = np.where(flo, lo, np.where(fhi, hi - extent, -extent))
        new_hi = np.where(fhi, hi, np.where(flo, lo + extent, extent))
        return new_lo, new_hi

    def scale(self):
        widths = self.upper - self.lower
        finite = widths[np.isfinite(widths)]
        return float(finite.min()) if finite.size else 1.0

    def _bounded_faces(self):
        faces = [(i, self.lower[i]) for i in range(self.dimension) if np.isfinite(self.lower[i])]
        faces += [(i, self.upper[i]) for i in range(self.dimension) if np.isfinite(self.upper[i])]
        return faces

    def sample_boundary(self, count, rng, center=None, radius=None):
        faces = self._bounded_faces()
        if not faces:
            return np.empty((0, self.dimension))
        if center is None:
            lo, hi = self._finite_window()
            pts = lo + (hi - lo) * rng.random((count, self.dimension))
        else:
            pts = self.project(_random_in_ball(rng, center, 4.0 if radius is None else radius, count))
        which = rng.integers(len(faces), size=count)
        for j, (axis, value) in enumerate(faces):
            pts[which == j, axis] = value
        return pts

    def special_points(self):
        lo, hi = self._finite_window()
        choices = []
        for i in range(self.dimension):
            opts = [v for v in (self.lower[i], self.upper[i]) if np.isfinite(v)]
            choices.append(opts or [0.5 * (lo[i] + hi[i])])
        return np.array(list(itertools.product(*choices)), dtype=np.float64)

    def to_dict(self):
        enc = lambda a: [None if np.isinf(v) else float(v) for v in a]  # noqa: E731
        return {"variant": self.variant, "dimension": self.dimension,
                "lower": enc(self.lower), "upper": enc(self.upper)}


@dataclass(frozen=True, eq=False)
class Ball(Domain):
    center: np.ndarray
    radius: float
    dimension: int = field(init=False)
    variant = "Ball"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dimension", c.size)

    def _dist(self, x):
        return np.linalg.norm(_as_points(x, self.dimension) - self.center, axis=-1)

    def contains(self, x, tol=CONTAINS_TOL):
        return self._dist(x) <= self.radius + tol

    def project(self, x):
        x = _as_points(x, self.dimension)
        r = self._dist(x)
        inside = r <= self.radius + CONTAINS_TOL
        safe = np.where(inside, 1.0, r)
        y = self.center + (x - self.center) * (self.radius / safe)[..., None]
        return np.where(inside[..., None], x, y)

    def boundary_distance(self, x):
        return np.abs(self._dist(x) - self.radius)

    def normals_at(self, x):
        if self.boundary_distance(x) > BOUNDARY_TOL:
            raise NotOnBoundaryError(f"{x} is not on the boundary")
        return _unit(self.center - np.asarray(x, float))[None, :]

    def scale(self):
        return self.radius

    def sample_boundary(self, count, rng, center=None, radius=None):
        return self.center + self.radius * _random_unit(rng, count, self.dimension)

    def to_dict(self):
        return {"variant": self.variant, "dimension": self.dimension,
                "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class BallComplement(Domain):
    """Closure of the exterior of a ball: ``{x : |x - center| >= radius}``.

    Non-convex, satisfies the exterior sphere condition with r0 = radius.
    """

    center: np.ndarray
    radius: float
    dimension: int = field(init=False)
    variant = "BallComplement"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dimension", c.size)

    @property
    def convex(self):
        return False

    @property
    def exterior_radius(self):
        return self.radius

    def _dist(self, x):
        return np.linalg.norm(_as_points(x, self.dimension) - self.center, axis=-1)

    def contains(self, x, tol=CONTAINS_TOL):
        return self._dist(x) >= self.radius - tol

    def outside_distance(self, x):
        return np.maximum(self.radius - self._dist(x), 0.0)

    def boundary_distance(self, x):
        return np.abs(self._dist(x) - self.radius)

    def normals_at(self, x):
        if self.boundary_distance(x) > BOUNDARY_TOL:
            raise NotOnBoundaryError(f"{x} is not on the boundary")
        return _unit(np.asarray(x, float) - self.center)[None, :]

    def scale(self):
        return self.radius

    def correct(self, x):
        x = _as_points(x, self.dimension)
        r = self._dist(x)
        inside = r >= self.radius - CONTAINS_TOL
        failed = ~inside & (self.radius - r > 0.5 * self.radius)
        safe = np.where(inside | (r == 0.0), 1.0, r)
        y = self.center + (x - self.center) * (self.radius / safe)[..., None]
        return np.where((inside | failed)[..., None], x, y), failed

    def sample_boundary(self, count, rng, center=None, radius=None):
        return self.center + self.radius * _random_unit(rng, count, self.dimension)

    def to_dict(self):
        return {"variant": self.variant, "dimension": self.dimension,
                "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class ConvexPolytope(Domain):
    """Intersection of finitely many closed half-spaces."""

    halfspaces: tuple
    dimension: int = field(init=False)
    variant = "ConvexPolytope"

    def __post_init__(self):
        hs = tuple(h if isinstance(h, HalfSpace) else HalfSpace(**h) for h in self.halfspaces)
        if not hs:
            raise ValueError("polytope needs at least one half-space")
        dims = {h.dimension for h in hs}
        if len(dims) != 1:
            raise ValueError("half-spaces of mixed dimension")
        object.__setattr__(self, "halfspaces", hs)
        object.__setattr__(self, "dimension", dims.pop())
        object.__setattr__(self, "_A", np.array([h.normal for h in hs]))
        object.__setattr__(self, "_c", np.array([h.offset for h in hs]))

    def _gaps(self, x):
        return x @ self._A.T - self._c

    def contains(self, x, tol=CONTAINS_TOL):
        return np.all(self._gaps(_as_points(x, self.dimension)) >= -tol, axis=-1)

    def _project_one(self, x):
        A, c = self._A, self._c
        if np.all(A @ x - c >= -CONTAINS_TOL):
            return x
        # enumerate candidate active sets; the nearest feasible KKT point wins
        best, best_d = None, np.inf
        for size in range(1, min(self.dimension, len(c)) + 1):
            for idx in itertools.combinations(range(len(c)), size):
                As, cs = A[list(idx)], c[list(idx)]
                gram = As @ As.T
                if np.linalg.matrix_rank(gram) < size:
                    continue
                lam = np.linalg.solve(gram, cs - As @ x)
                if np.any(lam < -1e-14):
                    continue
                y = x + As.T @ lam
                if np.all(A @ y - c >= -1e-10):
                    d = np.linalg.norm(y - x)
                    if d < best_d:
                        best, best_d = y, d
        if best is None:
            raise UnsupportedOperationError("polytope is empty or degenerate")
        return best

    def project(self, x):
        x = _as_points(x, self.dimension)
        flat = x.reshape(-1, self.dimension)
        out = np.array([self._project_one(p) for p in flat])
        return out.reshape(x.shape)

    def boundary_distance(self, x):
        x = _as_points(x, self.dimension)
        inside = np.min(np.abs(self._gaps(x)), axis=-1)
        out = self.outside_distance(x)
        return np.where(out > 0.0, out, inside)

    def normals_at(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.boundary_distance(x) > BOUNDARY_TOL:
            raise NotOnBoundaryError(f"{x} is not on the boundary")
        active = np.abs(self._gaps(x)) <= BOUNDARY_TOL
        return self._A[active].copy()

    def special_points(self):
        verts = []
        A, c = self._A, self._c
        for idx in itertools.combinations(range(len(c)), self.dimension):
            As = A[list(idx)]
            if abs(np.linalg.det(As)) < 1e-12:
                continue
            v = np.linalg.solve(As, c[list(idx)])
            if self.contains(v, 1e-10):
                verts.append(v)
        return np.array(verts).reshape(-1, self.dimension)

    def sample_boundary(self, count, rng, center=None, radius=None):
        if center is None:
            center = self.project(np.zeros(self.dimension))
        pts = _random_in_ball(rng, center, 4.0 if radius is None else radius, count)
        which = rng.integers(len(self._c), size=count)
        a, c = self._A[which], self._c[which]
        pts = pts - (np.sum(pts * a, axis=-1) - c)[:, None] * a
        return self.project(pts)

    def to_dict(self):
        return {"variant": self.variant, "dimension": self.dimension,
                "halfspaces": [{"normal": h.normal.tolist(), "offset": h.offset} for h in self.halfspaces]}


@dataclass(frozen=True, eq=False)
class TruncatedDomain(Domain):
    """``closure(base) ∩ closed ball(center, radius)``.

    ``inner_radius`` is the radius of a closed ball around ``center`` known to
    lie inside the base domain; it is verified by sampling on construction.
    """

    base: Domain
    center: np.ndarray
    radius: float
    inner_radius: float
    dimension: int = field(init=False)
    variant = "TruncatedDomain"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if c.size != self.base.dimension:
            raise DimensionMismatchError("truncation center has wrong dimension")
        if not self.inner_radius > 0:
            raise ValueError("inner radius must be positive")
        if self.radius < self.inner_radius:
            raise ValueError("truncation radius must be at least the inner radius")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "inner_radius", float(self.inner_radius))
        object.__setattr__(self, "dimension", c.size)
        object.__setattr__(self, "_ball", Ball(c, self.radius))
        rng = np.random.default_rng(0)
        probe = c + self.inner_radius * _random_unit(rng, 512, c.size)
        if c.size == 1:
            probe = np.array([c - self.inner_radius, c + self.inner_radius])
        if not (np.all(self.base.contains(probe, BOUNDARY_TOL)) and self.base.contains(c)):
            raise ValueError("closed inner ball is not contained in the base domain")

    @property
    def convex(self):
        return self.base.convex

    @property
    def exterior_radius(self):
        return self.base.exterior_radius

    def contains(self, x, tol=CONTAINS_TOL):
        return self.base.contains(x, tol) & self._ball.contains(x, tol)

    def project(self, x):
        if not self.base.convex:
            raise UnsupportedOperationError("projection requires a convex base domain")
        x = _as_points(x, self.dimension)
        flat = x.reshape(-1, self.dimension)
        out = flat.copy()
        need = ~self.contains(flat)
        if np.any(need):
            out[need] = self._project_outside(flat[need])
        return out.reshape(x.shape)

    def _project_outside(self, x):
        pb = self.base.project(x)
        pk = self._ball.project(x)
        ok_b = self._ball.contains(pb)
        ok_k = self.base.contains(pk)
        out = np.where(ok_b[:, None], pb, np.where(ok_k[:, None], pk, np.nan))
        rest = ~(ok_b | ok_k)
        if np.any(rest):
            out[rest] = self._dykstra(x[rest])
        return out

    def _dykstra(self, x, iters=20000, tol=1e-15):
        y = x.copy()
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(iters):
            u = self.base.project(y + p)
            p = y + p - u
            y_new = self._ball.project(u + q)
            q = u + q - y_new
            if np.max(np.abs(y_new - y)) < tol:
                y = y_new
                break
            y = y_new
        return y

    def correct(self, x):
        if self.base.convex:
            return super().correct(x)
        raise UnsupportedOperationError("boundary correction requires a convex base domain")

    def boundary_distance(self, x):
        x = _as_points(x, self.dimension)
        inner = np.minimum(self.base.boundary_distance(x), self._ball.boundary_distance(x))
        out = self.outside_distance(x)
        return np.where(out > 0.0, out, inner)

    def outside_distance(self, x):
        if self.base.convex:
            return super().outside_distance(x)
        return np.maximum(self.base.outside_distance(x), self._ball.outside_distance(x))

    def normals_at(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.boundary_distance(x) > BOUNDARY_TOL:
            raise NotOnBoundaryError(f"{x} is not on the boundary")
        normals = []
        if self.base.boundary_distance(x) <= BOUNDARY_TOL:
            normals.extend(self.base.normals_at(x))
        if self._ball.boundary_distance(x) <= BOUNDARY_TOL:
            normals.extend(self._ball.normals_at(x))
        return np.array(normals)

    def scale(self):
        return self.inner_radius

    def _face_planes(self):
        b = self.base
        if isinstance(b, HalfSpace):
            return [(b.normal, b.offset)]
        if isinstance(b, ConvexPolytope):
            return list(zip(b._A, b._c))
        if isinstance(b, Box):
            eye = np.eye(b.dimension)
            return ([(eye[i], b.lower[i]) for i in range(b.dimension) if np.isfinite(b.lower[i])]
                    + [(-eye[i], -b.upper[i]) for i in range(b.dimension) if np.isfinite(b.upper[i])])
        return []

    def _rim_points(self, count, rng):
        """Points where a flat face of the base meets the truncation sphere."""
        pts = []
        for a, c in self._face_planes():
            h = a @ self.center - c
            if abs(h) > self.radius:
                continue
            foot = self.center - h * a
            rho = math.sqrt(max(self.radius**2 - h * h, 0.0))
            if self.dimension == 1:
                cand = foot[None, :]
            else:
                u = rng.standard_normal((count, self.dimension))
                u -= (u @ a)[:, None] * a
                u /= np.linalg.norm(u, axis=-1, keepdims=True)
                cand = foot + rho * u
            pts.append(cand[self.contains(cand, BOUNDARY_TOL)])
        return np.concatenate(pts) if pts else np.empty((0, self.dimension))

    def sample_boundary(self, count, rng, center=None, radius=None):
        k = max(count // 3, 1)
        sphere = self._ball.sample_boundary(count, rng)
        sphere = sphere[self.base.contains(sphere, BOUNDARY_TOL)]
        flat = self.base.sample_boundary(count, rng, center=self.center, radius=self.radius)
        flat = flat[self._ball.contains(flat, BOUNDARY_TOL)]
        rim = self._rim_points(k, rng)
        pts = np.concatenate([sphere, flat, rim])
        return pts[rng.permutation(len(pts))][:count] if len(pts) > count else pts

    def special_points(self):
        rng = np.random.default_rng(1)
        pts = [self._rim_points(8, rng)]
        base_special = self.base.special_points()
        if base_special.size:
            pts.append(base_special[self._ball.contains(base_special, BOUNDARY_TOL)])
        return np.concatenate(pts)

    def to_dict(self):
        return {"variant": self.variant, "dimension": self.dimension, "base": self.base.to_dict(),
                "center": self.center.tolist(), "radius": self.radius, "inner_radius": self.inner_radius}


def domain_from_dict(spec: dict) -> Domain:
    """Build a domain from its JSON description."""
    spec = dict(spec)
    variant = spec.pop("variant")
    dim = spec.pop("dimension", None)
    if variant == "HalfSpace":
        dom = HalfSpace(spec["normal"], spec["offset"])
    elif variant == "Box":
        dom = Box(spec["lower"], spec["upper"])
    elif variant == "Ball":
        dom = Ball(spec["center"], spec["radius"])
    elif variant == "BallComplement":
        dom = BallComplement(spec["center"], spec["radius"])
    elif variant == "ConvexPolytope":
        dom = ConvexPolytope(tuple(spec["halfspaces"]))
    elif variant == "TruncatedDomain":
        dom = TruncatedDomain(domain_from_dict(spec["base"]), spec["center"],
                              spec["radius"], spec["inner_radius"])
    else:
        raise ValueError(f"unknown domain variant {variant!r}")
    if dim is not None and dim != dom.dimension:
        raise DimensionMismatchError(f"declared dimension {dim} but domain has {dom.dimension}")
    return dom


# ---------------------------------------------------------------- operations

def contains(domain: Domain, x, tol: float = CONTAINS_TOL) -> bool:
    x = _as_points(x, domain.dimension)
    return bool(domain.contains(x, tol))


def project(domain: Domain, x) -> np.ndarray:
    if not domain.convex:
        raise UnsupportedOperationError(f"{domain.variant} is not convex; nearest point is not unique")
    return domain.project(_as_points(x, domain.dimension))


def pushback(domain: Domain, x):
    """Move an exterior point back onto the boundary.

    Returns ``(y, n, dist)`` with ``y`` on the boundary, ``n`` the inward unit
    normal at ``y`` along which the point was pushed, and ``dist = |y - x|``.
    """
    x = _as_points(x, domain.dimension)
    if domain.contains(x):
        raise ValueError("point already lies in the closed domain")
    y, failed = domain.correct(x)
    if failed:
        raise SubstepTooCoarseError(
            f"point lies deeper than r0/2 = {domain.exterior_radius / 2} outside the domain")
    d = float(np.linalg.norm(y - x))
    return y, (y - x) / d, d


@dataclass(frozen=True)
class NormalCone:
    base_point: np.ndarray
    normals: np.ndarray
    r0: float


def normal_cone(domain: Domain, x) -> NormalCone:
    x = _as_points(x, domain.dimension)
    if not domain.contains(x, BOUNDARY_TOL) or domain.boundary_distance(x) > BOUNDARY_TOL:
        raise NotOnBoundaryError(f"{x} is not on the boundary")
    return NormalCone(x.copy(), domain.normals_at(x), domain.exterior_radius)


def sphere_margin(base_point, normal, z, r0: float):
    """min over ``z`` of ``(z - x, n) + |x - z|^2 / (2 r0)``; nonnegative iff n passes the exterior-sphere test."""
    diff = np.asarray(z) - base_point
    vals = diff @ normal + inverse_two_r0(r0) * np.sum(diff * diff, axis=-1)
    return float(vals.min()) if vals.size else math.inf


def sample_near(domain: Domain, x, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Points of the closed domain within ``radius`` of ``x``: interior samples plus boundary samples."""
    x = np.asarray(x, dtype=np.float64)
    bulk = _random_in_ball(rng, x, radius, count)
    bulk = bulk[domain.contains(bulk)]
    edge = domain.sample_boundary(count, rng, center=x, radius=radius)
    if edge.size:
        edge = edge[np.linalg.norm(edge - x, axis=-1) <= radius]
    return np.concatenate([bulk, edge])


def _sampling_radius(domain: Domain, r0: float) -> float:
    return 2.0 * r0 if math.isfinite(r0) else 2.0 * domain.scale()


def _boundary_set(domain: Domain, count: int, rng) -> np.ndarray:
    pts = np.concatenate([domain.special_points(), domain.sample_boundary(count, rng)])
    keep = domain.boundary_distance(pts) <= BOUNDARY_TOL
    return pts[keep & domain.contains(pts, BOUNDARY_TOL)]


@dataclass(frozen=True)
class ConditionACertificate:
    r0: float
    status: str
    worst_margin: float
    samples: int

    def to_dict(self):
        return {"condition": "A", "status": self.status,
                "constants": {"r0": None if math.isinf(self.r0) else self.r0},
                "worst_margin": self.worst_margin}


def certify_condition_A(domain: Domain, samples: int = 200, r0: float | None = None,
                        seed: int = 0, z_samples: int = 400) -> ConditionACertificate:
    """Sampled check of the uniform exterior sphere condition with radius ``r0``."""
    r0 = domain.exterior_radius if r0 is None else float(r0)
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    rng = np.random.default_rng(seed)
    pts = _boundary_set(domain, samples, rng)
    radius = _sampling_radius(domain, r0)
    worst = math.inf
    for x in pts:
        z = sample_near(domain, x, radius, z_samples, rng)
        for n in domain.normals_at(x):
            worst = min(worst, sphere_margin(x, n, z, r0))
    status = "certified" if worst >= -BOUNDARY_TOL else "failed"
    return ConditionACertificate(r0, status, worst, len(pts))


@dataclass(frozen=True)
class ConditionBCertificate:
    delta: float
    beta: float
    status: str
    points: np.ndarray
    directions: np.ndarray
    worst_inner: float
    alpha: float | None = None

    def to_dict(self):
        return {"condition": "B", "status": self.status,
                "constants": {"delta": self.delta, "beta": self.beta, "alpha": self.alpha},
                "worst_margin": self.worst_inner - 1.0 / self.beta if self.beta > 0 else None}


def _boundary_normals(domain: Domain, pts: np.ndarray):
    owners, normals = [], []
    for i, x in enumerate(pts):
        for n in domain.normals_at(x):
            owners.append(i)
            normals.append(n)
    return np.array(owners), np.array(normals).reshape(-1, domain.dimension)


def _best_direction(normals: np.ndarray, rng, starts: int, iters: int = 400) -> tuple[np.ndarray, float]:
    """Projected gradient ascent of a softened ``min_i (l, n_i)`` over unit vectors ``l``."""
    dim = normals.shape[1]
    mean = normals.mean(axis=0)
    L = _random_unit(rng, starts, dim)
    if np.linalg.norm(mean) > 1e-12:
        L[0] = mean / np.linalg.norm(mean)
    taus = np.geomspace(0.2, 1e-6, iters)
    for tau in taus:
        vals = L @ normals.T
        w = np.exp(-(vals - vals.min(axis=1, keepdims=True)) / tau)
        w /= w.sum(axis=1, keepdims=True)
        g = w @ normals
        g -= np.sum(g * L, axis=1, keepdims=True) * L
        L = L + max(tau, 1e-4) * g
        L /= np.linalg.norm(L, axis=1, keepdims=True)
    scores = (L @ normals.T).min(axis=1)
    k = int(np.argmax(scores))
    return L[k], float(scores[k])


def certify_condition_B(domain: Domain, delta: float, samples: int = 200, seed: int = 0,
                        starts: int = 32) -> ConditionBCertificate:
    """Search a direction ``l_x`` per sampled boundary point and report the implied beta."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(seed)
    pts = _boundary_set(domain, samples, rng)
    owners, normals = _boundary_normals(domain, pts)
    dirs = np.zeros_like(pts)
    worst = math.inf
    for i, x in enumerate(pts):
        near = np.linalg.norm(pts[owners] - x, axis=-1) < delta
        l, val = _best_direction(normals[near], rng, starts)
        dirs[i] = l
        worst = min(worst, val)
    if worst <= 0.0:
        return ConditionBCertificate(delta, math.inf, "failed", pts, dirs, worst)
    return ConditionBCertificate(delta, max(1.0, 1.0 / worst), "certified", pts, dirs, worst)


def check_directions(domain: Domain, delta: float, points: np.ndarray, directions: np.ndarray) -> float:
    """Worst ``(l_x, n)`` over all sampled normals ``n`` within ``delta`` of each point ``x``."""
    owners, normals = _boundary_normals(domain, points)
    worst = math.inf
    for x, l in zip(points, directions):
        near = np.linalg.norm(points[owners] - x, axis=-1) < delta
        worst = min(worst, float((normals[near] @ l).min()))
    return worst


def beta_from_alpha(alpha: float) -> float:
    """beta implied by an interior cone of parameter ``alpha``: (1 - alpha^2)^(-1/2)."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("cone parameter must lie in [0, 1)")
    return (1.0 - alpha * alpha) ** -0.5


def truncate(domain: Domain, x0, R: float, R0: float):
    """Truncate a convex domain to a ball and return ``(D_R, delta, beta)``.

    delta = R0/2 and beta = sqrt(1 + (2R/R0)^2), the constants of the interior
    cone with axis pointing at ``x0``.
    """
    if not domain.convex:
        raise UnsupportedOperationError("truncation constants require a convex domain")
    if R < R0:
        raise ValueError("R must be at least R0")
    trunc = TruncatedDomain(domain, x0, R, R0)
    return trunc, R0 / 2.0, math.sqrt(1.0 + (2.0 * R / R0) ** 2)


def truncation_alpha(R: float, R0: float) -> float:
    return R / math.sqrt(R * R + (R0 / 2.0) ** 2)


def cone_certificate(trunc: TruncatedDomain, samples: int = 200, seed: int = 0) -> ConditionBCertificate:
    """Analytic certificate for a truncated convex domain, checked on samples.

    Directions point from each boundary point to the truncation center; the
    cone parameter gives beta through :func:`beta_from_alpha`.
    """
    delta = trunc.inner_radius / 2.0
    alpha = truncation_alpha(trunc.radius, trunc.inner_radius)
    beta = beta_from_alpha(alpha)
    rng = np.random.default_rng(seed)
    pts = _boundary_set(trunc, samples, rng)
    dirs = trunc.center - pts
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    worst = check_directions(trunc, delta, pts, dirs)
    status = "certified" if worst >= 1.0 / beta - BOUNDARY_TOL else "failed"
    return ConditionBCertificate(delta, beta, status, pts, dirs, worst, alpha)


def choose_delta(domain: Domain, candidates=None, samples: int = 200, seed: int = 0) -> ConditionBCertificate:
    """Largest delta from the candidate list whose sampled condition-(B) search succeeds."""
    if candidates is None:
        s = domain.scale()
        candidates = (s / 2.0, s / 4.0, s / 8.0)
    cert = None
    for delta in sorted(candidates, reverse=True):
        cert = certify_condition_B(domain, delta, samples=samples, seed=seed)
        if cert.status == "certified":
            return cert
    return cert
