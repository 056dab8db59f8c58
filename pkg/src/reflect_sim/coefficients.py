"""Diffusion and drift coefficient sets with exact or finite-difference Jacobians.

Array conventions (leading batch axes allowed):

* ``sigma(x)``  -> (..., d, n)
* ``drift(x)``  -> (..., d)
* ``dsigma(x)`` -> (..., d, n, d) with ``[..., i, k, j] = d sigma^i_k / d x_j``
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Coefficients:
    dim: int
    noise_dim: int
    sigma: Callable
    drift: Callable
    dsigma: Callable | None = None
    sigma_sup: float = float("nan")
    drift_sup: float = float("nan")
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # optional fast path for sigma(x) v
    apply: Callable | None = None
    # set when the drift does not depend on x
    const_drift: np.ndarray | None = None
    # sigma does not depend on x
    additive: bool = False

    def sigma_times(self, x, v):
        """sigma(x) v for batched points and noise vectors."""
        if self.apply is not None:
            return self.apply(x, v)
        return np.einsum("...ik,...k->...i", self.sigma(x), v)


def fd_dsigma(coeff: Coefficients, x) -> np.ndarray:
    """Central differences with step 1e-5 * max(1, |x|)."""
    x = np.asarray(x, dtype=np.float64)
    h = 1e-5 * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    out = np.empty(x.shape[:-1] + (coeff.dim, coeff.noise_dim, coeff.dim))
    for j in range(coeff.dim):
        e = np.zeros(coeff.dim)
        e[j] = 1.0
        step = h[..., None] * e
        hp = (x + step)[..., j] - x[..., j]
        hm = x[..., j] - (x - step)[..., j]
        out[..., j] = (coeff.sigma(x + step) - coeff.sigma(x - step)) / (hp + hm)[..., None, None]
    return out


def stratonovich_correction(coeff: Coefficients, x, exact: bool = True) -> np.ndarray:
    """Corrected drift b~ with b~^i = b^i + 1/2 sum_{j,k} (d_j sigma^i_k) sigma^j_k."""
    x = np.asarray(x, dtype=np.float64)
    ds = coeff.dsigma(x) if (exact and coeff.dsigma is not None) else fd_dsigma(coeff, x)
    return coeff.drift(x) + 0.5 * np.einsum("...ikj,...jk->...i", ds, coeff.sigma(x))


def _const_drift(dim, drift):
    b = np.zeros(dim) if drift is None else np.asarray(drift, dtype=np.float64).reshape(dim)

    def f(x):
        x = np.asarray(x)
        return np.broadcast_to(b, x.shape).copy()
    return f, b


def constant(sigma, drift=None) -> Coefficients:
    """Constant diffusion matrix with a constant drift."""
    S = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    d, n = S.shape
    bfun, b = _const_drift(d, drift)

    def sig(x):
        x = np.asarray(x)
        return np.broadcast_to(S, x.shape[:-1] + (d, n)).copy()

    def dsig(x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (d, n, d))

    St = S.T.copy()
    return Coefficients(d, n, sig, bfun, dsig, float(np.linalg.norm(S, 2)), float(np.linalg.norm(b)),
                        "constant", {"sigma": S.tolist(), "drift": b.tolist()},
                        apply=lambda x, v: v @ St, const_drift=b, additive=True)


def diag_sin(dim: int = 2, amplitude: float = 0.5, drift=None) -> Coefficients:
    """sigma(x) = diag(1 + a sin x_1, 1 + a cos x_2, 1 + a sin x_3, ...)."""
    if not 0 <= amplitude < 1:
        raise ValueError("amplitude must lie in [0, 1) to keep sigma nondegenerate")
    bfun, b = _const_drift(dim, drift)
    use_sin = np.arange(dim) % 2 == 0
    idx = np.arange(dim)

    def diag(x):
        v = np.empty_like(x)
        v[..., 0::2] = np.sin(x[..., 0::2])
        v[..., 1::2] = np.cos(x[..., 1::2])
        return 1.0 + amplitude * v

    def sig(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape[:-1] + (dim, dim))
        out[..., idx, idx] = diag(x)
        return out

    def dsig(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape[:-1] + (dim, dim, dim))
        out[..., idx, idx, idx] = amplitude * np.where(use_sin, np.cos(x), -np.sin(x))
        return out

    def sigma_times(x, v):
        return diag(np.asarray(x, dtype=np.float64)) * v

    return Coefficients(dim, dim, sig, bfun, dsig, 1.0 + amplitude, float(np.linalg.norm(b)),
                        "diag_sin", {"dim": dim, "amplitude": amplitude, "drift": b.tolist()},
                        apply=sigma_times, const_drift=b)


def rotation(scale: float = 1.0, rate: float = 1.0, drift=None) -> Coefficients:
    """2x2 field sigma(x) = scale * Rot(rate * (x_1 + x_2)); noise directions do not commute."""
    bfun, b = _const_drift(2, drift)

    def sig(x):
        x = np.asarray(x, dtype=np.float64)
        a = rate * (x[..., 0] + x[..., 1])
        c, s = np.cos(a), np.sin(a)
        return scale * np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)

    def dsig(x):
        x = np.asarray(x, dtype=np.float64)
        a = rate * (x[..., 0] + x[..., 1])
        c, s = np.cos(a), np.sin(a)
        dR = scale * rate * np.stack([np.stack([-s, -c], -1), np.stack([c, -s], -1)], -2)
        return np.stack([dR, dR], -1)

    return Coefficients(2, 2, sig, bfun, dsig, abs(scale), float(np.linalg.norm(b)),
                        "rotation", {"scale": scale, "rate": rate, "drift": b.tolist()}, const_drift=b)


BUILTINS = {"constant": constant, "diag_sin": diag_sin, "rotation": rotation}


def from_config(spec: dict) -> Coefficients:
    """``{"name": ..., "params": {...}}`` -> :class:`Coefficients`."""
    unknown = set(spec) - {"name", "params"}
    if unknown:
        raise ValueError(f"unknown coefficient keys: {sorted(unknown)}")
    name = spec["name"]
    if name not in BUILTINS:
        raise ValueError(f"unknown coefficient set {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[name](**spec.get("params", {}))
