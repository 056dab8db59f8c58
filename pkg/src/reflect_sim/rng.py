"""Counter-based Gaussian streams.

Every random number is addressed by ``(seed, path, stream, index)``: the
Philox key is ``(seed, path)``, the top counter word is ``stream`` and the
position inside the stream is the draw index.  A Monte Carlo path therefore
sees the same numbers no matter which worker or batch produces it.

Uniforms are built from the top 53 bits of each 64-bit output and mapped
to the open interval (0, 1); normals come from an inverse-CDF rational
approximation so the transform is identical on every platform.
"""
from __future__ import annotations

import numpy as np

# rational approximation of the standard normal quantile, |rel err| < 1.15e-9
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p):
    """Inverse CDF of N(0, 1) for ``p`` in (0, 1), elementwise."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    r = q * q
    num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    central = num * q / den

    # tails use the smaller of p and 1 - p
    tail_p = np.minimum(p, 1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.sqrt(-2.0 * np.log(np.where(tail_p > 0.0, tail_p, 0.5)))
    num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
    den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
    tail = num / den
    tail = np.where(p > 0.5, -tail, tail)

    return np.where(tail_p < _P_LOW, tail, central)


def _bitgen(seed: int, path: int, stream: int) -> np.random.Philox:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Philox(counter=counter, key=key)


def uniforms(seed: int, path: int, stream: int, count: int) -> np.ndarray:
    """``count`` uniforms in (0, 1) at indices 0..count-1 of the given stream."""
    raw = _bitgen(seed, path, stream).random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, path: int, stream: int, count: int) -> np.ndarray:
    """``count`` standard normals from the addressed stream."""
    return normal_quantile(uniforms(seed, path, stream, count))


def normals_batch(seed: int, paths, stream: int, count: int) -> np.ndarray:
    """Array of shape ``(len(paths), count)``; row ``i`` is ``normals(seed, paths[i], stream, count)``."""
    paths = list(paths)
    out = np.empty((len(paths), count))
    for i, p in enumerate(paths):
        out[i] = normals(seed, p, stream, count)
    return out
