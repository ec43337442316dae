"""High-order central finite-difference stencils.

Weights are computed once per (derivative order, accuracy) by solving the
moment system sum_s w_s s^t = m! delta_{t,m} in exact rational arithmetic,
so they carry no linear-algebra rounding. Differentiation of polynomials of
degree <= 2h (h the stencil half-width) is exact to float rounding.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

__all__ = ["central_weights", "stencil_halfwidth", "apply_stencil"]

DEFAULT_ACCURACY = 8


def stencil_halfwidth(m: int, accuracy: int = DEFAULT_ACCURACY) -> int:
    """Half-width of the central stencil for the m-th derivative."""
    return (m + accuracy) // 2


@lru_cache(maxsize=None)
def central_weights(m: int, accuracy: int = DEFAULT_ACCURACY):
    """(offsets, weights) for the m-th derivative on a unit-spaced axis.

    Fold the grid spacing in afterwards: d^m f / dx^m ~= sum w_s f(x + s h) / h^m.
    """
    if m < 0:
        raise ValueError(f"derivative order must be >= 0, got {m}")
    h = stencil_halfwidth(m, accuracy)
    offsets = list(range(-h, h + 1))
    n = len(offsets)
    if m == 0:
        w = np.zeros(n)
        w[h] = 1.0
        return np.array(offsets), w
    a = [[Fraction(s) ** t for s in offsets] for t in range(n)]
    b = [Fraction(factorial(m)) if t == m else Fraction(0) for t in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        b[col] *= inv
        for r in range(n):
            if r != col and a[r][col] != 0:
                fac = a[r][col]
                a[r] = [v - fac * c for v, c in zip(a[r], a[col])]
                b[r] -= fac * b[col]
    return np.array(offsets), np.array([float(v) for v in b])


def apply_stencil(ext: np.ndarray, m: int, spacing: float, axis: int, pad: int,
                  accuracy: int = DEFAULT_ACCURACY) -> np.ndarray:
    """m-th derivative along ``axis`` of a padded array.

    ``ext`` must carry ``pad`` extra samples on both ends of ``axis``; the
    result is cropped back to the unpadded extent on that axis (other axes
    are returned unchanged). ``pad`` must be >= the stencil half-width.
    """
    n_out = ext.shape[axis] - 2 * pad
    if m == 0:
        sl = [slice(None)] * ext.ndim
        sl[axis] = slice(pad, pad + n_out)
        return ext[tuple(sl)]
    offsets, weights = central_weights(m, accuracy)
    if offsets[-1] > pad:
        raise ValueError(
            f"stencil half-width {offsets[-1]} exceeds available padding {pad}"
        )
    out = np.zeros(ext.shape[:axis] + (n_out,) + ext.shape[axis + 1:], dtype=ext.dtype)
    for o, w in zip(offsets, weights):
        sl = [slice(None)] * ext.ndim
        sl[axis] = slice(pad + o, pad + o + n_out)
        out += w * ext[tuple(sl)]
    return out / spacing**m
