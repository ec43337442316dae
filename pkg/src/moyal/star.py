"""Moyal star products by two routes, brackets, and the damped deformation.

Kernel route: f * g = inverse_weyl(weyl_kernel(f) . weyl_kernel(g)). Robust
for phase-space-decaying functions; polynomial inputs produce lattice-delta
kernels the offset quadrature cannot represent, so route those to the series.

Series route:
    f * g = f g + sum_{n>=1} (i hbar / 2)^n / n!  P^n(f, g)

with P the Poisson bidifferential and its n-th power expanded multinomially,

    P^n(f, g) = sum_k (-1)^k C(n, k) (d_x^{n-k} d_p^k f) (d_p^{n-k} d_x^k g).

The series terminates exactly on polynomials (at their joint degree) and is
asymptotic otherwise. Derivatives are high-order central differences on the
refined lattice; functions with a retained callable are extended past the box
for edge-exact stencils, everything else is zero-padded (box decay assumed).

The damped product replaces P by M(f,g) = P(f,g) - 2 gamma m f_p g_p, whose
n-th power expands trinomially; gamma -> 0 recovers the Moyal series exactly
(same code path, vanishing third leg).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .grid import GridFunction, QuantizationParams
from .stencils import DEFAULT_ACCURACY, apply_stencil, stencil_halfwidth
from .weyl import inverse_weyl, kernel_multiply, weyl_kernel

__all__ = [
    "SeriesOrder",
    "DampingParams",
    "star_kernel_route",
    "star_series",
    "star_gamma",
    "star_product",
    "poisson_bracket",
    "moyal_bracket",
]


@dataclass(frozen=True)
class SeriesOrder:
    """Highest retained power of hbar in the differential series."""

    max_order: int

    def __post_init__(self):
        if self.max_order < 0:
            raise ValueError(f"max_order must be >= 0, got {self.max_order}")


@dataclass(frozen=True)
class DampingParams:
    gamma: float
    mass: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.mass <= 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")


def _as_order(order) -> int:
    return order.max_order if isinstance(order, SeriesOrder) else int(order)


def _extended_samples(f: GridFunction, pad: int) -> np.ndarray:
    """Refined-lattice samples with ``pad`` extra rows/columns on every side.

    Extension values come from the callable when one is retained, else zero.
    """
    g = f.grid
    if f.func is None:
        return np.pad(f.fine_values, pad)
    hx = g.dx / 2
    xe = np.concatenate([
        g.x_fine[0] + hx * np.arange(-pad, 0),
        g.x_fine,
        g.x_fine[-1] + hx * np.arange(1, pad + 1),
    ])
    pe = np.concatenate([
        g.p[0] + g.dp * np.arange(-pad, 0),
        g.p,
        g.p[-1] + g.dp * np.arange(1, pad + 1),
    ])
    X, P = np.meshgrid(xe, pe, indexing="ij")
    vals = np.asarray(f.func(X, P), dtype=complex)
    if vals.shape != X.shape:
        vals = np.broadcast_to(vals, X.shape).astype(complex)
    return vals


def _derivative_tensors(f: GridFunction, max_order: int,
                        accuracy: int = DEFAULT_ACCURACY) -> dict:
    """All mixed partials d_x^a d_p^b f with a + b <= max_order, on the refined lattice."""
    g = f.grid
    pad = stencil_halfwidth(max_order, accuracy) if max_order else 0
    if f.func is None and max_order > 0:
        # zero-padded data: the stencil footprint must fit inside the stored samples
        if 2 * pad + 1 > 2 * g.n_x - 1 or 2 * pad + 1 > g.n_p:
            raise ValueError(
                f"order-{max_order} stencils (width {2 * pad + 1}) exceed the grid "
                f"extent ({2 * g.n_x - 1} x {g.n_p} refined samples)"
            )
    ext = _extended_samples(f, pad)
    hx = g.dx / 2
    tensors = {}
    for a in range(max_order + 1):
        fx = apply_stencil(ext, a, hx, axis=0, pad=pad, accuracy=accuracy)
        for b in range(max_order + 1 - a):
            tensors[(a, b)] = apply_stencil(fx, b, g.dp, axis=1, pad=pad, accuracy=accuracy)
    return tensors


def _series(f: GridFunction, g: GridFunction, hbar: float, max_order: int,
            gamma: float = 0.0, mass: float = 1.0,
            accuracy: int = DEFAULT_ACCURACY) -> GridFunction:
    f._check_same_grid(g)
    df = _derivative_tensors(f, max_order, accuracy)
    dg = _derivative_tensors(g, max_order, accuracy)
    out = df[(0, 0)] * dg[(0, 0)]
    for n in range(1, max_order + 1):
        coef = (1j * hbar / 2) ** n / factorial(n)
        bracket_n = np.zeros_like(out)
        if gamma == 0.0:
            for k in range(n + 1):
                bracket_n += (-1) ** k * comb(n, k) * df[(n - k, k)] * dg[(k, n - k)]
        else:
            for i in range(n + 1):
                for j in range(n + 1 - i):
                    k = n - i - j
                    c = factorial(n) // (factorial(i) * factorial(j) * factorial(k))
                    c = c * (-1) ** j * (-2 * gamma * mass) ** k
                    bracket_n += c * df[(i, j + k)] * dg[(j, i + k)]
        out = out + coef * bracket_n
    return GridFunction(f.grid, out)


def star_kernel_route(f: GridFunction, g: GridFunction,
                      q: QuantizationParams) -> GridFunction:
    """f * g through operator composition."""
    f._check_same_grid(g)
    kf = weyl_kernel(f, q)
    kg = weyl_kernel(g, q)
    return inverse_weyl(kernel_multiply(kf, kg), q)


def star_series(f: GridFunction, g: GridFunction, q: QuantizationParams,
                order=6) -> GridFunction:
    """Truncated differential Moyal series."""
    return _series(f, g, q.hbar, _as_order(order))


def star_gamma(f: GridFunction, g: GridFunction, q: QuantizationParams,
               damping: DampingParams, order=6) -> GridFunction:
    """Damped-oscillator deformation of the series; gamma = 0 is the Moyal series."""
    return _series(f, g, q.hbar, _as_order(order),
                   gamma=damping.gamma, mass=damping.mass)


def star_product(f: GridFunction, g: GridFunction, q: QuantizationParams,
                 route: str = "kernel", order=6) -> GridFunction:
    """Route dispatcher; ``route`` is one of 'kernel', 'series'."""
    if route == "kernel":
        return star_kernel_route(f, g, q)
    if route == "series":
        return star_series(f, g, q, order)
    raise ValueError(f"unknown star route {route!r}")


def poisson_bracket(f: GridFunction, g: GridFunction) -> GridFunction:
    """{f, g} = f_x g_p - f_p g_x with the same stencil machinery."""
    f._check_same_grid(g)
    df = _derivative_tensors(f, 1)
    dg = _derivative_tensors(g, 1)
    return GridFunction(f.grid, df[(1, 0)] * dg[(0, 1)] - df[(0, 1)] * dg[(1, 0)])


def moyal_bracket(f: GridFunction, g: GridFunction, q: QuantizationParams,
                  route: str = "series", order=6) -> GridFunction:
    """(f * g - g * f) / (i hbar), by either route."""
    fg = star_product(f, g, q, route, order)
    gf = star_product(g, f, q, route, order)
    return GridFunction(f.grid, (fg.fine_values - gf.fine_values) / (1j * q.hbar))
