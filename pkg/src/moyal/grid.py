"""Discretized phase space: grids, sampled functions, quadrature.

Conventions used by every module in this package:

* The (x, p) box is divided into n_x * n_p uniform cells; sample nodes sit at
  cell midpoints, ``x_i = x_min + (i + 1/2) dx`` and ``p_j = p_min + (j + 1/2) dp``.
  Midpoints avoid endpoint duplication under grid doubling.
* ``integrate`` is the midpoint rule ``sum(values) * dx * dp``. For smooth
  functions that decay inside the box it converges superalgebraically.
* A :class:`GridFunction` additionally stores samples on the x-refined lattice
  ``x_min + (k + 1) dx/2`` (the 2 n_x - 1 pairwise midpoints of the nodes).
  The operator transforms in :mod:`moyal.weyl` need function values at node
  midpoints ``(x_a + x_b)/2``; keeping the refined samples from construction
  avoids interpolation entirely.

Momentum-box regimes
--------------------
The transforms behave best when the p-box is matched to the x-spacing:

* ``L_p * dx = pi * hbar`` ("critically sampled", see
  :func:`critically_sampled_grid`): the offset lattice of the inverse Weyl
  transform is exactly conjugate to the p-lattice. Round trips are exact to
  rounding for box-decaying functions and the identity
  ``kernel_trace(K) == phase_space_trace(inverse_weyl(K))`` holds float-exactly.
* ``L_p * dx < pi * hbar`` (sub-critical): everything remains alias-free;
  the trace identity holds to quadrature accuracy only.
* ``L_p * dx > pi * hbar``: the inverse transform aliases momenta at
  ``p +/- pi*hbar/dx``; avoid for Wigner-side work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

__all__ = [
    "QuantizationParams",
    "PhaseSpaceGrid",
    "GridFunction",
    "build_grid",
    "critically_sampled_grid",
    "sample",
    "integrate",
    "phase_space_trace",
]


@dataclass(frozen=True)
class QuantizationParams:
    """Deformation parameter. ``hbar`` must be positive."""

    hbar: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise ValueError(f"hbar must be positive and finite, got {self.hbar}")


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform rectangular discretization of a phase-space box.

    Nodes are cell midpoints; see the module docstring for the conventions.
    Instances are immutable and safe to share between threads.
    """

    x_min: float
    x_max: float
    n_x: int
    p_min: float
    p_max: float
    n_p: int

    def __post_init__(self):
        for name in ("x_min", "x_max", "p_min", "p_max"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")
        if self.x_max <= self.x_min:
            raise ValueError(f"inverted x interval: [{self.x_min}, {self.x_max}]")
        if self.p_max <= self.p_min:
            raise ValueError(f"inverted p interval: [{self.p_min}, {self.p_max}]")
        if self.n_x < 2 or self.n_p < 2:
            raise ValueError(f"need at least 2 points per axis, got n_x={self.n_x}, n_p={self.n_p}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @cached_property
    def x(self) -> np.ndarray:
        """Node coordinates along x, shape (n_x,)."""
        return self.x_min + (np.arange(self.n_x) + 0.5) * self.dx

    @cached_property
    def p(self) -> np.ndarray:
        """Node coordinates along p, shape (n_p,)."""
        return self.p_min + (np.arange(self.n_p) + 0.5) * self.dp

    @cached_property
    def x_fine(self) -> np.ndarray:
        """Pairwise node midpoints (x_a + x_b)/2, shape (2 n_x - 1,).

        Every even index 2i is the node x_i; odd indices are half-nodes.
        """
        return self.x_min + (np.arange(2 * self.n_x - 1) + 1) * (self.dx / 2)

    def meshgrid(self, fine: bool = False):
        xs = self.x_fine if fine else self.x
        return np.meshgrid(xs, self.p, indexing="ij")

    def momentum_criticality(self, hbar: float) -> float:
        """(p_max - p_min) * dx / (pi * hbar); 1.0 is critical, < 1 sub-critical."""
        return (self.p_max - self.p_min) * self.dx / (np.pi * hbar)

    def inner_box_mask(self, fraction: float = 0.9):
        """Node masks (x_mask, p_mask) selecting the centered ``fraction`` of each axis."""
        cx = 0.5 * (self.x_min + self.x_max)
        cp = 0.5 * (self.p_min + self.p_max)
        mx = np.abs(self.x - cx) <= fraction * 0.5 * (self.x_max - self.x_min)
        mp = np.abs(self.p - cp) <= fraction * 0.5 * (self.p_max - self.p_min)
        return mx, mp


def build_grid(x_min: float, x_max: float, n_x: int,
               p_min: float, p_max: float, n_p: int) -> PhaseSpaceGrid:
    """Validate bounds and sizes and return the grid."""
    return PhaseSpaceGrid(float(x_min), float(x_max), int(n_x),
                          float(p_min), float(p_max), int(n_p))


def critically_sampled_grid(x_min: float, x_max: float, n_x: int,
                            n_p: Optional[int] = None, hbar: float = 1.0) -> PhaseSpaceGrid:
    """Grid whose p-box is centered at 0 with L_p = pi * hbar / dx.

    On such grids the inverse Weyl transform is alias-free and the trace
    identity is float-exact; use them for tight-tolerance transform work.
    """
    if n_p is None:
        n_p = n_x
    dx = (x_max - x_min) / n_x
    p_half = 0.5 * np.pi * hbar / dx
    return build_grid(x_min, x_max, n_x, -p_half, p_half, n_p)


@dataclass(eq=False)
class GridFunction:
    """Complex samples of a phase-space function.

    ``fine_values`` has shape (2 n_x - 1, n_p) on the refined x lattice;
    ``values`` is the (n_x, n_p) node view. ``func``, when present, is the
    pointwise map the samples came from; operations that need values outside
    the stored lattices (derivative stencils near edges, operator momentum
    quadrature) use it and otherwise fall back to decay-based defaults.

    Treat instances as immutable: operations return new objects.
    """

    grid: PhaseSpaceGrid
    fine_values: np.ndarray
    func: Optional[Callable] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (2 * self.grid.n_x - 1, self.grid.n_p)
        self.fine_values = np.asarray(self.fine_values, dtype=complex)
        if self.fine_values.shape != expected:
            raise ValueError(f"fine_values shape {self.fine_values.shape} != {expected}")

    @property
    def values(self) -> np.ndarray:
        """Node samples, shape (n_x, n_p); a view of the refined array."""
        return self.fine_values[::2]

    def _check_same_grid(self, other: "GridFunction"):
        if self.grid != other.grid:
            raise ValueError("grid mismatch between operands")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_same_grid(other)
            return GridFunction(self.grid, self.fine_values + other.fine_values)
        return GridFunction(self.grid, self.fine_values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check_same_grid(other)
            return GridFunction(self.grid, self.fine_values - other.fine_values)
        return GridFunction(self.grid, self.fine_values - other)

    def __rsub__(self, other):
        return GridFunction(self.grid, other - self.fine_values)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_same_grid(other)
            return GridFunction(self.grid, self.fine_values * other.fine_values)
        return GridFunction(self.grid, self.fine_values * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return GridFunction(self.grid, self.fine_values / scalar)

    def __neg__(self):
        return GridFunction(self.grid, -self.fine_values)

    def conj(self) -> "GridFunction":
        return GridFunction(self.grid, self.fine_values.conj())

    def real_part(self) -> "GridFunction":
        return GridFunction(self.grid, self.fine_values.real.astype(complex))

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.fine_values.copy(), self.func,
                            dict(self.diagnostics))


def sample(grid: PhaseSpaceGrid, f: Callable) -> GridFunction:
    """Evaluate ``f(x, p)`` on the grid (refined x lattice included).

    ``f`` must accept numpy arrays and broadcast; it is retained on the result
    for later out-of-box evaluation. Non-finite samples raise, naming the node.
    """
    X, P = grid.meshgrid(fine=True)
    vals = np.asarray(f(X, P), dtype=complex)
    if vals.shape != X.shape:
        vals = np.broadcast_to(vals, X.shape).astype(complex)
    bad = ~np.isfinite(vals)
    if bad.any():
        k, j = np.argwhere(bad)[0]
        raise ValueError(
            f"non-finite sample {vals[k, j]} at (x={grid.x_fine[k]:g}, p={grid.p[j]:g})"
        )
    return GridFunction(grid, vals, func=f)


def integrate(f: GridFunction) -> complex:
    """Midpoint-rule approximation of the phase-space integral of ``f``."""
    return complex(f.values.sum() * f.grid.dx * f.grid.dp)


def phase_space_trace(f: GridFunction, q: QuantizationParams) -> complex:
    """``integrate(f) / (2 pi hbar)``."""
    return integrate(f) / (2 * np.pi * q.hbar)
