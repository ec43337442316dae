"""Weyl quantization as an integral-kernel transform, and its inverse.

A phase-space function f maps to the kernel

    kappa_f(x, x') = (1/2 pi hbar) * int f((x+x')/2, p) e^{i p (x-x')/hbar} dp,

discretized as an n_x x n_x complex matrix over the grid nodes. The midpoints
(x_a + x_b)/2 land exactly on the refined x lattice a GridFunction stores.

Momentum quadrature
-------------------
The p-integral is evaluated on the *operator momentum lattice*: 2 n_x
midpoints spanning [-pi hbar/dx, pi hbar/dx), the full frequency band the
x lattice supports. Two reasons:

* the lattice is conjugate to the node spacing, so constants map exactly to
  the discrete delta kernel (identity/dx) and position-only functions to
  diagonal matrices;
* Hamiltonians grow polynomially in p, and quadrature restricted to the
  grid's own p-box would truncate the operator's symbol at the box edge,
  filling the spectrum with spurious null modes.

For functions that decay inside the grid's p-box (the documented
precondition) the two quadratures agree to spectral accuracy. Samples on the
operator lattice come from the retained callable when the function has one,
otherwise from trigonometric resampling of its p rows (zero outside the box,
which is where the decay precondition earns its keep).

Inverse transform
-----------------
    A_W(x, p) = int <x - y/2| A |x + y/2> e^{i p y / hbar} dy

At a refined-lattice point u_k the admissible node pairs are exactly the
anti-diagonal a + b = k, with offsets y spaced 2 dx; the quadrature weight is
therefore 2 dx. Offsets leaving the box are zero-padded. Output lands on the
full refined lattice, so inverse images remain valid GridFunctions for
further operator work. Note the identity/dx kernel itself is a lattice delta,
too rough for this offset quadrature (its image is the 2/0 comb, not the
constant 1); the smooth-kernel round trip weyl_kernel -> inverse_weyl is the
contract that holds, and it is exact to rounding on critically sampled grids.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, PhaseSpaceGrid, QuantizationParams

__all__ = [
    "OperatorKernel",
    "operator_momentum_lattice",
    "weyl_kernel",
    "inverse_weyl",
    "kernel_multiply",
    "kernel_exp",
    "kernel_trace",
    "hermitian_eigensystem",
    "dump_kernel_csv",
]


@dataclass(eq=False)
class OperatorKernel:
    """Discretized kernel kappa(x, x'): complex (n_x, n_x) matrix over grid nodes.

    The matrix of the operator acting on dx-weighted wavefunction samples is
    ``values * dx``. Instances are immutable by convention.
    """

    grid: PhaseSpaceGrid
    hbar: float
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        n = self.grid.n_x
        if self.values.shape != (n, n):
            raise ValueError(f"kernel shape {self.values.shape} != ({n}, {n})")

    def hermiticity_defect(self) -> float:
        """Relative Frobenius norm of the anti-Hermitian part."""
        k = self.values
        denom = np.linalg.norm(k) or 1.0
        return float(np.linalg.norm(k - k.conj().T) / denom)

    def _check_compatible(self, other: "OperatorKernel"):
        if self.grid != other.grid:
            raise ValueError("kernel grid mismatch")
        if self.hbar != other.hbar:
            raise ValueError(f"hbar mismatch: {self.hbar} vs {other.hbar}")


def operator_momentum_lattice(grid: PhaseSpaceGrid, hbar: float):
    """Midpoint momentum lattice conjugate to the x nodes: (q, dq).

    2 n_x points covering [-pi hbar / dx, pi hbar / dx).
    """
    dq = np.pi * hbar / (grid.n_x * grid.dx)
    q = -np.pi * hbar / grid.dx + (np.arange(2 * grid.n_x) + 0.5) * dq
    return q, dq


def _resample_rows_to_lattice(f: GridFunction, q: np.ndarray) -> np.ndarray:
    """Trig-interpolate the refined-lattice p rows of ``f`` onto momenta ``q``.

    Midpoint samples over [p_min, p_max] define a trigonometric polynomial;
    it is evaluated inside the box and set to zero outside. Exact wherever q
    coincides with a p node.
    """
    g = f.grid
    m = g.n_p
    vals = f.fine_values
    freqs = np.fft.fftfreq(m, d=1.0 / m)  # integer frequencies
    # c_k = (1/M) sum_j f_j e^{-2 pi i k (j + 1/2)/M}
    coeff = np.fft.fft(vals, axis=1) * np.exp(-1j * np.pi * freqs / m) / m
    out = np.zeros((vals.shape[0], len(q)), dtype=complex)
    inside = (q >= g.p_min) & (q <= g.p_max)
    if inside.any():
        rec = np.exp(2j * np.pi * np.outer(freqs, (q[inside] - g.p_min) / (g.p_max - g.p_min)))
        out[:, inside] = coeff @ rec
    return out


def _operator_lattice_samples(f: GridFunction, q: np.ndarray) -> np.ndarray:
    """f on (refined x lattice) x (operator momentum lattice)."""
    if f.func is not None:
        X, Q = np.meshgrid(f.grid.x_fine, q, indexing="ij")
        vals = np.asarray(f.func(X, Q), dtype=complex)
        if vals.shape != X.shape:
            vals = np.broadcast_to(vals, X.shape).astype(complex)
        return vals
    return _resample_rows_to_lattice(f, q)


def _decay_diagnostic(f: GridFunction) -> float:
    """Magnitude of the p-boundary rows relative to the function's peak."""
    peak = np.abs(f.values).max()
    if peak == 0:
        return 0.0
    edge = max(np.abs(f.values[:, 0]).max(), np.abs(f.values[:, -1]).max())
    return float(edge / peak)


def weyl_kernel(f: GridFunction, q: QuantizationParams,
                warn_on_poor_decay: bool = True) -> OperatorKernel:
    """Integral kernel of the Weyl-quantized ``f``.

    kappa[a, b] = (dq / 2 pi hbar) * sum_k f((x_a+x_b)/2, q_k) e^{i q_k (x_a - x_b)/hbar}
    """
    g = f.grid
    hbar = q.hbar
    n = g.n_x
    qs, dq = operator_momentum_lattice(g, hbar)
    samples = _operator_lattice_samples(f, qs)

    decay = _decay_diagnostic(f)
    if f.func is None and decay > 1e-6 and warn_on_poor_decay:
        warnings.warn(
            f"function does not decay at the p-box boundary (edge/peak = {decay:.2e}); "
            "operator-lattice resampling may be inaccurate",
            stacklevel=2,
        )

    d = np.arange(-(n - 1), n)
    phases = np.exp(1j * np.outer(d, qs) * g.dx / hbar)      # (2n-1, 2n)
    t = samples @ phases.T                                    # midpoint index x offset index
    a = np.arange(n)
    s_idx = a[:, None] + a[None, :]
    d_idx = a[:, None] - a[None, :] + (n - 1)
    values = (dq / (2 * np.pi * hbar)) * t[s_idx, d_idx]

    # offset-phase resolution: the p-box quadrature resolves e^{ipy/hbar} for
    # |y| up to 2 pi hbar / dp; kernels reach |y| ~ box length
    resolved = 2 * np.pi * hbar / g.dp >= 2 * (g.x_max - g.x_min)
    diags = {
        "p_edge_over_peak": decay,
        "offset_resolution_ok": bool(resolved),
        "momentum_criticality": g.momentum_criticality(hbar),
    }
    if not resolved and warn_on_poor_decay:
        warnings.warn(
            "grid p-spacing too coarse to resolve kernel phases at extreme offsets",
            stacklevel=2,
        )
    return OperatorKernel(g, hbar, values, diags)


def inverse_weyl(kernel: OperatorKernel, q: QuantizationParams) -> GridFunction:
    """Phase-space image of an operator kernel (Wigner-type transform)."""
    if q.hbar != kernel.hbar:
        raise ValueError(f"hbar mismatch: kernel built with {kernel.hbar}, got {q.hbar}")
    g = kernel.grid
    n = g.n_x
    if not np.isfinite(kernel.values).all():
        raise ValueError("kernel contains non-finite entries")

    # unfold to (midpoint index k = a+b, offset index d = b-a); zero padding
    # fills parity-mismatched and out-of-box slots
    unfolded = np.zeros((2 * n - 1, 2 * n - 1), dtype=complex)
    a = np.arange(n)
    s_idx = a[:, None] + a[None, :]
    d_idx = a[None, :] - a[:, None] + (n - 1)
    unfolded[s_idx, d_idx] = kernel.values

    d = np.arange(-(n - 1), n)
    phases = np.exp(1j * np.outer(d, g.p) * g.dx / q.hbar)   # (2n-1, n_p)
    fine = 2 * g.dx * (unfolded @ phases)
    return GridFunction(g, fine)


def kernel_multiply(a: OperatorKernel, b: OperatorKernel) -> OperatorKernel:
    """Operator composition: matrix product with the intermediate dx weight."""
    a._check_compatible(b)
    return OperatorKernel(a.grid, a.hbar, (a.values @ b.values) * a.grid.dx)


def kernel_trace(k: OperatorKernel) -> complex:
    """sum_i kappa(x_i, x_i) dx."""
    return complex(np.trace(k.values) * k.grid.dx)


def hermitian_eigensystem(k: OperatorKernel, herm_tol: float = 1e-6):
    """Eigendecomposition of the Hermitized operator matrix.

    Returns (eigenvalues, eigenvector matrix, anti-Hermitian defect). Columns
    of the eigenvector matrix are unit vectors of dx-weighted samples; the
    continuum-normalized wavefunction is column / sqrt(dx).
    """
    defect = k.hermiticity_defect()
    if defect > herm_tol:
        raise ValueError(
            f"kernel anti-Hermitian defect {defect:.2e} exceeds {herm_tol:.1e}; "
            "Hermitian exponentiation is unreliable here - use the series route"
        )
    mat = 0.5 * (k.values + k.values.conj().T) * k.grid.dx
    evals, evecs = np.linalg.eigh(mat)
    return evals, evecs, defect


def kernel_exp(k: OperatorKernel, s: complex, herm_tol: float = 1e-6) -> OperatorKernel:
    """Kernel of exp(s * H) for the Hermitized operator H behind ``k``."""
    evals, evecs, defect = hermitian_eigensystem(k, herm_tol)
    expo = (evecs * np.exp(s * evals)) @ evecs.conj().T / k.grid.dx
    return OperatorKernel(k.grid, k.hbar, expo, {"antihermitian_defect": defect})


def dump_kernel_csv(k: OperatorKernel, path) -> None:
    """Write (i, j, re, im) rows for debugging."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "re", "im"])
        for i in range(k.values.shape[0]):
            for j in range(k.values.shape[1]):
                v = k.values[i, j]
                writer.writerow([i, j, repr(v.real), repr(v.imag)])
