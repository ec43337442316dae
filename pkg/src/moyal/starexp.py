"""Star exponentials of Hamiltonians: numeric routes and closed forms.

Numeric routes build E(s) = sum_n s^n H^{*n} / n! (series, with optional
scaling-and-squaring), exponentiate the Hermitized operator kernel (kernel
route), or integrate the defining evolution dE/dtau = -(1/hbar) H * E with a
classical 4th-order Runge-Kutta step (ODE route).

Closed forms implement the known expressions per Hamiltonian family,
in their real (sech/tanh) forms; each has been validated against the
defining evolution equation, which is the arbiter for sign and branch
choices. Imaginary time tau > 0 is the primary regime; real-time evolution
enters through complex tau = i t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np

from .grid import GridFunction, PhaseSpaceGrid, QuantizationParams, sample
from .star import DampingParams, star_gamma, star_kernel_route
from .weyl import inverse_weyl, kernel_exp, weyl_kernel

__all__ = [
    "HamiltonianSpec",
    "EvolutionSchedule",
    "DivergentSeriesError",
    "EvolutionBlowupError",
    "CausticError",
    "star_exp_series",
    "star_exp_squaring",
    "star_exp_kernel",
    "star_exp_ode",
    "closed_form",
]

FAMILIES = ("free", "harmonic", "linear", "quadratic", "damped", "custom")


class DivergentSeriesError(RuntimeError):
    """Star-exponential series terms kept growing at the term cap."""


class EvolutionBlowupError(RuntimeError):
    """Norm blow-up during ODE stepping; carries the states computed so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


class CausticError(ValueError):
    """Closed form evaluated at a singular time."""


@dataclass(frozen=True)
class HamiltonianSpec:
    """One of the supported Hamiltonian families plus its parameters.

    free:      p^2 / 2m                      (mass)
    harmonic:  p^2 / 2m + m w^2 x^2 / 2      (mass, omega)
    linear:    p^2 + x                       (mass absorbed, no parameters)
    quadratic: a p^2 + b x^2 + 2 c x p       (a, b, c); elliptic iff ab - c^2 > 0
    damped:    harmonic Hamiltonian evolved under the gamma-deformed product
               (mass, omega, gamma)
    custom:    user map (x, p) -> real       (func)
    """

    family: str
    mass: float = 1.0
    omega: float = 1.0
    gamma: float = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family in ("free", "harmonic", "damped") and self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.family in ("harmonic", "damped") and self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.family == "damped" and self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.family == "custom" and self.func is None:
            raise ValueError("custom family requires func")

    def function(self) -> Callable:
        """Pointwise Hamiltonian (x, p) -> value."""
        if self.family == "free":
            m = self.mass
            return lambda x, p: p**2 / (2 * m)
        if self.family in ("harmonic", "damped"):
            m, w = self.mass, self.omega
            return lambda x, p: p**2 / (2 * m) + 0.5 * m * w**2 * x**2
        if self.family == "linear":
            return lambda x, p: p**2 + x
        if self.family == "quadratic":
            a, b, c = self.a, self.b, self.c
            return lambda x, p: a * p**2 + b * x**2 + 2 * c * x * p
        return self.func

    def grid_function(self, grid: PhaseSpaceGrid) -> GridFunction:
        return sample(grid, self.function())

    def damping(self) -> DampingParams:
        if self.family != "damped":
            raise ValueError(f"family {self.family!r} has no damping parameters")
        return DampingParams(self.gamma, self.mass)

    def elliptic_frequency(self) -> float:
        """sqrt(ab - c^2) for the quadratic family (elliptic branch)."""
        if self.family != "quadratic":
            raise ValueError("elliptic_frequency applies to the quadratic family")
        disc = self.a * self.b - self.c**2
        if disc <= 0:
            raise ValueError(f"non-elliptic quadratic form: ab - c^2 = {disc}")
        return float(np.sqrt(disc))


@dataclass(frozen=True)
class EvolutionSchedule:
    """Sampling times for an evolution run.

    mode 'imaginary' means the samples are tau values; 'real' means t values.
    ``substeps`` subdivides each interval for the ODE integrator.
    """

    mode: str
    samples: tuple
    substeps: int = 16

    def __post_init__(self):
        if self.mode not in ("imaginary", "real"):
            raise ValueError(f"mode must be 'imaginary' or 'real', got {self.mode!r}")
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or len(arr) == 0:
            raise ValueError("samples must be a non-empty 1-d sequence")
        if arr[0] < 0:
            raise ValueError(f"first sample must be >= 0, got {arr[0]}")
        if not (np.diff(arr) > 0).all():
            raise ValueError("samples must be strictly increasing")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        object.__setattr__(self, "samples", tuple(float(v) for v in arr))

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.samples)

    @classmethod
    def imaginary_geometric(cls, lo: float, hi: float, n: int, substeps: int = 16):
        return cls("imaginary", tuple(np.geomspace(lo, hi, n)), substeps)

    @classmethod
    def real_uniform(cls, t_max: float, n: int, substeps: int = 4):
        return cls("real", tuple(np.linspace(0.0, t_max, n, endpoint=False)[1:]), substeps)


def _unit(grid: PhaseSpaceGrid) -> GridFunction:
    return sample(grid, lambda x, p: np.ones_like(x, dtype=complex))


def star_exp_series(h: GridFunction, q: QuantizationParams, s: complex,
                    n_terms: int = 64, rel_tol: float = 1e-12) -> GridFunction:
    """Partial sum of sum_n s^n H^{*n} / n!, star powers by the kernel route.

    Terminates early once the last term drops below ``rel_tol`` of the partial
    sum in max-norm; raises :class:`DivergentSeriesError` if terms are still
    growing at the cap.
    """
    if n_terms < 1:
        raise ValueError(f"n_terms must be >= 1, got {n_terms}")
    total = _unit(h.grid)
    if n_terms == 1 or s == 0:
        total.diagnostics["last_term_norm"] = 0.0
        return total
    power = h.copy()
    prev_norm = np.inf
    last_norm = np.inf
    converged = False
    for n in range(1, n_terms):
        term_vals = (s**n / factorial(n)) * power.fine_values
        total = GridFunction(h.grid, total.fine_values + term_vals)
        last_norm = float(np.abs(term_vals[::2]).max())
        if last_norm <= rel_tol * max(total.max_abs(), 1e-300):
            converged = True
            break
        if n < n_terms - 1:
            power = star_kernel_route(power, h, q)
            prev_norm = last_norm
    if not converged and last_norm > prev_norm:
        raise DivergentSeriesError(
            f"series terms still growing after {n_terms} terms "
            f"(last {last_norm:.3e}); reduce |s| or use scaling-and-squaring"
        )
    total.diagnostics["last_term_norm"] = last_norm
    return total


def star_exp_squaring(h: GridFunction, q: QuantizationParams, tau: float, k: int,
                      n_terms: int = 64) -> GridFunction:
    """Series at tau / 2^k followed by k kernel-route star squarings."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    e = star_exp_series(h, q, -(tau / 2**k) / q.hbar, n_terms)
    for _ in range(k):
        e = star_kernel_route(e, e, q)
    return e


def star_exp_kernel(h: GridFunction, q: QuantizationParams, s: complex) -> GridFunction:
    """Exponential through the Hermitized operator kernel; the reference route."""
    return inverse_weyl(kernel_exp(weyl_kernel(h, q), s), q)


def star_exp_ode(h: GridFunction, q: QuantizationParams,
                 schedule: EvolutionSchedule,
                 product: Optional[Callable] = None,
                 blowup_factor: float = 1e8) -> list:
    """Integrate dE/ds = -(1/hbar or i/hbar) H * E through the schedule.

    Imaginary mode evolves in tau, real mode in t with the extra -i. The star
    product defaults to the kernel route; pass ``product`` to evolve under a
    different product (the damped family uses the gamma series).
    Returns E at each schedule sample. On norm blow-up raises
    :class:`EvolutionBlowupError` carrying the states computed so far.
    """
    if product is None:
        product = lambda f, g: star_kernel_route(f, g, q)
    coef = -1.0 / q.hbar if schedule.mode == "imaginary" else -1j / q.hbar

    def rhs(e):
        prod = product(h, e)
        return GridFunction(e.grid, coef * prod.fine_values)

    e = _unit(h.grid)
    bound = blowup_factor * max(e.max_abs(), 1.0)
    out = []
    t_now = 0.0
    for t_target in schedule.times:
        span = t_target - t_now
        nsub = schedule.substeps if span > 0 else 0
        dt = span / nsub if nsub else 0.0
        for _ in range(nsub):
            k1 = rhs(e)
            k2 = rhs(GridFunction(e.grid, e.fine_values + 0.5 * dt * k1.fine_values))
            k3 = rhs(GridFunction(e.grid, e.fine_values + 0.5 * dt * k2.fine_values))
            k4 = rhs(GridFunction(e.grid, e.fine_values + dt * k3.fine_values))
            e = GridFunction(e.grid, e.fine_values + (dt / 6.0) * (
                k1.fine_values + 2 * k2.fine_values + 2 * k3.fine_values + k4.fine_values))
            if not np.isfinite(e.fine_values).all() or e.max_abs() > bound:
                raise EvolutionBlowupError(
                    f"evolution blew up near s = {t_now:.4g}; reduce the step "
                    f"or the schedule span", out)
        t_now = t_target
        out.append(e.copy())
    return out


def _closed_form_func(spec: HamiltonianSpec, hbar: float, tau: complex) -> Callable:
    """Pointwise closed form at Wick time tau (tau = i t gives real time)."""
    if spec.family == "free":
        m = spec.mass
        return lambda x, p: np.exp(-tau * p**2 / (2 * m * hbar))

    if spec.family == "linear":
        return lambda x, p: np.exp(-(tau / hbar) * (x + p**2 - tau**2 / 12.0))

    if spec.family in ("harmonic", "damped") and (spec.family == "harmonic" or spec.gamma == 0):
        m, w = spec.mass, spec.omega
        ch = np.cosh(w * tau / 2)
        if abs(ch) < 1e-12:
            raise CausticError(f"harmonic closed form singular at tau = {tau} (cosh = 0)")
        th = np.tanh(w * tau / 2)
        return lambda x, p: (1 / ch) * np.exp(
            -(2 * th / (hbar * w)) * (p**2 / (2 * m) + 0.5 * m * w**2 * x**2))

    if spec.family == "damped":
        m, w, g = spec.mass, spec.omega, spec.gamma
        ch = np.cosh(w * tau / 2)
        if abs(ch) < 1e-12:
            raise CausticError(f"damped closed form singular at tau = {tau} (cosh = 0)")
        th = np.tanh(w * tau / 2)
        dfac = 1 - 2j * (g / w) * th
        if abs(dfac) < 1e-12:
            raise CausticError(f"damped closed form singular at tau = {tau} (width factor = 0)")
        pref = np.exp(-1j * g * tau / 2) / (ch * np.sqrt(dfac))
        return lambda x, p: pref * np.exp(
            -(th / (hbar * w)) * (m * w**2 * x**2 + p**2 / (m * dfac)))

    if spec.family == "quadratic":
        a, b, c = spec.a, spec.b, spec.c
        disc = a * b - c**2
        if disc > 0:
            om = np.sqrt(disc)
            ch = np.cosh(om * tau)
            if abs(ch) < 1e-12:
                raise CausticError(f"quadratic closed form singular at tau = {tau}")
            th = np.tanh(om * tau)
            return lambda x, p: (1 / ch) * np.exp(
                -(th / (hbar * om)) * (a * p**2 + b * x**2 + 2 * c * x * p))
        if disc == 0:
            return lambda x, p: np.exp(-(tau / hbar) * (a * p**2 + b * x**2 + 2 * c * x * p))
        # hyperbolic branch: sech/tanh continue to sec/tan
        om = np.sqrt(-disc)
        cs = np.cos(om * tau)
        if abs(cs) < 1e-12:
            raise CausticError(
                f"hyperbolic quadratic form hits a caustic at tau = {tau} (cos({om} tau) = 0)")
        tn = np.tan(om * tau)
        return lambda x, p: (1 / cs) * np.exp(
            -(tn / (hbar * om)) * (a * p**2 + b * x**2 + 2 * c * x * p))

    raise ValueError(f"no closed form for family {spec.family!r}")


def closed_form(spec: HamiltonianSpec, q: QuantizationParams,
                grid: PhaseSpaceGrid, tau: complex) -> GridFunction:
    """Closed-form star exponential at Wick time ``tau``, sampled on ``grid``."""
    if spec.family == "custom":
        raise ValueError("no closed form for custom Hamiltonians")
    if tau == 0:
        return _unit(grid)
    return sample(grid, _closed_form_func(spec, q.hbar, tau))
