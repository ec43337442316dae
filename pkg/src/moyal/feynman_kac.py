"""Partition traces, ground-state energy extraction, ground Wigner functions,
and real-time spectra.

The imaginary-time trace Z(tau) is the phase-space average of the star
exponential; for a discrete bound spectrum it decays as a Dirichlet series
sum_n w_n e^{-tau E_n / hbar}, so the slope of ln Z over a late window gives
-E_0/hbar and the intercept the ground-state degeneracy. Fitting the slope
converges much faster than the raw -(hbar/tau) ln Z limit, whose prefactor
dies off only like 1/tau.

Kernel-route traces reuse a single Hermitian eigendecomposition: the trace of
any function of the operator is sum_n w_n g(E_n) with per-eigenstate
phase-space weights w_n computed once. That is the same finite sum as
integrating the transformed exponential, reordered.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erf

from .grid import (GridFunction, PhaseSpaceGrid, QuantizationParams, integrate,
                   phase_space_trace)
from .star import star_gamma
from .starexp import (EvolutionSchedule, HamiltonianSpec, closed_form,
                      star_exp_ode, star_exp_squaring)
from .weyl import hermitian_eigensystem, weyl_kernel

__all__ = [
    "TraceCurve",
    "SpectrumEstimate",
    "WignerState",
    "BranchTrackingError",
    "NotConvergedError",
    "default_schedule",
    "partition_trace",
    "reference_trace",
    "ground_energy",
    "ground_energy_damped",
    "ground_wigner",
    "real_time_spectrum",
]

ROUTES = ("kernel", "squaring", "ode", "closed_form")

STATUS_CONVERGED = "converged"
STATUS_DIVERGENT = "divergent_trace"
STATUS_UNBOUNDED = "unbounded_below"
STATUS_CONTINUOUS = "continuous_spectrum_suspected"

# convergence rules for the fit diagnostics
SLOPE_DRIFT_TOL = 1e-3
INNER_BOX_TOL = 2e-2
CURVATURE_TOL = 1e-3


class BranchTrackingError(RuntimeError):
    """Complex-log branch could not be followed along the schedule."""


class NotConvergedError(RuntimeError):
    """An operation required a converged energy estimate and did not get one."""


@dataclass(eq=False)
class TraceCurve:
    """Sampled Z values along a schedule, with per-point diagnostics."""

    schedule: EvolutionSchedule
    z_values: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z_values = np.asarray(self.z_values, dtype=complex)
        if len(self.z_values) != len(self.schedule.samples):
            raise ValueError("z_values length does not match the schedule")

    @property
    def taus(self) -> np.ndarray:
        return self.schedule.times


@dataclass(frozen=True)
class SpectrumEstimate:
    e0: complex
    degeneracy: float
    fit_window: tuple
    residual: float
    status: str
    details: dict = field(default_factory=dict, compare=False)


@dataclass(eq=False)
class WignerState:
    rho: GridFunction
    norm_check: float
    origin: dict


def default_schedule(lo: float = 0.5, hi: float = 8.0, n: int = 24) -> EvolutionSchedule:
    """Geometric imaginary-time schedule used when none is supplied."""
    return EvolutionSchedule.imaginary_geometric(lo, hi, n)


def _spectral_weights(evals: np.ndarray, evecs: np.ndarray, grid: PhaseSpaceGrid,
                      hbar: float, x_mask=None, p_mask=None) -> np.ndarray:
    """Phase-space box weight of each eigenprojector's Wigner image.

    Equals phase_space_trace(inverse_weyl(projector kernel)) restricted to the
    masked nodes, evaluated via the anti-diagonal contraction
        w_n = (2 dx / 2 pi hbar) * sum_r S(r) sum_i v_n[i-r] conj(v_n)[i+r],
    with S(r) the masked p-quadrature of e^{i p 2 r dx / hbar}.
    """
    g = grid
    n = g.n_x
    p = g.p if p_mask is None else g.p[p_mask]
    i_sel = np.ones(n, dtype=bool) if x_mask is None else x_mask
    r_max = (n - 1) // 2
    rs = np.arange(-r_max, r_max + 1)
    s_of_r = (np.exp(1j * np.outer(2 * rs * g.dx, p) / hbar).sum(axis=1)) * g.dp
    w = np.zeros(len(evals), dtype=complex)
    for ridx, r in enumerate(rs):
        # valid centers i with i-r and i+r in range
        lo = max(0, r, -r)
        hi = n - 1 - max(0, r, -r)
        if hi < lo:
            continue
        idx = np.arange(lo, hi + 1)
        idx = idx[i_sel[idx]]
        if len(idx) == 0:
            continue
        corr = (evecs[idx - r, :] * evecs[idx + r, :].conj()).sum(axis=0)  # / dx implicit
        w += s_of_r[ridx] * corr
    # projector kernel carries 1/dx; offset weight 2 dx; phase-space 1/(2 pi hbar)
    return w * (2 * g.dx / (2 * np.pi * hbar)) / g.dx


class _KernelTraceEngine:
    """One eigendecomposition, reusable traces of operator functions."""

    def __init__(self, spec: HamiltonianSpec, q: QuantizationParams,
                 grid: PhaseSpaceGrid):
        if spec.family == "damped":
            raise ValueError(
                "the damped family evolves under the gamma-deformed product, "
                "which has no operator-kernel representation; use the ode or "
                "closed_form routes")
        h = spec.grid_function(grid)
        self.grid = grid
        self.hbar = q.hbar
        self.evals, self.evecs, self.defect = hermitian_eigensystem(weyl_kernel(h, q))
        self.weights = _spectral_weights(self.evals, self.evecs, grid, q.hbar)
        mx, mp = grid.inner_box_mask()
        self.inner_weights = _spectral_weights(self.evals, self.evecs, grid,
                                               q.hbar, mx, mp)

    def trace_of_exp(self, s: complex, inner: bool = False) -> complex:
        w = self.inner_weights if inner else self.weights
        return complex((w * np.exp(s * self.evals)).sum())


def partition_trace(spec: HamiltonianSpec, q: QuantizationParams,
                    grid: PhaseSpaceGrid, schedule: Optional[EvolutionSchedule] = None,
                    route: str = "kernel") -> TraceCurve:
    """Z(tau) = phase-space trace of the star exponential, per schedule point.

    Diagnostics carry the inner-90%-box re-integration ratio per point (a box
    truncation probe) and a status note when the trace misbehaves.
    """
    if schedule is None:
        schedule = default_schedule()
    if schedule.mode != "imaginary":
        raise ValueError("partition_trace expects an imaginary-time schedule")
    if route not in ROUTES:
        raise ValueError(f"route must be one of {ROUTES}, got {route!r}")
    taus = schedule.times
    diags: dict = {"route": route}
    z = np.empty(len(taus), dtype=complex)
    inner_dev = np.empty(len(taus))

    if route == "kernel":
        eng = _KernelTraceEngine(spec, q, grid)
        for i, tau in enumerate(taus):
            z[i] = eng.trace_of_exp(-tau / q.hbar)
            zi = eng.trace_of_exp(-tau / q.hbar, inner=True)
            inner_dev[i] = abs(zi - z[i]) / max(abs(z[i]), 1e-300)
        diags["antihermitian_defect"] = eng.defect
    elif route == "closed_form":
        mx, mp = grid.inner_box_mask()
        for i, tau in enumerate(taus):
            e = closed_form(spec, q, grid, tau)
            z[i] = phase_space_trace(e, q)
            zin = e.values[np.ix_(mx, mp)].sum() * grid.dx * grid.dp / (2 * np.pi * q.hbar)
            inner_dev[i] = abs(zin - z[i]) / max(abs(z[i]), 1e-300)
    else:
        h = spec.grid_function(grid)
        mx, mp = grid.inner_box_mask()
        if route == "squaring":
            if spec.family == "damped":
                raise ValueError("the squaring route squares through operator "
                                 "kernels; use ode or closed_form for the damped family")
            states = []
            for tau in taus:
                k = max(0, int(np.ceil(np.log2(max(tau * max(1.0, np.abs(h.values).max())
                                                   / q.hbar, 1.0) / 2.0))))
                states.append(star_exp_squaring(h, q, tau, k))
        else:  # ode
            product = None
            if spec.family == "damped":
                dp_ = spec.damping()
                product = lambda f, g_: star_gamma(f, g_, q, dp_, order=6)
            states = star_exp_ode(h, q, schedule, product=product)
        for i, (tau, e) in enumerate(zip(taus, states)):
            z[i] = phase_space_trace(e, q)
            zin = e.values[np.ix_(mx, mp)].sum() * grid.dx * grid.dp / (2 * np.pi * q.hbar)
            inner_dev[i] = abs(zin - z[i]) / max(abs(z[i]), 1e-300)

    diags["inner_box_deviation"] = inner_dev
    bad = ~np.isfinite(z)
    if bad.any():
        diags["status_note"] = "divergent"
        first_bad = int(np.argmax(bad))
        diags["first_divergent_index"] = first_bad
        z[bad] = 0.0
    return TraceCurve(schedule, z, route, diags)


def reference_trace(spec: HamiltonianSpec, taus, q: QuantizationParams,
                    grid: Optional[PhaseSpaceGrid] = None) -> np.ndarray:
    """Exact closed-form Z(tau) per family (box-truncated where a box is needed).

    harmonic:   csch(w tau / 2) / 2
    quadratic:  csch(sqrt(ab - c^2) tau) / 2      (elliptic branch)
    damped:     e^{-i gamma tau / 2} csch(w tau / 2) / 2
    free:       box x-length times the Gaussian p integral over the box
    linear:     separable box integral of the closed form
    """
    taus = np.asarray(taus, dtype=float)
    hbar = q.hbar
    if spec.family == "harmonic":
        return 0.5 / np.sinh(spec.omega * taus / 2)
    if spec.family == "quadratic":
        om = spec.elliptic_frequency()
        return 0.5 / np.sinh(om * taus)
    if spec.family == "damped":
        return 0.5 * np.exp(-1j * spec.gamma * taus / 2) / np.sinh(spec.omega * taus / 2)
    if spec.family == "free":
        if grid is None:
            raise ValueError("free-particle reference trace needs a grid (box)")
        lx = grid.x_max - grid.x_min
        sig = np.sqrt(2 * spec.mass * hbar / taus)  # e^{-p^2 tau/(2 m hbar)} width
        pint = 0.5 * np.sqrt(2 * np.pi * spec.mass * hbar / taus) * (
            erf(grid.p_max / sig * np.sqrt(2) / np.sqrt(2)) - erf(grid.p_min / sig))
        # exact: int_{pmin}^{pmax} e^{-tau p^2/(2 m hbar)} dp
        alpha = taus / (2 * spec.mass * hbar)
        pint = 0.5 * np.sqrt(np.pi / alpha) * (erf(np.sqrt(alpha) * grid.p_max)
                                               - erf(np.sqrt(alpha) * grid.p_min))
        return lx * pint / (2 * np.pi * hbar)
    if spec.family == "linear":
        if grid is None:
            raise ValueError("linear-potential reference trace needs a grid (box)")
        a = taus / hbar
        xint = (np.exp(-a * grid.x_min) - np.exp(-a * grid.x_max)) / a
        pint = 0.5 * np.sqrt(np.pi / a) * (erf(np.sqrt(a) * grid.p_max)
                                           - erf(np.sqrt(a) * grid.p_min))
        return np.exp(taus**3 / (12 * hbar)) * xint * pint / (2 * np.pi * hbar)
    raise ValueError(f"no reference trace for family {spec.family!r}")


def _fit_window_slice(taus: np.ndarray, fit_window) -> np.ndarray:
    if fit_window is None:
        lo = taus[0] + (taus[-1] - taus[0]) * 2.0 / 3.0
        hi = taus[-1]
    else:
        lo, hi = fit_window
        if not lo < hi:
            raise ValueError(f"fit window must satisfy lo < hi, got ({lo}, {hi})")
    mask = (taus >= lo - 1e-12) & (taus <= hi + 1e-12)
    if mask.sum() < 4:
        raise ValueError(
            f"need >= 4 schedule points inside the fit window [{lo:g}, {hi:g}], "
            f"found {int(mask.sum())}")
    return mask


def _line_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares slope/intercept for complex ordinates."""
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    return coef[0], coef[1], float(np.sqrt(np.mean(np.abs(resid) ** 2)))


def _log_with_branch(z: np.ndarray) -> np.ndarray:
    """Complex log with the phase unwrapped along the sequence.

    Raises :class:`BranchTrackingError` when consecutive phases are within
    10% of the pi ambiguity limit.
    """
    phases = np.angle(z)
    steps = np.diff(phases)
    wrapped = (steps + np.pi) % (2 * np.pi) - np.pi
    if np.any(np.abs(wrapped) > 0.9 * np.pi):
        raise BranchTrackingError(
            "phase step between adjacent schedule points approaches pi; "
            "use a denser schedule to keep the complex-log branch trackable")
    return np.log(np.abs(z)) + 1j * np.concatenate([[phases[0]],
                                                    phases[0] + np.cumsum(wrapped)])


def _estimate(curve: TraceCurve, q: QuantizationParams, fit_window,
              complex_energy: bool) -> SpectrumEstimate:
    taus = curve.taus
    z = curve.z_values
    mask = _fit_window_slice(taus, fit_window)
    tw = taus[mask]
    zw = z[mask]
    window = (float(tw[0]), float(tw[-1]))

    if curve.diagnostics.get("status_note") == "divergent" or \
            not np.isfinite(zw).all() or (np.abs(zw) == 0).any():
        return SpectrumEstimate(complex(np.nan), float("nan"), window,
                                float("nan"), STATUS_DIVERGENT,
                                {"reason": "non-finite or vanishing trace in window"})

    if complex_energy:
        logz = _log_with_branch(zw)
    else:
        if np.abs(zw.imag).max() > 1e-8 * np.abs(zw).max():
            raise ValueError(
                "trace has a significant imaginary part; use the damped fit")
        if (zw.real <= 0).any():
            raise ValueError("non-positive trace values inside the fit window")
        logz = np.log(zw.real).astype(complex)

    slope, intercept, resid = _line_fit(tw, logz)
    e0 = -q.hbar * slope
    degeneracy = float(np.exp(intercept.real))

    half = len(tw) // 2
    s1, _, _ = _line_fit(tw[:half], logz[:half])
    s2, _, _ = _line_fit(tw[half:], logz[half:])
    drift = abs(s2 - s1) / max(abs(slope), 1e-300)

    # discrete curvature of ln Z (real part): positive growing => not bounded below
    d2 = np.diff(np.diff(logz.real) / np.diff(tw)) / (0.5 * (tw[2:] - tw[:-2]))
    curving_up = len(d2) > 0 and d2[-1] > CURVATURE_TOL and \
        (len(d2) == 1 or d2[-1] >= d2[0])

    inner_dev = curve.diagnostics.get("inner_box_deviation")
    box_sensitive = False
    if inner_dev is not None:
        box_sensitive = bool(np.nanmax(np.asarray(inner_dev)[mask]) > INNER_BOX_TOL)

    if curving_up:
        status = STATUS_UNBOUNDED
    elif box_sensitive or drift > SLOPE_DRIFT_TOL:
        status = STATUS_CONTINUOUS
    else:
        status = STATUS_CONVERGED

    details = {"slope_drift": float(drift),
               "curvature_tail": float(d2[-1]) if len(d2) else 0.0,
               "box_sensitive": box_sensitive}
    if not complex_energy:
        e0 = complex(e0.real, 0.0)
    return SpectrumEstimate(complex(e0), degeneracy, window, resid, status, details)


def ground_energy(curve: TraceCurve, q: QuantizationParams,
                  fit_window=None) -> SpectrumEstimate:
    """Slope fit of ln Z over the window; e0 = -hbar * slope, degeneracy = e^intercept."""
    return _estimate(curve, q, fit_window, complex_energy=False)


def ground_energy_damped(spec: HamiltonianSpec, q: QuantizationParams,
                         schedule: Optional[EvolutionSchedule] = None,
                         fit_window=None,
                         curve: Optional[TraceCurve] = None) -> SpectrumEstimate:
    """Complex-slope fit for the damped family.

    Fits the exact closed-form trace on the schedule unless an explicit
    ``curve`` is supplied. The complex logarithm is branch-tracked along the
    schedule; expected e0 = hbar omega (1/2 + i gamma / (2 omega)).
    """
    if spec.family != "damped":
        raise ValueError(f"ground_energy_damped expects the damped family, got {spec.family!r}")
    if curve is None:
        if schedule is None:
            schedule = default_schedule()
        z = reference_trace(spec, schedule.times, q)
        curve = TraceCurve(schedule, z, "closed_form_reference")
    return _estimate(curve, q, fit_window, complex_energy=True)


def ground_wigner(spec: HamiltonianSpec, q: QuantizationParams,
                  grid: PhaseSpaceGrid, tau_large: float,
                  route: str = "kernel") -> WignerState:
    """Ground-state Wigner function from the late-time star exponential.

    rho = e^{tau E0/hbar} E(tau) / (2 pi hbar), renormalized to unit integral;
    requires a converged ground_energy on the same route and grid. The
    distance between the tau and 1.25 tau extractions is recorded as a
    convergence check.
    """
    schedule = default_schedule(hi=max(8.0, tau_large))
    curve = partition_trace(spec, q, grid, schedule, route)
    est = ground_energy(curve, q)
    if est.status != STATUS_CONVERGED:
        raise NotConvergedError(
            f"ground-state extraction needs a converged energy fit; got status "
            f"{est.status!r} (e0 estimate {est.e0:.4g})")

    def rho_at(tau):
        if route == "kernel":
            eng = _KernelTraceEngine(spec, q, grid)
            vals = (eng.evecs * np.exp(-tau * eng.evals / q.hbar)) @ eng.evecs.conj().T / grid.dx
            from .weyl import OperatorKernel, inverse_weyl
            e = inverse_weyl(OperatorKernel(grid, q.hbar, vals), q)
        elif route == "closed_form":
            e = closed_form(spec, q, grid, tau)
        else:
            h = spec.grid_function(grid)
            sub = EvolutionSchedule("imaginary", (tau,),
                                    substeps=max(16, int(20 * tau)))
            e = star_exp_ode(h, q, sub)[-1]
        rho = GridFunction(grid, e.fine_values * np.exp(tau * est.e0.real / q.hbar)
                           / (2 * np.pi * q.hbar))
        norm = integrate(rho).real
        if norm <= 0:
            raise NotConvergedError(f"non-positive Wigner normalization {norm:.3e}")
        return GridFunction(grid, rho.fine_values / norm), norm

    rho1, norm1 = rho_at(tau_large)
    rho2, _ = rho_at(1.25 * tau_large)
    gap = float(np.abs(rho1.values - rho2.values).max())
    rho = GridFunction(grid, rho1.fine_values.real.astype(complex))
    return WignerState(rho, norm1, {
        "family": spec.family, "tau": tau_large, "route": route,
        "e0": est.e0, "convergence_gap": gap,
    })


def real_time_spectrum(spec: HamiltonianSpec, q: QuantizationParams,
                       grid: PhaseSpaceGrid, t_schedule: EvolutionSchedule,
                       route: str = "kernel", min_weight: float = 0.05):
    """Energy peaks from the Fourier analysis of the real-time trace.

    Z(t) = sum_n w_n e^{-i t E_n / hbar} is sampled on the uniform schedule,
    Hann-windowed and Fourier transformed; peak positions are refined by
    three-point quadratic interpolation. Returns a list of (energy, weight)
    pairs sorted by energy. Only the kernel route is caustic-free; the damped
    family has a complex spectrum and is excluded.
    """
    if spec.family == "damped":
        raise ValueError("real-time spectra are not defined for the damped family "
                         "(complex spectrum)")
    if route != "kernel":
        raise ValueError("real_time_spectrum supports the kernel route only")
    if t_schedule.mode != "real":
        raise ValueError("real_time_spectrum expects a real-time schedule")
    ts = t_schedule.times
    dts = np.diff(ts)
    if len(ts) < 8 or np.abs(dts - dts[0]).max() > 1e-9 * dts[0]:
        raise ValueError("need a uniform real-time schedule with >= 8 points")
    dt = float(dts[0])

    eng = _KernelTraceEngine(spec, q, grid)
    if eng.evals.max() * dt / q.hbar > np.pi:
        warnings.warn("time step under-resolves the largest eigenfrequency; "
                      "high peaks will alias", stacklevel=2)
    zt = np.array([eng.trace_of_exp(-1j * t / q.hbar) for t in ts])

    k = len(zt)
    window = np.hanning(k)
    spec_f = np.fft.fft(zt * window)
    # e^{-i E t / hbar} appears at frequency bin m ~ E T / (2 pi hbar)
    total_t = k * dt
    bin_e = 2 * np.pi * q.hbar / total_t
    mag = np.abs(spec_f)
    scale = window.sum()
    peaks = []
    for m in range(k):
        if mag[m] < mag[(m - 1) % k] or mag[m] <= mag[(m + 1) % k]:
            continue
        amp = mag[m] / scale
        if amp < min_weight:
            continue
        ym, y0, yp = mag[(m - 1) % k], mag[m], mag[(m + 1) % k]
        denom = ym - 2 * y0 + yp
        delta = 0.5 * (ym - yp) / denom if denom != 0 else 0.0
        peaks.append((float((m + delta) * bin_e), float(amp)))
    resolution = bin_e
    if len(peaks) >= 2:
        spacings = np.diff(sorted(e for e, _ in peaks))
        if len(spacings) and spacings.min() < 2 * resolution:
            warnings.warn(
                f"adjacent peaks separated by < 2 Fourier bins ({resolution:.3g}); "
                "lengthen the time window to resolve them", stacklevel=2)
    peaks.sort(key=lambda ew: ew[0])
    return peaks
