"""Adaptive explicit Runge-Kutta integration of the time-dependent linear
dynamics, for state vectors and density matrices, with output at uniformly
spaced sample times.

The stepper is a Dormand-Prince 5(4) embedded pair. States are kept as flat
tuples of Python complex numbers and the stage combinations are written as
component loops: for the 4- and 9-component systems integrated here this is
several times faster than ndarray arithmetic, and the long encircling sweeps
are budgeted around that constant.

Steps are clamped so that every requested sample time is hit exactly by a
step endpoint; sampled values therefore carry the stepper's own accuracy. A
cubic Hermite interpolant over the last accepted step is available for
off-grid queries.

Density-matrix trajectories are Hermitized at emission (the drift before
enforcement is checked) and validated against the density-matrix invariants;
violations beyond tolerance raise, naming the invariant and the time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TIER_FLAT_KERNELS, check_density
from .paths import PathSpec, scalar_path_fn

# Dormand-Prince 5(4) tableau
_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0)
_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_ERR = (71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
        -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0

HERMITICITY_DRIFT_LIMIT = 1e-6
PSD_LIMIT = 1e-6
TRACE_LIMIT = 1e-6
TRACE_MONOTONE_TOL = 1e-8


class IntegrationError(RuntimeError):
    """Integration could not proceed; carries the last successfully reached
    time."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(message)
        self.last_good_time = last_good_time


class InvariantViolationError(IntegrationError):
    """An emitted sample violated a density-matrix invariant."""

    def __init__(self, invariant: str, time: float, detail: str):
        super().__init__(f"invariant '{invariant}' violated at t={time!r}: {detail}", time)
        self.invariant = invariant
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and sampling for the adaptive stepper.

    max_step of None resolves to span/1000 at solve time.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float | None = None
    min_step: float = 1e-12
    sample_count: int = 2000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.min_step <= 0:
            raise ValueError("min_step must be positive")
        if self.max_step is not None and self.max_step <= self.min_step:
            raise ValueError("min_step must be smaller than max_step")
        if self.sample_count < 2:
            raise ValueError("sample_count must be at least 2")

    def resolved_max_step(self, span: float) -> float:
        h = span / 1000.0 if self.max_step is None else self.max_step
        if h <= self.min_step:
            raise ValueError("min_step must be smaller than the resolved max_step")
        return h


def _hermite(t, t0, y0, f0, t1, y1, f1):
    """Cubic Hermite interpolation on one step (per component)."""
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s2 * (3.0 - 2.0 * s)
    h11 = s2 * (s - 1.0)
    return tuple(h00 * y0[i] + h * h10 * f0[i] + h01 * y1[i] + h * h11 * f1[i]
                 for i in range(len(y0)))


def solve_ode(f, t_span, y0, cfg: IntegratorConfig, sample_times, rescale_floor=None):
    """Integrate dy/dt = f(t, y) with the DP5(4) pair.

    f maps (t, tuple) -> sequence; sample_times must be increasing and lie
    inside t_span, and each is hit exactly by a step endpoint. Returns
    (samples, log_scales): sampled states aligned with sample_times, and the
    accumulated log of the factor divided out of each sample.

    ``rescale_floor`` (for strictly linear f only) renormalizes the working
    state whenever its largest component decays below the floor, keeping
    the integration well-conditioned for strongly decaying dynamics. The
    true state at a sample is state * exp(log_scale).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    span = t1 - t0
    if span <= 0:
        raise ValueError("t_span must be increasing")
    max_step = cfg.resolved_max_step(span)
    samples = [float(s) for s in sample_times]
    if samples and (samples[0] < t0 - 1e-12 or samples[-1] > t1 + 1e-12):
        raise ValueError("sample times must lie within t_span")

    n = len(y0)
    y = tuple(complex(v) for v in y0)
    t = t0
    k1 = tuple(f(t, y))
    atol, rtol = cfg.abs_tol, cfg.rel_tol
    log_scale = 0.0

    out = []
    scales = []
    si = 0
    while si < len(samples) and samples[si] <= t0:
        out.append(y)
        scales.append(log_scale)
        si += 1

    # initial step: conservative guess from the first derivative scale
    fmag = max((abs(v) for v in k1), default=0.0)
    ymag = max((abs(v) for v in y), default=0.0)
    h_free = min(max_step, span, 0.01 * (atol + rtol * ymag) ** 0.2 / (fmag + 1e-16) + cfg.min_step)

    while t < t1:
        if h_free < cfg.min_step:
            raise IntegrationError(
                f"step size {h_free:.3e} underflowed min_step {cfg.min_step:.3e}", t)
        h = min(h_free, max_step)
        # clamp onto the next sample time (or the end) so samples are hit
        # exactly by step endpoints
        clamped_to = None
        if si < len(samples) and t + h >= samples[si]:
            clamped_to = samples[si]
            h = clamped_to - t
        elif t + h > t1:
            clamped_to = t1
            h = t1 - t

        # stages
        K = [k1]
        for s in range(5):
            a = _A[s]
            ys = list(y)
            for j, aj in enumerate(a):
                if aj != 0.0:
                    kj = K[j]
                    ha = h * aj
                    for i in range(n):
                        ys[i] += ha * kj[i]
            K.append(tuple(f(t + _C[s] * h, tuple(ys))))
        a = _A[5]
        yn = list(y)
        for j, aj in enumerate(a):
            if aj != 0.0:
                kj = K[j]
                ha = h * aj
                for i in range(n):
                    yn[i] += ha * kj[i]
        yn = tuple(yn)
        k7 = tuple(f(t + h, yn))
        K.append(k7)

        # embedded error estimate, RMS of component errors over tolerance scale
        err2 = 0.0
        for i in range(n):
            e = 0j
            for j, ej in enumerate(_ERR):
                if ej != 0.0:
                    e += ej * K[j][i]
            e *= h
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            r = abs(e) / sc
            err2 += r * r
        err = math.sqrt(err2 / n)

        if err <= 1.0:
            t = clamped_to if clamped_to is not None else t + h
            while si < len(samples) and samples[si] <= t:
                if samples[si] == t:
                    out.append(yn)
                else:
                    out.append(_hermite(samples[si], t - h, y, k1, t, yn, k7))
                scales.append(log_scale)
                si += 1
            y = yn
            k1 = k7
            if rescale_floor is not None:
                mag = max(abs(v) for v in y)
                if 0.0 < mag < rescale_floor:
                    inv = 1.0 / mag
                    y = tuple(v * inv for v in y)
                    k1 = tuple(v * inv for v in k1)
                    log_scale += math.log(mag)
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            grown = h * factor
            # a clamp-shortened step must not collapse the controller's step
            h_free = max(h_free, grown) if clamped_to is not None else grown
        else:
            h_free = h * max(_MIN_FACTOR, _SAFETY * err ** -0.2)

    while si < len(samples):
        out.append(y)
        scales.append(log_scale)
        si += 1
    return out, scales


@dataclass(frozen=True)
class StateTrajectory:
    """Sampled pure-state evolution.

    ``states`` holds the working representation; the physical state at
    sample k is states[k] * exp(log_scales[k]). The norm is never reset: it
    decays under loss, but deep decay is carried in the log factor so the
    direction stays accurate.
    """

    times: np.ndarray
    states: np.ndarray       # (nsamples, 2), rescaled representation
    log_scales: np.ndarray   # (nsamples,), ln of the factor divided out

    @property
    def log_norms(self) -> np.ndarray:
        """ln of the true state norm per sample."""
        return np.log(np.linalg.norm(self.states, axis=1)) + self.log_scales

    @property
    def norms(self) -> np.ndarray:
        """True norms (underflow to 0 for deeply decayed runs)."""
        return np.exp(self.log_norms)

    def state(self, k: int) -> np.ndarray:
        """True (unnormalized) state at sample k."""
        return self.states[k] * math.exp(self.log_scales[k])

    def normalized(self, k: int) -> np.ndarray:
        v = self.states[k]
        return v / np.linalg.norm(v)


def evolve_state(h_of_t, psi0, t_span, cfg: IntegratorConfig | None = None) -> StateTrajectory:
    """Integrate i d psi/dt = H(t) psi for a 2x2 Hamiltonian source.

    ``h_of_t`` maps t to either a 2x2 array or a flat (h11, h12, h21, h22)
    tuple.
    """
    cfg = cfg or IntegratorConfig()
    psi0 = np.asarray(psi0, dtype=complex).reshape(2)
    if np.linalg.norm(psi0) <= 0.0:
        raise ValueError("initial state must have positive norm")

    probe = h_of_t(t_span[0])
    flat_source = isinstance(probe, tuple) and len(probe) == 4

    if flat_source:
        def f(t, y):
            h11, h12, h21, h22 = h_of_t(t)
            return (-1j * (h11 * y[0] + h12 * y[1]), -1j * (h21 * y[0] + h22 * y[1]))
    else:
        def f(t, y):
            h = h_of_t(t)
            return (-1j * (h[0][0] * y[0] + h[0][1] * y[1]),
                    -1j * (h[1][0] * y[0] + h[1][1] * y[1]))

    times = np.linspace(t_span[0], t_span[1], cfg.sample_count)
    raw, scales = solve_ode(f, t_span, tuple(psi0), cfg, times, rescale_floor=1e-3)
    return StateTrajectory(times=times, states=np.array(raw, dtype=complex),
                           log_scales=np.array(scales))


@dataclass(frozen=True)
class DensityTrajectory:
    """Sampled density-matrix evolution along a path.

    ``rhos`` holds unit-trace normalized matrices; the physical density
    matrix at sample k is rhos[k] * exp(log_traces[k]). Long encirclings
    decay by hundreds of e-folds, so the trace is carried logarithmically.
    """

    tier: str
    times: np.ndarray
    rhos: np.ndarray         # (nsamples, dim, dim), unit trace, Hermitized
    log_traces: np.ndarray   # (nsamples,), ln of the true trace

    @property
    def traces(self) -> np.ndarray:
        """True traces (underflow to 0 for deeply decayed runs)."""
        return np.exp(self.log_traces)

    def density(self, k: int) -> np.ndarray:
        """True (unnormalized) density matrix at sample k."""
        return self.rhos[k] * math.exp(self.log_traces[k])


def _full3_step_cap(spec: PathSpec) -> float:
    g = 0.5 * (spec.base.gamma0 + spec.base.gamma2)
    if spec.kind == "circle":
        o2max = abs(spec.base.omega2)
    else:
        o2max = max(spec.omega2_max, abs(spec.base.omega2))
    return 0.05 / max(g, o2max * o2max, 1.0)


def evolve_density(rhs_tier: str, path: PathSpec, rho0, cfg: IntegratorConfig | None = None) -> DensityTrajectory:
    """Integrate the chosen model tier along a path and sample the density
    matrix at uniform times.

    Samples are Hermitized ((rho + rho^dag)/2) after checking that the
    accumulated non-Hermitian drift stays within limits, then validated:
    positive semidefinite, trace in [0, 1], and trace non-increasing from
    sample to sample.
    """
    cfg = cfg or IntegratorConfig()
    if rhs_tier not in TIER_FLAT_KERNELS:
        raise ValueError(f"unknown tier {rhs_tier!r}; expected one of {sorted(TIER_FLAT_KERNELS)}")
    kernel, dim = TIER_FLAT_KERNELS[rhs_tier]
    rho0 = check_density(np.asarray(rho0, dtype=complex))
    if rho0.shape[0] != dim:
        raise ValueError(f"tier {rhs_tier!r} needs a {dim}x{dim} density matrix, got {rho0.shape}")

    if rhs_tier == "full3":
        cap = _full3_step_cap(path)
        resolved = cfg.resolved_max_step(path.total_time)
        if resolved > cap:
            cfg = IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                                   max_step=cap, min_step=cfg.min_step,
                                   sample_count=cfg.sample_count)

    pfn = scalar_path_fn(path)

    def f(t, y):
        return kernel(pfn(t), y)

    times = np.linspace(0.0, path.total_time, cfg.sample_count)
    raw, scales = solve_ode(f, (0.0, path.total_time), tuple(rho0.reshape(dim * dim)),
                            cfg, times, rescale_floor=1e-3)

    # The eliminated tier keeps second-order terms that are not of Lindblad
    # form: its trace wiggles at the size of those corrections and pure
    # states may dip slightly negative. Complete positivity is only
    # guaranteed (and therefore only enforced tightly) for the other tiers.
    lindblad_form = rhs_tier != "eliminated"
    psd_limit = PSD_LIMIT if lindblad_form else 0.05

    rhos = np.empty((len(raw), dim, dim), dtype=complex)
    log_traces = np.empty(len(raw))
    prev_true = None
    for k, flat in enumerate(raw):
        rho = np.array(flat, dtype=complex).reshape(dim, dim)
        t = float(times[k])
        scale = float(np.abs(rho).max()) or 1.0
        drift = float(np.abs(rho - rho.conj().T).max()) / scale
        if drift > HERMITICITY_DRIFT_LIMIT:
            raise InvariantViolationError("hermiticity", t, f"relative drift {drift:.3e}")
        rho = 0.5 * (rho + rho.conj().T)
        tr = float(rho.trace().real)
        if tr <= 0.0:
            raise InvariantViolationError("trace", t, f"trace {tr!r} not positive")
        rho /= tr
        log_tr = math.log(tr) + scales[k]
        if log_tr > math.log1p(TRACE_LIMIT):
            raise InvariantViolationError("trace", t, f"trace exp({log_tr!r}) above 1")
        evmin = float(np.linalg.eigvalsh(rho).min())
        if evmin < -psd_limit:
            raise InvariantViolationError("positivity", t, f"min eigenvalue {evmin:.3e}")
        true_tr = math.exp(log_tr) if log_tr > -700.0 else 0.0
        if lindblad_form and prev_true is not None and true_tr > prev_true + TRACE_MONOTONE_TOL:
            raise InvariantViolationError("trace-monotonicity", t,
                                          f"trace grew {prev_true!r} -> {true_tr!r}")
        prev_true = true_tr
        rhos[k] = rho
        log_traces[k] = log_tr
    return DensityTrajectory(tier=rhs_tier, times=times, rhos=rhos, log_traces=log_traces)
