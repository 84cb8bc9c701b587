"""Numerical time evolution and steady states of Lindblad generators.

The adaptive integrator is the Dormand-Prince 5(4) pair with its free
fourth-order continuous extension for output between steps. It runs on the
column-stacked state and the cached vectorized Liouvillian, and
re-Hermitizes the state after each accepted step while recording the drift.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import (
    DensityMatrix,
    Generator,
    as_square,
    generator_apply,
    hermiticity_defect,
    hermitize,
    stack,
    unstack,
)
from .errors import (
    ContractViolation,
    DegenerateSteadyStateError,
    NonPhysicalFixedPointError,
    StiffnessError,
)

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-order minus embedded fourth-order weights, last entry for the FSAL stage
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# Continuous extension: y(t0 + s h) = y0 + h * sum_j K_j . (P[j] @ [s, s^2, s^3, s^4]).
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Settings for :func:`integrate`.

    ``max_step=None`` means ``0.1 / max(fastest rate, 1)``.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float | None = None
    dense_output_dt: float = 0.05

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ContractViolation("rel_tol and abs_tol must be > 0")
        if not self.dense_output_dt > 0:
            raise ContractViolation("dense_output_dt must be > 0")
        if self.max_step is not None and not self.max_step > 0:
            raise ContractViolation("max_step must be > 0")

    def resolve_max_step(self, gen: Generator) -> float:
        if self.max_step is not None:
            return float(self.max_step)
        return 0.1 / max(gen.max_rate, 1.0)


@dataclass(frozen=True)
class IntegrationStats:
    n_steps: int
    n_rejected: int
    max_trace_drift: float
    max_hermiticity_drift: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution: ``states[k]`` is the density matrix at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray
    stats: IntegrationStats = field(default_factory=lambda: IntegrationStats(0, 0, 0.0, 0.0))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def samples(self) -> Iterator[tuple[float, DensityMatrix]]:
        """``(t, DensityMatrix)`` pairs, validated at propagation tolerance."""
        for t, rho in zip(self.times, self.states):
            yield float(t), DensityMatrix(rho, tol=1e-9, psd_tol=1e-8)

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("kii->ki", self.states))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def max_trace_deviation(self) -> float:
        traces = np.einsum("kii->k", self.states)
        return float(np.max(np.abs(traces - 1.0)))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.states)))


def _output_times(t_end: float, dt: float) -> np.ndarray:
    n = int(np.floor(t_end / dt + 1e-9))
    times = np.arange(n + 1) * dt
    if t_end - times[-1] > 1e-9 * dt:
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(lmat, y0, f0, rtol, atol, max_step) -> float:
    # Hairer, Norsett & Wanner, "Solving ODEs I", II.4.
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = lmat @ y1
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step)


def integrate(
    gen: Generator,
    rho0,
    t_end: float,
    cfg: IntegratorConfig | None = None,
) -> Trajectory:
    """Integrate ``d rho/dt = gen(rho)`` from ``t=0`` to ``t_end``.

    Parameters
    ----------
    gen : Generator
    rho0 : DensityMatrix or array_like
        Initial state; validated at construction tolerance.
    t_end : float
        Final time, > 0.
    cfg : IntegratorConfig, optional

    Returns
    -------
    Trajectory
        Samples every ``cfg.dense_output_dt`` plus the endpoint.

    Raises
    ------
    ContractViolation
        Invalid initial state, dimension mismatch or ``t_end <= 0``.
    StiffnessError
        The step controller asked for a step below ``1e-12 * t_end``.
    """
    cfg = cfg or IntegratorConfig()
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    if rho0.dim != gen.dim:
        raise ContractViolation(f"dimension mismatch: generator {gen.dim}, state {rho0.dim}")
    t_end = float(t_end)
    if not t_end > 0:
        raise ContractViolation(f"t_end must be > 0, got {t_end!r}")

    dim = gen.dim
    lmat = np.asarray(gen.liouvillian)
    rtol, atol = cfg.rel_tol, cfg.abs_tol
    max_step = min(cfg.resolve_max_step(gen), t_end)
    min_step = 1e-12 * t_end

    out_t = _output_times(t_end, cfg.dense_output_dt)
    out_y = np.empty((len(out_t), dim * dim), dtype=complex)
    out_y[0] = stack(rho0.mat)
    k_out = 1

    t = 0.0
    y = out_y[0].copy()
    f = lmat @ y
    h = _initial_step(lmat, y, f, rtol, atol, max_step)
    n_steps = n_rejected = 0
    herm_drift = 0.0
    trace_drift = 0.0
    diag = np.arange(dim) * (dim + 1)
    k = np.empty((7, dim * dim), dtype=complex)

    while t < t_end:
        if h < min_step:
            raise StiffnessError(f"step size {h:.3g} fell below {min_step:.3g} at t={t:.6g}")
        h = min(h, t_end - t)
        k[0] = f
        for s in range(1, 6):
            k[s] = lmat @ (y + h * (_A[s] @ k[:s]))
        y_new = y + h * (_B @ k[:6])
        f_new = lmat @ y_new
        k[6] = f_new
        err = _error_norm(h * (_E @ k), y, y_new, rtol, atol)

        if err > 1.0:
            n_rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))
            continue

        t_new = t + h if t_end - (t + h) > min_step else t_end
        # dense output for every requested sample inside (t, t_new]
        if k_out < len(out_t) and out_t[k_out] <= t_new:
            q = k.T @ _P
            while k_out < len(out_t) and out_t[k_out] <= t_new:
                frac = (out_t[k_out] - t) / h
                powers = np.array([frac, frac**2, frac**3, frac**4])
                out_y[k_out] = y + h * (q @ powers)
                k_out += 1

        rho_new = unstack(y_new, dim)
        herm_drift = max(herm_drift, hermiticity_defect(rho_new))
        y = stack(hermitize(rho_new))
        trace_drift = max(trace_drift, abs(np.sum(y[diag]) - 1.0))
        f = lmat @ y
        t = t_new
        n_steps += 1

        factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** (-1 / 5))
        h = min(max_step, h * factor)

    states = np.empty((len(out_t), dim, dim), dtype=complex)
    for i, vec in enumerate(out_y):
        rho = unstack(vec, dim)
        herm_drift = max(herm_drift, hermiticity_defect(rho))
        states[i] = hermitize(rho)
    traces = np.einsum("kii->k", states)
    trace_drift = max(trace_drift, float(np.max(np.abs(traces - 1.0))))
    stats = IntegrationStats(n_steps, n_rejected, float(trace_drift), float(herm_drift))
    logger.debug("integrate: t_end=%g %s", t_end, stats)
    return Trajectory(out_t, states, stats)


def integrate_rk4(gen: Generator, rho0, t_end: float, n_steps: int) -> np.ndarray:
    """Classical fixed-step fourth-order Runge-Kutta; returns the final matrix."""
    rho0 = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0)
    if n_steps < 1:
        raise ContractViolation("n_steps must be >= 1")
    lmat = np.asarray(gen.liouvillian)
    h = float(t_end) / n_steps
    y = stack(rho0.mat)
    for _ in range(n_steps):
        k1 = lmat @ y
        k2 = lmat @ (y + 0.5 * h * k1)
        k3 = lmat @ (y + 0.5 * h * k2)
        k4 = lmat @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return unstack(y, gen.dim)


def null_space(mat: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (as columns) of the numerical null space of ``mat``."""
    _, sv, vh = np.linalg.svd(mat)
    scale = max(float(sv[0]), 1.0) if sv.size else 1.0
    rank = int(np.sum(sv > rel_tol * scale))
    return np.conj(vh[rank:]).T


def steady_state(gen: Generator) -> DensityMatrix:
    """Unique fixed point of ``gen`` from the null space of its Liouvillian.

    Raises
    ------
    DegenerateSteadyStateError
        Null space dimension is not one.
    NonPhysicalFixedPointError
        The normalized fixed point has an eigenvalue below ``-1e-8``.
    """
    basis = null_space(np.asarray(gen.liouvillian))
    if basis.shape[1] != 1:
        raise DegenerateSteadyStateError(basis.shape[1])
    rho = hermitize(unstack(basis[:, 0], gen.dim))
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        raise NonPhysicalFixedPointError("null vector is traceless")
    rho = rho / tr
    min_eig = float(np.min(np.linalg.eigvalsh(rho)))
    if min_eig < -1e-8:
        raise NonPhysicalFixedPointError(f"fixed point has eigenvalue {min_eig:.3g}")
    return DensityMatrix(rho, tol=1e-8, psd_tol=1e-8)


def spectral_gap(gen: Generator, zero_tol: float = 1e-10) -> float:
    """Smallest nonzero decay rate ``min |Re(lambda)|`` of the Liouvillian."""
    rates = -np.linalg.eigvals(np.asarray(gen.liouvillian)).real
    rates = rates[rates > zero_tol]
    return float(np.min(rates)) if rates.size else 0.0


@dataclass(frozen=True)
class AgreementReport:
    t_end: float
    deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tol


def long_time_agreement(
    gen: Generator,
    rho0,
    t_end: float | None = None,
    tol: float = 1e-6,
    cfg: IntegratorConfig | None = None,
) -> AgreementReport:
    """Compare the integrated state at ``t_end`` with :func:`steady_state`.

    By default ``t_end`` is 20 relaxation times ``1/gap``.
    """
    rho_ss = steady_state(gen)
    if t_end is None:
        gap = spectral_gap(gen)
        t_end = 20.0 / gap
    cfg = cfg or IntegratorConfig(dense_output_dt=t_end)
    traj = integrate(gen, rho0, t_end, cfg)
    dev = float(np.max(np.abs(traj.final - rho_ss.mat)))
    return AgreementReport(float(t_end), dev, tol)


def _component_series(traj: Trajectory, component) -> np.ndarray:
    if isinstance(component, tuple):
        i, j = component
        return np.real(traj.states[:, i, j])
    return traj.populations[:, int(component)]


def count_oscillations(traj: Trajectory, component=0, prominence: float = 1e-4) -> int:
    """Count turning points of a population that reverse by at least ``prominence``.

    A running maximum (or minimum) is confirmed as an extremum once the
    series moves ``prominence`` back from it, so wiggles smaller than the
    threshold are ignored. An extremum that is never followed by such a
    reversal, e.g. a final approach to the stationary value, does not count.
    """
    if len(traj) < 3:
        raise ContractViolation("count_oscillations needs at least 3 samples")
    x = _component_series(traj, component)
    count = 0
    direction = 0
    hi = lo = x[0]
    for v in x[1:]:
        if direction == 0:
            hi, lo = max(hi, v), min(lo, v)
            if v - lo >= prominence:
                direction, hi = 1, v
            elif hi - v >= prominence:
                direction, lo = -1, v
        elif direction > 0:
            if v > hi:
                hi = v
            elif hi - v >= prominence:
                count += 1
                direction, lo = -1, v
        else:
            if v < lo:
                lo = v
            elif v - lo >= prominence:
                count += 1
                direction, hi = 1, v
    return count


def relaxation_time(traj: Trajectory, rho_ss, tol: float = 1e-3) -> float:
    """First sample time after which ``max|rho(t) - rho_ss| <= tol`` for good.

    Returns ``inf`` if the last sample is still outside the ball.
    """
    target = as_square(np.asarray(rho_ss), "rho_ss")
    dev = np.max(np.abs(traj.states - target), axis=(1, 2))
    outside = np.nonzero(dev > tol)[0]
    if outside.size == 0:
        return float(traj.times[0])
    last = outside[-1]
    if last == len(dev) - 1:
        return float("inf")
    return float(traj.times[last + 1])


def residual(gen: Generator, rho) -> float:
    """``max |gen(rho)|`` for checking fixed points."""
    return float(np.max(np.abs(generator_apply(gen, rho))))
