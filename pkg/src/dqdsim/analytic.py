"""Closed-form populations and stationary values of the double-dot model.

Undriven populations obey the trace-preserving rate equations

    d rho00/dt = l rho11 - m rho00
    d rho11/dt = m rho00 - (l + n) rho11 + n rho22
    d rho22/dt = n (rho11 - rho22)

i.e. ``model.population_rate_matrix``. Starting from ``|0><0|`` the solution
is ``rho00(t) = A + B exp(lambda0 t) + C exp(lambda1 t)`` with ``rho11``
read off the first equation and ``rho22 = 1 - rho00 - rho11``.

For the driven model only a numerical stationary state is trusted; the
as-printed closed-form stationary values are kept in
:func:`driven_steady_printed` together with their consistency defects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    ComplexEigenvaluesError,
    DegenerateEigenvaluesError,
    DomainError,
    UndefinedSteadyStateError,
)
from .model import RateParams, build_driven
from .propagator import steady_state


class Populations(NamedTuple):
    rho00: float
    rho11: float
    rho22: float


@dataclass(frozen=True)
class EigenPair:
    """Nonzero eigenvalues of the population rate matrix, ``lambda0 <= lambda1 <= 0``."""

    lambda0: float
    lambda1: float


@dataclass(frozen=True)
class UndrivenSolution:
    a_const: float
    b_const: float
    c_const: float
    eigs: EigenPair
    rates: RateParams


def eigenvalues(rates: RateParams) -> EigenPair:
    """Roots of ``x^2 + (l+m+2n) x + (ln + 2mn)``.

    The smaller root uses the quadratic formula; the larger one comes from
    the product of roots, which avoids cancellation when ``ln + 2mn`` is
    small compared with ``(l+m+2n)^2``.
    """
    l, m, n = rates.l, rates.m, rates.n
    if not l > 0:
        raise DomainError(f"l must be > 0, got {l!r}")
    s = l + m + 2 * n
    q = l * n + 2 * m * n
    disc = s * s - 4 * q
    if disc < 0:
        raise ComplexEigenvaluesError(disc)
    lam0 = -0.5 * (s + math.sqrt(disc))
    lam1 = q / lam0 + 0.0  # + 0.0 turns -0.0 into 0.0
    return EigenPair(lam0, lam1)


def undriven_solution(rates: RateParams) -> UndrivenSolution:
    """Constants of the closed form for the initial state ``|0><0|``.

    ``A = l/(2m+l)`` is the stationary ``rho00``; ``B`` and ``C`` follow from
    ``rho00(0) = 1`` and ``rho11(0) = 0``.

    Raises
    ------
    DegenerateEigenvaluesError
        If ``lambda0 == lambda1``.
    """
    eigs = eigenvalues(rates)
    l, m = rates.l, rates.m
    gap = eigs.lambda0 - eigs.lambda1
    if abs(gap) <= 1e-12 * max(1.0, abs(eigs.lambda0)):
        raise DegenerateEigenvaluesError(f"lambda0 == lambda1 == {eigs.lambda0!r}")
    denom = (2 * m + l) * gap
    a = l / (2 * m + l)
    c = m * (l + 2 * (eigs.lambda0 + m)) / denom
    b = -m * (l + 2 * (eigs.lambda1 + m)) / denom
    return UndrivenSolution(a, b, c, eigs, rates)


def printed_b_constant(rates: RateParams) -> float:
    """``B`` in its as-printed form. Kept for audits only.

    It is inconsistent with ``C`` and ``rho00(0) = 1``: the
    terms in ``lambda0 + m`` carry the wrong sign.
    """
    eigs = eigenvalues(rates)
    l, m = rates.l, rates.m
    gap = eigs.lambda0 - eigs.lambda1
    num = l * (m + (2 * m + l) * gap) - 2 * m * (eigs.lambda0 + m)
    return 1.0 - num / ((2 * m + l) * gap)


def eval_populations(sol: UndrivenSolution, t):
    """``(rho00, rho11, rho22)`` at time(s) ``t >= 0``; accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be >= 0")
    l, m = sol.rates.l, sol.rates.m
    lam0, lam1 = sol.eigs.lambda0, sol.eigs.lambda1
    e0 = np.exp(lam0 * t_arr)
    e1 = np.exp(lam1 * t_arr)
    rho00 = sol.a_const + sol.b_const * e0 + sol.c_const * e1
    rho11 = (m * sol.a_const + (lam0 + m) * sol.b_const * e0 + (lam1 + m) * sol.c_const * e1) / l
    rho22 = 1.0 - rho00 - rho11
    if t_arr.ndim == 0:
        return Populations(float(rho00), float(rho11), float(rho22))
    return Populations(rho00, rho11, rho22)


def undriven_steady(rates) -> Populations:
    """``(l, m, m) / (2m + l)``, independent of ``n``."""
    l, m = rates.l, rates.m
    total = 2 * m + l
    if not total > 0:
        raise UndefinedSteadyStateError(f"2m + l must be > 0, got l={l!r}, m={m!r}")
    side = m / total
    return Populations(1.0 - 2 * side, side, side)


@dataclass(frozen=True)
class PrintedSteadyReport:
    """As-printed driven stationary values and how they fail consistency checks.

    ``values`` are evaluated verbatim and are not trace-normalized.
    """

    values: Populations
    rates: RateParams
    trace_defect: float
    undriven_reference: float | None = None
    flags: tuple[str, ...] = field(default=())

    label = "as-printed"

    @property
    def consistent(self) -> bool:
        return not self.flags


def driven_steady_printed(rates: RateParams, tol: float = 1e-12) -> PrintedSteadyReport:
    """Evaluate the as-printed driven stationary populations.

    Flags
    -----
    ``trace-not-normalized``
        ``rho00 + 2 rho11 != 1``, which happens whenever ``rho00 != 1/3``.
    ``p0-inconsistent``
        At ``p = 0`` the formula gives ``l/(2l+m)`` instead of the undriven
        stationary value ``l/(2m+l)``.
    """
    l, m, n, p = rates.l, rates.m, rates.n, rates.p
    if m + n <= 0 or l + m + n <= 0:
        raise DomainError(f"need m+n > 0 and l+m+n > 0, got m={m!r}, n={n!r}")
    x = 1.0 / (m + n) + 1.0 / (l + m + n)
    drive = 2.0 * p * p * x
    rho00 = (l + drive) / (2 * l + m + 3.0 * drive)
    side = 1.0 - 2.0 * rho00
    values = Populations(rho00, side, side)
    trace_defect = rho00 + 2 * side - 1.0
    flags = []
    if abs(trace_defect) > tol:
        flags.append("trace-not-normalized")
    ref = None
    if p == 0:
        ref = undriven_steady(rates).rho00
        if abs(rho00 - ref) > tol:
            flags.append("p0-inconsistent")
    return PrintedSteadyReport(values, rates, trace_defect, ref, tuple(flags))


def driven_steady_oracle(rates: RateParams) -> Populations:
    """Stationary populations of the driven generator from its Liouvillian null space."""
    pops = steady_state(build_driven(rates)).populations
    return Populations(*(float(v) for v in pops))
