"""The three-level double-quantum-dot model.

Levels: ``|0>`` valence band of the left dot (no conduction electron),
``|1>`` conduction band of the left dot, ``|2>`` conduction band of the
right dot. The 0<->1 transition couples to a thermal radiation bath and
optionally to a resonant laser; 1<->2 is tunneling at the resonance point,
modelled as a symmetric incoherent exchange with rate ``n``. There is no
direct 0<->2 channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Generator, LindbladTerm, basis_op
from .errors import ContractViolation, DomainError

DIM = 3

#: |0><1|, lowers 1 -> 0
SIGMA_MINUS_01 = basis_op(DIM, 0, 1)
#: |1><0|, raises 0 -> 1
SIGMA_PLUS_01 = basis_op(DIM, 1, 0)
#: |1><2|, moves 2 -> 1
SIGMA_MINUS_12 = basis_op(DIM, 1, 2)
#: |2><1|, moves 1 -> 2
SIGMA_PLUS_12 = basis_op(DIM, 2, 1)

for _op in (SIGMA_MINUS_01, SIGMA_PLUS_01, SIGMA_MINUS_12, SIGMA_PLUS_12):
    _op.setflags(write=False)


def _nonneg(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ContractViolation(f"{name} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True)
class PhysicalParams:
    """Physical inputs of the model.

    gamma01 is the spontaneous 0<->1 rate, n_occ the Planck occupation of the
    0<->1 mode, n_tunnel the 1<->2 exchange rate and omega_rabi the Rabi
    frequency of the drive.
    """

    gamma01: float
    n_occ: float
    n_tunnel: float = 0.0
    omega_rabi: float = 0.0

    def __post_init__(self):
        for name in ("gamma01", "n_occ", "n_tunnel", "omega_rabi"):
            object.__setattr__(self, name, _nonneg(name, getattr(self, name)))


@dataclass(frozen=True)
class RateParams:
    """Rates entering the generator.

    ``l`` emission 1 -> 0, ``m`` absorption 0 -> 1, ``n`` tunneling 1 <-> 2,
    ``p`` half the Rabi frequency. Emission can never be slower than
    absorption, so ``l >= m`` is enforced.
    """

    l: float
    m: float
    n: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        for name in ("l", "m", "n", "p"):
            object.__setattr__(self, name, _nonneg(name, getattr(self, name)))
        if self.l <= 0:
            raise ContractViolation(f"l must be > 0, got {self.l!r}")
        if self.m > self.l:
            raise ContractViolation(f"need l >= m, got l={self.l!r}, m={self.m!r}")

    def with_p(self, p: float) -> "RateParams":
        return replace(self, p=p)

    def with_ratio(self, ratio: float) -> "RateParams":
        """Set the drive so that ``l / p == ratio``."""
        if not ratio > 0:
            raise ContractViolation(f"l/p ratio must be > 0, got {ratio!r}")
        return replace(self, p=self.l / ratio)


def planck_occupation(beta_hbar_omega: float) -> float:
    """Mean thermal photon number ``1 / (exp(x) - 1)`` for ``x = beta*hbar*omega``."""
    x = float(beta_hbar_omega)
    if not x > 0:
        raise DomainError(f"beta*hbar*omega must be > 0, got {beta_hbar_omega!r}")
    # e^-x / (1 - e^-x): no overflow for large x, no cancellation for small x
    return math.exp(-x) / -math.expm1(-x)


def decay_rate(omega: float, dipole_sq: float) -> float:
    """Spontaneous dipole rate ``4 omega^3 |d|^2 / 3`` (hbar = c = 1)."""
    if not omega > 0:
        raise DomainError(f"omega must be > 0, got {omega!r}")
    if dipole_sq < 0:
        raise DomainError(f"|d|^2 must be >= 0, got {dipole_sq!r}")
    return 4.0 * omega**3 * dipole_sq / 3.0


def rates_from_physical(phys: PhysicalParams) -> RateParams:
    return RateParams(
        l=phys.gamma01 * (phys.n_occ + 1.0),
        m=phys.gamma01 * phys.n_occ,
        n=phys.n_tunnel,
        p=phys.omega_rabi / 2.0,
    )


def _bath_terms(rates: RateParams) -> tuple[LindbladTerm, ...]:
    return (
        LindbladTerm(SIGMA_MINUS_01, rates.l),
        LindbladTerm(SIGMA_PLUS_01, rates.m),
        LindbladTerm(SIGMA_MINUS_12, rates.n),
        LindbladTerm(SIGMA_PLUS_12, rates.n),
    )


def drive_hamiltonian(p: float) -> np.ndarray:
    """Resonant drive in the rotating frame, ``-p (sigma+_01 + sigma-_01)``."""
    return -float(p) * (SIGMA_PLUS_01 + SIGMA_MINUS_01)


def build_undriven(rates: RateParams) -> Generator:
    """Bath-only generator at the 1<->2 resonance. ``rates.p`` is ignored."""
    return Generator(np.zeros((DIM, DIM), dtype=complex), _bath_terms(rates))


def build_driven(rates: RateParams) -> Generator:
    """Bath plus resonant laser drive on the 0<->1 transition.

    With this sign convention the drive feeds ``Im(rho01) < 0`` at early times
    from the ground state: ``d rho01/dt = -i p`` at ``rho = |0><0|``.
    Populations do not depend on the sign of ``p``.
    """
    return Generator(drive_hamiltonian(rates.p), _bath_terms(rates))


def build(rates: RateParams, driven: bool) -> Generator:
    return build_driven(rates) if driven else build_undriven(rates)


def population_rate_matrix(rates: RateParams) -> np.ndarray:
    """Rate matrix acting on ``(rho00, rho11, rho22)`` in the undriven model.

    Each column sums to zero, so total population is conserved.
    """
    l, m, n = rates.l, rates.m, rates.n
    return np.array(
        [
            [-m, l, 0.0],
            [m, -(l + n), n],
            [0.0, n, -n],
        ]
    )


#: tunneling rate used by every figure preset; a modelling choice
REFERENCE_N = 0.5
#: bath rates shared by every figure preset
REFERENCE_RATES = RateParams(l=0.8, m=0.4, n=REFERENCE_N)


@dataclass(frozen=True)
class Preset:
    name: str
    rates: RateParams
    driven: bool
    t_end: float = 30.0
    dt: float = 0.05
    description: str = ""


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in (
        Preset("fig2-4", REFERENCE_RATES, False, description="undriven, l=0.8, m=0.4"),
        Preset("fig5-7", REFERENCE_RATES.with_ratio(2.0), True, description="driven, l/p=2"),
        Preset("fig8-9", REFERENCE_RATES.with_ratio(1.0), True, description="driven, l/p=1"),
        Preset("fig10-11", REFERENCE_RATES.with_ratio(0.5), True, description="driven, l/p=1/2"),
        Preset("fig12-13", REFERENCE_RATES.with_ratio(0.1), True, description="driven, l/p=1/10"),
    )
}

#: the l/p values of the driven figures, weakest drive first
FIGURE_RATIOS = (2.0, 1.0, 0.5, 0.1)
