"""Density matrices, Lindblad terms and generators for an N-level system.

All matrices are written in the ordered basis ``(|0>, |1>, ..., |N-1>)``.
Units: hbar = 1, so Hamiltonians carry the same inverse-time unit as rates.

Vectorization uses column stacking: ``stack(rho)`` concatenates the columns
of ``rho``, which gives ``stack(A @ rho @ B) == kron(B.T, A) @ stack(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ContractViolation

#: construction tolerance for Hermiticity and trace
CONSTRUCTION_TOL = 1e-12
#: tolerance on the smallest eigenvalue of a density matrix
PSD_TOL = 1e-10

# Flipped to -1 only by the validation suite's fault-injection hook.
_DISSIPATOR_SIGN = 1.0


def as_square(mat, name: str = "matrix") -> np.ndarray:
    """Return ``mat`` as a complex square 2-D array or raise ContractViolation."""
    arr = np.asarray(mat, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ContractViolation(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    return arr


def dagger(mat: np.ndarray) -> np.ndarray:
    return np.conj(mat).T


def hermiticity_defect(mat) -> float:
    mat = np.asarray(mat)
    return float(np.max(np.abs(mat - np.conj(mat).T)))


def hermitize(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    return 0.5 * (mat + np.conj(mat).T)


def stack(rho) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unstack(vec, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`stack`."""
    vec = np.asarray(vec, dtype=complex)
    if dim is None:
        dim = int(round(np.sqrt(vec.size)))
    if dim * dim != vec.size:
        raise ContractViolation(f"vector of length {vec.size} is not a stacked {dim}x{dim} matrix")
    return vec.reshape((dim, dim), order="F")


def basis_op(dim: int, i: int, j: int) -> np.ndarray:
    """The matrix unit ``|i><j|``."""
    op = np.zeros((dim, dim), dtype=complex)
    op[i, j] = 1.0
    return op


@dataclass(frozen=True)
class DensityReport:
    """Outcome of :func:`validate_density`."""

    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float
    tol: float
    psd_tol: float

    @property
    def hermitian(self) -> bool:
        return self.hermiticity_defect <= self.tol

    @property
    def unit_trace(self) -> bool:
        return self.trace_defect <= self.tol

    @property
    def positive(self) -> bool:
        return self.min_eigenvalue >= -self.psd_tol

    @property
    def ok(self) -> bool:
        return self.hermitian and self.unit_trace and self.positive

    @property
    def violations(self) -> list[str]:
        out = []
        if not self.hermitian:
            out.append(f"hermiticity defect {self.hermiticity_defect:.3g} > {self.tol:.3g}")
        if not self.unit_trace:
            out.append(f"trace defect {self.trace_defect:.3g} > {self.tol:.3g}")
        if not self.positive:
            out.append(f"min eigenvalue {self.min_eigenvalue:.3g} < {-self.psd_tol:.3g}")
        return out


def validate_density(rho, tol: float = CONSTRUCTION_TOL, psd_tol: float | None = None) -> DensityReport:
    """Measure how far ``rho`` is from being a density matrix.

    Never raises on invalid states; the report carries the defects and flags.
    The eigenvalue check uses the Hermitian part of ``rho``.
    """
    arr = as_square(rho, "rho")
    herm = hermiticity_defect(arr)
    trace = abs(complex(np.trace(arr)) - 1.0)
    min_eig = float(np.min(np.linalg.eigvalsh(hermitize(arr))))
    return DensityReport(herm, trace, min_eig, tol, PSD_TOL if psd_tol is None else psd_tol)


class DensityMatrix:
    """Validated, immutable density matrix.

    Parameters
    ----------
    mat : array_like
        Square complex matrix.
    tol : float
        Hermiticity and trace tolerance at construction.
    psd_tol : float
        Allowed negativity of the smallest eigenvalue.
    """

    __slots__ = ("_mat",)

    def __init__(self, mat, *, tol: float = CONSTRUCTION_TOL, psd_tol: float = PSD_TOL):
        arr = np.array(as_square(mat, "density matrix"), dtype=complex)
        report = validate_density(arr, tol=tol, psd_tol=psd_tol)
        if not report.ok:
            raise ContractViolation("invalid density matrix: " + "; ".join(report.violations))
        arr.setflags(write=False)
        self._mat = arr

    @classmethod
    def ground(cls, dim: int = 3) -> "DensityMatrix":
        return cls(basis_op(dim, 0, 0))

    @classmethod
    def maximally_mixed(cls, dim: int = 3) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def diagonal(cls, populations: Sequence[float]) -> "DensityMatrix":
        pops = np.asarray(populations, dtype=float)
        if np.any(pops < 0):
            raise ContractViolation(f"populations must be nonnegative, got {pops.tolist()}")
        return cls(np.diag(pops))

    @property
    def mat(self) -> np.ndarray:
        return self._mat

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self._mat)).copy()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._mat.copy() if copy else self._mat
        return self._mat.astype(dtype)

    def __repr__(self) -> str:
        return f"DensityMatrix({np.array2string(self._mat, precision=6)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return np.array_equal(self._mat, other._mat)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LindbladTerm:
    """A jump operator together with its (nonnegative) rate."""

    jump: np.ndarray
    rate: float

    def __post_init__(self):
        jump = np.array(as_square(self.jump, "jump operator"))
        jump.setflags(write=False)
        object.__setattr__(self, "jump", jump)
        rate = float(self.rate)
        if not np.isfinite(rate) or rate < 0:
            raise ContractViolation(f"Lindblad rate must be finite and >= 0, got {self.rate!r}")
        object.__setattr__(self, "rate", rate)

    @property
    def dim(self) -> int:
        return self.jump.shape[0]


@dataclass(frozen=True, eq=False)
class Generator:
    """Lindblad generator ``rho -> -i[H, rho] + sum_k D_k(rho)``.

    ``hamiltonian`` must be Hermitian; every term must share its dimension.
    """

    hamiltonian: np.ndarray
    terms: tuple[LindbladTerm, ...] = field(default=())

    def __post_init__(self):
        ham = np.array(as_square(self.hamiltonian, "hamiltonian"))
        if hermiticity_defect(ham) > CONSTRUCTION_TOL:
            raise ContractViolation(
                f"hamiltonian is not Hermitian (defect {hermiticity_defect(ham):.3g})"
            )
        ham.setflags(write=False)
        object.__setattr__(self, "hamiltonian", ham)
        terms = tuple(self.terms)
        for term in terms:
            if not isinstance(term, LindbladTerm):
                raise ContractViolation(f"expected LindbladTerm, got {type(term).__name__}")
            if term.dim != ham.shape[0]:
                raise ContractViolation(
                    f"term dimension {term.dim} does not match hamiltonian dimension {ham.shape[0]}"
                )
        object.__setattr__(self, "terms", terms)

    @classmethod
    def zero(cls, dim: int = 3) -> "Generator":
        return cls(np.zeros((dim, dim)))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def max_rate(self) -> float:
        """Largest rate scale: jump rates and the Hamiltonian spectral radius."""
        rates = [t.rate * float(np.linalg.norm(t.jump, 2)) ** 2 for t in self.terms]
        rates.append(float(np.max(np.abs(np.linalg.eigvalsh(self.hamiltonian)))))
        return max(rates)

    def apply(self, rho) -> np.ndarray:
        return generator_apply(self, rho)

    @cached_property
    def liouvillian(self) -> np.ndarray:
        mat = vectorized_liouvillian(self)
        mat.setflags(write=False)
        return mat


def _check_dim(dim: int, rho: np.ndarray) -> None:
    if rho.shape != (dim, dim):
        raise ContractViolation(f"dimension mismatch: operator is {dim}x{dim}, rho is {rho.shape}")


def dissipator(term: LindbladTerm, rho) -> np.ndarray:
    """``rate * (A rho A^+ - 1/2 {A^+ A, rho})`` for ``term = (A, rate)``."""
    rho = as_square(rho, "rho")
    _check_dim(term.dim, rho)
    a = term.jump
    ad = dagger(a)
    ada = ad @ a
    out = a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)
    return _DISSIPATOR_SIGN * term.rate * out


def generator_apply(gen: Generator, rho) -> np.ndarray:
    """Evaluate ``d rho / dt`` for the generator ``gen`` at ``rho``."""
    rho = as_square(rho, "rho")
    _check_dim(gen.dim, rho)
    h = gen.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for term in gen.terms:
        out = out + dissipator(term, rho)
    return out


def vectorized_liouvillian(gen: Generator) -> np.ndarray:
    """The ``N^2 x N^2`` matrix ``L`` with ``stack(gen(rho)) == L @ stack(rho)``."""
    dim = gen.dim
    eye = np.eye(dim)
    h = gen.hamiltonian
    out = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for term in gen.terms:
        a = term.jump
        ada = dagger(a) @ a
        out = out + _DISSIPATOR_SIGN * term.rate * (
            np.kron(np.conj(a), a) - 0.5 * np.kron(eye, ada) - 0.5 * np.kron(ada.T, eye)
        )
    return out
