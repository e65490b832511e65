"""Dense complex linear-algebra substrate: states, operators, eigensolver,
matrix exponential, tensor products.

All values are immutable after construction and all operations are pure
functions, so everything here is safe to call concurrently.

Tensor-product convention (fixed globally): the first factor is the slow
(outer) index.  Joint meter+probe objects are always built as
``tensor(meter, probe)``, so a block expression ``A \\oplus B`` on the joint
space means meter basis state 0 selects block ``A`` and meter basis state 1
selects block ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tolerances import (
    EXPECTATION_IMAG_TOL,
    SPECTRAL_TOL,
    STRUCTURAL_TOL,
    UNITARY_TOL,
    VARIANCE_CLAMP_TOL,
)

__all__ = [
    "ContractViolation",
    "PureState",
    "HermitianOperator",
    "UnitaryMatrix",
    "expectation",
    "variance",
    "herm_eig",
    "expm_herm_generator",
    "tensor",
    "apply_unitary",
]


class ContractViolation(ValueError):
    """A numerical contract (normalization, hermiticity, unitarity, shape) failed."""


def _frozen_complex_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.complex128, copy=True)
    if arr.ndim != ndim:
        raise ContractViolation(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("array contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PureState:
    """Normalized complex amplitude vector over a finite labeled basis."""

    amplitudes: np.ndarray
    basis_label: str = ""

    def __post_init__(self):
        arr = _frozen_complex_array(self.amplitudes, ndim=1)
        if arr.size < 1:
            raise ContractViolation("state dimension must be >= 1")
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > STRUCTURAL_TOL:
            raise ContractViolation(
                f"state norm {norm!r} deviates from 1 by more than {STRUCTURAL_TOL}"
            )
        object.__setattr__(self, "amplitudes", arr)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @staticmethod
    def normalized(values, basis_label: str = "") -> "PureState":
        """Build a state from an unnormalized amplitude vector."""
        arr = np.asarray(values, dtype=np.complex128)
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            raise ContractViolation("cannot normalize the zero vector")
        return PureState(arr / norm, basis_label)

    @staticmethod
    def basis_vector(dim: int, index: int, basis_label: str = "") -> "PureState":
        amps = np.zeros(dim, dtype=np.complex128)
        amps[index] = 1.0
        return PureState(amps, basis_label)


@dataclass(frozen=True)
class HermitianOperator:
    """Dense complex square matrix equal to its own conjugate transpose."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex_array(self.entries, ndim=2)
        n, m = arr.shape
        if n != m or n < 1:
            raise ContractViolation(f"operator must be square, got shape {arr.shape}")
        residual = np.max(np.abs(arr - arr.conj().T))
        if residual > STRUCTURAL_TOL:
            raise ContractViolation(
                f"matrix is not Hermitian (max |A - A^dag| = {residual:.3e})"
            )
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other: "HermitianOperator") -> np.ndarray:
        # Product of Hermitians is generally not Hermitian; return raw array.
        return self.entries @ other.entries

    def squared(self) -> "HermitianOperator":
        sq = self.entries @ self.entries
        # Symmetrize away roundoff so the constructor's invariant holds.
        return HermitianOperator(0.5 * (sq + sq.conj().T))

    @staticmethod
    def identity(dim: int) -> "HermitianOperator":
        return HermitianOperator(np.eye(dim, dtype=np.complex128))


@dataclass(frozen=True)
class UnitaryMatrix:
    """Dense complex square matrix with U^dag U = I."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex_array(self.entries, ndim=2)
        n, m = arr.shape
        if n != m or n < 1:
            raise ContractViolation(f"matrix must be square, got shape {arr.shape}")
        residual = np.linalg.norm(arr.conj().T @ arr - np.eye(n), ord="fro")
        if residual > UNITARY_TOL:
            raise ContractViolation(
                f"matrix is not unitary (||U^dag U - I||_F = {residual:.3e})"
            )
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dagger(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.entries.conj().T)

    @staticmethod
    def identity(dim: int) -> "UnitaryMatrix":
        return UnitaryMatrix(np.eye(dim, dtype=np.complex128))


def _check_dims(op_dim: int, state_dim: int):
    if op_dim != state_dim:
        raise ContractViolation(
            f"dimension mismatch: operator dim {op_dim} vs state dim {state_dim}"
        )


def expectation(op: HermitianOperator, state: PureState) -> float:
    """<psi|op|psi> as a real scalar.

    The imaginary residue must be below tolerance (it is asserted, then
    discarded); a Hermitian operator cannot produce more than roundoff.
    """
    _check_dims(op.dim, state.dim)
    psi = state.amplitudes
    value = np.vdot(psi, op.entries @ psi)
    if abs(value.imag) > EXPECTATION_IMAG_TOL:
        raise ContractViolation(
            f"expectation has imaginary residue {value.imag:.3e} above tolerance"
        )
    return float(value.real)


def variance(op: HermitianOperator, state: PureState) -> float:
    """<op^2> - <op>^2, clamped to zero when roundoff pushes it slightly negative."""
    _check_dims(op.dim, state.dim)
    psi = state.amplitudes
    op_psi = op.entries @ psi
    mean = np.vdot(psi, op_psi)
    second = np.vdot(op_psi, op_psi)  # <psi|op^2|psi> since op is Hermitian
    if abs(mean.imag) > EXPECTATION_IMAG_TOL or abs(second.imag) > EXPECTATION_IMAG_TOL:
        raise ContractViolation("moment has imaginary residue above tolerance")
    var = float(second.real - mean.real**2)
    if var < -VARIANCE_CLAMP_TOL:
        raise ContractViolation(f"variance {var:.3e} below -{VARIANCE_CLAMP_TOL}")
    return max(var, 0.0)


def herm_eig(op: HermitianOperator) -> tuple[np.ndarray, UnitaryMatrix]:
    """Eigenvalues (ascending, real) and the unitary of column eigenvectors.

    Residual contract: op @ v_k = lam_k v_k per column within SPECTRAL_TOL.
    """
    eigenvalues, vectors = np.linalg.eigh(op.entries)
    residual = np.max(np.abs(op.entries @ vectors - vectors * eigenvalues))
    if residual > SPECTRAL_TOL:
        raise ContractViolation(f"eigenpair residual {residual:.3e} above tolerance")
    return eigenvalues, UnitaryMatrix(vectors)


def expm_herm_generator(op: HermitianOperator, scale: float) -> UnitaryMatrix:
    """exp(-1j * scale * op) via eigendecomposition.

    The eigen route keeps the result unitary to eigensolver accuracy, which a
    truncated series would not.
    """
    eigenvalues, vectors = herm_eig(op)
    v = vectors.entries
    phases = np.exp(-1j * float(scale) * eigenvalues)
    return UnitaryMatrix((v * phases) @ v.conj().T)


def apply_unitary(u: UnitaryMatrix, state: PureState) -> PureState:
    """u |state>, renormalization-free (unitarity preserves the norm contract)."""
    _check_dims(u.dim, state.dim)
    return PureState(u.entries @ state.amplitudes, state.basis_label)


def tensor(a, b):
    """Kronecker product of two states or two operator-like matrices.

    The first operand is the slow (outer) index.  Mixed kinds are rejected.
    """
    if isinstance(a, PureState) and isinstance(b, PureState):
        label = f"{a.basis_label}*{b.basis_label}" if a.basis_label or b.basis_label else ""
        return PureState(np.kron(a.amplitudes, b.amplitudes), label)
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        return HermitianOperator(np.kron(a.entries, b.entries))
    if isinstance(a, UnitaryMatrix) and isinstance(b, UnitaryMatrix):
        return UnitaryMatrix(np.kron(a.entries, b.entries))
    raise ContractViolation(
        f"tensor requires two operands of the same kind, got {type(a).__name__} and {type(b).__name__}"
    )
