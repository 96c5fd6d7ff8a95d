"""Small dense complex linear algebra for two-qubit gate simulation.

Everything here operates on plain ``numpy`` arrays of ``complex128``.  The
matrices are tiny (2x2 and 4x4), so exact methods are preferred over
iterative or approximate ones: Hermitian generators are exponentiated
through their eigendecomposition, which keeps the result unitary to
machine precision.
"""

from __future__ import annotations

import numpy as np

PAULI_LABELS = ("I", "X", "Y", "Z")

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI = {"I": SIGMA_I, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}

UNITARY_TOL = 1e-10


class NonHermitianError(ValueError):
    """Raised when a generator expected to be Hermitian is not."""


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two complex matrices."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def pauli_on(label: str, qubit: int) -> np.ndarray:
    """4x4 operator acting with a Pauli on one qubit of a two-qubit register.

    Args:
        label: one of ``I``, ``X``, ``Y``, ``Z``.
        qubit: 0 for the first tensor slot, 1 for the second.
    """
    if label not in PAULI:
        raise ValueError(f"unknown Pauli label {label!r}")
    if qubit == 0:
        return kron(PAULI[label], SIGMA_I)
    if qubit == 1:
        return kron(SIGMA_I, PAULI[label])
    raise ValueError(f"qubit index must be 0 or 1, got {qubit}")


def hermiticity_defect(h: np.ndarray) -> float:
    """Frobenius norm of ``h - h^dagger``."""
    return float(np.linalg.norm(h - h.conj().T))


def expm_hermitian(h: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """``exp(-i h dt)`` for a Hermitian ``h`` via eigendecomposition.

    The output is unitary to machine precision because each eigenvalue is
    mapped onto the unit circle exactly.

    Raises:
        NonHermitianError: if ``h`` deviates from Hermiticity by more than
            1e-12 (relative to its norm); the message carries the defect.
    """
    h = np.asarray(h, dtype=complex)
    defect = hermiticity_defect(h)
    if defect > 1e-12 * max(1.0, float(np.linalg.norm(h))):
        raise NonHermitianError(
            f"generator is not Hermitian: ||h - h^dagger||_F = {defect:.3e}"
        )
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def expm_hermitian_stack(hs: np.ndarray, dt: float) -> np.ndarray:
    """Batched ``exp(-i h dt)`` over a stack of Hermitian matrices.

    Same eigendecomposition route as :func:`expm_hermitian`, applied along
    the leading axis.  Hermiticity is checked on the whole stack at once.
    """
    hs = np.asarray(hs, dtype=complex)
    defect = float(np.linalg.norm(hs - np.conj(np.swapaxes(hs, -1, -2))))
    if defect > 1e-12 * max(1.0, float(np.linalg.norm(hs))):
        raise NonHermitianError(
            f"generator stack is not Hermitian: defect {defect:.3e}"
        )
    w, v = np.linalg.eigh(hs)
    phases = np.exp(-1j * w * dt)
    return (v * phases[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def ordered_product(factors: np.ndarray) -> np.ndarray:
    """Time-ordered product ``factors[-1] @ ... @ factors[0]``.

    Uses pairwise tree reduction so a product of 1e5 matrices stays fast
    while preserving the exact ordering of the factors.
    """
    u = np.asarray(factors)
    while u.shape[0] > 1:
        n = u.shape[0]
        tail = u[-1:] if n % 2 else None
        body = u[: n - (n % 2)].reshape(-1, 2, *u.shape[1:])
        body = body[:, 1] @ body[:, 0]
        u = body if tail is None else np.concatenate([body, tail], axis=0)
    return u[0]


def gate_fidelity(u: np.ndarray, target: np.ndarray) -> float:
    """Average gate overlap ``|Tr(target^dagger u) / d|^2``.

    Invariant under a global phase on either argument.

    Raises:
        ValueError: if the matrices are not square with equal dimension.
    """
    u = np.asarray(u, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if u.shape != target.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {target.shape}")
    d = u.shape[0]
    return float(abs(np.trace(target.conj().T @ u) / d) ** 2)


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_F``.

    Raises:
        ValueError: on shape mismatch.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def min_phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``min_phi ||a - e^{i phi} b||_F`` with the phase solved analytically.

    The optimal phase is ``phi = -arg Tr(a^dagger b)``; the distance is then
    evaluated by direct subtraction so no precision is lost to cancellation.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    z = np.trace(a.conj().T @ b)
    if abs(z) == 0.0:
        return frobenius_distance(a, b)
    return float(np.linalg.norm(a - (np.conj(z) / abs(z)) * b))


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values of any rectangular matrix, sorted descending."""
    return np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)


def unitarity_defect(u: np.ndarray) -> float:
    """Frobenius norm of ``u^dagger u - I``."""
    u = np.asarray(u, dtype=complex)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    """Whether ``u`` is unitary within ``tol`` in Frobenius norm."""
    return unitarity_defect(u) <= tol
