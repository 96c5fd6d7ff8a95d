"""Analytic construction of a geometric two-qubit entangling gate.

A pair of exchange-coupled qubits driven on the second qubit only evolves,
within each eigenspace of ``Z`` on the first qubit, like a two-level system
with effective detuning ``Delta +/- J``.  Choosing ``Delta = omega/2`` and
``Omega = sqrt(omega^2 - 4 J^2)/2`` cancels the dynamical phase in both
blocks simultaneously, so after one drive period ``T = 2 pi / omega`` the
propagator is governed by geometric phases alone.  Dressing that entangling
block with sequences of single-qubit gates of the same geometric family
composes an ``R_YY(pi/4)``.

The module provides both the closed form of the entangling block and a
brute-force propagator integration that serves as its independent check,
plus the machinery for single-qubit pulse sequences, perfect-entangler
diagnostics, and dynamical-phase quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    SIGMA_I,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    PAULI,
    expm_hermitian,
    expm_hermitian_stack,
    frobenius_distance,
    gate_fidelity,
    kron,
    min_phase_distance,
    ordered_product,
    singular_values,
    unitarity_defect,
)

SQRT_HALF = math.sqrt(0.5)


class SingularInvariantError(ValueError):
    """Raised when the dynamical invariant is fully degenerate."""


# ---------------------------------------------------------------------------
# Parameter bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometricParams:
    """Drive parameters satisfying the dual dynamical-phase cancellation.

    Attributes:
        omega: drive angular frequency (rad / time).
        coupling: qubit-qubit exchange strength J (rad / time).
        detuning: common detuning Delta = omega / 2 (rad / time).
        rabi: Rabi frequency Omega with Omega^2 = (omega^2 - 4 J^2) / 4.
        a_plus, a_minus: entangler coefficients sqrt(1/2 +/- J/omega).
        gate_time: one drive period, 2 pi / omega.
    """

    omega: float
    coupling: float
    detuning: float
    rabi: float
    a_plus: float
    a_minus: float
    gate_time: float

    def block_detuning(self, block: int) -> float:
        """Effective detuning ``Delta + block * J`` for ``block`` in {+1, -1}."""
        return self.detuning + block * self.coupling

    def block_lambda(self, block: int) -> float:
        """Invariant eigenvalue magnitude for one block."""
        return math.hypot(self.block_detuning(block) - self.omega, self.rabi)


def nonadiabatic_params(omega: float, j_over_omega: float,
                        rabi_sign: int = +1) -> GeometricParams:
    """Build the parameter bundle for a given relative coupling.

    Args:
        omega: drive angular frequency (> 0).
        j_over_omega: dimensionless coupling J / omega, |j| < 1/2.
        rabi_sign: +1 or -1; both Rabi signs solve the cancellation
            condition.

    Raises:
        ValueError: if ``|j_over_omega| >= 1/2`` (the Rabi frequency would
            be imaginary) or ``omega <= 0``.
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if abs(j_over_omega) >= 0.5:
        raise ValueError(
            f"|J/omega| must be < 1/2 for a real Rabi frequency, got {j_over_omega}"
        )
    coupling = j_over_omega * omega
    rabi = rabi_sign * math.sqrt(omega * omega - 4 * coupling * coupling) / 2
    return GeometricParams(
        omega=omega,
        coupling=coupling,
        detuning=omega / 2,
        rabi=rabi,
        a_plus=math.sqrt(0.5 + j_over_omega),
        a_minus=math.sqrt(0.5 - j_over_omega),
        gate_time=2 * math.pi / omega,
    )


# ---------------------------------------------------------------------------
# Invariant eigensystem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantEigensystem:
    """Eigensystem of the dynamical invariant of one qubit-1 block.

    ``block`` selects the effective detuning ``Delta + block*J``; the two
    eigenstates are indexed by the eigenvalue sign ``s`` in {+1, -1} with
    energies ``s * lam``.  Eigenvectors are stored as 4-component columns
    (the block embeds into the two-qubit register); ``vectors[:, 0]`` is the
    ``s = +1`` state and ``vectors[:, 1]`` the ``s = -1`` state.
    """

    block: int
    time: float
    lam: float
    xi: tuple[float, float]
    theta: tuple[float, float]
    lr_phase: tuple[float, float]
    vectors: np.ndarray


def lr_phase(lam: float, omega: float, sign: int, t: float) -> float:
    """Total phase ``(omega - sign * lam) t / 2`` of an invariant eigenstate.

    This is the quadrature value of ``int <phi| i d_t - H |phi> dt`` for a
    constant-parameter drive; the dynamical part of it vanishes exactly when
    ``Omega^2 + Delta (Delta - omega) = 0``.
    """
    return (omega - sign * lam) * t / 2.0


def _block_angles(rabi: float, delta_eff: float, omega: float,
                  sign: int) -> tuple[float, float, float]:
    """(xi, cos(theta), sin(theta)) for one eigenvalue branch.

    The mixing parametrization ``xi = Omega / (delta_eff - sign*lam - omega)``
    has a removable singularity at ``Omega = 0`` when the branch aligns with
    the bare ``Z`` eigenstate; the exact limit is used there.
    """
    lam = math.hypot(delta_eff - omega, rabi)
    if lam < 1e-14 * max(1.0, abs(omega)):
        raise SingularInvariantError(
            "invariant is fully degenerate (Omega = 0 and Delta = omega); "
            "eigenvectors are not defined"
        )
    denom = (delta_eff - omega) - sign * lam
    if rabi == 0.0 and denom == 0.0:
        # limit Omega -> 0 with sign matching the Z-aligned branch
        return math.inf, 1.0, 0.0
    xi = rabi / denom
    norm = math.sqrt(xi * xi + 1.0)
    return xi, xi / norm, 1.0 / norm


def invariant_eigensystem(p: GeometricParams, block: int,
                          t: float) -> InvariantEigensystem:
    """Eigensystem of the block invariant at time ``t``.

    Args:
        p: parameter bundle (the cancellation invariants need not hold; the
            eigensystem is defined for any constant drive parameters).
        block: +1 or -1, selecting the qubit-1 ``Z`` eigenspace.
        t: time at which the rotating eigenvectors are evaluated.

    Raises:
        SingularInvariantError: fully degenerate invariant (zero eigenvalue
            splitting), where eigenvectors are arbitrary.
    """
    if block not in (+1, -1):
        raise ValueError(f"block must be +1 or -1, got {block}")
    delta_eff = p.block_detuning(block)
    lam = p.block_lambda(block)
    rot = np.exp(-1j * p.omega * t)
    # block +1 occupies amplitudes (|00>, |01>); block -1 (|10>, |11>)
    offset = 0 if block == +1 else 2
    vectors = np.zeros((4, 2), dtype=complex)
    xis, thetas, phases = [], [], []
    for col, sign in enumerate((+1, -1)):
        xi, cos_t, sin_t = _block_angles(p.rabi, delta_eff, p.omega, sign)
        vectors[offset, col] = cos_t * rot
        vectors[offset + 1, col] = -sin_t
        xis.append(xi)
        thetas.append(math.atan2(sin_t, cos_t))
        phases.append(lr_phase(lam, p.omega, sign, t))
    return InvariantEigensystem(
        block=block,
        time=t,
        lam=lam,
        xi=(xis[0], xis[1]),
        theta=(thetas[0], thetas[1]),
        lr_phase=(phases[0], phases[1]),
        vectors=vectors,
    )


def invariant_matrix(p: GeometricParams, block: int, t: float) -> np.ndarray:
    """The 4x4 block invariant ``I(t)`` itself (for residual checks)."""
    proj = (SIGMA_I + block * SIGMA_Z) / 2
    gx, gy, gz = (kron(proj, s) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z))
    delta_eff = p.block_detuning(block)
    return (p.rabi * math.cos(p.omega * t) * gx
            + p.rabi * math.sin(p.omega * t) * gy
            + (delta_eff - p.omega) * gz)


# ---------------------------------------------------------------------------
# Entangling block
# ---------------------------------------------------------------------------

def build_vu_closed(j_over_omega: float) -> np.ndarray:
    """Closed form of the entangling block after one drive period.

    Block-diagonal in the qubit-1 ``Z`` eigenspaces:

        -exp[i pi a_mp (-a_pm X + a_mp Z)]   on each block,

    with ``a_pm = sqrt(1/2 +/- j)``.  Unitary by construction since
    ``a_plus^2 + a_minus^2 = 1``.

    Raises:
        ValueError: if ``|j_over_omega| >= 1/2``.
    """
    if abs(j_over_omega) >= 0.5:
        raise ValueError(
            f"|J/omega| must be < 1/2, got {j_over_omega}"
        )
    a_p = math.sqrt(0.5 + j_over_omega)
    a_m = math.sqrt(0.5 - j_over_omega)

    def block(angle: float, off_coef: float, diag_coef: float) -> np.ndarray:
        return -(math.cos(angle) * SIGMA_I
                 + 1j * math.sin(angle) * (-off_coef * SIGMA_X + diag_coef * SIGMA_Z))

    v = np.zeros((4, 4), dtype=complex)
    v[:2, :2] = block(math.pi * a_m, a_p, a_m)
    v[2:, 2:] = block(math.pi * a_p, a_m, a_p)
    return v


def build_vu_dynamics(p: GeometricParams, steps: int) -> np.ndarray:
    """Entangling block from direct propagator integration.

    Integrates the block Hamiltonian over one drive period with ``steps``
    piecewise-constant slices (midpoint-sampled), serving as the independent
    check of :func:`build_vu_closed`.

    Raises:
        ValueError: if ``steps < 1``.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    dt = p.gate_time / steps
    t = (np.arange(steps) + 0.5) * dt
    gx = kron(SIGMA_I, SIGMA_X)
    gy = kron(SIGMA_I, SIGMA_Y)
    gz_p = kron((SIGMA_I + SIGMA_Z) / 2, SIGMA_Z)
    gz_m = kron((SIGMA_I - SIGMA_Z) / 2, SIGMA_Z)
    h = (0.5 * p.rabi * np.cos(p.omega * t)[:, None, None] * gx
         + 0.5 * p.rabi * np.sin(p.omega * t)[:, None, None] * gy
         + 0.5 * p.block_detuning(+1) * gz_p
         + 0.5 * p.block_detuning(-1) * gz_m)
    return ordered_product(expm_hermitian_stack(h, dt))


def entangler_coefficients(v: np.ndarray) -> np.ndarray:
    """Singular values of the Pauli-correlation matrix of a 4x4 unitary.

    The matrix ``D`` has entries ``Tr(v sigma_i x sigma_j) / 4`` over the
    16 two-qubit Pauli products; its four singular values are returned in
    descending order and their squares sum to 1 for unitary input.  The two
    leading values both equal ``sqrt(1/2)`` exactly for perfect entanglers
    of the CNOT class.

    Raises:
        ValueError: if ``v`` is not a 4x4 unitary (within 1e-10).
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {v.shape}")
    defect = unitarity_defect(v)
    if defect > 1e-10:
        raise ValueError(f"input is not unitary: defect {defect:.3e}")
    d = np.empty((4, 4), dtype=complex)
    for i, a in enumerate(PAULI.values()):
        for j, b in enumerate(PAULI.values()):
            d[i, j] = np.trace(v @ kron(a, b)) / 4.0
    return singular_values(d)


def _entangler_deviation(j: float) -> float:
    """Gap between the two leading entangler coefficients (>= 0)."""
    s = entangler_coefficients(build_vu_closed(j))
    return float(s[0] - s[1])


def find_entangler_coupling(scan_lo: float, scan_hi: float,
                            tol: float = 1e-4,
                            scan_points: int = 256) -> float | None:
    """Locate the coupling where the block gate is a perfect entangler.

    Scans the deviation ``sigma_1 - sigma_2`` of the leading entangler
    coefficients on a uniform grid, brackets its minimum, and refines by
    bisecting on the sign of the local slope (the deviation is V-shaped
    around the perfect-entangler point).  Returns ``None`` when no interior
    minimum reaches ``tol``.

    Raises:
        ValueError: on an invalid scan range.
    """
    if not (0.0 <= scan_lo < scan_hi < 0.5):
        raise ValueError(
            f"scan range must satisfy 0 <= lo < hi < 1/2, got [{scan_lo}, {scan_hi}]"
        )
    grid = np.linspace(scan_lo, scan_hi, scan_points)
    dev = np.array([_entangler_deviation(j) for j in grid])
    k = int(np.argmin(dev))
    if k == 0 or k == scan_points - 1:
        # boundary minimum: no interior dip in range
        return grid[k] if dev[k] <= tol else None
    lo, hi = grid[k - 1], grid[k + 1]
    h = (hi - lo) * 1e-6
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        slope = _entangler_deviation(mid + h) - _entangler_deviation(mid - h)
        if slope > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12:
            break
    j_star = 0.5 * (lo + hi)
    coeffs = entangler_coefficients(build_vu_closed(j_star))
    if abs(coeffs[0] - SQRT_HALF) > tol or abs(coeffs[1] - SQRT_HALF) > tol:
        return None
    return float(j_star)


# ---------------------------------------------------------------------------
# Single-qubit gates and beta sequences
# ---------------------------------------------------------------------------

def single_qubit_gate(beta: float) -> np.ndarray:
    """One-period single-qubit geometric gate.

    ``U(beta) = -exp[i pi sin(beta) (-cos(beta) X + sin(beta) Z)]``, the
    gate produced by a drive with ``Delta = omega cos^2(beta)`` and
    ``Omega = omega sin(beta) cos(beta)`` over one period (both satisfy the
    single-qubit cancellation condition).
    """
    s, c = math.sin(beta), math.cos(beta)
    angle = math.pi * s
    return -(math.cos(angle) * SIGMA_I
             + 1j * math.sin(angle) * (-c * SIGMA_X + s * SIGMA_Z))


@dataclass(frozen=True)
class BetaSequence:
    """Four ordered beta-angle lists, one per local gate slot.

    Slots 1 and 2 act on qubits 1 and 2 before the entangling block, slots
    3 and 4 after it.  Within a slot the angles are listed in operator
    order: the rightmost factor acts first in time.  ``delta_ref`` is the
    common detuning used to convert each angle into a pulse duration via
    ``omega_j = delta_ref / cos^2(beta_j)``.
    """

    slots: tuple[tuple[float, ...], tuple[float, ...],
                 tuple[float, ...], tuple[float, ...]]
    delta_ref: float = math.pi

    def __post_init__(self):
        if len(self.slots) != 4:
            raise ValueError("a BetaSequence needs exactly four slots")
        for slot in self.slots:
            for b in slot:
                if math.cos(b) ** 2 <= 1e-12:
                    raise ValueError(
                        f"beta = {b} has cos^2(beta) ~ 0: infinite pulse duration"
                    )

    def pulse_durations(self, slot: int) -> list[float]:
        """Duration ``2 pi / omega_j`` of each pulse in one slot."""
        return [2 * math.pi * math.cos(b) ** 2 / self.delta_ref
                for b in self.slots[slot]]

    def slot_durations(self) -> tuple[float, float, float, float]:
        """Total duration of each slot."""
        return tuple(sum(self.pulse_durations(k)) for k in range(4))

    def entangler_duration(self) -> float:
        """Drive period of the entangling block at ``omega = 2 delta_ref``."""
        return math.pi / self.delta_ref

    def segment_durations(self) -> tuple[float, float, float]:
        """(pre-local, entangler, post-local) segment lengths.

        Slots running on different qubits execute in parallel, so each local
        segment takes the maximum of its two slot durations.
        """
        t1, t2, t3, t4 = self.slot_durations()
        return (max(t1, t2), self.entangler_duration(), max(t3, t4))

    def total_time(self) -> float:
        return sum(self.segment_durations())


# Beta angles that compose, together with the entangling block at
# J/omega = -0.3187, to R_YY(pi/4) = exp(-i pi Y1 Y2 / 4) with infidelity
# ~3.1e-4 (see tests for the frozen value).  With the opposite coupling
# sign the same angles compose to the conjugate target exp(+i pi Y1 Y2 / 4).
RYY_COUPLING = -0.3187
RYY_BETAS = BetaSequence((
    (0.13, 0.91, 0.29, 0.52),
    (0.46, 0.31, 0.90, 0.3, 0.69, 0.23, 0.48),
    (0.24, 0.56, 0.29, 0.24, 0.81, 0.29, 0.81),
    (1.11, 0.27, 0.90, 0.16, 0.62),
))


def slot_product(betas: Sequence[float]) -> np.ndarray:
    """Ordered product of single-qubit gates; rightmost angle acts first."""
    m = SIGMA_I.copy()
    for b in betas:
        m = m @ single_qubit_gate(b)
    return m


def compose_ryy(seq: BetaSequence, j_over_omega: float) -> np.ndarray:
    """Composite gate ``(U3 x U4) V_U (U1 x U2)``."""
    s1, s2, s3, s4 = (slot_product(slot) for slot in seq.slots)
    return kron(s3, s4) @ build_vu_closed(j_over_omega) @ kron(s1, s2)


@dataclass
class OptimizeBetaResult:
    """Outcome of the local beta-sequence search."""

    sequence: BetaSequence
    objective: float
    iterations: int
    converged: bool


def optimize_beta(target: np.ndarray, init: BetaSequence, j_over_omega: float,
                  step: float = 0.05, min_step: float = 1e-7,
                  max_iterations: int = 200) -> OptimizeBetaResult:
    """Derivative-free local minimization of the composite gate defect.

    Coordinate descent over all beta angles with a shrinking step: each
    sweep tries ``+/- step`` on every angle and keeps strict improvements
    of the phase-aligned Frobenius distance
    ``min_phi ||compose(seq) - e^{i phi} target||_F``; the step halves
    whenever a full sweep yields no progress.  The objective never
    increases across accepted iterates, and since the aligned distance is
    monotone in the gate overlap, neither does the gate fidelity decrease.
    """
    angles = [list(slot) for slot in init.slots]

    def objective(a) -> float:
        seq = BetaSequence(tuple(tuple(s) for s in a), init.delta_ref)
        return min_phase_distance(compose_ryy(seq, j_over_omega), target)

    best = objective(angles)
    iterations = 0
    converged = False
    while iterations < max_iterations:
        iterations += 1
        improved = False
        for slot in angles:
            for i in range(len(slot)):
                base = slot[i]
                for cand in (base + step, base - step):
                    if abs(math.cos(cand)) ** 2 <= 1e-12:
                        continue
                    slot[i] = cand
                    val = objective(angles)
                    if val < best:
                        best = val
                        improved = True
                        break
                    slot[i] = base
        if not improved:
            step *= 0.5
            if step < min_step:
                converged = True
                break
    return OptimizeBetaResult(
        sequence=BetaSequence(tuple(tuple(s) for s in angles), init.delta_ref),
        objective=best,
        iterations=iterations,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Dynamical phase
# ---------------------------------------------------------------------------

def dynamical_phase(control: Callable[[float], tuple[float, float]],
                    omega: float, duration: float, sign: int,
                    steps: int = 10_000) -> float:
    """Dynamical phase ``-int <phi| H |phi> dt`` of an invariant eigenstate.

    ``control(t)`` returns the instantaneous ``(Omega, Delta)`` of a driven
    two-level system in the frame rotating at ``omega``; the eigenstate of
    the instantaneous invariant with eigenvalue ``sign * lam`` is tracked.
    Composite-midpoint quadrature with ``steps`` nodes.

    For constant parameters the integrand reduces to
    ``sign (Delta (Delta - omega) + Omega^2) / (2 lam)``, which vanishes
    identically under the cancellation condition.

    Raises:
        ValueError: if ``steps < 1``.
        SingularInvariantError: fully degenerate invariant along the path.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    dt = duration / steps
    total = 0.0
    for k in range(steps):
        t = (k + 0.5) * dt
        rabi, delta = control(t)
        lam = math.hypot(delta - omega, rabi)
        if lam < 1e-14 * max(1.0, abs(omega)):
            if rabi == 0.0 and delta == 0.0 and omega == 0.0:
                continue  # H identically zero contributes nothing
            raise SingularInvariantError(
                f"degenerate invariant at t = {t:.6g}"
            )
        _, cos_t, sin_t = _block_angles(rabi, delta, omega, sign)
        # <phi| H |phi> for the rotating eigenvector (cos e^{-iwt}, -sin)
        expect = 0.5 * (delta * (cos_t ** 2 - sin_t ** 2)
                        - 2.0 * rabi * sin_t * cos_t)
        total += expect * dt
    return -total


def dynamical_phase_for_params(p: GeometricParams, block: int, sign: int,
                               steps: int = 10_000) -> float:
    """Dynamical phase of one block eigenstate over a full gate period."""
    delta_eff = p.block_detuning(block)
    return dynamical_phase(lambda t: (p.rabi, delta_eff), p.omega,
                           p.gate_time, sign, steps)


def closed_vs_dynamics_defect(j_over_omega: float, steps: int = 100_000,
                              omega: float = 2 * math.pi) -> float:
    """Min-phase Frobenius gap between the closed form and the integration."""
    p = nonadiabatic_params(omega, j_over_omega)
    return min_phase_distance(build_vu_closed(j_over_omega),
                              build_vu_dynamics(p, steps))
