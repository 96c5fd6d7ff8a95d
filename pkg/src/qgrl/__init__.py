"""Robust two-qubit entangling gate design.

Analytic geometric construction of an R_YY(pi/4) gate, a propagator-based
control environment, a from-scratch PPO agent with perturbation/dropout
robustness mechanisms, and deterministic error-sweep evaluation.
"""

from .env import EnvConfig, GateControlEnv, TARGET_GATE, build_hamiltonian, reward_value
from .geometric import (
    BetaSequence,
    GeometricParams,
    RYY_BETAS,
    RYY_COUPLING,
    build_vu_closed,
    build_vu_dynamics,
    compose_ryy,
    entangler_coefficients,
    find_entangler_coupling,
    nonadiabatic_params,
    optimize_beta,
    single_qubit_gate,
)
from .linalg import (
    expm_hermitian,
    frobenius_distance,
    gate_fidelity,
    kron,
    min_phase_distance,
    singular_values,
)
from .ppo import (
    PolicyParams,
    PpoConfig,
    RegularizerSpec,
    compute_gae,
    perturb_action,
    policy_forward,
    ppo_update,
    train,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .robustness import (
    Heatmap,
    PulseSchedule,
    centralize,
    cheat_margin,
    dynamical_phase_audit,
    extract_pulses,
    replay,
    robust_area,
    sweep_heatmap,
)

__version__ = "0.1.0"
