"""Gate-control environment: stepwise propagation toward R_YY(pi/4).

The agent drives a two-qubit register through five normalized control
channels (two Rabi amplitudes, two detunings, one exchange strength).  Each
step holds the controls constant for ``dt = total_time / n_max``, multiplies
the accumulated propagator by the corresponding step unitary, and rewards
the logarithmic infidelity to the target entangling gate.  Systematic error
injection (additive Rabi and detuning offsets) shares the same Hamiltonian
assembly so error-free training and error-swept evaluation are exactly
consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometric
from .linalg import expm_hermitian, gate_fidelity, kron, SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z

OBSERVATION_SIZE = 38
ACTION_SIZE = 5
FIDELITY_CAP = 1.0 - 1e-12

# target entangling gate exp(-i pi Y1 Y2 / 4) = (I - i Y1 Y2) / sqrt(2)
TARGET_GATE = (np.eye(4, dtype=complex) - 1j * kron(SIGMA_Y, SIGMA_Y)) / math.sqrt(2)

X1 = kron(SIGMA_X, SIGMA_I)
Y1 = kron(SIGMA_Y, SIGMA_I)
Z1 = kron(SIGMA_Z, SIGMA_I)
X2 = kron(SIGMA_I, SIGMA_X)
Y2 = kron(SIGMA_I, SIGMA_Y)
Z2 = kron(SIGMA_I, SIGMA_Z)
ZZ = kron(SIGMA_Z, SIGMA_Z)


class ConfigError(ValueError):
    """Raised when a configuration value violates an invariant."""


@dataclass
class EnvConfig:
    """Environment settings.

    ``hamiltonian_kind`` is ``"general"`` (all five channels live) or
    ``"geometric"`` (three-segment schedule: local drives with a shared
    detuning, then a one-sided drive with exchange coupling, then local
    drives again).  ``switch_times`` fixes the segment boundaries for the
    geometric kind; left unset they are derived from the reference
    beta-sequence durations scaled to ``total_time``.
    """

    omega_drive: float = 2 * math.pi
    omega_max: float = 2 * math.pi
    delta_max: float = 2 * math.pi
    j_max: float = 2 * math.pi
    total_time: float = 2.0
    n_max: int = 100
    hamiltonian_kind: str = "general"
    switch_times: tuple[float, float] | None = None
    reward_mode: str = "per_step"
    fidelity_threshold: float = 0.99
    band_low: float = 0.95
    band_bonus: float = 1.0
    threshold_bonus: float = 10.0
    phase_penalty_lambda: float = 0.0
    error_offsets: tuple[float, float] = (0.0, 0.0)

    @property
    def dt(self) -> float:
        return self.total_time / self.n_max

    def validate(self) -> "EnvConfig":
        if self.omega_drive <= 0:
            raise ConfigError(f"omega_drive must be positive, got {self.omega_drive}")
        for name in ("omega_max", "delta_max", "j_max"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.total_time <= 0:
            raise ConfigError(f"total_time must be positive, got {self.total_time}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.hamiltonian_kind not in ("general", "geometric"):
            raise ConfigError(
                f"hamiltonian_kind must be 'general' or 'geometric', "
                f"got {self.hamiltonian_kind!r}"
            )
        if self.reward_mode not in ("per_step", "terminal"):
            raise ConfigError(
                f"reward_mode must be 'per_step' or 'terminal', got {self.reward_mode!r}"
            )
        if not (0.0 <= self.band_low < self.fidelity_threshold < 1.0):
            raise ConfigError(
                f"need 0 <= band_low < fidelity_threshold < 1, got "
                f"band_low={self.band_low}, fidelity_threshold={self.fidelity_threshold}"
            )
        if self.phase_penalty_lambda < 0:
            raise ConfigError(
                f"phase_penalty_lambda must be >= 0, got {self.phase_penalty_lambda}"
            )
        if self.phase_penalty_lambda > 0 and self.hamiltonian_kind != "geometric":
            raise ConfigError(
                "phase_penalty_lambda > 0 requires the geometric hamiltonian_kind"
            )
        if self.hamiltonian_kind == "geometric":
            geometric_phase_schedule(self)  # validates switch times
        return self


def geometric_phase_schedule(cfg: EnvConfig,
                             seq: geometric.BetaSequence = geometric.RYY_BETAS,
                             ) -> tuple[float, float]:
    """Segment switch times (t1, t2) for the geometric kind.

    Explicit ``cfg.switch_times`` are validated against ``0 < t1 < t2 < T``;
    otherwise the three segment durations of ``seq`` are rescaled so they
    sum to ``cfg.total_time``.

    Raises:
        ConfigError: geometric kind not selected, or inconsistent times.
    """
    if cfg.hamiltonian_kind != "geometric":
        raise ConfigError("switch times are only defined for the geometric kind")
    if cfg.switch_times is not None:
        t1, t2 = cfg.switch_times
        if not (0.0 < t1 < t2 < cfg.total_time):
            raise ConfigError(
                f"switch_times must satisfy 0 < t1 < t2 < total_time, "
                f"got t1={t1}, t2={t2}, total_time={cfg.total_time}"
            )
        return (t1, t2)
    d1, d2, d3 = seq.segment_durations()
    total = d1 + d2 + d3
    scale = cfg.total_time / total
    return (d1 * scale, (d1 + d2) * scale)


def action_to_controls(action: np.ndarray, cfg: EnvConfig) -> np.ndarray:
    """Map the five [0,1] channels onto physical values.

    Channels are clamped to [0,1] first; detuning channels map affinely so
    0.5 means zero detuning.
    """
    a = np.clip(np.asarray(action, dtype=float), 0.0, 1.0)
    if a.shape != (ACTION_SIZE,):
        raise ValueError(f"action must have {ACTION_SIZE} channels, got shape {a.shape}")
    return np.array([
        a[0] * cfg.omega_max,
        (2 * a[1] - 1) * cfg.delta_max,
        a[2] * cfg.omega_max,
        (2 * a[3] - 1) * cfg.delta_max,
        a[4] * cfg.j_max,
    ])


def project_controls(controls: np.ndarray, t: float, cfg: EnvConfig) -> np.ndarray:
    """Restrict physical controls to the channels live at time ``t``.

    General kind passes through.  Geometric kind: the local segments drive
    both qubits with a shared detuning taken from channel 1 (channel-2
    detuning and exchange are dead); the middle segment drives only the
    second qubit, reusing channels (Omega_1 -> Omega, Delta_1 -> Delta) plus
    the exchange channel.
    """
    if cfg.hamiltonian_kind == "general":
        return controls
    t1, t2 = geometric_phase_schedule(cfg)
    om1, de1, om2, de2, j = controls
    if t1 <= t < t2:
        return np.array([0.0, 0.0, om1, de1, j])
    return np.array([om1, de1, om2, de1, 0.0])


def controls_hamiltonian(controls: np.ndarray, t: float, cfg: EnvConfig,
                         offsets: tuple[float, float]) -> np.ndarray:
    """Two-qubit Hamiltonian for physical control values at time ``t``.

    Systematic errors enter additively: ``Omega_i + omega_max * d_omega``
    on both Rabi amplitudes and ``Delta_i + delta_max * d_delta`` on both
    detunings; the exchange term is error-free.
    """
    om1, de1, om2, de2, j = controls
    d_om, d_de = offsets
    om1 = om1 + cfg.omega_max * d_om
    om2 = om2 + cfg.omega_max * d_om
    de1 = de1 + cfg.delta_max * d_de
    de2 = de2 + cfg.delta_max * d_de
    c = math.cos(cfg.omega_drive * t)
    s = math.sin(cfg.omega_drive * t)
    return 0.5 * (om1 * c * X1 + om1 * s * Y1 + de1 * Z1
                  + om2 * c * X2 + om2 * s * Y2 + de2 * Z2
                  + j * ZZ)


def build_hamiltonian(action: np.ndarray, t: float, cfg: EnvConfig) -> np.ndarray:
    """Hamiltonian seen by the register for a raw action at time ``t``."""
    controls = project_controls(action_to_controls(action, cfg), t, cfg)
    return controls_hamiltonian(controls, t, cfg, cfg.error_offsets)


def reward_value(fidelity: float, cfg: EnvConfig, is_terminal_step: bool,
                 gamma_d: float | None = None) -> float:
    """Reward for a step finishing with the given gate fidelity.

    ``-log10(1 - F)`` plus an additive bonus of ``band_bonus`` when F lies
    in ``[band_low, fidelity_threshold)`` and ``threshold_bonus`` at or
    above the threshold; the fidelity is capped at ``1 - 1e-12`` before the
    logarithm.  A dynamical-phase penalty ``-lambda * gamma_d^2`` is
    subtracted when ``gamma_d`` is supplied.  In terminal reward mode the
    reward is zero except on the terminal step.
    """
    if cfg.reward_mode == "terminal" and not is_terminal_step:
        return 0.0
    f = min(max(fidelity, 0.0), FIDELITY_CAP)
    r = -math.log10(1.0 - f)
    if f >= cfg.fidelity_threshold:
        r += cfg.threshold_bonus
    elif f >= cfg.band_low:
        r += cfg.band_bonus
    if gamma_d is not None:
        r -= cfg.phase_penalty_lambda * gamma_d * gamma_d
    return r


def encode_observation(u: np.ndarray, last_action: np.ndarray,
                       step_index: int, n_max: int) -> np.ndarray:
    """38-component observation: Re(U), Im(U), last action, normalized time."""
    obs = np.empty(OBSERVATION_SIZE)
    flat = np.asarray(u, dtype=complex).reshape(-1)
    obs[0:16] = flat.real
    obs[16:32] = flat.imag
    obs[32:37] = last_action
    obs[37] = step_index / n_max
    return obs


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


class GateControlEnv:
    """Stepwise propagator environment with a gym-style reset/step API.

    ``step`` returns ``(observation, reward, done, info)`` where ``info``
    carries the current gate fidelity and step index.  Instances are
    single-threaded; run several with independent seeds for parallel
    rollouts.
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg.validate()
        self.propagator = np.eye(4, dtype=complex)
        self.step_index = 0
        self.last_action = np.zeros(ACTION_SIZE)
        self.controls_history: list[np.ndarray] = []
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a fresh episode: identity propagator, zero last action."""
        del seed  # the dynamics are deterministic; accepted for API symmetry
        self.propagator = np.eye(4, dtype=complex)
        self.step_index = 0
        self.last_action = np.zeros(ACTION_SIZE)
        self.controls_history = []
        self._done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        return encode_observation(self.propagator, self.last_action,
                                  self.step_index, self.cfg.n_max)

    def fidelity(self) -> float:
        return gate_fidelity(self.propagator, TARGET_GATE)

    @property
    def done(self) -> bool:
        return self._done

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        if self._done:
            raise EpisodeFinishedError("episode is finished; call reset() first")
        cfg = self.cfg
        action = np.clip(np.asarray(action, dtype=float), 0.0, 1.0)
        t = self.step_index * cfg.dt
        controls = project_controls(action_to_controls(action, cfg), t, cfg)
        h = controls_hamiltonian(controls, t, cfg, cfg.error_offsets)
        self.propagator = expm_hermitian(h, cfg.dt) @ self.propagator
        self.controls_history.append(controls)
        self.step_index += 1
        self.last_action = action
        fid = self.fidelity()
        done = self.step_index >= cfg.n_max or (
            cfg.reward_mode == "per_step" and fid >= cfg.fidelity_threshold
        )
        gamma_d = None
        if done and cfg.phase_penalty_lambda > 0:
            phases = schedule_dynamical_phases(
                np.array(self.controls_history), cfg
            )
            gamma_d = math.sqrt(sum(v * v for v in phases.values()))
        reward = reward_value(fid, cfg, is_terminal_step=done, gamma_d=gamma_d)
        self._done = done
        info = {"fidelity": fid, "step": self.step_index}
        if gamma_d is not None:
            info["gamma_d"] = gamma_d
        return self.observation(), reward, done, info


def schedule_dynamical_phases(controls: np.ndarray, cfg: EnvConfig,
                              steps: int = 10_000) -> dict[tuple[int, int], float]:
    """Dynamical phases of the four tracked invariant eigenstates.

    ``controls`` holds one row of physical values per executed step.  For a
    geometric-kind schedule, eigenstate ``(b, s)`` accumulates, during the
    local segments, the single-qubit phases of the qubit-1 branch ``b`` and
    the qubit-2 branch ``s``; during the entangling segment it accumulates
    the block phase with effective detuning ``Delta + b J``.  Quadrature
    nodes are aligned with the piecewise-constant steps so the result is
    exact for stepwise schedules.

    Raises:
        ConfigError: for non-geometric environments.
    """
    if cfg.hamiltonian_kind != "geometric":
        raise ConfigError("dynamical phases are tracked only for the geometric kind")
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    t1, t2 = geometric_phase_schedule(cfg)
    dt = cfg.dt
    n = controls.shape[0]
    sub = max(1, steps // max(n, 1))
    omega = cfg.omega_drive
    phases: dict[tuple[int, int], float] = {}
    for b in (+1, -1):
        for s in (+1, -1):
            total = 0.0
            for i in range(n):
                om1, de1, om2, de2, j = controls[i]
                t = i * dt
                if t1 <= t < t2:
                    total += geometric.dynamical_phase(
                        lambda _t: (om2, de2 + b * j), omega, dt, s, sub)
                else:
                    total += geometric.dynamical_phase(
                        lambda _t: (om1, de1), omega, dt, b, sub)
                    total += geometric.dynamical_phase(
                        lambda _t: (om2, de2), omega, dt, s, sub)
            phases[(b, s)] = total
    return phases
