"""Deterministic post-training analysis of control schedules.

A trained policy is unrolled once in an error-free environment to a fixed
pulse schedule; the schedule is then replayed open-loop under systematic
error offsets to produce logarithmic-infidelity heatmaps, centralized so
its best operating point sits at zero offset, and audited for residual
dynamical phases.  Everything here is a pure function of its inputs, so
repeated runs give byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import require_observation_dim
from .env import (
    EnvConfig,
    FIDELITY_CAP,
    GateControlEnv,
    OBSERVATION_SIZE,
    TARGET_GATE,
    controls_hamiltonian,
    schedule_dynamical_phases,
)
from .linalg import expm_hermitian, gate_fidelity
from .ppo import PolicyParams, RegularizerSpec, sample_action

PULSE_COLUMNS = ("step", "t", "omega1", "delta1", "omega2", "delta2", "j")
HEATMAP_COLUMNS = ("d_omega", "d_delta", "log10_infidelity")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class PulseSchedule:
    """Stepwise physical control values: one row per step.

    Columns are ``omega1, delta1, omega2, delta2, j`` in rad/time; ``dt``
    is the hold time of each row.
    """

    dt: float
    controls: np.ndarray

    def __post_init__(self):
        self.controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if self.controls.shape[1] != 5:
            raise ValueError(
                f"schedule rows need 5 control values, got {self.controls.shape[1]}"
            )

    def __len__(self) -> int:
        return self.controls.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def csv_body(self) -> str:
        lines = [",".join(PULSE_COLUMNS)]
        for i, row in enumerate(self.controls):
            lines.append(",".join([str(i), _fmt(i * self.dt)] + [_fmt(v) for v in row]))
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.csv_body().encode()).hexdigest()


@dataclass
class Heatmap:
    """Error-sweep surface of ``log10(1 - F)`` over (d_omega, d_delta).

    ``values[i, j]`` corresponds to ``d_omega_grid[i]``, ``d_delta_grid[j]``.
    """

    d_omega_grid: np.ndarray
    d_delta_grid: np.ndarray
    values: np.ndarray
    pulse_hash: str = ""

    def __post_init__(self):
        self.d_omega_grid = np.asarray(self.d_omega_grid, dtype=float)
        self.d_delta_grid = np.asarray(self.d_delta_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.d_omega_grid), len(self.d_delta_grid)):
            raise ValueError(
                f"heatmap shape {self.values.shape} does not match grids "
                f"({len(self.d_omega_grid)}, {len(self.d_delta_grid)})"
            )

    def csv_body(self) -> str:
        lines = [",".join(HEATMAP_COLUMNS)]
        for i, d_om in enumerate(self.d_omega_grid):
            for j, d_de in enumerate(self.d_delta_grid):
                lines.append(f"{_fmt(d_om)},{_fmt(d_de)},{_fmt(self.values[i, j])}")
        return "\n".join(lines) + "\n"

    def center_cell(self) -> tuple[int, int]:
        """Indices of the cell closest to zero offset on both axes."""
        return (int(np.argmin(np.abs(self.d_omega_grid))),
                int(np.argmin(np.abs(self.d_delta_grid))))

    def argmax_fidelity(self) -> tuple[int, int]:
        """Cell of maximum fidelity (minimum log-infidelity).

        Ties break toward the smallest ``|d_omega| + |d_delta|``, then
        row-major order, so centralization is deterministic.
        """
        best = None
        best_key = None
        for i, d_om in enumerate(self.d_omega_grid):
            for j, d_de in enumerate(self.d_delta_grid):
                key = (self.values[i, j], abs(d_om) + abs(d_de))
                if best_key is None or key < best_key:
                    best_key = key
                    best = (i, j)
        return best


def extract_pulses(params: PolicyParams, cfg: EnvConfig) -> PulseSchedule:
    """Unroll the deterministic policy in an error-free environment.

    Mean actions, dropout off, no perturbation, zero error offsets; the
    physical control values applied at each step are recorded until the
    episode ends.

    Raises:
        CheckpointError: if the policy input size does not match the
            observation size.
    """
    require_observation_dim(params, OBSERVATION_SIZE)
    clean = EnvConfig(**{**cfg.__dict__, "error_offsets": (0.0, 0.0)})
    env = GateControlEnv(clean)
    reg_off = RegularizerSpec(kind="none")
    rng = np.random.default_rng(0)
    obs = env.reset()
    done = False
    while not done:
        sample = sample_action(obs, params, reg_off, rng, mode="eval")
        obs, _, done, _ = env.step(sample.action)
    return PulseSchedule(dt=clean.dt, controls=np.array(env.controls_history))


def replay(schedule: PulseSchedule, offsets: tuple[float, float],
           cfg: EnvConfig) -> float:
    """Open-loop fidelity of a fixed schedule under error offsets."""
    u = np.eye(4, dtype=complex)
    for i, row in enumerate(schedule.controls):
        h = controls_hamiltonian(row, i * schedule.dt, cfg, offsets)
        u = expm_hermitian(h, schedule.dt) @ u
    return gate_fidelity(u, TARGET_GATE)


def sweep_heatmap(schedule: PulseSchedule, sweep_range: float, steps: int,
                  cfg: EnvConfig) -> Heatmap:
    """Replay over a uniform ``[-range, +range]^2`` offset grid.

    Raises:
        ValueError: fewer than 2 grid points per axis.
    """
    if steps < 2:
        raise ValueError(f"need at least 2 grid points per axis, got {steps}")
    grid = np.linspace(-sweep_range, sweep_range, steps)
    values = np.empty((steps, steps))
    for i, d_om in enumerate(grid):
        for j, d_de in enumerate(grid):
            f = min(replay(schedule, (d_om, d_de), cfg), FIDELITY_CAP)
            values[i, j] = math.log10(1.0 - f)
    return Heatmap(grid.copy(), grid.copy(), values,
                   pulse_hash=schedule.content_hash())


@dataclass
class CentralizeResult:
    schedule: PulseSchedule
    shift: tuple[float, float]
    saturated: bool


def centralize(schedule: PulseSchedule, heatmap: Heatmap,
               cfg: EnvConfig) -> CentralizeResult:
    """Shift the schedule so the swept fidelity maximum moves to (0, 0).

    The argmax cell ``(d_omega*, d_delta*)`` of the heatmap is absorbed
    into the pulses: ``omega_i += omega_max * d_omega*`` and
    ``delta_i += delta_max * d_delta*``, clamped to the configured bounds.
    ``saturated`` reports whether any clamping occurred, in which case the
    re-swept argmax may fall short of the exact center.
    """
    i, j = heatmap.argmax_fidelity()
    d_om = float(heatmap.d_omega_grid[i])
    d_de = float(heatmap.d_delta_grid[j])
    controls = schedule.controls.copy()
    shifted_om = controls[:, [0, 2]] + cfg.omega_max * d_om
    shifted_de = controls[:, [1, 3]] + cfg.delta_max * d_de
    clamped_om = np.clip(shifted_om, 0.0, cfg.omega_max)
    clamped_de = np.clip(shifted_de, -cfg.delta_max, cfg.delta_max)
    saturated = bool(np.any(clamped_om != shifted_om) or
                     np.any(clamped_de != shifted_de))
    controls[:, [0, 2]] = clamped_om
    controls[:, [1, 3]] = clamped_de
    return CentralizeResult(
        schedule=PulseSchedule(dt=schedule.dt, controls=controls),
        shift=(d_om, d_de),
        saturated=saturated,
    )


def robust_area(heatmap: Heatmap, threshold: float = 0.99) -> float:
    """Fraction of grid cells whose fidelity reaches ``threshold``."""
    if threshold <= 0.0:
        return 1.0
    cutoff = math.log10(1.0 - min(threshold, FIDELITY_CAP))
    return float(np.mean(heatmap.values <= cutoff))


def cheat_margin(n: int, n_max: int, discount: float, f_hold: float,
                 f_final: float) -> float:
    """Extra discounted reward from idling in the bonus band until the end.

    An agent that reaches a holdable fidelity ``f_hold`` by step ``n`` can
    collect the in-band bonus every remaining step and re-trigger the
    threshold bonus ``f_final`` at the horizon instead of at step ``n``:

        sum_{i=n-1}^{n_max-1} g^i [1 - log10(1 - f_hold)]
        + g^{n_max} [10 - log10(1 - f_final)]
        - g^{n}     [10 - log10(1 - f_final)]

    Positive values mean the delayed finish out-earns stopping early.

    Raises:
        ValueError: unless ``1 <= n <= n_max``.
    """
    if not 1 <= n <= n_max:
        raise ValueError(f"need 1 <= n <= n_max, got n={n}, n_max={n_max}")
    hold_term = 1.0 - math.log10(1.0 - min(f_hold, FIDELITY_CAP))
    final_term = 10.0 - math.log10(1.0 - min(f_final, FIDELITY_CAP))
    total = sum(discount ** i * hold_term for i in range(n - 1, n_max))
    total += discount ** n_max * final_term
    total -= discount ** n * final_term
    return total


def dynamical_phase_audit(schedule: PulseSchedule, cfg: EnvConfig,
                          steps: int = 10_000) -> dict[tuple[int, int], float]:
    """Dynamical phases of the four tracked eigenstates along a schedule.

    Keys are ``(block, sign)`` over {+1, -1}^2.  Requires a geometric-kind
    environment, where the invariant eigenstates are defined.
    """
    return schedule_dynamical_phases(schedule.controls, cfg, steps)


# ---------------------------------------------------------------------------
# CSV round-trips
# ---------------------------------------------------------------------------

def pulses_to_csv(schedule: PulseSchedule, meta: dict | None = None) -> str:
    """Pulse CSV with ``#``-prefixed provenance, 17 significant digits."""
    lines = [f"# {k}: {v}" for k, v in sorted((meta or {}).items())]
    lines.append(f"# dt: {_fmt(schedule.dt)}")
    return "\n".join(lines) + "\n" + schedule.csv_body()


def pulses_from_csv(text: str) -> tuple[PulseSchedule, dict]:
    """Inverse of :func:`pulses_to_csv`."""
    meta: dict[str, str] = {}
    rows = []
    header_seen = False
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line != ",".join(PULSE_COLUMNS):
                raise ValueError(f"unexpected pulse CSV header: {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != len(PULSE_COLUMNS):
            raise ValueError(f"malformed pulse CSV row: {line!r}")
        rows.append([float(x) for x in parts[2:]])
    if "dt" not in meta:
        raise ValueError("pulse CSV is missing the dt metadata line")
    if not rows:
        raise ValueError("pulse CSV has no data rows")
    return PulseSchedule(dt=float(meta["dt"]), controls=np.array(rows)), meta


def heatmap_to_csv(heatmap: Heatmap, meta: dict | None = None) -> str:
    """Heatmap CSV in row-major grid order with provenance comments."""
    all_meta = dict(meta or {})
    all_meta.setdefault("pulse_hash", heatmap.pulse_hash)
    all_meta["grid_steps"] = len(heatmap.d_omega_grid)
    all_meta["grid_range"] = _fmt(float(np.max(np.abs(heatmap.d_omega_grid))))
    lines = [f"# {k}: {v}" for k, v in sorted(all_meta.items())]
    return "\n".join(lines) + "\n" + heatmap.csv_body()


def heatmap_from_csv(text: str) -> tuple[Heatmap, dict]:
    """Inverse of :func:`heatmap_to_csv`."""
    meta: dict[str, str] = {}
    triples = []
    header_seen = False
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line != ",".join(HEATMAP_COLUMNS):
                raise ValueError(f"unexpected heatmap CSV header: {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"malformed heatmap CSV row: {line!r}")
        triples.append([float(x) for x in parts])
    if not triples:
        raise ValueError("heatmap CSV has no data rows")
    data = np.array(triples)
    d_om = np.unique(data[:, 0])
    d_de = np.unique(data[:, 1])
    if len(d_om) * len(d_de) != len(data):
        raise ValueError("heatmap CSV rows do not form a complete grid")
    values = data[:, 2].reshape(len(d_om), len(d_de))
    return Heatmap(d_om, d_de, values,
                   pulse_hash=meta.get("pulse_hash", "")), meta
