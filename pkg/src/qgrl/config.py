"""Flat key=value run configuration with layered precedence.

Explicit command-line flags override file values, which override defaults.
Defaults that the benchmark setups tie to the Hamiltonian kind and the
regularizer (batch size, episode budget, operation time, reward mode) are
resolved conditionally unless the file or flags pin them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .env import ConfigError, EnvConfig
from .ppo import PpoConfig, RegularizerSpec

REG_ALIASES = {
    "none": "none",
    "perturb": "output_perturbation",
    "output_perturbation": "output_perturbation",
    "dropout": "dropout",
}

_ENV_KEYS = {
    "omega_drive": float,
    "omega_max": float,
    "delta_max": float,
    "j_max": float,
    "total_time": float,
    "n_max": int,
    "hamiltonian_kind": str,
    "reward_mode": str,
    "fidelity_threshold": float,
    "band_low": float,
    "phase_penalty_lambda": float,
}

_PPO_KEYS = {
    "batch_size": int,
    "learning_rate": float,
    "clip_ratio": float,
    "discount": float,
    "gae_lambda": float,
    "update_epochs": int,
    "minibatch_size": int,
    "max_episodes": int,
    "stop_on_threshold": bool,
    "eval_stop_fidelity": float,
    "entropy_coef": float,
    "log_std_init": float,
}

_OTHER_KEYS = {
    "seed": int,
    "regularizer": str,
    "perturb_sigma": float,
    "dropout_rate": float,
    "heatmap_range": float,
    "heatmap_steps": int,
    "out_dir": str,
}

KNOWN_KEYS = {**_ENV_KEYS, **_PPO_KEYS, **_OTHER_KEYS}


@dataclass
class RunConfig:
    """Merged environment, agent, regularizer and evaluation settings."""

    env: EnvConfig
    ppo: PpoConfig
    reg: RegularizerSpec
    heatmap_range: float = 0.1
    heatmap_steps: int = 21
    seed: int | None = None
    out_dir: str = "out"


def _parse_value(key: str, raw: str, line_no: int):
    kind = KNOWN_KEYS[key]
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"line {line_no}: invalid value for {key}: {raw!r}"
        ) from None


def _parse_kind(raw: str, line_no: int):
    """hamiltonian_kind value: 'general', 'geometric' or 'geometric(t1,t2)'."""
    value = raw.strip()
    if value == "general":
        return "general", None
    if value == "geometric":
        return "geometric", None
    if value.startswith("geometric(") and value.endswith(")"):
        inner = value[len("geometric("):-1]
        parts = inner.split(",")
        if len(parts) == 2:
            try:
                return "geometric", (float(parts[0]), float(parts[1]))
            except ValueError:
                pass
    raise ConfigError(
        f"line {line_no}: invalid value for hamiltonian_kind: {raw!r} "
        f"(expected general, geometric, or geometric(t1,t2))"
    )


def parse_config_text(text: str) -> dict:
    """Raw key/value extraction with per-line diagnostics.

    Raises:
        ConfigError: unknown key, duplicate key, or malformed value, each
            naming the offending line.
    """
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        if key == "hamiltonian_kind":
            kind, switch = _parse_kind(raw, line_no)
            values[key] = kind
            if switch is not None:
                values["_switch_times"] = switch
        else:
            values[key] = _parse_value(key, raw, line_no)
    return values


def _conditional_defaults(kind: str, reg_kind: str) -> dict:
    """Benchmark defaults tied to the Hamiltonian kind and regularizer."""
    out = {"learning_rate": 1e-4, "n_max": 100}
    if kind == "general":
        out["total_time"] = 2.0
        out["reward_mode"] = "per_step"
        if reg_kind == "none":
            out["batch_size"] = 64
            out["max_episodes"] = 100_000
        else:
            out["batch_size"] = 128
            out["max_episodes"] = 200_000
    else:
        out["total_time"] = 17.05
        out["reward_mode"] = "terminal"
        out["batch_size"] = 128
        out["max_episodes"] = 200_000 if reg_kind == "dropout" else 100_000
    return out


def build_run_config(values: dict) -> RunConfig:
    """Resolve a raw key/value mapping into validated config objects."""
    reg_name = values.get("regularizer", "none")
    if reg_name not in REG_ALIASES:
        raise ConfigError(
            f"regularizer must be one of {sorted(REG_ALIASES)}, got {reg_name!r}"
        )
    reg_kind = REG_ALIASES[reg_name]
    kind = values.get("hamiltonian_kind", "general")
    defaults = _conditional_defaults(kind, reg_kind)

    def pick(key: str, fallback):
        if key in values:
            return values[key]
        return defaults.get(key, fallback)

    env = EnvConfig(
        omega_drive=pick("omega_drive", 2 * math.pi),
        omega_max=pick("omega_max", 2 * math.pi),
        delta_max=pick("delta_max", 2 * math.pi),
        j_max=pick("j_max", 2 * math.pi),
        total_time=pick("total_time", 2.0),
        n_max=pick("n_max", 100),
        hamiltonian_kind=kind,
        switch_times=values.get("_switch_times"),
        reward_mode=pick("reward_mode", "per_step"),
        fidelity_threshold=pick("fidelity_threshold", 0.99),
        band_low=pick("band_low", 0.95),
        phase_penalty_lambda=pick("phase_penalty_lambda", 0.0),
    )
    env.validate()
    ppo = PpoConfig(
        batch_size=pick("batch_size", 64),
        learning_rate=pick("learning_rate", 1e-4),
        clip_ratio=pick("clip_ratio", 0.2),
        discount=pick("discount", 0.99),
        gae_lambda=pick("gae_lambda", 0.95),
        update_epochs=pick("update_epochs", 10),
        minibatch_size=pick("minibatch_size", 256),
        max_episodes=pick("max_episodes", 100_000),
        seed=values.get("seed", 0),
        stop_on_threshold=pick("stop_on_threshold", True),
        eval_stop_fidelity=values.get("eval_stop_fidelity"),
        entropy_coef=pick("entropy_coef", 0.003),
        log_std_init=pick("log_std_init", 0.5),
    )
    try:
        ppo.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reg = RegularizerSpec(
        kind=reg_kind,
        sigma=values.get("perturb_sigma", 0.1),
        rate=values.get("dropout_rate", 0.1),
    )
    try:
        reg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    heatmap_steps = values.get("heatmap_steps", 21)
    if heatmap_steps < 2:
        raise ConfigError(f"heatmap_steps must be >= 2, got {heatmap_steps}")
    return RunConfig(
        env=env,
        ppo=ppo,
        reg=reg,
        heatmap_range=values.get("heatmap_range", 0.1),
        heatmap_steps=heatmap_steps,
        seed=values.get("seed"),
        out_dir=values.get("out_dir", "out"),
    )


def parse_config(text: str = "", overrides: dict | None = None) -> RunConfig:
    """Parse file text, apply flag overrides, resolve defaults, validate."""
    values = parse_config_text(text)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "_switch_times":
            values[key] = value
        elif key not in KNOWN_KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        else:
            values[key] = value
    return build_run_config(values)


def serialize_env(env: EnvConfig) -> str:
    """Canonical text form of the environment settings."""
    switch = ""
    if env.hamiltonian_kind == "geometric":
        from .env import geometric_phase_schedule
        t1, t2 = geometric_phase_schedule(env)
        switch = f"({t1:.17g},{t2:.17g})"
    pairs = {
        "omega_drive": f"{env.omega_drive:.17g}",
        "omega_max": f"{env.omega_max:.17g}",
        "delta_max": f"{env.delta_max:.17g}",
        "j_max": f"{env.j_max:.17g}",
        "total_time": f"{env.total_time:.17g}",
        "n_max": str(env.n_max),
        "hamiltonian_kind": env.hamiltonian_kind + switch,
        "reward_mode": env.reward_mode,
        "fidelity_threshold": f"{env.fidelity_threshold:.17g}",
        "band_low": f"{env.band_low:.17g}",
        "phase_penalty_lambda": f"{env.phase_penalty_lambda:.17g}",
    }
    return "\n".join(f"{k} = {v}" for k, v in sorted(pairs.items())) + "\n"


def env_hash(env: EnvConfig) -> str:
    """Hash identifying the physical environment an artifact came from."""
    return hashlib.sha256(serialize_env(env).encode()).hexdigest()[:16]


def serialize_run(cfg: RunConfig) -> str:
    """Canonical text form of the full run configuration."""
    pairs = {
        "batch_size": str(cfg.ppo.batch_size),
        "learning_rate": f"{cfg.ppo.learning_rate:.17g}",
        "clip_ratio": f"{cfg.ppo.clip_ratio:.17g}",
        "discount": f"{cfg.ppo.discount:.17g}",
        "gae_lambda": f"{cfg.ppo.gae_lambda:.17g}",
        "update_epochs": str(cfg.ppo.update_epochs),
        "minibatch_size": str(cfg.ppo.minibatch_size),
        "max_episodes": str(cfg.ppo.max_episodes),
        "stop_on_threshold": str(cfg.ppo.stop_on_threshold),
        "entropy_coef": f"{cfg.ppo.entropy_coef:.17g}",
        "log_std_init": f"{cfg.ppo.log_std_init:.17g}",
        "regularizer": cfg.reg.kind,
        "perturb_sigma": f"{cfg.reg.sigma:.17g}",
        "dropout_rate": f"{cfg.reg.rate:.17g}",
        "heatmap_range": f"{cfg.heatmap_range:.17g}",
        "heatmap_steps": str(cfg.heatmap_steps),
        "seed": str(cfg.seed),
    }
    return serialize_env(cfg.env) + \
        "\n".join(f"{k} = {v}" for k, v in sorted(pairs.items())) + "\n"


def run_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_run(cfg).encode()).hexdigest()[:16]
