"""Experiment configuration: YAML schema, defaults, resolution and hashing.

The file schema mirrors the published parameter tables; every agent field
left null resolves to the table value for the configured UAV count, so a
bare config reproduces the reference setup exactly.  Unknown keys are
rejected with the offending line.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .agents import EpsilonSchedule, TrainConfig
from .env_core import UavRelayEnv
from .errors import ConfigError
from .params import EnergyParams, GridSpec, RadioParams

_MODES = ("train", "eval", "sweep", "verify")
_BUDGETS = ("desk", "full")
_PLACEMENT_MODES = ("fixed", "per_episode")
_SWEEP_AXES = ("device_count", "coverage_radius", "uav_count", "direction_model")

# leaf spec: (python type, nullable)
_SCHEMA = {
    "env": {
        "grid": {
            "cells_x": (int, False), "cells_y": (int, False), "spacing_m": (float, False),
        },
        "radio": {
            "beta0_db": (float, False), "tx_power_w": (float, False),
            "packet_bits": (float, False), "bandwidth_hz": (float, False),
            "noise_dbm": (float, False), "uav_alt_m": (float, False),
            "bs_alt_m": (float, False), "coverage_override_m": (float, True),
        },
        "energy": {
            "battery_j": (float, False), "quanta": (int, False),
            "p0_w": (float, False), "p1_w": (float, False),
            "tip_speed_ms": (float, False), "hover_induced_v_ms": (float, False),
            "fuselage_drag": (float, False), "air_density": (float, False),
            "rotor_solidity": (float, False), "rotor_disk_area_m2": (float, False),
            "speed_ms": (float, False), "penalty_z": (float, False),
            "energy_threshold": (int, True), "diag_factor": (float, False),
        },
        "devices": (int, False), "uavs": (int, False),
        "weights": (list, True), "direction_model": (int, False),
        "placement_seed": (int, False), "placement_mode": (str, False),
        "age_max": (int, False), "max_slots": (int, False),
    },
    "agent": {
        "episodes": (int, True), "batch": (int, True), "buffer": (int, True),
        "hidden": (list, True), "learning_rate": (float, False),
        "discount": (float, False), "target_sync_steps": (int, False),
        "loss": (str, False), "huber_delta": (float, False),
        "grad_steps_per_env_step": (float, False),
        "epsilon": {
            "initial": (float, False), "decay": (float, False), "floor": (float, False),
        },
    },
    "run": {
        "mode": (str, False), "master_seed": (int, False),
        "eval_episodes": (int, False), "out_dir": (str, False), "budget": (str, False),
    },
    "sweep": {
        "axis": (str, False), "values": (list, False),
    },
}

_DEFAULTS = {
    "env": {
        "grid": {"cells_x": 11, "cells_y": 11, "spacing_m": 100.0},
        "radio": {
            "beta0_db": -30.0, "tx_power_w": 0.003, "packet_bits": 5.0e6,
            "bandwidth_hz": 1.0e6, "noise_dbm": -100.0, "uav_alt_m": 100.0,
            "bs_alt_m": 15.0, "coverage_override_m": None,
        },
        "energy": {
            "battery_j": 10000.0, "quanta": 200, "p0_w": 99.66, "p1_w": 120.16,
            "tip_speed_ms": 120.0, "hover_induced_v_ms": 0.002, "fuselage_drag": 0.48,
            "air_density": 1.225, "rotor_solidity": 1.0e-4, "rotor_disk_area_m2": 0.5,
            "speed_ms": 25.0, "penalty_z": 5.0, "energy_threshold": None,
            "diag_factor": math.sqrt(2.0),
        },
        "devices": 5, "uavs": 1, "weights": None, "direction_model": 9,
        "placement_seed": 0, "placement_mode": "fixed", "age_max": 30, "max_slots": 60,
    },
    "agent": {
        "episodes": None, "batch": None, "buffer": None, "hidden": None,
        "learning_rate": 4.0e-4, "discount": 0.99, "target_sync_steps": 1000,
        "loss": "huber", "huber_delta": 1.0, "grad_steps_per_env_step": 1.0,
        "epsilon": {"initial": 1.0, "decay": 0.995, "floor": 0.01},
    },
    "run": {
        "mode": "train", "master_seed": 1, "eval_episodes": 100,
        "out_dir": "runs", "budget": "desk",
    },
}


def _coerce_scalar(value, want, path, where):
    if value is None:
        return None
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: key '{path}' must be a number, got {value!r}")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: key '{path}' must be an integer, got {value!r}")
        return int(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: key '{path}' must be a string, got {value!r}")
        return value
    if want is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: key '{path}' must be a list, got {value!r}")
        return value
    raise AssertionError(want)


def _walk(node, schema, path, source):
    """Validate a YAML mapping node against the schema, returning plain data."""
    if node is None:
        return {}
    if not isinstance(node, yaml.MappingNode):
        line = node.start_mark.line + 1
        raise ConfigError(f"{source}:{line}: expected a mapping at '{path or '<top>'}'")
    out = {}
    seen = set()
    for k_node, v_node in node.value:
        key = k_node.value
        line = k_node.start_mark.line + 1
        child_path = f"{path}.{key}" if path else key
        if key in seen:
            raise ConfigError(f"{source}:{line}: duplicate key '{child_path}'")
        seen.add(key)
        if key not in schema:
            raise ConfigError(f"{source}:{line}: unknown key '{child_path}'")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = _walk(v_node, spec, child_path, source)
        else:
            want, nullable = spec
            value = _construct(v_node)
            if value is None and not nullable:
                raise ConfigError(f"{source}:{line}: key '{child_path}' may not be null")
            out[key] = _coerce_scalar(value, want, child_path, f"{source}:{line}")
    return out


def _construct(node):
    loader = yaml.SafeLoader("")
    return loader.construct_object(node, deep=True)


def _merge(defaults, overrides):
    out = {}
    for k, dv in defaults.items():
        if isinstance(dv, dict):
            out[k] = _merge(dv, overrides.get(k, {}))
        elif k in overrides:
            out[k] = overrides[k]
        else:
            out[k] = dv
    for k in overrides:
        if k not in defaults:
            out[k] = overrides[k]
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated config; agent nulls resolve per UAV count on access."""

    env: dict
    agent: dict
    run: dict
    sweep: dict | None = None

    # ---- resolution of table defaults ------------------------------------ #

    def agent_hidden(self) -> tuple[int, ...]:
        if self.agent["hidden"] is not None:
            return tuple(int(h) for h in self.agent["hidden"])
        return (64, 64) if self.env["uavs"] == 1 else (64, 128, 256, 128, 128)

    def agent_batch(self) -> int:
        if self.agent["batch"] is not None:
            return self.agent["batch"]
        return 64 if self.env["uavs"] == 1 else 128

    def agent_buffer(self) -> int:
        if self.agent["buffer"] is not None:
            return self.agent["buffer"]
        return 100_000 if self.env["uavs"] == 1 else 1_000_000

    def agent_episodes(self) -> int:
        if self.agent["episodes"] is not None:
            return self.agent["episodes"]
        if self.run["budget"] == "full":
            return 50_000 if self.env["uavs"] == 1 else 100_000
        return 10_000 if self.env["uavs"] == 1 else 25_000

    # ---- constructors ------------------------------------------------------ #

    def radio_params(self) -> RadioParams:
        r = self.env["radio"]
        return RadioParams(
            beta0=10.0 ** (r["beta0_db"] / 10.0),
            tx_power_W=r["tx_power_w"],
            packet_bits=r["packet_bits"],
            bandwidth_hz=r["bandwidth_hz"],
            noise_W=10.0 ** (r["noise_dbm"] / 10.0) / 1000.0,
            uav_alt_m=r["uav_alt_m"],
            bs_alt_m=r["bs_alt_m"],
            coverage_override_m=r["coverage_override_m"],
        )

    def energy_params(self) -> EnergyParams:
        e = self.env["energy"]
        return EnergyParams(
            battery_J=e["battery_j"], quanta=e["quanta"], p0_W=e["p0_w"], p1_W=e["p1_w"],
            tip_speed=e["tip_speed_ms"], hover_induced_v=e["hover_induced_v_ms"],
            fuselage_drag=e["fuselage_drag"], air_density=e["air_density"],
            rotor_solidity=e["rotor_solidity"], rotor_disk_area=e["rotor_disk_area_m2"],
            speed=e["speed_ms"], penalty_z=e["penalty_z"],
            energy_threshold=e["energy_threshold"], diag_factor=e["diag_factor"],
        )

    def build_env(self) -> UavRelayEnv:
        g = self.env["grid"]
        return UavRelayEnv(
            grid=GridSpec(cells_x=g["cells_x"], cells_y=g["cells_y"],
                          spacing_m=g["spacing_m"]),
            radio=self.radio_params(),
            energy=self.energy_params(),
            n_uavs=self.env["uavs"],
            n_devices=self.env["devices"],
            model=self.env["direction_model"],
            weights=self.env["weights"],
            age_max=self.env["age_max"],
            max_slots=self.env["max_slots"],
        )

    def train_config(self) -> TrainConfig:
        a = self.agent
        return TrainConfig(
            episodes=self.agent_episodes(),
            batch=self.agent_batch(),
            buffer_capacity=self.agent_buffer(),
            learning_rate=a["learning_rate"],
            discount=a["discount"],
            target_sync_steps=a["target_sync_steps"],
            loss=a["loss"],
            huber_delta=a["huber_delta"],
            grad_steps_per_env_step=a["grad_steps_per_env_step"],
        )

    def epsilon_schedule(self) -> EpsilonSchedule:
        e = self.agent["epsilon"]
        return EpsilonSchedule(initial=e["initial"], decay=e["decay"], floor=e["floor"])

    # ---- identity ---------------------------------------------------------- #

    def resolved_dict(self) -> dict:
        env = json.loads(json.dumps(self.env))
        agent = json.loads(json.dumps(self.agent))
        agent["episodes"] = self.agent_episodes()
        agent["batch"] = self.agent_batch()
        agent["buffer"] = self.agent_buffer()
        agent["hidden"] = list(self.agent_hidden())
        out = {"env": env, "agent": agent, "run": dict(self.run)}
        if self.sweep is not None:
            out["sweep"] = dict(self.sweep)
        return out

    def config_hash(self) -> str:
        d = self.resolved_dict()
        payload = json.dumps({"env": d["env"], "agent": d["agent"]}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def with_env(self, **updates) -> "ExperimentConfig":
        env = json.loads(json.dumps(self.env))
        for k, v in updates.items():
            if "." in k:
                blk, leaf = k.split(".", 1)
                env[blk][leaf] = v
            else:
                env[k] = v
        return replace(self, env=env)


def _validate(cfg: ExperimentConfig, source: str) -> ExperimentConfig:
    env, agent, run = cfg.env, cfg.agent, cfg.run
    def bad(msg):
        raise ConfigError(f"{source}: {msg}")

    if run["mode"] not in _MODES:
        bad(f"run.mode must be one of {_MODES}, got {run['mode']!r}")
    if run["budget"] not in _BUDGETS:
        bad(f"run.budget must be one of {_BUDGETS}, got {run['budget']!r}")
    if run["eval_episodes"] < 1:
        bad("run.eval_episodes must be at least 1")
    if env["direction_model"] not in (5, 9):
        bad(f"env.direction_model must be 5 or 9, got {env['direction_model']}")
    if env["placement_mode"] not in _PLACEMENT_MODES:
        bad(f"env.placement_mode must be one of {_PLACEMENT_MODES}")
    if env["devices"] < 1 or env["uavs"] < 1:
        bad("env.devices and env.uavs must be positive")
    if env["weights"] is not None:
        w = env["weights"]
        if len(w) != env["devices"] or any(not isinstance(x, (int, float)) or x <= 0 for x in w):
            bad("env.weights must list one positive weight per device")
    if cfg.agent["hidden"] is not None:
        h = cfg.agent["hidden"]
        if not h or any(not isinstance(x, int) or x < 1 for x in h):
            bad("agent.hidden must be a non-empty list of positive layer widths")
    if cfg.sweep is not None:
        axis, values = cfg.sweep["axis"], cfg.sweep["values"]
        if axis not in _SWEEP_AXES:
            bad(f"sweep.axis must be one of {_SWEEP_AXES}, got {axis!r}")
        if not values:
            bad("sweep.values must be non-empty")
        if axis == "direction_model" and any(v not in (5, 9) for v in values):
            bad("sweep.values for direction_model must be 5 or 9")
        if axis in ("device_count", "uav_count") and any(
                not isinstance(v, int) or v < 1 for v in values):
            bad(f"sweep.values for {axis} must be positive integers")
        if axis == "coverage_radius" and any(
                not isinstance(v, (int, float)) or v < 0 for v in values):
            bad("sweep.values for coverage_radius must be non-negative numbers")
    # constructing the parameter sets runs their own validators
    cfg.build_env()
    cfg.train_config()
    return cfg


def config_from_dict(data: dict, source: str = "<dict>") -> ExperimentConfig:
    merged = _merge(_DEFAULTS, {k: v for k, v in data.items() if k != "sweep"})
    sweep = data.get("sweep")
    cfg = ExperimentConfig(env=merged["env"], agent=merged["agent"], run=merged["run"],
                           sweep=dict(sweep) if sweep else None)
    return _validate(cfg, source)


def load_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    data = _walk(node, _SCHEMA, "", source)
    return config_from_dict(data, source)


def load_config_file(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load_config_text(text, source=str(path))


def dump_resolved(cfg: ExperimentConfig) -> str:
    """Stable YAML snapshot of the fully resolved configuration."""
    return yaml.safe_dump(cfg.resolved_dict(), sort_keys=True, default_flow_style=False)


def placement_fn(cfg: ExperimentConfig):
    """Episode index -> device layout seed, honoring the placement mode."""
    base = cfg.env["placement_seed"]
    if cfg.env["placement_mode"] == "fixed":
        return lambda episode: base
    return lambda episode: int(
        np.random.SeedSequence(entropy=base, spawn_key=(episode,)).generate_state(1)[0]
    )
