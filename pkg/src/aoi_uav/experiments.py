"""Run orchestration: training runs, paired evaluations, sweeps, CSV output.

All CSVs use locale-independent shortest round-trip float formatting and a
mandatory header row, and are written atomically so a rerun with the same
config and master seed reproduces them byte for byte.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import agents, oracle
from .checkpoint import check_compatible, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, dump_resolved, placement_fn
from .errors import ConfigError, IncompatibleCheckpointError


def format_cell(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_atomic(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"config_hash": self.config_hash, "seed": self.seed,
                           **self.payload}, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- #
# training
# --------------------------------------------------------------------------- #

def train_run(cfg: ExperimentConfig, seed: int, out_dir) -> tuple[str, RunRecord]:
    """Train per config, write checkpoint + learning_curve.csv + snapshot."""
    os.makedirs(out_dir, exist_ok=True)
    env = cfg.build_env()
    tcfg = cfg.train_config()
    t0 = time.perf_counter()
    result = agents.train(env, tcfg, cfg.epsilon_schedule(), cfg.agent_hidden(),
                          seed, placement_fn(cfg))
    wall = time.perf_counter() - t0

    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    save_checkpoint(ckpt_path, result.net, env.n_uavs, env.n_devices, env.model)

    rows = [(r.episode, r.ret, r.loss, r.epsilon) for r in result.records]
    write_atomic(os.path.join(out_dir, "learning_curve.csv"),
                 csv_text(("episode", "return", "loss", "epsilon"), rows))
    write_atomic(os.path.join(out_dir, "config_resolved.yaml"), dump_resolved(cfg))

    record = RunRecord(
        config_hash=cfg.config_hash(),
        seed=seed,
        payload={
            "mode": "train",
            "episodes": len(result.records),
            "env_steps": result.env_steps,
            "final_epsilon": result.records[-1].epsilon if result.records else None,
            "mean_return_last_100": float(np.mean([r.ret for r in result.records[-100:]]))
            if result.records else None,
            "wall_clock_s": wall,
        },
    )
    write_atomic(os.path.join(out_dir, "run_record.json"), record.to_json())
    return ckpt_path, record


def cached_train(cfg: ExperimentConfig, seed: int, cache_root) -> str:
    """Train once per (resolved config, seed); reuse the checkpoint afterwards."""
    key = f"{cfg.config_hash()[:16]}-s{seed}"
    out_dir = os.path.join(cache_root, key)
    ckpt = os.path.join(out_dir, "checkpoint.bin")
    if not os.path.exists(ckpt):
        train_run(cfg, seed, out_dir)
    return ckpt


# --------------------------------------------------------------------------- #
# paired evaluation
# --------------------------------------------------------------------------- #

@dataclass
class EvalResult:
    dqn: oracle.RolloutRecord
    rw: oracle.RolloutRecord
    n_common_slots: int

    @property
    def aoi_ratio(self) -> float:
        return self.dqn.mean_aoi / self.rw.mean_aoi


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint_path, episodes: int,
                        seed: int) -> EvalResult:
    env = cfg.build_env()
    net, meta = load_checkpoint(checkpoint_path)
    check_compatible(meta, env.n_uavs, env.n_devices, env.model)
    if (int(net.dims[0]), int(net.dims[-1])) != (env.feature_len, env.n_joint_actions):
        raise IncompatibleCheckpointError(
            f"checkpoint net is {int(net.dims[0])}->{int(net.dims[-1])}, environment "
            f"needs {env.feature_len}->{env.n_joint_actions}"
        )
    pf = placement_fn(cfg)
    dqn_seed, rw_seed = [int(c.generate_state(1)[0])
                         for c in np.random.SeedSequence(seed).spawn(2)]
    dqn = oracle.rollout(agents.greedy_policy(net), env, episodes, dqn_seed, pf)
    rw = oracle.rollout(agents.random_walk, env, episodes, rw_seed, pf)
    return EvalResult(dqn=dqn, rw=rw,
                      n_common_slots=min(dqn.max_length(), rw.max_length()))


def eval_run(cfg: ExperimentConfig, checkpoint_path, episodes: int, seed: int,
             out_dir) -> tuple[EvalResult, RunRecord]:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    res = evaluate_checkpoint(cfg, checkpoint_path, episodes, seed)
    wall = time.perf_counter() - t0

    n = res.n_common_slots
    age_d = oracle.locf_mean_curve(res.dqn.age_curves, n)
    age_r = oracle.locf_mean_curve(res.rw.age_curves, n)
    en_d = oracle.locf_mean_curve(res.dqn.energy_curves, n)
    en_r = oracle.locf_mean_curve(res.rw.energy_curves, n)
    write_atomic(os.path.join(out_dir, "age_curve.csv"),
                 csv_text(("slot", "mean_age_dqn", "mean_age_rw"),
                          [(t, age_d[t], age_r[t]) for t in range(n + 1)]))
    write_atomic(os.path.join(out_dir, "energy_curve.csv"),
                 csv_text(("slot", "mean_quanta_dqn", "mean_quanta_rw"),
                          [(t, en_d[t], en_r[t]) for t in range(n + 1)]))

    record = RunRecord(
        config_hash=cfg.config_hash(),
        seed=seed,
        payload={
            "mode": "eval",
            "episodes": episodes,
            "mean_aoi_dqn": res.dqn.mean_aoi,
            "mean_aoi_rw": res.rw.mean_aoi,
            "aoi_ratio": res.aoi_ratio,
            "mean_final_energy_dqn": res.dqn.mean_final_energy,
            "mean_final_energy_rw": res.rw.mean_final_energy,
            "mean_length_dqn": float(np.mean(res.dqn.episode_length)),
            "mean_length_rw": float(np.mean(res.rw.episode_length)),
            "wall_clock_s": wall,
        },
    )
    write_atomic(os.path.join(out_dir, "run_record.json"), record.to_json())
    return res, record


# --------------------------------------------------------------------------- #
# sweeps
# --------------------------------------------------------------------------- #

def sweep_point_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "device_count":
        return cfg.with_env(devices=int(value), weights=None)
    if axis == "coverage_radius":
        return cfg.with_env(**{"radio.coverage_override_m": float(value)})
    if axis == "uav_count":
        return cfg.with_env(uavs=int(value))
    if axis == "direction_model":
        return cfg.with_env(direction_model=int(value))
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _sweep_one(cfg_point: ExperimentConfig, seed: int, episodes: int, cache_root):
    ckpt = cached_train(cfg_point, seed, cache_root)
    res = evaluate_checkpoint(cfg_point, ckpt, episodes, seed)
    return res


def sweep_run(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> list[tuple]:
    """Evaluate DQN and random walk at every sweep point; emit sweep.csv."""
    if cfg.sweep is None:
        raise ConfigError("sweep mode requires a sweep block")
    os.makedirs(out_dir, exist_ok=True)
    cache_root = os.path.join(out_dir, "cache")
    axis = cfg.sweep["axis"]
    values = cfg.sweep["values"]
    seed = cfg.run["master_seed"]
    episodes = cfg.run["eval_episodes"]

    points = [(v, sweep_point_config(cfg, axis, v)) for v in values]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, [p for _, p in points],
                                    [seed] * len(points), [episodes] * len(points),
                                    [cache_root] * len(points)))
    else:
        results = [_sweep_one(p, seed, episodes, cache_root) for _, p in points]

    rows = []
    for (value, pcfg), res in zip(points, results):
        uavs = pcfg.env["uavs"]
        rows.append((value, "dqn", uavs, res.dqn.mean_aoi, res.dqn.mean_final_energy, seed))
        rows.append((value, "rw", uavs, res.rw.mean_aoi, res.rw.mean_final_energy, seed))
    write_atomic(os.path.join(out_dir, "sweep.csv"),
                 csv_text(("axis_value", "policy", "uavs", "mean_aoi",
                           "mean_final_energy", "seed"), rows))
    return rows
