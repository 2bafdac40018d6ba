"""Exact solvers on tiny instances plus the shared rollout evaluator.

The enumeration and backward-induction solvers certify environment dynamics
and give optimality baselines for the learned policies; they refuse to run
when the product state space exceeds a configured bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env_core import UavRelayEnv, WorldState
from .errors import ContractError


@dataclass(frozen=True)
class TinyInstance:
    """An environment small enough to solve exactly.

    The slot-independent state space is cells^U * (quanta+1)^U * age_max^D;
    both solvers key on it, which is only sound while the slot limit cannot
    trigger inside the solve horizon, hence horizon <= max_slots.
    """

    env: UavRelayEnv
    placement_seed: int = 0
    horizon: int = 10
    state_bound: int = 10_000_000

    def __post_init__(self):
        if self.horizon < 0 or self.horizon > 15:
            raise ContractError(f"horizon must lie in [0, 15], got {self.horizon}")
        if self.horizon > self.env.max_slots:
            raise ContractError(
                f"horizon {self.horizon} exceeds the episode slot limit {self.env.max_slots}"
            )
        if self.state_count > self.state_bound:
            raise ContractError(
                f"instance has {self.state_count} states, above the bound {self.state_bound}"
            )

    @property
    def state_count(self) -> int:
        env = self.env
        return (env.grid.n_cells ** env.n_uavs
                * (env.energy.quanta + 1) ** env.n_uavs
                * env.age_max ** env.n_devices)

    def initial_state(self) -> WorldState:
        return self.env.reset(self.placement_seed)


# --------------------------------------------------------------------------- #
# exhaustive depth-first search
# --------------------------------------------------------------------------- #

def exhaustive_best_return(inst: TinyInstance, horizon: int | None = None,
                           memoize: bool = True) -> tuple[float, tuple[int, ...]]:
    """Maximum cumulative reward over all joint-action sequences from reset.

    Returns the optimum and the lexicographically smallest optimal sequence.
    Values accumulate tail-first so they are bit-comparable with the DP.
    """
    env = inst.env
    h = inst.horizon if horizon is None else horizon
    if h > inst.horizon:
        raise ContractError(f"requested horizon {h} exceeds the instance horizon {inst.horizon}")
    n_actions = env.n_joint_actions
    memo: dict = {}

    def value(state: WorldState, rem: int) -> float:
        if rem == 0 or state.terminal:
            return 0.0
        key = (env.state_key(state), rem)
        if memoize and key in memo:
            return memo[key][0]
        best = -math.inf
        best_a = 0
        for a in range(n_actions):
            out = env.step(state, a)
            val = out.reward + (0.0 if out.terminal else value(out.next, rem - 1))
            if val > best:
                best = val
                best_a = a
        if memoize:
            memo[key] = (best, best_a)
        return best

    root = inst.initial_state()
    best = value(root, h)

    # reconstruct the tie-broken optimal sequence by replaying greedy choices
    seq = []
    state = root
    rem = h
    while rem > 0 and not state.terminal:
        if memoize:
            a = memo[(env.state_key(state), rem)][1]
        else:
            best_v = -math.inf
            a = 0
            for cand in range(n_actions):
                out = env.step(state, cand)
                val = out.reward + (0.0 if out.terminal else value(out.next, rem - 1))
                if val > best_v:
                    best_v = val
                    a = cand
        seq.append(a)
        state = env.step(state, a).next
        rem -= 1
    return best, tuple(seq)


# --------------------------------------------------------------------------- #
# finite-horizon dynamic programming over the tabulated product space
# --------------------------------------------------------------------------- #

@dataclass
class DpTables:
    """Dense transition tables over the slot-independent state index."""

    radices: tuple[int, ...]
    NEXT: np.ndarray        # int64 (n_states, n_actions)
    REW: np.ndarray         # float64
    CONT: np.ndarray        # float64, 0 where the transition ends the episode
    TERM_STATE: np.ndarray  # bool


@dataclass
class DpSolution:
    instance: TinyInstance
    tables: DpTables
    values: list[np.ndarray] = field(default_factory=list)   # values[k] = V_k

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def state_index(self, state: WorldState) -> int:
        return _encode_index(self.instance.env, state)

    def root_value(self, horizon: int | None = None) -> float:
        k = self.horizon if horizon is None else horizon
        return float(self.values[k][self.state_index(self.instance.initial_state())])

    def greedy_action(self, state: WorldState, remaining: int) -> int:
        t = self.tables
        s = self.state_index(state)
        v = self.values[remaining - 1]
        cand = t.REW[s] + t.CONT[s] * v[t.NEXT[s]]
        return int(np.argmax(cand))


def _encode_index(env: UavRelayEnv, state: WorldState) -> int:
    idx = 0
    for u in state.uavs:
        idx = idx * env.grid.n_cells + (u.cell[0] * env.grid.cells_y + u.cell[1])
    for u in state.uavs:
        idx = idx * (env.energy.quanta + 1) + u.battery
    for d in state.devices:
        idx = idx * env.age_max + (d.age - 1)
    return idx


def _decode_index(env: UavRelayEnv, idx: int, dev_cells):
    ages = []
    for _ in range(env.n_devices):
        ages.append(idx % env.age_max + 1)
        idx //= env.age_max
    ages.reverse()
    batteries = []
    for _ in range(env.n_uavs):
        batteries.append(idx % (env.energy.quanta + 1))
        idx //= env.energy.quanta + 1
    batteries.reverse()
    cells = []
    for _ in range(env.n_uavs):
        flat = idx % env.grid.n_cells
        idx //= env.grid.n_cells
        cells.append((flat // env.grid.cells_y, flat % env.grid.cells_y))
    cells.reverse()
    return env.make_state(cells, batteries, ages, dev_cells=dev_cells, slot=0)


def build_tables(inst: TinyInstance) -> DpTables:
    env = inst.env
    n_states = inst.state_count
    n_actions = env.n_joint_actions
    dev_cells = [d.cell for d in inst.initial_state().devices]
    NEXT = np.zeros((n_states, n_actions), dtype=np.int64)
    REW = np.zeros((n_states, n_actions), dtype=np.float64)
    CONT = np.zeros((n_states, n_actions), dtype=np.float64)
    TERM = np.zeros(n_states, dtype=bool)
    for s in range(n_states):
        state = _decode_index(env, s, dev_cells)
        if state.terminal:
            TERM[s] = True
            continue
        for a in range(n_actions):
            out = env.step(state, a)
            NEXT[s, a] = _encode_index(env, out.next)
            REW[s, a] = out.reward
            CONT[s, a] = 0.0 if out.terminal else 1.0
    return DpTables(radices=(env.grid.n_cells, env.energy.quanta + 1, env.age_max),
                    NEXT=NEXT, REW=REW, CONT=CONT, TERM_STATE=TERM)


def finite_horizon_dp(inst: TinyInstance, horizon: int | None = None,
                      tables: DpTables | None = None) -> DpSolution:
    """Backward induction V_k = max_a [r + V_{k-1}(next)] with V_0 = 0."""
    h = inst.horizon if horizon is None else horizon
    if h > inst.horizon:
        raise ContractError(f"requested horizon {h} exceeds the instance horizon {inst.horizon}")
    t = tables if tables is not None else build_tables(inst)
    sol = DpSolution(instance=inst, tables=t)
    V = np.zeros(t.NEXT.shape[0], dtype=np.float64)
    sol.values.append(V)
    for _ in range(h):
        V = kernels.dp_backup(V, t.NEXT, t.REW, t.CONT, t.TERM_STATE)
        sol.values.append(V)
    return sol


def dp_greedy_rollout(sol: DpSolution) -> float:
    """Play the DP-greedy policy from reset; tail-first sum matches the root value."""
    env = sol.instance.env
    state = sol.instance.initial_state()
    rewards = []
    for rem in range(sol.horizon, 0, -1):
        if state.terminal:
            break
        a = sol.greedy_action(state, rem)
        out = env.step(state, a)
        rewards.append(out.reward)
        if out.terminal:
            break
        state = out.next
    total = 0.0
    for r in reversed(rewards):
        total = r + total
    return total


# --------------------------------------------------------------------------- #
# policy rollout metrics
# --------------------------------------------------------------------------- #

@dataclass
class RolloutRecord:
    episode_aoi: np.ndarray            # time-averaged weighted age per episode
    episode_return: np.ndarray
    episode_length: np.ndarray
    episode_final_energy: np.ndarray   # mean remaining quanta across UAVs at episode end
    age_curves: list[np.ndarray]       # weighted age by slot, slot 0 included
    energy_curves: list[np.ndarray]    # mean remaining quanta by slot

    @property
    def mean_aoi(self) -> float:
        return float(np.mean(self.episode_aoi))

    @property
    def mean_final_energy(self) -> float:
        return float(np.mean(self.episode_final_energy))

    def max_length(self) -> int:
        return int(np.max(self.episode_length))


def locf_mean_curve(curves, n_slots: int) -> np.ndarray:
    """Per-slot mean across episodes, carrying each episode's last value forward."""
    out = np.zeros(n_slots + 1, dtype=np.float64)
    for c in curves:
        padded = np.concatenate([c, np.full(max(0, n_slots + 1 - len(c)), c[-1])])
        out += padded[: n_slots + 1]
    return out / len(curves)


def rollout(policy, env: UavRelayEnv, episodes: int, seed: int,
            placement_seed_fn) -> RolloutRecord:
    """Run a policy for several episodes with per-episode derived RNG streams.

    `policy(env, state, rng) -> flat action` is called once per slot; the
    per-slot curves include slot 0 (the reset state).
    """
    if episodes < 1:
        raise ContractError("need at least one rollout episode")
    children = np.random.SeedSequence(seed).spawn(episodes)
    aois, rets, lens, fins = [], [], [], []
    age_curves, energy_curves = [], []
    for ep in range(episodes):
        rng = np.random.default_rng(children[ep])
        state = env.reset(placement_seed_fn(ep))
        ages = [sum(d.weight * d.age for d in state.devices)]
        energy = [float(np.mean([u.battery for u in state.uavs]))]
        ep_ret = 0.0
        while not state.terminal:
            out = env.step(state, policy(env, state, rng))
            state = out.next
            ep_ret += out.reward
            ages.append(sum(d.weight * d.age for d in state.devices))
            energy.append(float(np.mean([u.battery for u in state.uavs])))
        T = len(ages) - 1
        aois.append(float(np.mean(ages[1:])) if T > 0 else ages[0])
        rets.append(ep_ret)
        lens.append(T)
        fins.append(energy[-1])
        age_curves.append(np.asarray(ages))
        energy_curves.append(np.asarray(energy))
    return RolloutRecord(
        episode_aoi=np.asarray(aois),
        episode_return=np.asarray(rets),
        episode_length=np.asarray(lens, dtype=np.int64),
        episode_final_energy=np.asarray(fins),
        age_curves=age_curves,
        energy_curves=energy_curves,
    )
