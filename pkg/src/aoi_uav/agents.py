"""Joint-action deep Q-learning on the relay environment.

A dense Q-network over the flattened joint action space, trained with
experience replay, a periodically synced frozen target net, epsilon-greedy
exploration and Adam, plus the uniform random-walk baseline policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env_core import UavRelayEnv, WorldState, encode_joint, model_directions
from .errors import ContractError, TrainingDivergedError


@dataclass
class QNetwork:
    """Flat parameter vector plus layer widths; layout is W then b per layer."""

    dims: np.ndarray     # int64, [input, hidden..., output]
    theta: np.ndarray    # float64, kernels.param_count(dims) entries

    def copy(self) -> "QNetwork":
        return QNetwork(dims=self.dims.copy(), theta=self.theta.copy())

    def layer_views(self):
        views = []
        off = 0
        for l in range(len(self.dims) - 1):
            nin, nout = int(self.dims[l]), int(self.dims[l + 1])
            W = self.theta[off:off + nin * nout].reshape(nin, nout)
            off += nin * nout
            b = self.theta[off:off + nout]
            off += nout
            views.append((W, b))
        return views


def init_network(layer_dims, rng: np.random.Generator) -> QNetwork:
    """Glorot-uniform weights, zero biases."""
    dims = np.asarray(layer_dims, dtype=np.int64)
    theta = np.zeros(kernels.param_count(dims), dtype=np.float64)
    net = QNetwork(dims=dims, theta=theta)
    for W, _ in net.layer_views():
        bound = math.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[:] = rng.uniform(-bound, bound, size=W.shape)
    return net


def forward(net: QNetwork, features: np.ndarray) -> np.ndarray:
    """Q-values for one feature vector or a batch of them."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.shape[1] != net.dims[0]:
        raise ContractError(f"feature length {x.shape[1]} != input width {net.dims[0]}")
    q = kernels.forward(net.theta, net.dims, np.ascontiguousarray(x))
    return q[0] if single else q


def sync_target(net: QNetwork, target: QNetwork) -> None:
    target.theta[:] = net.theta


def select_action(net: QNetwork, features, epsilon: float,
                  rng: np.random.Generator, n_actions: int) -> int:
    """Epsilon-greedy over the joint action space; greedy ties go to the lowest index."""
    if not (0.0 <= epsilon <= 1.0):
        raise ContractError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(forward(net, features)))


def random_walk_policy(state: WorldState, rng: np.random.Generator,
                       model: int, n_devices: int) -> int:
    """Uniform direction and uniform schedule per UAV, independent of the state."""
    from .env_core import UavAction

    dirs = model_directions(model)
    actions = [
        UavAction(direction=dirs[int(rng.integers(len(dirs)))],
                  schedule=int(rng.integers(n_devices + 1)))
        for _ in state.uavs
    ]
    return encode_joint(actions, model, n_devices)


# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class EpsilonSchedule:
    initial: float = 1.0
    decay: float = 0.995
    floor: float = 0.01

    def value(self, episode: int) -> float:
        return max(self.floor, self.initial * self.decay ** episode)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int
    batch: int
    buffer_capacity: int
    learning_rate: float = 4e-4
    discount: float = 0.99
    target_sync_steps: int = 1000
    loss: str = "huber"            # "huber" | "mse"
    huber_delta: float = 1.0
    grad_steps_per_env_step: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.discount < 1.0):
            raise ContractError(f"discount must lie in (0, 1), got {self.discount}")
        if self.batch > self.buffer_capacity:
            raise ContractError("batch size cannot exceed the replay capacity")
        if self.loss not in ("huber", "mse"):
            raise ContractError(f"loss must be 'huber' or 'mse', got {self.loss!r}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))


@dataclass(frozen=True)
class Experience:
    state_features: np.ndarray
    action: int
    reward: float
    next_features: np.ndarray
    done: bool


class ReplayBuffer:
    """Bounded FIFO experience store with uniform no-replacement batch sampling."""

    def __init__(self, capacity: int, feature_len: int):
        if capacity < 1:
            raise ContractError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.S = np.empty((capacity, feature_len), dtype=np.float64)
        self.A = np.empty(capacity, dtype=np.int64)
        self.R = np.empty(capacity, dtype=np.float64)
        self.S2 = np.empty((capacity, feature_len), dtype=np.float64)
        self.DONE = np.empty(capacity, dtype=np.float64)
        self.insert_count = 0

    @property
    def size(self) -> int:
        return min(self.insert_count, self.capacity)

    def push(self, exp: Experience) -> None:
        i = self.insert_count % self.capacity
        self.S[i] = exp.state_features
        self.A[i] = exp.action
        self.R[i] = exp.reward
        self.S2[i] = exp.next_features
        self.DONE[i] = 1.0 if exp.done else 0.0
        self.insert_count += 1

    def sample_indices(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        if batch > self.size:
            raise ContractError(f"cannot sample {batch} from {self.size} stored experiences")
        idx = rng.integers(0, self.size, size=batch)
        seen = set()
        for k in range(batch):
            while int(idx[k]) in seen:
                idx[k] = rng.integers(0, self.size)
            seen.add(int(idx[k]))
        return idx

    def gather(self, idx: np.ndarray):
        return (self.S[idx], self.A[idx], self.R[idx], self.S2[idx], self.DONE[idx])


def td_target(batch, target_net: QNetwork, gamma: float) -> np.ndarray:
    """Bootstrap targets r + gamma * max_a Q_frozen(s', a); plain r on done samples."""
    S, A, R, S2, DONE = batch
    if len(R) == 0:
        raise ContractError("td_target needs a non-empty batch")
    q2 = forward(target_net, S2)
    return R + gamma * q2.max(axis=1) * (1.0 - DONE)


def train_step(net: QNetwork, target_net: QNetwork, buffer: ReplayBuffer,
               cfg: TrainConfig, adam: AdamState, rng: np.random.Generator) -> float:
    """One sampled TD gradient step with Adam; the target net is untouched."""
    if buffer.size < cfg.batch:
        raise ContractError(f"replay holds {buffer.size} < batch {cfg.batch} experiences")
    idx = buffer.sample_indices(rng, cfg.batch)
    S, A, R, S2, DONE = buffer.gather(idx)
    loss, grad = kernels.loss_grad(
        net.theta, target_net.theta, net.dims, S, A, R, S2, DONE,
        cfg.discount, cfg.huber_delta, cfg.loss == "mse",
    )
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss at adam step {adam.t + 1}")
    adam.t += 1
    ok = kernels.adam_apply(net.theta, grad, adam.m, adam.v, adam.t,
                            cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                            cfg.adam_eps)
    if not ok:
        raise TrainingDivergedError(
            f"non-finite parameter after adam step {adam.t} "
            f"(loss={loss:.3e}, |grad|_max={np.max(np.abs(grad)):.3e})"
        )
    return float(loss)


# --------------------------------------------------------------------------- #


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    mean_weighted_age: float
    final_energy: float
    loss: float
    epsilon: float
    length: int


@dataclass
class TrainResult:
    net: QNetwork
    records: list[EpisodeRecord] = field(default_factory=list)
    env_steps: int = 0


def train(env: UavRelayEnv, cfg: TrainConfig, schedule: EpsilonSchedule,
          hidden_dims, seed: int, placement_seed_fn) -> TrainResult:
    """Full training run; bit-reproducible for a given seed and backend.

    placement_seed_fn maps the episode index to the device-layout seed,
    letting callers pin one layout for the whole run or vary it per episode.
    """
    ss = np.random.SeedSequence(seed)
    init_ss, act_ss = ss.spawn(2)
    net = init_network([env.feature_len, *hidden_dims, env.n_joint_actions],
                       np.random.default_rng(init_ss))
    target = net.copy()
    adam = AdamState.zeros(net.theta.shape[0])
    buffer = ReplayBuffer(cfg.buffer_capacity, env.feature_len)
    rng = np.random.default_rng(act_ss)

    result = TrainResult(net=net)
    steps = 0
    grad_acc = 0.0
    for ep in range(cfg.episodes):
        epsilon = schedule.value(ep)
        state = env.reset(placement_seed_fn(ep))
        feats = env.encode(state)
        ep_return = 0.0
        age_sum = 0.0
        losses = []
        length = 0
        while not state.terminal:
            a = select_action(net, feats, epsilon, rng, env.n_joint_actions)
            out = env.step(state, a)
            nfeats = env.encode(out.next)
            buffer.push(Experience(feats, a, out.reward, nfeats, out.terminal))
            steps += 1
            if buffer.size >= cfg.batch:
                grad_acc += cfg.grad_steps_per_env_step
                while grad_acc >= 1.0:
                    losses.append(train_step(net, target, buffer, cfg, adam, rng))
                    grad_acc -= 1.0
            if steps % cfg.target_sync_steps == 0:
                sync_target(net, target)
            ep_return += out.reward
            age_sum += sum(d.weight * d.age for d in out.next.devices)
            length += 1
            state = out.next
            feats = nfeats
        result.records.append(EpisodeRecord(
            episode=ep,
            ret=ep_return,
            mean_weighted_age=age_sum / max(1, length),
            final_energy=float(np.mean([u.battery for u in state.uavs])),
            loss=float(np.mean(losses)) if losses else float("nan"),
            epsilon=epsilon,
            length=length,
        ))
    result.env_steps = steps
    return result


def greedy_policy(net: QNetwork):
    """Rollout policy wrapper around the greedy action of a frozen net."""

    def policy(env: UavRelayEnv, state: WorldState, rng: np.random.Generator) -> int:
        return int(np.argmax(forward(net, env.encode(state))))

    return policy


def random_walk(env: UavRelayEnv, state: WorldState, rng: np.random.Generator) -> int:
    return random_walk_policy(state, rng, env.model, env.n_devices)
