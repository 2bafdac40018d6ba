"""Discrete-time multi-UAV relay environment.

UAVs move on a cell grid, schedule one ground device each per slot, relay its
status update to the central base station, and pay quantized battery energy
for flight and relaying.  Device ages reset on a successful relay and grow
(capped) otherwise.  Episodes end when any UAV battery falls to the return
threshold or the slot limit is reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError
from .params import (
    Cell,
    EnergyParams,
    GridSpec,
    RadioParams,
    coverage_radius,
    flight_energy_quanta,
    relay_energy_quanta,
)

# Direction order is the canonical action encoding order.
DIRECTIONS_9 = ("N", "S", "E", "W", "NE", "NW", "SE", "SW", "H")
DIRECTIONS_5 = ("N", "S", "E", "W", "H")
DIR_DELTA = {
    "N": (0, 1), "S": (0, -1), "E": (1, 0), "W": (-1, 0),
    "NE": (1, 1), "NW": (-1, 1), "SE": (1, -1), "SW": (-1, -1),
    "H": (0, 0),
}


def model_directions(model: int) -> tuple[str, ...]:
    if model == 5:
        return DIRECTIONS_5
    if model == 9:
        return DIRECTIONS_9
    raise ConfigError(f"direction model must be 5 or 9, got {model}")


@dataclass(frozen=True, slots=True)
class DeviceState:
    id: int            # 1-based
    cell: Cell
    weight: float
    age: int


@dataclass(frozen=True, slots=True)
class UavState:
    id: int            # 1-based
    cell: Cell
    battery: int       # quanta


@dataclass(frozen=True, slots=True)
class WorldState:
    slot: int
    uavs: tuple[UavState, ...]
    devices: tuple[DeviceState, ...]
    depots: tuple[Cell, ...]
    terminal: bool


@dataclass(frozen=True, slots=True)
class UavAction:
    direction: str
    schedule: int      # 0 = no device, else 1-based device id


@dataclass(frozen=True, slots=True)
class StepOutcome:
    next: WorldState
    reward: float
    served: frozenset[int]
    out_of_range: int
    terminal: bool


def encode_joint(actions, model: int, n_devices: int) -> int:
    """Flat index of a per-UAV action list (UAV 0 is the least significant digit)."""
    dirs = model_directions(model)
    base = len(dirs) * (n_devices + 1)
    idx = 0
    for a in reversed(actions):
        d = dirs.index(a.direction)
        if a.schedule < 0 or a.schedule > n_devices:
            raise ContractError(f"schedule {a.schedule} outside 0..{n_devices}")
        idx = idx * base + d * (n_devices + 1) + a.schedule
    return idx


def decode_joint(index: int, model: int, n_devices: int, n_uavs: int) -> tuple[UavAction, ...]:
    dirs = model_directions(model)
    base = len(dirs) * (n_devices + 1)
    if index < 0 or index >= base ** n_uavs:
        raise ContractError(f"joint action index {index} outside [0, {base ** n_uavs})")
    out = []
    for _ in range(n_uavs):
        sub = index % base
        index //= base
        out.append(UavAction(direction=dirs[sub // (n_devices + 1)],
                             schedule=sub % (n_devices + 1)))
    return tuple(out)


def age_step(devices, served, age_max: int):
    """Served device ages reset to 1; all others increment, saturating at age_max."""
    return tuple(
        replace(d, age=1 if d.id in served else min(age_max, d.age + 1))
        for d in devices
    )


def team_reward(devices, out_of_range: int, e: EnergyParams) -> float:
    """Negative weighted age sum minus the out-of-range schedule penalty."""
    return -sum(d.weight * d.age for d in devices) - e.penalty_z * out_of_range


def _battery_after(battery: int, flight_q: float, relay_q: float) -> int:
    return max(0, battery - math.ceil(flight_q + relay_q))


def battery_step(u: UavState, direction: str, relayed: bool, relay_q: float,
                 e: EnergyParams, spacing_m: float) -> int:
    """Battery quanta after one slot: ceiling of flight plus (optional) relay cost."""
    flight_q = flight_energy_quanta(direction, e, spacing_m)
    return _battery_after(u.battery, flight_q, relay_q if relayed else 0.0)


class UavRelayEnv:
    """Deterministic environment bound to one grid/radio/energy configuration.

    All transition logic is a pure function of the explicit state; the
    instance only holds immutable precomputed tables.
    """

    def __init__(self, grid: GridSpec, radio: RadioParams, energy: EnergyParams,
                 n_uavs: int = 1, n_devices: int = 5, model: int = 9,
                 weights=None, age_max: int = 30, max_slots: int = 60,
                 depots: tuple[Cell, ...] | None = None):
        self.grid = grid
        self.radio = radio
        self.energy = energy
        self.n_uavs = int(n_uavs)
        self.n_devices = int(n_devices)
        self.model = int(model)
        self.age_max = int(age_max)
        self.max_slots = int(max_slots)
        self.dirs = model_directions(self.model)

        if self.n_uavs < 1:
            raise ConfigError("need at least one UAV")
        if self.n_devices < 1:
            raise ConfigError("need at least one device")
        if self.age_max < 1 or self.max_slots < 1:
            raise ConfigError("age_max and max_slots must be positive")

        self.depots = tuple(depots) if depots is not None else grid.corner_cells()
        if len(set(self.depots)) != len(self.depots):
            raise ConfigError("depot cells must be distinct")
        for c in self.depots:
            if not grid.in_bounds(c):
                raise ConfigError(f"depot {c} outside the grid")
        if self.n_uavs > len(self.depots):
            raise ConfigError(
                f"{self.n_uavs} UAVs need at least as many depots, have {len(self.depots)}"
            )

        if weights is None:
            weights = [1.0 / self.n_devices] * self.n_devices
        if len(weights) != self.n_devices or any(not (w > 0) for w in weights):
            raise ConfigError("device weights must be positive, one per device")
        self.weights = tuple(float(w) for w in weights)

        self.coverage_m = coverage_radius(radio)
        self.flight_q = tuple(
            flight_energy_quanta(d, energy, grid.spacing_m) for d in self.dirs
        )
        self._hover_q = flight_energy_quanta("H", energy, grid.spacing_m)

        cells = [(i, j) for i in range(grid.cells_x) for j in range(grid.cells_y)]
        self.cells = cells
        self.relay_q = {c: relay_energy_quanta(c, grid, radio, energy) for c in cells}
        self.relay_max_q = max(self.relay_q.values())

        # Shortest-step distance to the nearest depot under the active move set:
        # diagonal moves make it Chebyshev, cardinal-only makes it Manhattan.
        if self.model == 9:
            dist = lambda a, b: max(abs(a[0] - b[0]), abs(a[1] - b[1]))
            move_idx = self.dirs.index("NE")
        else:
            dist = lambda a, b: abs(a[0] - b[0]) + abs(a[1] - b[1])
            move_idx = self.dirs.index("E")
        self.steps_to_depot = {c: min(dist(c, b) for b in self.depots) for c in cells}
        self._per_step_move_q = self.flight_q[move_idx]

        if energy.energy_threshold is not None:
            self.eth = int(energy.energy_threshold)
        else:
            worst = max(self.steps_to_depot.values())
            self.eth = math.ceil(worst * self._per_step_move_q)
        if not (0 <= self.eth < energy.quanta):
            raise ConfigError(
                f"energy threshold {self.eth} incompatible with battery of {energy.quanta} quanta"
            )

        center = grid.center
        self.device_candidate_cells = tuple(
            c for c in cells if c not in self.depots and c != center
        )
        if self.n_devices > len(self.device_candidate_cells):
            raise ConfigError(
                f"{self.n_devices} devices do not fit on {len(self.device_candidate_cells)} "
                "eligible cells (grid minus depots and center)"
            )

    # ------------------------------------------------------------------ #

    @property
    def n_joint_actions(self) -> int:
        return (len(self.dirs) * (self.n_devices + 1)) ** self.n_uavs

    @property
    def feature_len(self) -> int:
        return 3 * self.n_uavs + self.n_devices

    def in_range(self, uav_cell: Cell, device_cell: Cell) -> bool:
        ax, ay = self.grid.world(uav_cell)
        bx, by = self.grid.world(device_cell)
        return math.hypot(ax - bx, ay - by) <= self.coverage_m

    # ------------------------------------------------------------------ #

    def reset(self, placement_seed: int) -> WorldState:
        """Fresh episode: full batteries, unit ages, UAVs on depots, seeded device layout.

        The same placement seed always yields the same layout, and layouts for
        d devices are a prefix of the layout for d' > d devices.
        """
        rng = np.random.default_rng(placement_seed)
        perm = rng.permutation(len(self.device_candidate_cells))
        dev_cells = [self.device_candidate_cells[i] for i in perm[: self.n_devices]]
        devices = tuple(
            DeviceState(id=k + 1, cell=dev_cells[k], weight=self.weights[k], age=1)
            for k in range(self.n_devices)
        )
        uavs = tuple(
            UavState(id=u + 1, cell=self.depots[u % len(self.depots)],
                     battery=self.energy.quanta)
            for u in range(self.n_uavs)
        )
        return WorldState(slot=0, uavs=uavs, devices=devices, depots=self.depots,
                          terminal=False)

    def make_state(self, uav_cells, batteries, ages, dev_cells=None, slot: int = 0) -> WorldState:
        """Assemble an arbitrary consistent state (used by exact solvers and tests)."""
        if dev_cells is None:
            dev_cells = [self.device_candidate_cells[k] for k in range(self.n_devices)]
        devices = tuple(
            DeviceState(id=k + 1, cell=tuple(dev_cells[k]), weight=self.weights[k],
                        age=int(ages[k]))
            for k in range(self.n_devices)
        )
        uavs = tuple(
            UavState(id=u + 1, cell=tuple(uav_cells[u]), battery=int(batteries[u]))
            for u in range(self.n_uavs)
        )
        terminal = any(b <= self.eth for b in batteries) or slot >= self.max_slots
        return WorldState(slot=slot, uavs=uavs, devices=devices, depots=self.depots,
                          terminal=terminal)

    # ------------------------------------------------------------------ #

    def step(self, state: WorldState, action) -> StepOutcome:
        """Advance one slot.  `action` is a flat joint index or a UavAction sequence."""
        if state.terminal:
            raise ContractError("step() called on a terminal state")
        if isinstance(action, (int, np.integer)):
            actions = decode_joint(int(action), self.model, self.n_devices, self.n_uavs)
        else:
            actions = tuple(action)
            if len(actions) != self.n_uavs:
                raise ContractError(f"expected {self.n_uavs} per-UAV actions, got {len(actions)}")
            for a in actions:
                if a.direction not in self.dirs:
                    raise ContractError(
                        f"direction {a.direction!r} not legal under the {self.model}-direction model"
                    )

        # 1. Moves; leaving the grid degrades to hovering for that UAV.
        new_cells = []
        eff_dir_idx = []
        hover_idx = self.dirs.index("H")
        for u, a in zip(state.uavs, actions):
            dx, dy = DIR_DELTA[a.direction]
            target = (u.cell[0] + dx, u.cell[1] + dy)
            if self.grid.in_bounds(target):
                new_cells.append(target)
                eff_dir_idx.append(self.dirs.index(a.direction))
            else:
                new_cells.append(u.cell)
                eff_dir_idx.append(hover_idx)

        # 2. Schedule conflicts: lowest UAV id wins, losers degrade to no-op.
        schedules = []
        claimed = set()
        for a in actions:
            if a.schedule > 0 and a.schedule in claimed:
                schedules.append(0)
            else:
                schedules.append(a.schedule)
                if a.schedule > 0:
                    claimed.add(a.schedule)

        # 3. Coverage check from the post-move cell.
        dev_by_id = {d.id: d for d in state.devices}
        served = set()
        relayed = [False] * self.n_uavs
        out_of_range = 0
        for i, sched in enumerate(schedules):
            if sched == 0:
                continue
            if self.in_range(new_cells[i], dev_by_id[sched].cell):
                served.add(sched)
                relayed[i] = True
            else:
                out_of_range += 1

        # 4. Ages, batteries, reward.
        devices = age_step(state.devices, served, self.age_max)
        uavs = tuple(
            UavState(
                id=u.id,
                cell=new_cells[i],
                battery=_battery_after(
                    u.battery,
                    self.flight_q[eff_dir_idx[i]],
                    self.relay_q[new_cells[i]] if relayed[i] else 0.0,
                ),
            )
            for i, u in enumerate(state.uavs)
        )
        reward = team_reward(devices, out_of_range, self.energy)

        slot = state.slot + 1
        terminal = any(u.battery <= self.eth for u in uavs) or slot >= self.max_slots
        nxt = WorldState(slot=slot, uavs=uavs, devices=devices, depots=state.depots,
                         terminal=terminal)
        return StepOutcome(next=nxt, reward=reward, served=frozenset(served),
                           out_of_range=out_of_range, terminal=terminal)

    # ------------------------------------------------------------------ #

    def battery_margin(self, state: WorldState, uav_index: int) -> int:
        """Battery left after a worst-case return to the nearest depot.

        Worst case charges every return step at the move cost of the model's
        longest unit step plus a relay from the cell farthest from the BS.
        Negative values mean the UAV is past the safe return point.
        """
        u = state.uavs[uav_index]
        steps = self.steps_to_depot[u.cell]
        return u.battery - math.ceil(steps * (self._per_step_move_q + self.relay_max_q))

    def encode(self, state: WorldState) -> np.ndarray:
        """Feature vector: UAV coordinates in [0,1], device ages in (0,1], battery margins."""
        out = np.empty(self.feature_len, dtype=np.float64)
        k = 0
        for u in state.uavs:
            out[k] = u.cell[0] / (self.grid.cells_x - 1) if self.grid.cells_x > 1 else 0.0
            out[k + 1] = u.cell[1] / (self.grid.cells_y - 1) if self.grid.cells_y > 1 else 0.0
            k += 2
        for d in state.devices:
            out[k] = d.age / self.age_max
            k += 1
        for i in range(self.n_uavs):
            out[k] = self.battery_margin(state, i) / self.energy.quanta
            k += 1
        return out

    def state_key(self, state: WorldState) -> tuple:
        """Hashable identity of the slot-independent part of a state."""
        return (
            tuple(u.cell for u in state.uavs),
            tuple(u.battery for u in state.uavs),
            tuple(d.age for d in state.devices),
        )
