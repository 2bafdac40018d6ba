"""Physical parameter sets and the closed-form physics of the relay model.

Grid geometry, the rotary-wing power curve, the line-of-sight link budget and
the battery discretization all live here so the environment proper only deals
in precomputed per-cell quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, InvalidParameterError, ZeroCoverageError

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridSpec:
    """Square-cell world grid; the base station sits at the center cell (world (0, 0))."""

    cells_x: int = 11
    cells_y: int = 11
    spacing_m: float = 100.0

    def __post_init__(self):
        if self.cells_x < 1 or self.cells_y < 1 or self.cells_x % 2 == 0 or self.cells_y % 2 == 0:
            raise ConfigError(
                f"grid must have odd positive dimensions, got {self.cells_x}x{self.cells_y}"
            )
        if not (self.spacing_m > 0):
            raise ConfigError(f"cell spacing must be positive, got {self.spacing_m}")

    @property
    def n_cells(self) -> int:
        return self.cells_x * self.cells_y

    @property
    def center(self) -> Cell:
        return ((self.cells_x - 1) // 2, (self.cells_y - 1) // 2)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.cells_x and 0 <= cell[1] < self.cells_y

    def world(self, cell: Cell) -> tuple[float, float]:
        """World coordinates (meters) of a cell center, BS at origin."""
        return (
            (cell[0] - (self.cells_x - 1) / 2) * self.spacing_m,
            (cell[1] - (self.cells_y - 1) / 2) * self.spacing_m,
        )

    def corner_cells(self) -> tuple[Cell, Cell, Cell, Cell]:
        cx, cy = self.cells_x - 1, self.cells_y - 1
        return ((0, 0), (cx, cy), (0, cy), (cx, 0))


@dataclass(frozen=True)
class RadioParams:
    """Line-of-sight link budget between devices, UAVs and the base station."""

    beta0: float = 1e-3          # linear gain at the 1 m reference distance
    tx_power_W: float = 0.003    # device transmit power
    packet_bits: float = 5e6     # status update size
    bandwidth_hz: float = 1e6
    noise_W: float = 1e-13       # -100 dBm
    uav_alt_m: float = 100.0
    bs_alt_m: float = 15.0
    coverage_override_m: float | None = None

    def __post_init__(self):
        for name in ("beta0", "tx_power_W", "bandwidth_hz", "noise_W",
                     "uav_alt_m", "bs_alt_m"):
            v = getattr(self, name)
            if not (v > 0) or not math.isfinite(v):
                raise ConfigError(f"radio parameter {name} must be finite and positive, got {v}")
        if self.packet_bits < 0 or not math.isfinite(self.packet_bits / self.bandwidth_hz):
            raise ConfigError("packet_bits must be non-negative with finite bits/bandwidth")
        if self.coverage_override_m is not None and not (self.coverage_override_m >= 0):
            raise ConfigError("coverage_override_m must be non-negative")

    @property
    def snr_demand(self) -> float:
        """Required linear SNR to decode one update: 2^(bits/bandwidth) - 1."""
        return 2.0 ** (self.packet_bits / self.bandwidth_hz) - 1.0


@dataclass(frozen=True)
class EnergyParams:
    """Rotary-wing power model constants and the quantized battery."""

    battery_J: float = 10000.0
    quanta: int = 200
    p0_W: float = 99.66          # blade profile power at hover
    p1_W: float = 120.16         # induced power at hover
    tip_speed: float = 120.0     # rotor tip speed, m/s
    hover_induced_v: float = 0.002   # mean rotor induced velocity at hover, m/s
    fuselage_drag: float = 0.48
    air_density: float = 1.225
    rotor_solidity: float = 1e-4
    rotor_disk_area: float = 0.5
    speed: float = 25.0          # cruise speed between cell centers, m/s
    penalty_z: float = 5.0       # reward penalty per out-of-range schedule
    energy_threshold: int | None = None   # quanta; None = derive from grid/depot layout
    diag_factor: float = field(default=math.sqrt(2.0))

    def __post_init__(self):
        if self.quanta <= 0 or not (self.battery_J > 0):
            raise ConfigError("battery_J and quanta must be positive")
        for name in ("p0_W", "p1_W", "tip_speed", "hover_induced_v", "air_density",
                     "rotor_solidity", "rotor_disk_area", "speed", "diag_factor"):
            v = getattr(self, name)
            if not (v > 0) or not math.isfinite(v):
                raise ConfigError(f"energy parameter {name} must be finite and positive, got {v}")
        if self.fuselage_drag < 0:
            raise ConfigError("fuselage_drag must be non-negative")
        if self.energy_threshold is not None and not (0 <= self.energy_threshold < self.quanta):
            raise ConfigError(
                f"energy_threshold must lie in [0, quanta), got {self.energy_threshold}"
            )

    @property
    def joules_per_quantum(self) -> float:
        return self.battery_J / self.quanta

    @property
    def quanta_per_joule(self) -> float:
        return self.quanta / self.battery_J

    def slot_seconds(self, spacing_m: float) -> float:
        """Slot duration: the time to traverse one cell at cruise speed."""
        return spacing_m / self.speed


def rotor_power(v: float, e: EnergyParams) -> float:
    """Rotor power draw (W) at horizontal speed v.

    Three components: blade profile power growing with v^2, induced power
    decaying from hover, and parasite drag growing with v^3.  The induced
    term sqrt(sqrt(1+x^2) - x) with x = v^2 / (2 mu0^2) is evaluated as
    sqrt(1 / (hypot(1, x) + x)) to avoid catastrophic cancellation at
    cruise speeds where x is huge.
    """
    if v < 0:
        raise InvalidParameterError(f"speed must be non-negative, got {v}")
    profile = e.p0_W * (1.0 + 3.0 * v * v / (e.tip_speed * e.tip_speed))
    x = v * v / (2.0 * e.hover_induced_v * e.hover_induced_v)
    induced = e.p1_W * math.sqrt(1.0 / (math.hypot(1.0, x) + x))
    parasite = 0.5 * e.fuselage_drag * e.air_density * e.rotor_solidity * e.rotor_disk_area * v ** 3
    total = profile + induced + parasite
    if not math.isfinite(total) or not (total > 0):
        raise InvalidParameterError(f"rotor power is not finite/positive at v={v}: {total}")
    return total


def channel_gain(uav_cell: Cell, g: GridSpec, r: RadioParams) -> float:
    """Linear UAV-to-BS channel gain: beta0 / (altitude gap^2 + ground distance^2)."""
    wx, wy = g.world(uav_cell)
    dh = r.uav_alt_m - r.bs_alt_m
    return r.beta0 / (dh * dh + wx * wx + wy * wy)


def relay_energy_quanta(uav_cell: Cell, g: GridSpec, r: RadioParams, e: EnergyParams) -> float:
    """Fractional battery quanta spent forwarding one update to the BS from a cell."""
    energy_J = r.noise_W * r.snr_demand / channel_gain(uav_cell, g, r)
    return e.quanta_per_joule * energy_J


def flight_energy_quanta(direction: str, e: EnergyParams, spacing_m: float) -> float:
    """Fractional battery quanta for one slot of flying (or hovering).

    Hovering draws rotor_power(0) for the whole slot; any move draws
    rotor_power(cruise speed), with diagonal moves scaled by diag_factor
    for the longer path.
    """
    from .env_core import DIR_DELTA  # local import to avoid a cycle

    dx, dy = DIR_DELTA[direction]
    slot_s = e.slot_seconds(spacing_m)
    if dx == 0 and dy == 0:
        return e.quanta_per_joule * rotor_power(0.0, e) * slot_s
    mult = e.diag_factor if (dx != 0 and dy != 0) else 1.0
    return e.quanta_per_joule * rotor_power(e.speed, e) * slot_s * mult


def coverage_radius(r: RadioParams) -> float:
    """Maximum ground distance (m) at which a device's update is decodable.

    Returns the override verbatim when one is configured.
    """
    if r.coverage_override_m is not None:
        return r.coverage_override_m
    if r.snr_demand == 0.0:
        return math.inf     # zero-rate packets decode anywhere
    radicand = r.beta0 * r.tx_power_W / (r.snr_demand * r.noise_W) - r.uav_alt_m ** 2
    if radicand < 0:
        raise ZeroCoverageError(
            f"link budget {r.beta0 * r.tx_power_W / (r.snr_demand * r.noise_W):.6g} m^2 "
            f"is below the squared UAV altitude {r.uav_alt_m ** 2:.6g} m^2; no ground coverage"
        )
    return math.sqrt(radicand)
