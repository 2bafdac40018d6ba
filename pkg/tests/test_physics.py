"""Closed-form physics against values frozen from a 50-digit reference evaluation."""

import math

import pytest

from aoi_uav.errors import InvalidParameterError, ZeroCoverageError
from aoi_uav.params import (
    EnergyParams,
    GridSpec,
    RadioParams,
    channel_gain,
    coverage_radius,
    flight_energy_quanta,
    relay_energy_quanta,
    rotor_power,
)

E = EnergyParams()
R = RadioParams()
G = GridSpec()

# frozen from an independent term-by-term mpmath evaluation (50 digits)
ROTOR_25 = 112.8758628
ROTOR_25_TERM3 = 0.2296875
GAIN_CENTER = 1.3840830449826989619e-7
GAIN_CORNER = 1.9715116565626694268e-9
RELAY_Q_CENTER = 4.4795e-7
RELAY_Q_CORNER = 3.144795e-5
COVERAGE_M = 978.64290498826535341
HOVER_Q = 17.5856
MOVE_Q = 9.030069024
DIAG_Q = 12.770446082905977531


def rel(a, b):
    return abs(a - b) / abs(b)


class TestRotorPower:
    def test_hover_is_exactly_p0_plus_p1(self):
        assert rotor_power(0.0, E) == E.p0_W + E.p1_W == 219.82

    def test_cruise_matches_reference(self):
        assert rel(rotor_power(25.0, E), ROTOR_25) < 1e-9

    def test_zero_drag_removes_parasite_term(self):
        e0 = EnergyParams(fuselage_drag=0.0)
        assert rel(rotor_power(25.0, e0), ROTOR_25 - ROTOR_25_TERM3) < 1e-9

    def test_monotone_in_parasite_parameters(self):
        base = rotor_power(25.0, E)
        for name in ("fuselage_drag", "air_density", "rotor_solidity", "rotor_disk_area"):
            bumped = EnergyParams(**{name: getattr(E, name) * 2})
            assert rotor_power(25.0, bumped) > base

    def test_negative_speed_rejected(self):
        with pytest.raises(InvalidParameterError):
            rotor_power(-1.0, E)

    def test_overflow_reported_not_returned(self):
        silly = EnergyParams(fuselage_drag=1e308, rotor_disk_area=1e300)
        with pytest.raises(InvalidParameterError):
            rotor_power(1e10, silly)


class TestChannelGain:
    def test_center_cell(self):
        assert rel(channel_gain(G.center, G, R), GAIN_CENTER) < 1e-9

    def test_corner_cell(self):
        assert rel(channel_gain((0, 0), G, R), GAIN_CORNER) < 1e-9

    def test_equidistant_cells_equal(self):
        assert channel_gain((5, 7), G, R) == channel_gain((7, 5), G, R)
        assert channel_gain((3, 5), G, R) == channel_gain((5, 3), G, R)

    def test_maximal_over_bs(self):
        g0 = channel_gain(G.center, G, R)
        for cell in [(0, 0), (5, 6), (10, 10), (2, 9)]:
            if cell != G.center:
                assert channel_gain(cell, G, R) < g0


class TestRelayEnergy:
    def test_center_quanta(self):
        assert rel(relay_energy_quanta(G.center, G, R, E), RELAY_Q_CENTER) < 1e-9

    def test_corner_quanta(self):
        assert rel(relay_energy_quanta((0, 0), G, R, E), RELAY_Q_CORNER) < 1e-9

    def test_corner_to_center_ratio(self):
        ratio = relay_energy_quanta((0, 0), G, R, E) / relay_energy_quanta(G.center, G, R, E)
        assert rel(ratio, 70.204152249134948097) < 1e-9

    def test_zero_packet_costs_nothing(self):
        r0 = RadioParams(packet_bits=0.0)
        assert relay_energy_quanta(G.center, G, r0, E) == 0.0

    def test_monotone_in_bs_distance(self):
        cells = [(i, j) for i in range(G.cells_x) for j in range(G.cells_y)]
        def d2(c):
            x, y = G.world(c)
            return x * x + y * y
        cells.sort(key=d2)
        costs = [relay_energy_quanta(c, G, R, E) for c in cells]
        assert all(a <= b + 1e-18 for a, b in zip(costs, costs[1:]))


class TestCoverageRadius:
    def test_default_radius(self):
        assert rel(coverage_radius(R), COVERAGE_M) < 1e-9

    def test_budget_identity(self):
        lhs = coverage_radius(R) ** 2 + R.uav_alt_m ** 2
        rhs = R.beta0 * R.tx_power_W / (R.snr_demand * R.noise_W)
        assert rel(lhs, rhs) < 1e-9

    def test_boundary_radicand_gives_zero(self):
        p = R.snr_demand * R.noise_W * R.uav_alt_m ** 2 / R.beta0
        assert coverage_radius(RadioParams(tx_power_W=p)) == pytest.approx(0.0, abs=1e-6)

    def test_override_wins(self):
        assert coverage_radius(RadioParams(coverage_override_m=300.0)) == 300.0

    def test_negative_radicand_rejected(self):
        with pytest.raises(ZeroCoverageError):
            coverage_radius(RadioParams(tx_power_W=1e-9))


class TestFlightEnergy:
    def test_hover_quanta(self):
        assert rel(flight_energy_quanta("H", E, G.spacing_m), HOVER_Q) < 1e-9

    def test_cardinal_quanta(self):
        assert rel(flight_energy_quanta("E", E, G.spacing_m), MOVE_Q) < 1e-9

    def test_diagonal_is_sqrt2_times_cardinal(self):
        assert flight_energy_quanta("NE", E, G.spacing_m) == pytest.approx(
            math.sqrt(2) * flight_energy_quanta("E", E, G.spacing_m), rel=1e-12)
        assert rel(flight_energy_quanta("NE", E, G.spacing_m), DIAG_Q) < 1e-9

    def test_all_moves_positive(self):
        for d in ("N", "S", "E", "W", "NE", "NW", "SE", "SW", "H"):
            assert flight_energy_quanta(d, E, G.spacing_m) > 0


class TestGridSpec:
    def test_center_maps_to_origin(self):
        assert G.world(G.center) == (0.0, 0.0)

    def test_corner_world_coordinates(self):
        assert G.world((0, 0)) == (-500.0, -500.0)
        assert G.world((10, 10)) == (500.0, 500.0)

    def test_even_grid_rejected(self):
        from aoi_uav.errors import ConfigError
        with pytest.raises(ConfigError):
            GridSpec(cells_x=10, cells_y=11)
