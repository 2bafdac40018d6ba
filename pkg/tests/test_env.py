"""Environment dynamics: moves, scheduling, ages, batteries, margins, codec."""

import math

import numpy as np
import pytest

from aoi_uav.env_core import (
    UavAction,
    UavRelayEnv,
    age_step,
    battery_step,
    decode_joint,
    encode_joint,
    team_reward,
)
from aoi_uav.errors import ConfigError, ContractError
from aoi_uav.params import EnergyParams, GridSpec, RadioParams
from aoi_uav.verify import mdp_invariant_sweep


def default_env(**kw):
    args = dict(grid=GridSpec(), radio=RadioParams(), energy=EnergyParams(),
                n_uavs=1, n_devices=5, model=9)
    args.update(kw)
    return UavRelayEnv(**args)


class TestJointActionCodec:
    @pytest.mark.parametrize("model", [5, 9])
    @pytest.mark.parametrize("n_uavs", [1, 2])
    @pytest.mark.parametrize("n_devices", [1, 5, 10])
    def test_full_roundtrip(self, model, n_uavs, n_devices):
        total = (model * (n_devices + 1)) ** n_uavs
        for idx in range(total):
            actions = decode_joint(idx, model, n_devices, n_uavs)
            assert len(actions) == n_uavs
            assert encode_joint(actions, model, n_devices) == idx

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ContractError):
            decode_joint(54, 9, 5, 1)
        with pytest.raises(ContractError):
            decode_joint(-1, 9, 5, 1)

    def test_diagonal_not_legal_under_5dir(self):
        env = default_env(model=5)
        state = env.reset(0)
        with pytest.raises(ContractError):
            env.step(state, [UavAction("NE", 0)])


class TestAgeStep:
    def test_served_resets_to_one(self):
        env = default_env(n_devices=1)
        state = env.make_state([(5, 5)], [200], [7])
        out = age_step(state.devices, {1}, 30)
        assert out[0].age == 1

    def test_saturates_at_age_max(self):
        env = default_env(n_devices=1)
        state = env.make_state([(5, 5)], [200], [30])
        assert age_step(state.devices, set(), 30)[0].age == 30

    def test_unserved_increments(self):
        env = default_env(n_devices=1)
        state = env.make_state([(5, 5)], [200], [5])
        assert age_step(state.devices, set(), 30)[0].age == 6


class TestTeamReward:
    def test_uniform_fresh_ages(self):
        env = default_env(n_devices=5)
        state = env.make_state([(5, 5)], [200], [1] * 5)
        assert team_reward(state.devices, 0, env.energy) == -1.0

    def test_out_of_range_penalty(self):
        env = default_env(n_devices=5)
        state = env.make_state([(5, 5)], [200], [1] * 5)
        assert team_reward(state.devices, 1, env.energy) == -6.0

    def test_saturated_pair(self):
        env = default_env(n_devices=2, weights=[0.5, 0.5])
        state = env.make_state([(5, 5)], [200], [30, 30])
        assert team_reward(state.devices, 0, env.energy) == -30.0


class TestBatteryStep:
    def test_east_move_costs_ten(self):
        env = default_env()
        u = env.make_state([(5, 5)], [200], [1] * 5).uavs[0]
        assert battery_step(u, "E", False, 0.0, env.energy, env.grid.spacing_m) == 190

    def test_subquantum_relay_absorbed_by_ceiling(self):
        env = default_env()
        u = env.make_state([(5, 5)], [200], [1] * 5).uavs[0]
        relay_center = env.relay_q[env.grid.center]
        assert battery_step(u, "E", True, relay_center, env.energy, env.grid.spacing_m) == 190

    def test_clamped_at_zero_and_terminal(self):
        env = default_env(energy=EnergyParams(energy_threshold=0))
        state = env.make_state([(5, 5)], [5], [1] * 5)
        assert not state.terminal
        out = env.step(state, [UavAction("H", 0)])
        assert out.next.uavs[0].battery == 0
        assert out.terminal and out.next.terminal


class TestStep:
    def test_hand_composed_transition(self):
        # one UAV over the BS, hovering, serving the oldest of three devices
        env = default_env(n_devices=3, weights=[1 / 3] * 3)
        state = env.make_state([env.grid.center], [200], [9, 2, 3])
        out = env.step(state, [UavAction("H", 1)])
        assert out.served == frozenset({1})
        assert [d.age for d in out.next.devices] == [1, 3, 4]
        assert out.reward == pytest.approx(-(1 + 3 + 4) / 3)
        assert out.out_of_range == 0

    def test_schedule_conflict_lowest_id_wins(self):
        # raise noise so relay energy is whole quanta, observable through the ceiling
        radio = RadioParams(noise_W=1e-6, coverage_override_m=3000.0)
        env = default_env(n_uavs=2, radio=radio)
        state = env.make_state([env.grid.center, env.grid.center], [200, 200], [1] * 5)
        out = env.step(state, [UavAction("H", 4), UavAction("H", 4)])
        assert out.served == frozenset({4})
        hover_cost = math.ceil(env.flight_q[env.dirs.index("H")])
        relay_cost = math.ceil(env.flight_q[env.dirs.index("H")]
                               + env.relay_q[env.grid.center])
        assert relay_cost > hover_cost, "test setup must make relay visible"
        assert state.uavs[0].battery - out.next.uavs[0].battery == relay_cost
        assert state.uavs[1].battery - out.next.uavs[1].battery == hover_cost

    def test_boundary_move_becomes_hover(self):
        env = default_env()
        state = env.make_state([(5, 10)], [200], [1] * 5)  # north edge
        out = env.step(state, [UavAction("N", 0)])
        assert out.next.uavs[0].cell == (5, 10)
        drop = state.uavs[0].battery - out.next.uavs[0].battery
        assert drop == math.ceil(env.flight_q[env.dirs.index("H")])

    def test_out_of_range_schedule_penalized_not_served(self):
        env = default_env(radio=RadioParams(coverage_override_m=150.0), n_devices=2)
        state = env.reset(0)
        far = max(
            (d for d in state.devices),
            key=lambda d: (d.cell[0] - state.uavs[0].cell[0]) ** 2
            + (d.cell[1] - state.uavs[0].cell[1]) ** 2,
        )
        out = env.step(state, [UavAction("H", far.id)])
        assert out.out_of_range == 1
        assert far.id not in out.served
        dev = next(d for d in out.next.devices if d.id == far.id)
        assert dev.age == 2
        assert out.reward == team_reward(out.next.devices, 1, env.energy)

    def test_terminal_state_rejected(self):
        env = default_env()
        state = env.make_state([(5, 5)], [10], [1] * 5)  # below threshold
        assert state.terminal
        with pytest.raises(ContractError):
            env.step(state, 0)

    def test_determinism_bit_identical(self):
        env = default_env(n_uavs=2, n_devices=4)
        state = env.reset(3)
        a = 1234 % env.n_joint_actions
        assert env.step(state, a) == env.step(state, a)

    def test_slot_limit_terminates(self):
        env = default_env(max_slots=1)
        out = env.step(env.reset(0), 0)
        assert out.terminal and out.next.slot == 1


class TestBatteryMargin:
    def test_on_depot_margin_is_battery(self):
        env = default_env()
        state = env.reset(0)
        assert env.battery_margin(state, 0) == state.uavs[0].battery

    def test_three_diagonal_steps_example(self):
        env = default_env()
        state = env.make_state([(3, 3)], [200], [1] * 5)
        assert env.steps_to_depot[(3, 3)] == 3
        assert env.battery_margin(state, 0) == 161

    def test_negative_past_return_point(self):
        env = default_env()
        state = env.make_state([(3, 3)], [10], [1] * 5)
        assert env.battery_margin(state, 0) < 0

    def test_manhattan_metric_under_5dir(self):
        env = default_env(model=5)
        assert env.steps_to_depot[env.grid.center] == 10
        assert env.steps_to_depot[(1, 0)] == 1


class TestEnergyThresholdDefaults:
    def test_nine_direction_threshold(self):
        assert default_env(model=9).eth == 64

    def test_five_direction_threshold(self):
        assert default_env(model=5).eth == 91

    def test_explicit_threshold_respected(self):
        env = default_env(energy=EnergyParams(energy_threshold=30))
        assert env.eth == 30


class TestReset:
    def test_fresh_state_invariants(self):
        env = default_env(n_uavs=2)
        s = env.reset(42)
        assert s.slot == 0 and not s.terminal
        assert all(u.battery == env.energy.quanta for u in s.uavs)
        assert all(d.age == 1 for d in s.devices)
        assert len({d.cell for d in s.devices}) == env.n_devices

    def test_same_seed_same_layout(self):
        env = default_env()
        assert env.reset(7) == env.reset(7)
        assert env.reset(7) != env.reset(8)

    def test_two_uavs_on_first_two_depots(self):
        env = default_env(n_uavs=2)
        s = env.reset(0)
        assert s.uavs[0].cell == env.depots[0]
        assert s.uavs[1].cell == env.depots[1]
        assert s.uavs[0].cell != s.uavs[1].cell

    def test_devices_avoid_depots_and_center(self):
        env = default_env(n_devices=10)
        s = env.reset(11)
        for d in s.devices:
            assert d.cell not in env.depots and d.cell != env.grid.center

    def test_layouts_nest_across_device_counts(self):
        small = default_env(n_devices=3).reset(5)
        large = default_env(n_devices=8).reset(5)
        assert [d.cell for d in small.devices] == [d.cell for d in large.devices][:3]

    def test_too_many_devices_rejected(self):
        with pytest.raises(ConfigError):
            default_env(grid=GridSpec(3, 3, 100.0), n_devices=5)


class TestEncodeState:
    def test_fresh_reset_features(self):
        env = default_env()
        feats = env.encode(env.reset(0))
        assert feats.shape == (env.feature_len,)
        assert feats[0] == 0.0 and feats[1] == 0.0          # corner depot
        assert np.allclose(feats[2:7], 1 / 30)              # unit ages
        assert feats[7] == 1.0                              # full margin on depot

    def test_age_max_feature_is_one(self):
        env = default_env(n_devices=1)
        state = env.make_state([(0, 0)], [200], [30])
        assert env.encode(state)[2] == 1.0

    def test_injective_in_uav_cell(self):
        env = default_env(n_devices=2)
        a = env.encode(env.make_state([(2, 3)], [200], [1, 1]))
        b = env.encode(env.make_state([(3, 2)], [200], [1, 1]))
        c = env.encode(env.make_state([(2, 4)], [200], [1, 1]))
        assert not np.array_equal(a, b) and not np.array_equal(a, c)


class TestInvariantSweep:
    def test_random_steps_hold_invariants(self):
        assert mdp_invariant_sweep(5000, seed=99) == 5000
