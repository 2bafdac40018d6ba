"""Self-contained verification suite behind the `verify` CLI command.

Every physics value is re-derived here from scratch with 50-digit mpmath
arithmetic, so a regression in the production formulas cannot hide; the
dynamics, learning and solver checks exercise the same invariants the test
suite pins down, at smoke-test sizes.
"""

from __future__ import annotations

import math
import os
import tempfile

import mpmath as mp
import numpy as np

from . import agents, kernels, oracle
from .checkpoint import load_checkpoint, save_checkpoint
from .env_core import UavAction, UavRelayEnv, decode_joint, encode_joint, team_reward
from .params import (
    EnergyParams,
    GridSpec,
    RadioParams,
    channel_gain,
    coverage_radius,
    flight_energy_quanta,
    relay_energy_quanta,
    rotor_power,
)

mp.mp.dps = 50


# --------------------------------------------------------------------------- #
# independent high-precision references
# --------------------------------------------------------------------------- #

def ref_rotor_power(v, e: EnergyParams):
    v = mp.mpf(v)
    t1 = mp.mpf(e.p0_W) * (1 + 3 * v ** 2 / mp.mpf(e.tip_speed) ** 2)
    t2 = mp.mpf(e.p1_W) * mp.sqrt(
        mp.sqrt(1 + v ** 4 / (4 * mp.mpf(e.hover_induced_v) ** 4))
        - v ** 2 / (2 * mp.mpf(e.hover_induced_v) ** 2)
    )
    t3 = mp.mpf("0.5") * mp.mpf(e.fuselage_drag) * mp.mpf(e.air_density) \
        * mp.mpf(e.rotor_solidity) * mp.mpf(e.rotor_disk_area) * v ** 3
    return t1 + t2 + t3


def ref_channel_gain(cell, g: GridSpec, r: RadioParams):
    wx, wy = g.world(cell)
    return mp.mpf(r.beta0) / (
        (mp.mpf(r.uav_alt_m) - mp.mpf(r.bs_alt_m)) ** 2 + mp.mpf(wx) ** 2 + mp.mpf(wy) ** 2
    )


def ref_relay_quanta(cell, g: GridSpec, r: RadioParams, e: EnergyParams):
    snr = mp.mpf(2) ** (mp.mpf(r.packet_bits) / mp.mpf(r.bandwidth_hz)) - 1
    energy = mp.mpf(r.noise_W) * snr / ref_channel_gain(cell, g, r)
    return mp.mpf(e.quanta) / mp.mpf(e.battery_J) * energy


def ref_coverage_radius(r: RadioParams):
    snr = mp.mpf(2) ** (mp.mpf(r.packet_bits) / mp.mpf(r.bandwidth_hz)) - 1
    return mp.sqrt(mp.mpf(r.beta0) * mp.mpf(r.tx_power_W) / (snr * mp.mpf(r.noise_W))
                   - mp.mpf(r.uav_alt_m) ** 2)


def ref_flight_quanta(direction, e: EnergyParams, spacing_m):
    from .env_core import DIR_DELTA

    dx, dy = DIR_DELTA[direction]
    tau = mp.mpf(spacing_m) / mp.mpf(e.speed)
    scale = mp.mpf(e.quanta) / mp.mpf(e.battery_J)
    if dx == 0 and dy == 0:
        return scale * ref_rotor_power(0, e) * tau
    mult = mp.mpf(e.diag_factor) if dx != 0 and dy != 0 else mp.mpf(1)
    return scale * ref_rotor_power(e.speed, e) * tau * mult


def rel_err(got, want) -> float:
    want = float(want)
    if want == 0.0:
        return abs(float(got))
    return abs(float(got) - want) / abs(want)


# --------------------------------------------------------------------------- #
# gradient check against central finite differences
# --------------------------------------------------------------------------- #

def gradient_check(hidden_dims, n_in: int, n_out: int, seed: int,
                   n_batches: int = 20, batch: int = 8, n_coords: int = 40,
                   h: float = 1e-5, gamma: float = 0.99,
                   use_mse: bool = False) -> float:
    """Max relative error between analytic and central-difference gradients."""
    dims = np.asarray([n_in, *hidden_dims, n_out], dtype=np.int64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        net = agents.init_network(dims, rng)
        target = agents.init_network(dims, rng)
        S = rng.uniform(0.0, 1.0, size=(batch, n_in))
        S2 = rng.uniform(0.0, 1.0, size=(batch, n_in))
        A = rng.integers(0, n_out, size=batch)
        R = rng.uniform(-6.0, 0.0, size=batch)
        DONE = (rng.random(batch) < 0.2).astype(np.float64)

        def loss_at(theta):
            loss, _ = kernels.loss_grad(theta, target.theta, dims, S, A, R, S2,
                                        DONE, gamma, 1.0, use_mse)
            return loss

        _, grad = kernels.loss_grad(net.theta, target.theta, dims, S, A, R, S2,
                                    DONE, gamma, 1.0, use_mse)
        coords = rng.choice(net.theta.size, size=min(n_coords, net.theta.size),
                            replace=False)
        for k in coords:
            tp = net.theta.copy()
            tp[k] += h
            tm = net.theta.copy()
            tm[k] -= h
            fd = (loss_at(tp) - loss_at(tm)) / (2.0 * h)
            denom = max(abs(fd), abs(grad[k]), 1e-8)
            worst = max(worst, abs(fd - grad[k]) / denom)
    return worst


# --------------------------------------------------------------------------- #
# random environments and invariant sweeps
# --------------------------------------------------------------------------- #

def random_env(rng: np.random.Generator) -> UavRelayEnv:
    side = int(rng.choice([5, 7, 9, 11]))
    grid = GridSpec(cells_x=side, cells_y=side, spacing_m=100.0)
    energy = EnergyParams(battery_J=10000.0, quanta=int(rng.choice([100, 200, 400])))
    radio = RadioParams(coverage_override_m=float(rng.choice([250.0, 500.0, 1500.0]))
                        if rng.random() < 0.5 else None)
    return UavRelayEnv(
        grid=grid, radio=radio, energy=energy,
        n_uavs=int(rng.integers(1, 3)),
        n_devices=int(rng.integers(2, 7)),
        model=int(rng.choice([5, 9])),
        age_max=int(rng.choice([8, 30])),
        max_slots=int(rng.choice([20, 60])),
    )


def mdp_invariant_sweep(n_steps: int, seed: int) -> int:
    """Run random steps across random configs, asserting every state invariant.

    Returns the number of steps actually checked; raises AssertionError on
    the first violation.
    """
    rng = np.random.default_rng(seed)
    steps = 0
    while steps < n_steps:
        env = random_env(rng)
        state = env.reset(int(rng.integers(2 ** 31)))
        while not state.terminal and steps < n_steps:
            a = int(rng.integers(env.n_joint_actions))
            out = env.step(state, a)
            nxt = out.next

            for d in nxt.devices:
                assert 1 <= d.age <= env.age_max, f"age {d.age} escaped bounds"
            for u_old, u_new in zip(state.uavs, nxt.uavs):
                assert 0 <= u_new.battery <= env.energy.quanta
                assert u_new.battery < u_old.battery, "battery must strictly decrease"
                assert env.grid.in_bounds(u_new.cell)
            served = out.served
            for d_old, d_new in zip(state.devices, nxt.devices):
                expect = 1 if d_old.id in served else min(env.age_max, d_old.age + 1)
                assert d_new.age == expect, "age update rule violated"
            rec = team_reward(nxt.devices, out.out_of_range, env.energy)
            assert rec == out.reward, "reward must reconstruct from the outcome"
            assert nxt.terminal == (
                any(u.battery <= env.eth for u in nxt.uavs) or nxt.slot >= env.max_slots
            )
            if steps % 997 == 0:
                again = env.step(state, a)
                assert again == out, "step must be deterministic"

            steps += 1
            state = nxt
    return steps


def boundary_and_conflict_checks() -> None:
    grid = GridSpec(11, 11, 100.0)
    env = UavRelayEnv(grid, RadioParams(), EnergyParams(), n_uavs=1, n_devices=3, model=9)
    state = env.reset(0)
    # UAV starts on corner depot (0,0); W and S would leave the grid
    out = env.step(state, [UavAction("W", 0)])
    assert out.next.uavs[0].cell == state.uavs[0].cell, "boundary move must hover"
    hover_drop = state.uavs[0].battery - out.next.uavs[0].battery
    assert hover_drop == math.ceil(env.flight_q[env.dirs.index("H")])

    env2 = UavRelayEnv(grid, RadioParams(), EnergyParams(), n_uavs=2, n_devices=3, model=9)
    s2 = env2.reset(0)
    target_dev = 1
    out2 = env2.step(s2, [UavAction("H", target_dev), UavAction("H", target_dev)])
    assert target_dev in out2.served and len(out2.served) == 1
    # loser (higher id) pays hover cost only, no relay
    loser_drop = s2.uavs[1].battery - out2.next.uavs[1].battery
    assert loser_drop == math.ceil(env2.flight_q[env2.dirs.index("H")])


# --------------------------------------------------------------------------- #
# tiny instances
# --------------------------------------------------------------------------- #

def tiny_env(model: int = 5, n_devices: int = 2, quanta: int = 20,
             age_max: int = 8, coverage_override: float | None = None,
             weights=None) -> UavRelayEnv:
    """3x3 instance with coarse battery quanta so exact solvers stay small."""
    return UavRelayEnv(
        grid=GridSpec(3, 3, 100.0),
        radio=RadioParams(coverage_override_m=coverage_override),
        energy=EnergyParams(battery_J=5000.0, quanta=quanta),
        n_uavs=1, n_devices=n_devices, model=model,
        weights=weights, age_max=age_max, max_slots=60,
    )


def canonical_tiny_instance() -> oracle.TinyInstance:
    return oracle.TinyInstance(env=tiny_env(), placement_seed=7, horizon=10)


def policy_return(inst: oracle.TinyInstance, policy, seed: int) -> float:
    """Cumulative reward of a policy from reset, truncated at the instance horizon."""
    env = inst.env
    rng = np.random.default_rng(seed)
    state = inst.initial_state()
    rewards = []
    for _ in range(inst.horizon):
        if state.terminal:
            break
        out = env.step(state, policy(env, state, rng))
        rewards.append(out.reward)
        state = out.next
    total = 0.0
    for r in reversed(rewards):
        total = r + total
    return total


def random_tiny_instance(rng: np.random.Generator) -> oracle.TinyInstance:
    env = tiny_env(
        model=int(rng.choice([5, 9])),
        n_devices=int(rng.integers(1, 3)),
        quanta=int(rng.integers(16, 28)),
        age_max=int(rng.choice([4, 6, 8])),
        coverage_override=float(rng.choice([160.0, 999.0])) if rng.random() < 0.5 else None,
    )
    return oracle.TinyInstance(env=env, placement_seed=int(rng.integers(2 ** 31)),
                               horizon=int(rng.integers(3, 7)))


# --------------------------------------------------------------------------- #
# the check registry
# --------------------------------------------------------------------------- #

def _checks():
    e = EnergyParams()
    r = RadioParams()
    g = GridSpec()

    def eq_rotor_hover():
        got = rotor_power(0.0, e)
        want = e.p0_W + e.p1_W
        return got == want, f"rotor_power(0)={got!r}, P0+P1={want!r}"

    def eq_rotor_cruise():
        err = rel_err(rotor_power(e.speed, e), ref_rotor_power(e.speed, e))
        return err < 1e-9, f"rotor_power(25) rel err {err:.3e}"

    def eq_channel_gain():
        worst = max(
            rel_err(channel_gain(c, g, r), ref_channel_gain(c, g, r))
            for c in [g.center, (0, 0), (10, 3)]
        )
        return worst < 1e-9, f"channel_gain rel err {worst:.3e}"

    def eq_relay_quanta():
        worst = max(
            rel_err(relay_energy_quanta(c, g, r, e), ref_relay_quanta(c, g, r, e))
            for c in [g.center, (0, 0), (10, 3)]
        )
        return worst < 1e-9, f"relay_energy_quanta rel err {worst:.3e}"

    def eq_coverage_radius():
        err = rel_err(coverage_radius(r), ref_coverage_radius(r))
        snr = r.snr_demand
        ident = rel_err(coverage_radius(r) ** 2 + r.uav_alt_m ** 2,
                        r.beta0 * r.tx_power_W / (snr * r.noise_W))
        ok = err < 1e-9 and ident < 1e-9
        return ok, f"radius rel err {err:.3e}, budget identity rel err {ident:.3e}"

    def eq_flight_quanta():
        worst = max(
            rel_err(flight_energy_quanta(d, e, g.spacing_m), ref_flight_quanta(d, e, g.spacing_m))
            for d in ("H", "E", "NE")
        )
        return worst < 1e-9, f"flight_energy_quanta rel err {worst:.3e}"

    def mdp_invariants():
        n = mdp_invariant_sweep(20_000, seed=20240)
        return True, f"{n} random steps clean"

    def boundary_conflict():
        boundary_and_conflict_checks()
        return True, "boundary hover + schedule conflict rules hold"

    def gradients():
        worst1 = gradient_check((64, 64), n_in=8, n_out=54, seed=11, n_batches=3)
        worst2 = gradient_check((64, 128, 256, 128, 128), n_in=11, n_out=2916,
                                seed=12, n_batches=2, n_coords=25)
        ok = worst1 < 1e-4 and worst2 < 1e-4
        return ok, f"max rel err {max(worst1, worst2):.3e}"

    def oracle_agreement():
        rng = np.random.default_rng(500)
        details = []
        for _ in range(4):
            inst = random_tiny_instance(rng)
            best, _seq = oracle.exhaustive_best_return(inst)
            sol = oracle.finite_horizon_dp(inst)
            if sol.root_value() != best:
                return False, f"DP {sol.root_value()!r} != exhaustive {best!r}"
            if oracle.dp_greedy_rollout(sol) != sol.root_value():
                return False, "greedy rollout diverged from DP root value"
            for ep in range(5):
                rw_ret = policy_return(inst, agents.random_walk, seed=300 + ep)
                if rw_ret > best + 1e-12:
                    return False, f"random walk return {rw_ret} beat the optimum {best}"
            details.append(f"{best:.3f}")
        return True, "optima " + ", ".join(details)

    def replay_fifo():
        buf = agents.ReplayBuffer(capacity=8, feature_len=2)
        for i in range(13):
            buf.push(agents.Experience(np.array([i, i]), i, float(i),
                                       np.array([i, i]), False))
        kept = sorted(int(a) for a in buf.A)
        ok = kept == list(range(5, 13))
        return ok, f"buffer holds {kept}"

    def epsilon_schedule():
        s = agents.EpsilonSchedule()
        ok = all(s.value(k) == max(0.01, 0.995 ** k) for k in range(0, 4000, 7))
        return ok, "max(floor, decay^k) reproduced exactly"

    def codec_roundtrip():
        for model in (5, 9):
            for n_uavs in (1, 2):
                n_dev = 4
                total = (model * (n_dev + 1)) ** n_uavs
                for idx in range(0, total, max(1, total // 500)):
                    if encode_joint(decode_joint(idx, model, n_dev, n_uavs),
                                    model, n_dev) != idx:
                        return False, f"round-trip failed at {idx} (model {model}, U {n_uavs})"
        return True, "encode(decode(i)) == i sampled across both models"

    def checkpoint_roundtrip():
        rng = np.random.default_rng(3)
        net = agents.init_network([8, 16, 30], rng)
        with tempfile.TemporaryDirectory() as tmp:
            p = os.path.join(tmp, "ck.bin")
            save_checkpoint(p, net, 1, 5, 5)
            loaded, meta = load_checkpoint(p)
            save_checkpoint(os.path.join(tmp, "ck2.bin"), loaded, meta.n_uavs,
                            meta.n_devices, meta.model)
            with open(p, "rb") as fh:
                b1 = fh.read()
            with open(os.path.join(tmp, "ck2.bin"), "rb") as fh:
                b2 = fh.read()
        ok = b1 == b2 and np.array_equal(loaded.theta, net.theta)
        return ok, "save -> load -> save is byte-identical"

    def fixed_targets():
        env = tiny_env()
        rng = np.random.default_rng(9)
        net = agents.init_network([env.feature_len, 16, env.n_joint_actions], rng)
        target = net.copy()
        cfg = agents.TrainConfig(episodes=1, batch=8, buffer_capacity=64)
        adam = agents.AdamState.zeros(net.theta.shape[0])
        buf = agents.ReplayBuffer(64, env.feature_len)
        state = env.reset(0)
        while buf.size < 16:
            a = int(rng.integers(env.n_joint_actions))
            out = env.step(state, a)
            buf.push(agents.Experience(env.encode(state), a, out.reward,
                                       env.encode(out.next), out.terminal))
            state = out.next if not out.terminal else env.reset(0)
        batch = buf.gather(np.arange(8))
        y0 = agents.td_target(batch, target, cfg.discount)
        before = target.theta.copy()
        for _ in range(3):
            agents.train_step(net, target, buf, cfg, adam, rng)
        y1 = agents.td_target(batch, target, cfg.discount)
        ok = np.array_equal(y0, y1) and np.array_equal(before, target.theta)
        return ok, "td targets unchanged across train steps between syncs"

    return [
        ("rotor_power hover exact", eq_rotor_hover),
        ("rotor_power cruise vs reference", eq_rotor_cruise),
        ("channel_gain vs reference", eq_channel_gain),
        ("relay_energy_quanta vs reference", eq_relay_quanta),
        ("coverage_radius vs reference", eq_coverage_radius),
        ("flight_energy_quanta vs reference", eq_flight_quanta),
        ("MDP invariants on random steps", mdp_invariants),
        ("boundary and conflict rules", boundary_conflict),
        ("backprop vs finite differences", gradients),
        ("DP vs exhaustive enumeration", oracle_agreement),
        ("replay buffer FIFO", replay_fifo),
        ("epsilon schedule exact", epsilon_schedule),
        ("joint action codec round-trip", codec_roundtrip),
        ("checkpoint round-trip", checkpoint_roundtrip),
        ("fixed targets between syncs", fixed_targets),
    ]


def run_verification(out=print) -> int:
    """Run every check; returns 0 when all pass, 1 otherwise."""
    out(f"backend: {kernels.active_backend()}")
    failures = 0
    for name, check in _checks():
        try:
            ok, detail = check()
        except AssertionError as exc:
            ok, detail = False, f"assertion: {exc}"
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        out(f"[{status}] {name:36s} {detail}")
    out(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return 0 if failures == 0 else 1
