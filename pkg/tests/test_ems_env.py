import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from casegen import make_case, plain_bus, slack_bus
from preventive_ems.ems_env import (
    Action,
    EmsEnv,
    EnvConfig,
    RewardBreakdown,
    compute_reward,
    ess_step,
    ess_window,
    project_generation,
    ray_level,
    trace_dicts,
    write_trace_csv,
)
from preventive_ems.grid_model import EssUnit, Scenario, apply_scenario, load_case
from preventive_ems.power_flow import Violation, ViolationSet, solve_dc
from preventive_ems.scenario_engine import model_scenarios


@pytest.fixture(scope="module")
def toy():
    return load_case("toy3")


@pytest.fixture(scope="module")
def mvdc():
    return load_case("mvdc12")


def ship_ess():
    return EssUnit(id=1, bus=1, capacity=2.2, e_min=0.44, e_max=2.2, c_max=10.0, d_max=10.0,
                   soc_min=0.2, soc_max=1.0, eta=1.0, e_init=2.2)


def gens_model(specs):
    """Single bus with generators given as (p_min, p_max, k)."""
    gens = [(i + 1, 1, lo, hi, 0.05, k) for i, (lo, hi, k) in enumerate(specs)]
    return make_case([slack_bus(1, -5.0, 5.0)], generators=gens, loads=[(1, 1, "critical", [1.0])])


# --------------------------------------------------------------------- reset


def test_reset_starts_at_initial_energy(mvdc):
    env = EmsEnv(mvdc)
    obs = env.reset(Scenario(0, 14, 1.0))
    np.testing.assert_array_equal(obs.ess_energy, [e.e_init for e in mvdc.ess_units])
    assert obs.hour == 0 and not obs.mask_bits.any()


def test_reset_exposes_failed_converter(mvdc):
    i = next(j for j, g in enumerate(mvdc.generators) if g.name == "MTG-2.1")
    env = EmsEnv(mvdc)
    obs = env.reset(Scenario(1 << i, 14, 0.01))
    assert obs.mask_bits[i] == 1 and obs.mask_bits.sum() == 1
    assert obs.vector(env)[-2 - len(mvdc.loads) - 14 + i] == 1


def test_reset_same_seed_same_observation(mvdc):
    env = EmsEnv(mvdc, scenario_set=model_scenarios(mvdc))
    a = env.reset(seed=11).vector(env)
    env.reset(seed=3)
    b = env.reset(seed=11).vector(env)
    assert a.tobytes() == b.tobytes()


def test_reset_rejects_foreign_mask(mvdc):
    with pytest.raises(ValueError):
        EmsEnv(mvdc).reset(Scenario(1 << 20, 21, 0.1))


# --------------------------------------------------------------------- generation ray


def test_projection_example():
    m = gens_model([(0.0, 100.0, 1.0), (0.0, 100.0, 2.0)])
    out = project_generation([4.0, 4.0], m)
    np.testing.assert_allclose(out, [16 / 3, 8 / 3], rtol=0, atol=1e-12)
    assert out[0] * 1 == pytest.approx(out[1] * 2, abs=1e-12)
    assert ray_level([4.0, 4.0], m) == pytest.approx(16 / 3)


def test_projection_single_generator_clips():
    m = gens_model([(1.0, 3.0, 2.0)])
    assert project_generation([2.5], m)[0] == 2.5
    assert project_generation([7.0], m)[0] == 3.0
    assert project_generation([0.2], m)[0] == 1.0


def test_projection_equal_split():
    m = gens_model([(0.0, 10.0, 3.0)] * 3)
    np.testing.assert_allclose(project_generation([9.0, 0.0, 3.0], m), [4.0, 4.0, 4.0], atol=1e-12)


def test_projection_skips_failed_generators(mvdc):
    s = apply_scenario(mvdc, Scenario(0b11, 14, 0.0))
    out = project_generation(np.full(14, 5.0), s)
    assert out[0] == 0 and out[1] == 0


@given(st.lists(st.tuples(st.floats(0.5, 5.0), st.floats(0.0, 20.0)), min_size=1, max_size=8),
       st.floats(0.0, 30.0))
@settings(max_examples=150, deadline=None)
def test_ray_identity_when_unclipped(spec, total):
    m = gens_model([(0.0, 1e6, k) for k, _ in spec])
    req = np.array([r for _, r in spec])
    req = req / max(req.sum(), 1e-12) * total
    out = project_generation(req, m)
    ks = np.array([k for k, _ in spec])
    assert np.ptp(ks * out) <= 1e-9 * max(1.0, total)
    assert out.sum() == pytest.approx(req.sum(), abs=1e-9)


# --------------------------------------------------------------------- storage


def test_ess_step_ship_example():
    step = ess_step([2.2], [1.0], [ship_ess()])
    assert step.energy[0] == pytest.approx(1.2, abs=1e-12)
    assert step.applied[0] == 1.0
    assert step.discharge_cap[0] == pytest.approx(0.76, abs=1e-12)


def test_ess_step_zero_request():
    step = ess_step([1.5], [0.0], [ship_ess()])
    assert step.energy[0] == 1.5


def test_ess_step_discharge_clip():
    step = ess_step([2.2], [50.0], [ship_ess()])
    assert step.applied[0] == pytest.approx(min(10.0, 2.2 - 0.44))
    assert step.energy[0] == pytest.approx(0.44)


@given(st.floats(0.44, 2.2), st.floats(-40, 40), st.floats(0.5, 1.0), st.integers(0, 23))
@settings(max_examples=200, deadline=None)
def test_window_keeps_energy_in_bounds_and_target_reachable(e, req, eta, remaining):
    unit = EssUnit(1, 1, 2.2, 0.44, 2.2, 3.0, 4.0, 0.2, 1.0, eta, 1.32)
    lo, hi = ess_window([unit], [e], 1.0, remaining, [1.32])
    step = ess_step([e], [req], [unit], 1.0, (lo, hi))
    assert lo[0] - 1e-12 <= step.applied[0] <= hi[0] + 1e-12
    assert 0.44 - 1e-9 <= step.energy[0] <= 2.2 + 1e-9
    # after the move the target is still within reach of the remaining intervals
    gap = step.energy[0] - 1.32
    assert gap <= remaining * eta * 4.0 + 1e-9
    assert -gap <= remaining * eta * 3.0 + 1e-9


# --------------------------------------------------------------------- reward


def test_reward_full_critical_only(toy):
    env = EmsEnv(toy)
    sol = solve_dc(toy, np.zeros(toy.n_bus))
    served = np.array([toy.loads[0].profile[0], 0.0, 0.0])
    r = compute_reward(toy, sol, ViolationSet(), served)
    assert r.r_obj == pytest.approx(100 * toy.loads[0].profile[0] * toy.dt)
    assert r.total == r.r_obj
    assert r.r_ineq == 0
    assert env.weights[0] == 100


def test_reward_slack_arm(toy):
    sol = solve_dc(toy, np.zeros(toy.n_bus))
    sol.p_slack = toy.slack_bus.slack_p_max + 2
    r = compute_reward(toy, sol, ViolationSet(), np.zeros(3), EnvConfig(k2=5.0))
    assert r.r_slack == -10.0
    sol.p_slack = toy.slack_bus.slack_p_min - 3
    assert compute_reward(toy, sol, ViolationSet(), np.zeros(3), EnvConfig(k1=2.0)).r_slack == -6.0


def test_reward_line_overload(toy):
    sol = solve_dc(toy, np.zeros(toy.n_bus))
    viol = ViolationSet([Violation("line_p", 1, 1.5, "max"), Violation("v", 2, 0.01, "min")])
    cfg = EnvConfig()
    r = compute_reward(toy, sol, viol, np.zeros(3), cfg)
    assert r.r_p_q == pytest.approx(-cfg.lam_pq * 1.5)
    assert r.r_ineq == pytest.approx(-cfg.lam_pq * 1.5 - cfg.lam_vtheta * 0.01)


def test_reward_parts_sum():
    r = RewardBreakdown(5.0, -1.0, -2.0, -0.5, -0.25, -3.0)
    assert r.r_ineq == -6.25
    assert r.total == 5.0 - 6.25 - 0.5


# --------------------------------------------------------------------- step


def test_zero_action_no_load():
    m = make_case([slack_bus(1, -1.0, 1.0), plain_bus(2)], [(1, 1, 2, 20.0, 0.0, 10.0, 0.0)],
                  [(1, 2, 0.0, 5.0, 0.05, 1)], loads=[(1, 2, "critical", [0.0, 0.0])], horizon=2)
    env = EmsEnv(m)
    env.reset()
    obs, r, done, info = env.step(Action([0.0], [], [0.0]))
    assert r.r_obj == 0 and r.total == 0
    assert not info["violations"] and info["accepted"]
    assert obs.hour == 1 and not done


def test_violation_triggers_repair_without_advancing(toy):
    env = EmsEnv(toy, EnvConfig(repair_cap=2))
    env.reset()
    heavy = Action([1.0, 1.0, 1.0], [0.0], [0.0, 0.0])  # all load, no generation: slack overrun
    _, r, _, info = env.step(heavy)
    assert not info["accepted"] and env.hour == 0 and r.r_obj == 0 and r.r_slack < 0
    env.step(heavy)
    _, r, _, info = env.step(heavy)  # cap reached: accepted with its penalties
    assert info["accepted"] and env.hour == 1
    assert env.trace.records[0].repairs == 2
    assert r.r_obj > 0 and r.r_slack < 0


def test_nonconvergence_penalty_and_advance():
    m = make_case([slack_bus(1, -100.0, 100.0), plain_bus(2, 0.1, 1.9)], [(1, 1, 2, 1.0, 0.0, 100.0, 0.0)],
                  [(1, 1, 0.0, 100.0, 0.05, 1)], loads=[(1, 2, "critical", [50.0, 1.0])], horizon=2,
                  base_mva=1.0)
    env = EmsEnv(m)
    env.reset()
    _, r, done, info = env.step(Action([1.0], [], [50.0]))
    assert not info["converged"]
    assert r.r_nonconv == -env.nonconv_penalty and r.r_obj == 0
    assert env.hour == 1 and not done
    assert np.isnan(env.trace.records[0].p_slack)


def test_all_generators_failed_supplies_nothing(toy):
    env = EmsEnv(toy)
    env.reset(Scenario(0b11, 2, 0.001))
    env.step(Action([0.0, 0.0, 0.0], [0.0], [6.0, 4.0]))
    rec = env.trace.records[-1]
    assert not rec.gen.any()


def test_full_rollout_on_ship(mvdc):
    env = EmsEnv(mvdc, EnvConfig(repair_cap=0))
    trace = env.rollout(lambda obs: np.zeros(env.act_dim), Scenario(0, 14, 1.0))
    assert len(trace.records) == 24 and trace.terminal
    assert [r.hour for r in trace.records] == list(range(24))
    with pytest.raises(RuntimeError):
        env.step(np.zeros(env.act_dim))


def random_policy(env, seed):
    rng = np.random.default_rng(seed)
    return lambda obs: rng.uniform(-1, 1, env.act_dim)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_episode_invariants_random_actions(seed):
    m = load_case("toy3")
    S = model_scenarios(m)
    env = EmsEnv(m, EnvConfig(repair_cap=2), S)
    env.reset(seed=seed)
    pol = random_policy(env, seed)
    e_lo = np.array([e.e_min for e in m.ess_units])
    e_hi = np.array([e.e_max for e in m.ess_units])
    done = False
    obs = env.observe()
    while not done:
        lo, hi = env.window()
        act = env.decode(pol(obs.vector(env)))
        obs, r, done, info = env.step(act)
        assert r.total == r.r_obj + r.r_v_theta + r.r_p_q + r.r_cycle + r.r_nonconv + r.r_slack
        if info["accepted"]:
            rec = env.trace.records[-1]
            assert np.all(rec.ess >= lo - 1e-12) and np.all(rec.ess <= hi + 1e-12)
            assert np.all(rec.energy >= e_lo - 1e-9) and np.all(rec.energy <= e_hi + 1e-9)
    assert np.all(np.abs(env.trace.cycle_residual) <= 1e-6)


def test_episode_determinism(toy):
    S = model_scenarios(toy)
    traces = []
    for _ in range(2):
        env = EmsEnv(toy, scenario_set=S)
        traces.append(env.rollout(random_policy(env, 5), seed=9))
    a, b = traces
    assert a.scenario_id == b.scenario_id
    assert [r.reward for r in a.records] == [r.reward for r in b.records]
    assert all(x.energy.tobytes() == y.energy.tobytes() for x, y in zip(a.records, b.records))


def test_cycle_penalty_without_guard(toy):
    env = EmsEnv(toy, EnvConfig(cycle_repair=False, repair_cap=0))
    trace = env.rollout(lambda obs: np.r_[np.zeros(3), 1.0, np.zeros(2)], Scenario(0, 2, 1.0))
    assert abs(trace.cycle_residual[0]) > 1e-6
    assert trace.records[-1].reward.r_cycle < 0


def test_decode_maps_bounds(toy):
    env = EmsEnv(toy)
    env.reset()
    act = env.decode(np.r_[-1.0, 0.0, 1.0, 0.0, -1.0, 1.0])
    np.testing.assert_array_equal(act.load_served, [0.0, 0.5, 1.0])
    assert act.ess_power[0] == 0.0
    np.testing.assert_array_equal(act.gen_power, [0.0, 4.0])
    with pytest.raises(ValueError):
        env.decode(np.zeros(3))


def test_action_dimension_check(toy):
    env = EmsEnv(toy)
    env.reset()
    with pytest.raises(ValueError):
        env.step(Action([1.0], [0.0], [0.0]))
    with pytest.raises(ValueError):
        Action([np.nan], [], [])


def test_trace_csv(tmp_path, toy):
    env = EmsEnv(toy)
    trace = env.rollout(lambda obs: np.zeros(env.act_dim), Scenario(0, 2, 1.0))
    p = tmp_path / "t.csv"
    write_trace_csv(p, toy, trace_dicts(toy, trace))
    lines = p.read_text().splitlines()
    assert lines[0].startswith("hour,repairs,r_obj,r_ineq,r_slack,total,served_critical")
    assert len(lines) == 25
