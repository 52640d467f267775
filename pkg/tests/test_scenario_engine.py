import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import full_oracle, tail_oracle
from preventive_ems.grid_model import Scenario, load_case
from preventive_ems.scenario_engine import (
    EnumerationTooLarge,
    ScenarioEvaluationError,
    cvar_alpha,
    enumerate_scenarios,
    loss,
    model_scenarios,
    risk_from_served,
    risk_report,
    scenario_probability,
    single_scenario_set,
    var_alpha,
    write_scenarios_csv,
)

ALPHAS = (0.5, 0.9, 0.95, 0.99)


def var_oracle(losses, probs, alpha):
    pts = sorted(set(losses))
    for x in pts:
        if sum(p for l, p in zip(losses, probs) if l <= x) >= alpha - 1e-12:
            return x
    return pts[-1]


distributions = st.integers(1, 16).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
    )
)


def normalized(raw):
    p = np.asarray(raw, dtype=float)
    return p / p.sum()


def test_two_component_enumeration():
    s = enumerate_scenarios([0.05, 0.075], threshold=0.0)
    got = sorted(x.probability for x in s)
    assert got == pytest.approx(sorted([0.87875, 0.07125, 0.04625, 0.00375]), abs=1e-15)
    assert {x.mask: x.probability for x in s}[1] == pytest.approx(0.05 * 0.925, abs=1e-15)
    assert s.dropped_mass == 0.0


def test_all_zero_pofs_single_scenario():
    s = enumerate_scenarios([0.0, 0.0, 0.0], threshold=0.0005)
    assert [(x.mask, x.probability) for x in s] == [(0, 1.0)]
    assert s.dropped_mass == 0.0


def test_mvdc12_threshold_matches_full_enumeration():
    m = load_case("mvdc12")
    pofs = [g.pof for g in m.generators]
    s = model_scenarios(m, 0.0005)
    oracle = full_oracle(pofs)
    kept = {k: v for k, v in oracle.items() if v >= 0.0005}
    assert {x.mask: x.probability for x in s} == kept
    assert len(s) == 106
    assert abs(sum(kept.values()) + s.dropped_mass - 1.0) < 1e-9
    # three-failure scenarios sit just below the threshold, so the pruned mass is a few percent
    assert s.dropped_mass == pytest.approx(math.fsum(v for v in oracle.values() if v < 0.0005), abs=1e-15)
    assert s.dropped_mass == pytest.approx(0.0326750370459, abs=1e-12)


def test_threshold_extremes():
    s0 = enumerate_scenarios([0.1, 0.2, 0.3], threshold=0.0)
    assert len(s0) == 8
    s1 = enumerate_scenarios([0.1, 0.2, 0.3], threshold=1.0)
    assert len(s1) == 0
    assert s1.dropped_mass == pytest.approx(1.0, abs=1e-12)


def test_enumeration_guard():
    with pytest.raises(EnumerationTooLarge):
        enumerate_scenarios([0.01] * 30)


def test_invalid_pof_rejected():
    with pytest.raises(ValueError):
        enumerate_scenarios([1.0])


@given(st.lists(st.floats(0.0, 0.5), min_size=1, max_size=10), st.floats(0.0, 0.2))
@settings(max_examples=80, deadline=None)
def test_pruning_soundness(pofs, threshold):
    s = enumerate_scenarios(pofs, threshold)
    oracle = full_oracle(pofs)
    for x in s:
        assert x.probability >= threshold
        assert x.probability == scenario_probability(pofs, x.mask)
        assert abs(x.probability - oracle[x.mask]) <= 1e-15
    assert {x.mask for x in s} == {k for k, v in oracle.items() if v >= threshold}
    assert abs(sum(s.probabilities) + s.dropped_mass - 1.0) < 1e-9
    if len(s):
        assert abs(s.weights.sum() - 1.0) < 1e-12


def test_loss_examples():
    assert loss(100, 100) == 0
    assert loss(80, 100) == 20
    assert loss(110, 100) == -10


def test_var_examples():
    assert var_alpha([0, 10], [0.9, 0.1], 0.9) == 0
    for a in ALPHAS:
        assert var_alpha([5.0], [1.0], a) == 5.0
    assert var_alpha([1, 2, 3], [1 / 3] * 3, 0.5) == 2


def test_cvar_examples():
    assert cvar_alpha([0, 10], [0.9, 0.1], 0.9) == pytest.approx(10, abs=1e-12)
    for a in ALPHAS:
        assert cvar_alpha([7.5] * 4, [0.25] * 4, a) == pytest.approx(7.5, abs=1e-12)
    assert cvar_alpha(list(range(1, 101)), [0.01] * 100, 0.95) == pytest.approx(98, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_alpha_outside_open_interval(alpha):
    with pytest.raises(ValueError):
        cvar_alpha([1.0], [1.0], alpha)


def test_probabilities_must_sum_to_one():
    with pytest.raises(ValueError):
        var_alpha([1.0, 2.0], [0.3, 0.3], 0.9)


@given(distributions, st.sampled_from([0.9, 0.95, 0.99]))
@settings(max_examples=200, deadline=None)
def test_cvar_matches_tail_oracle(dist, alpha):
    x, raw = dist
    p = normalized(raw)
    assert abs(cvar_alpha(x, p, alpha) - tail_oracle(x, list(p), alpha)) < 1e-9 * max(1.0, max(map(abs, x)))
    assert var_alpha(x, p, alpha) == var_oracle(x, list(p), alpha)


@given(distributions, st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_cvar_dominates_var_and_mean(dist, alpha):
    x, raw = dist
    p = normalized(raw)
    c, v = cvar_alpha(x, p, alpha), var_alpha(x, p, alpha)
    tol = 1e-9 * max(1.0, max(map(abs, x)))
    assert c >= v - tol
    assert c >= float(np.dot(p, x)) - tol


@given(distributions, st.floats(0.01, 0.98), st.floats(0.0, 0.98))
@settings(max_examples=200, deadline=None)
def test_cvar_monotone_in_alpha(dist, a1, gap):
    x, raw = dist
    p = normalized(raw)
    a2 = min(0.99, a1 + gap * (0.99 - a1))
    assume(a2 >= a1)
    tol = 1e-12 * max(1.0, max(map(abs, x)))
    assert cvar_alpha(x, p, a1) <= cvar_alpha(x, p, a2) + tol


@given(distributions, st.sampled_from(ALPHAS), st.integers(-64, 64))
@settings(max_examples=200, deadline=None)
def test_translation_equivariance(dist, alpha, shift):
    # integer losses and shifts keep the VaR shift exact
    x, raw = dist
    x = [float(round(v)) for v in x]
    p = normalized(raw)
    y = [v + shift for v in x]
    assert var_alpha(y, p, alpha) == var_alpha(x, p, alpha) + shift
    assert cvar_alpha(y, p, alpha) == pytest.approx(cvar_alpha(x, p, alpha) + shift, abs=1e-12 * 200)


def test_risk_report_constant_dispatch():
    s = enumerate_scenarios([0.1, 0.2], 0.0)
    rep = risk_report(None, s, lambda sc: 42.0, 0.95)
    assert rep.cvar == 0 and rep.var == 0
    assert all(l == 0 for _, l, _ in rep.per_scenario_loss)


def test_risk_report_two_scenarios():
    rep = risk_from_served([0, 1], [100.0, 80.0], [0.9, 0.1], 0.9)
    assert rep.expected_weighted == pytest.approx(98.0)
    assert [l for _, l, _ in rep.per_scenario_loss] == pytest.approx([-2.0, 18.0])
    assert rep.cvar == pytest.approx(18.0)
    assert rep.cvar >= rep.var


def test_risk_report_wraps_dispatch_errors():
    s = enumerate_scenarios([0.1], 0.0)

    def boom(sc):
        if sc.mask:
            raise RuntimeError("no")
        return 1.0

    with pytest.raises(ScenarioEvaluationError) as err:
        risk_report(None, s, boom)
    assert err.value.scenario_id == 1


def test_risk_report_rejects_mismatched_model():
    with pytest.raises(ValueError):
        risk_report(load_case("toy3"), enumerate_scenarios([0.1] * 3, 0.0), lambda s: 0.0)


def test_single_scenario_set_cvar_equals_its_loss():
    s = single_scenario_set(Scenario(0, 2, 0.9))
    rep = risk_report(None, s, lambda sc: 12.0, 0.95)
    assert rep.cvar == 0.0 and len(rep.per_scenario_loss) == 1


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.9, 0.95]))
@settings(max_examples=40, deadline=None)
def test_pruned_cvar_close_to_full_cvar(seed, alpha):
    # the retained set shifts both the expectation and the tail; the gap is bounded by
    # the expectation shift plus the pruned mass spread over the tail
    rng = np.random.default_rng(seed)
    pofs = rng.uniform(0.01, 0.2, 10)
    served = {m: float(v) for m, v in enumerate(rng.uniform(0, 100, 1 << 10))}
    full = enumerate_scenarios(pofs, 0.0)
    kept = enumerate_scenarios(pofs, 0.001)
    rf = risk_report(None, full, lambda s: served[s.mask], alpha)
    rk = risk_report(None, kept, lambda s: served[s.mask], alpha)
    spread = max(served.values()) - min(served.values())
    bound = abs(rf.expected_weighted - rk.expected_weighted) + kept.dropped_mass * spread / (1 - alpha)
    assert abs(rf.cvar - rk.cvar) <= bound + 1e-9


def test_scenarios_csv(tmp_path):
    s = enumerate_scenarios([0.05, 0.075], 0.0)
    p = tmp_path / "s.csv"
    write_scenarios_csv(p, s, [0.0, 1.0, 2.0, 3.0])
    rows = p.read_text().splitlines()
    assert rows[0] == "mask_hex,probability,loss"
    assert rows[1].startswith("0,0.87875")
    assert len(rows) == 5
