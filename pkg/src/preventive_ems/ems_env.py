"""Episodic dispatch environment over a 24-interval horizon.

One episode runs one failure scenario. Each step takes a dispatch action,
shapes it (generation ray, storage window), solves the network with the slack
bus absorbing the imbalance, and scores the result. If any limit is still
violated the same interval is offered again, up to ``repair_cap`` times,
before the hour advances.

Observation vector layout, in order:

    (v - 1) * 10 per bus
    theta per bus                        (ac only)
    p_slack / slack band half-width
    line_p / p_lim per line
    line_q / q_lim per line              (ac only)
    state of charge per storage unit
    sin, cos of the hour angle, hour / T
    scenario mask bits
    current-hour demand / peak per load point
    previous attempt's slack excess / band half-width, repairs / repair_cap
"""

from __future__ import annotations

import csv
import logging
import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .grid_model import (
    LOAD_CLASSES,
    NetworkModel,
    Scenario,
    admittance,
    apply_scenario,
    energized_buses,
    failable_components,
)
from .power_flow import AcNetwork, DcNetwork, Dispatch, LimitChecker, PowerFlowSolution, ViolationSet
from .scenario_engine import ScenarioSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvConfig:
    repair_cap: int = 50
    k1: float = 200.0  # per MW below the slack band
    k2: float = 200.0  # per MW above the slack band
    lam_vtheta: float = 1000.0  # per p.u. / rad
    lam_pq: float = 200.0  # per MW / MVAr
    cycle_penalty: float = 200.0  # per MW of residual storage cycle sum
    nonconv_penalty: float | None = None  # None: twice the largest hourly weighted demand
    cycle_repair: bool = True
    paper_q_sign: bool = False

    def __post_init__(self):
        if self.repair_cap < 0:
            raise ValueError("repair_cap must be >= 0")
        for name in ("k1", "k2", "lam_vtheta", "lam_pq", "cycle_penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class Action:
    load_served: np.ndarray  # fraction of the interval's demand per load point
    ess_power: np.ndarray  # MW, positive = discharge
    gen_power: np.ndarray  # MW requested per generator

    def __post_init__(self):
        self.load_served = np.asarray(self.load_served, dtype=float)
        self.ess_power = np.asarray(self.ess_power, dtype=float)
        self.gen_power = np.asarray(self.gen_power, dtype=float)
        for name in ("load_served", "ess_power", "gen_power"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"action.{name} must be finite")

    def check(self, model: NetworkModel) -> None:
        want = (len(model.loads), len(model.ess_units), len(model.generators))
        got = (len(self.load_served), len(self.ess_power), len(self.gen_power))
        if want != got:
            raise ValueError(f"action dimensions {got} do not match model {want}")


@dataclass
class Observation:
    v: np.ndarray
    theta: np.ndarray
    p_slack: float
    line_p: np.ndarray
    line_q: np.ndarray
    ess_energy: np.ndarray
    soc: np.ndarray
    hour: int
    horizon: int
    mask_bits: np.ndarray
    demand_ratio: np.ndarray
    slack_feedback: float
    repairs: int

    def vector(self, env: "EmsEnv") -> np.ndarray:
        ac = env.model.kind == "ac"
        ang = 2 * math.pi * self.hour / self.horizon
        parts = [(self.v - 1.0) * 10.0]
        if ac:
            parts.append(self.theta)
        parts += [
            [self.p_slack / env.slack_scale],
            self.line_p / env.line_p_lim,
        ]
        if ac:
            parts.append(self.line_q / env.line_q_lim)
        parts += [
            self.soc,
            [math.sin(ang), math.cos(ang), self.hour / self.horizon],
            self.mask_bits,
            self.demand_ratio,
            [self.slack_feedback / env.slack_scale, self.repairs / max(1, env.config.repair_cap)],
        ]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


@dataclass
class RewardBreakdown:
    r_obj: float
    r_v_theta: float
    r_p_q: float
    r_slack: float
    r_cycle: float = 0.0
    r_nonconv: float = 0.0

    @property
    def r_ineq(self) -> float:
        return self.r_v_theta + self.r_p_q + self.r_cycle + self.r_nonconv

    @property
    def total(self) -> float:
        return self.r_obj + self.r_ineq + self.r_slack


@dataclass
class IntervalRecord:
    hour: int
    repairs: int
    action: Action
    observation: Observation
    reward: RewardBreakdown
    violations: ViolationSet
    served: np.ndarray  # MW per load point
    demand: np.ndarray
    gen: np.ndarray
    ess: np.ndarray
    energy: np.ndarray  # after the interval
    p_slack: float
    converged: bool


@dataclass
class EpisodeTrace:
    scenario_id: int
    records: list[IntervalRecord] = field(default_factory=list)
    terminal: bool = False
    attempts: int = 0
    cycle_residual: np.ndarray | None = None

    def served_by_class(self, model: NetworkModel) -> dict[str, np.ndarray]:
        out = {c: np.zeros(len(self.records)) for c in LOAD_CLASSES}
        for t, rec in enumerate(self.records):
            for ld, s in zip(model.loads, rec.served):
                out[ld.cls][t] += s
        return out

    def demand_by_class(self, model: NetworkModel) -> dict[str, np.ndarray]:
        out = {c: np.zeros(len(self.records)) for c in LOAD_CLASSES}
        for t, rec in enumerate(self.records):
            for ld, d in zip(model.loads, rec.demand):
                out[ld.cls][t] += d
        return out

    def served_fraction(self, model: NetworkModel, cls: str) -> float:
        d = self.demand_by_class(model)[cls].sum()
        return float(self.served_by_class(model)[cls].sum() / d) if d > 0 else 1.0

    def weighted_served(self, model: NetworkModel) -> float:
        w = model.load_weights()
        return float(sum(np.dot(w, rec.served) for rec in self.records) * model.dt)

    def total_reward(self) -> float:
        return float(sum(rec.reward.total for rec in self.records))


TRACE_HEADER_BASE = ["hour", "repairs", "r_obj", "r_ineq", "r_slack", "total"]


def trace_header(model: NetworkModel) -> list[str]:
    cols = list(TRACE_HEADER_BASE)
    for c in LOAD_CLASSES:
        cols += [f"served_{c}", f"demand_{c}"]
    cols += ["p_slack", "gen_total", "ess_total"]
    cols += [f"soc_{e.id}" for e in model.ess_units]
    cols += [f"gen_{g.id}" for g in model.generators]
    return cols


def trace_rows(model: NetworkModel, rows: Sequence[dict]) -> list[list[str]]:
    """Rows in ``trace_header`` order from per-interval dicts (shared with plan exports)."""
    header = trace_header(model)
    return [[_fmt(r[k]) for k in header] for r in rows]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def trace_dicts(model: NetworkModel, trace: EpisodeTrace) -> list[dict]:
    cap = np.array([e.capacity for e in model.ess_units])
    out = []
    for rec in trace.records:
        row = {
            "hour": rec.hour,
            "repairs": rec.repairs,
            "r_obj": rec.reward.r_obj,
            "r_ineq": rec.reward.r_ineq,
            "r_slack": rec.reward.r_slack,
            "total": rec.reward.total,
            "p_slack": rec.p_slack,
            "gen_total": rec.gen.sum(),
            "ess_total": rec.ess.sum(),
        }
        for c in LOAD_CLASSES:
            sel = [i for i, ld in enumerate(model.loads) if ld.cls == c]
            row[f"served_{c}"] = rec.served[sel].sum()
            row[f"demand_{c}"] = rec.demand[sel].sum()
        for e, en, cp in zip(model.ess_units, rec.energy, cap):
            row[f"soc_{e.id}"] = en / cp
        for g, p in zip(model.generators, rec.gen):
            row[f"gen_{g.id}"] = p
        out.append(row)
    return out


def write_trace_csv(path, model: NetworkModel, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(model))
        w.writerows(trace_rows(model, rows))


# --------------------------------------------------------------------------- shaping


@lru_cache(maxsize=256)
def _gen_arrays(gens: tuple) -> tuple[np.ndarray, ...]:
    avail = np.array([g.available for g in gens], dtype=bool)
    k = np.array([g.k_robust for g in gens], dtype=float)
    lo = np.array([g.p_min for g in gens], dtype=float)
    hi = np.array([g.p_max for g in gens], dtype=float)
    return avail, k, lo, hi, float(np.sum(1.0 / k[avail])) if avail.any() else 0.0


@lru_cache(maxsize=256)
def _ess_arrays(units: tuple) -> tuple[np.ndarray, ...]:
    cols = ("eta", "c_max", "d_max", "e_min", "e_max")
    return tuple(np.array([getattr(u, c) for u in units], dtype=float) for c in cols)


def project_generation(gen_request, model: NetworkModel) -> np.ndarray:
    """Place generation on the ray k_i * P_i = c with the requested total, then clip.

    Generators flagged unavailable take no part and output 0.
    """
    return _project(np.asarray(gen_request, dtype=float), *_gen_arrays(tuple(model.generators)))


def ray_level(gen_request, model: NetworkModel) -> float:
    """The common value c = k_i * P_i before clipping."""
    avail, k, _, _, inv_k = _gen_arrays(tuple(model.generators))
    return float(np.asarray(gen_request, dtype=float)[avail].sum() / inv_k)


def _project(req, avail, k, lo, hi, inv_k) -> np.ndarray:
    if not avail.any():
        raise ValueError("all generators have failed")
    c = req[avail].sum() / inv_k
    out = np.zeros(len(req))
    out[avail] = np.clip(c / k[avail], lo[avail], hi[avail])
    return out


@dataclass
class EssStep:
    energy: np.ndarray
    applied: np.ndarray
    charge_cap: np.ndarray  # next-interval limits, MW >= 0
    discharge_cap: np.ndarray


def ess_window(units: Sequence, energy, dt: float, remaining: int | None = None, e_target=None):
    """Feasible (lo, hi) MW for the coming interval; lo <= 0 <= hi unless the cycle guard forces a sign.

    Without ``remaining`` this is the plain window: discharge limited by rate
    and energy above e_min, charge by rate and headroom below e_max. With
    ``remaining`` (intervals left after this one) and ``e_target`` the energy
    after the interval must also keep e_target reachable.
    """
    return _window(np.asarray(energy, dtype=float), dt, remaining, e_target, *_ess_arrays(tuple(units)))


def _window(e, dt, remaining, e_target, eta, cmax, dmax, e_lo, e_hi):
    if remaining is not None:
        tgt = np.asarray(e_target, dtype=float)
        e_lo = np.maximum(e_lo, tgt - remaining * eta * dt * cmax)
        e_hi = np.minimum(e_hi, tgt + remaining * eta * dt * dmax)
    hi = np.minimum(dmax, (e - e_lo) / (eta * dt))
    lo = -np.minimum(cmax, (e_hi - e) / (eta * dt))
    if remaining is None:
        hi = np.maximum(hi, 0.0)
        lo = np.minimum(lo, 0.0)
    else:
        hi = np.maximum(hi, lo)
    return lo, hi


def ess_step(energy, requested, units: Sequence, dt: float = 1.0, window=None) -> EssStep:
    """Clip the request to the storage window, update energy, report the next window."""
    return _ess_step(np.asarray(energy, dtype=float), np.asarray(requested, dtype=float), dt, window,
                     _ess_arrays(tuple(units)))


def _ess_step(e, requested, dt, window, arrays) -> EssStep:
    eta, _, _, e_min, e_max = arrays
    lo, hi = window if window is not None else _window(e, dt, None, None, *arrays)
    applied = np.clip(requested, lo, hi)
    e_next = np.clip(e - eta * applied * dt, e_min, e_max)
    nlo, nhi = _window(e_next, dt, None, None, *arrays)
    return EssStep(e_next, applied, -nlo, nhi)


# --------------------------------------------------------------------------- reward


def compute_reward(
    model: NetworkModel,
    solution: PowerFlowSolution,
    violations: ViolationSet,
    served,
    config: EnvConfig = EnvConfig(),
    weights: np.ndarray | None = None,
) -> RewardBreakdown:
    w = model.load_weights() if weights is None else weights
    r_obj = float(np.dot(w, np.asarray(served, dtype=float)) * model.dt)
    r_vt = -config.lam_vtheta * violations.total("v", "theta")
    r_pq = -config.lam_pq * violations.total("line_p", "line_q")
    sb = model.slack_bus
    p = solution.p_slack
    if p < sb.slack_p_min:
        r_slack = -config.k1 * (sb.slack_p_min - p)
    elif p > sb.slack_p_max:
        r_slack = -config.k2 * (p - sb.slack_p_max)
    else:
        r_slack = 0.0
    return RewardBreakdown(r_obj, float(r_vt), float(r_pq), float(r_slack))


# --------------------------------------------------------------------------- environment


def _incidence(n_bus: int, rows: np.ndarray) -> np.ndarray:
    C = np.zeros((n_bus, len(rows)))
    C[rows, np.arange(len(rows))] = 1.0
    return C


class EmsEnv:
    """Stateful environment; one instance is strictly sequential."""

    def __init__(self, model: NetworkModel, config: EnvConfig = EnvConfig(), scenario_set: ScenarioSet | None = None):
        self.model = model
        self.config = config
        self.scenario_set = scenario_set
        idx = model.bus_index
        self.n_bus = model.n_bus
        self.load_bus = np.array([idx[ld.bus] for ld in model.loads], dtype=int)
        self.gen_bus = np.array([idx[g.bus] for g in model.generators], dtype=int)
        self.ess_bus = np.array([idx[e.bus] for e in model.ess_units], dtype=int)
        self.profiles = model.profile_matrix()
        self.q_profiles = model.q_profile_matrix()
        self.peak = np.maximum(self.profiles.max(axis=1), 1e-9) if len(model.loads) else np.zeros(0)
        self.weights = model.load_weights()
        sb = model.slack_bus
        self.slack_scale = max(1e-6, 0.5 * (sb.slack_p_max - sb.slack_p_min))
        self.line_p_lim = np.array([ln.p_lim for ln in model.lines])
        self.line_q_lim = np.array([max(ln.q_lim, 1e-6) for ln in model.lines])
        self.Cl = _incidence(self.n_bus, self.load_bus)
        self.Cg = _incidence(self.n_bus, self.gen_bus)
        self.Ce = _incidence(self.n_bus, self.ess_bus)
        self.ess_arr = _ess_arrays(tuple(model.ess_units))
        self.n_load, self.n_ess = len(model.loads), len(model.ess_units)
        self.capacity = np.array([e.capacity for e in model.ess_units])
        self.e_init = np.array([e.e_init for e in model.ess_units])
        self.n_components = len(failable_components(model))
        hourly = self.weights @ self.profiles * model.dt if len(model.loads) else np.zeros(model.horizon)
        self.nonconv_penalty = (
            config.nonconv_penalty if config.nonconv_penalty is not None else 2.0 * float(np.max(hourly, initial=1.0))
        )
        self.act_dim = len(model.loads) + len(model.ess_units) + len(model.generators)
        self._scenario: Scenario | None = None
        self.rng = np.random.default_rng(0)
        self.reset(Scenario(0, self.n_components, 1.0))
        self.obs_dim = len(self.observe().vector(self))

    # ---------------------------------------------------------------- episode control

    def reset(self, scenario: Scenario | None = None, seed: int | None = None) -> Observation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if scenario is None:
            if self.scenario_set is None:
                scenario = Scenario(0, self.n_components, 1.0)
            else:
                scenario = self.scenario_set.sample(self.rng)
        if scenario.n_components != self.n_components or scenario.mask >> self.n_components:
            raise ValueError(f"invalid scenario mask {scenario.mask_hex} for {self.n_components} components")
        if scenario != self._scenario:
            self._scenario = scenario
            self.smodel = apply_scenario(self.model, scenario)
            self.live = energized_buses(self.smodel)
            self.Y = admittance(self.smodel, require_connected=False)
            self.mask_bits = scenario.bits()
            self.load_live = self.live[self.load_bus] if len(self.load_bus) else np.zeros(0, dtype=bool)
            s = self.smodel.slack_index
            pv = {
                int(i): g.v_set
                for i, g in zip(self.gen_bus, self.smodel.generators)
                if g.available and i != s and self.live[i]
            }
            self.gen_arr = _gen_arrays(tuple(self.smodel.generators))
            self.any_gen = bool(self.gen_arr[0].any())
            if self.model.kind == "dc":
                self.net = DcNetwork(self.smodel, self.Y.G, self.live)
            else:
                self.net = AcNetwork(self.smodel, pv, self.config.paper_q_sign, self.Y, self.live)
            self.limits = LimitChecker(self.smodel, self.net.dead)
        self.hour = 0
        self.repairs = 0
        self.energy = self.e_init.copy()
        self.trace = EpisodeTrace(scenario.id)
        self.done = False
        self.last_sol: PowerFlowSolution | None = None
        self.slack_feedback = 0.0
        self.applied_sum = np.zeros(len(self.energy))
        self._window = self._compute_window()
        return self.observe()

    @property
    def scenario(self) -> Scenario:
        return self._scenario

    def observe(self) -> Observation:
        m = self.model
        sol = self.last_sol
        n, nl = m.n_bus, len(m.lines)
        t = min(self.hour, m.horizon - 1)
        return Observation(
            v=sol.v.copy() if sol is not None else np.ones(n),
            theta=sol.theta.copy() if sol is not None else np.zeros(n),
            p_slack=sol.p_slack if sol is not None else 0.0,
            line_p=sol.line_p.copy() if sol is not None else np.zeros(nl),
            line_q=sol.line_q.copy() if sol is not None else np.zeros(nl),
            ess_energy=self.energy.copy(),
            soc=self.energy / self.capacity if len(self.capacity) else np.zeros(0),
            hour=self.hour,
            horizon=m.horizon,
            mask_bits=self.mask_bits.copy(),
            demand_ratio=self.profiles[:, t] / self.peak if len(self.peak) else np.zeros(0),
            slack_feedback=self.slack_feedback,
            repairs=self.repairs,
        )

    def window(self) -> tuple[np.ndarray, np.ndarray]:
        """Storage power window for the current interval (cycle guard included when enabled)."""
        return self._window

    def _compute_window(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.model
        if self.config.cycle_repair:
            return _window(self.energy, m.dt, m.horizon - 1 - self.hour, self.e_init, *self.ess_arr)
        return _window(self.energy, m.dt, None, None, *self.ess_arr)

    # ---------------------------------------------------------------- actions

    def decode(self, a) -> Action:
        """Map a normalized action in [-1, 1]^d to physical set-points."""
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        if a.shape != (self.act_dim,):
            raise ValueError(f"expected action of length {self.act_dim}, got {a.shape}")
        nl, ne = self.n_load, self.n_ess
        frac = np.clip(a[:nl] + 0.5, 0.0, 1.0)
        u = a[nl : nl + ne]
        lo, hi = self._window
        ess = np.where(u > 0, u * np.maximum(hi, 0.0), -u * np.minimum(lo, 0.0))
        _, _, gmin, gmax, _ = self.gen_arr
        gen = gmin + np.clip(a[nl + ne :] + 0.5, 0.0, 1.0) * (gmax - gmin)
        act = Action.__new__(Action)
        act.load_served, act.ess_power, act.gen_power = frac, ess, gen
        return act

    def step(self, action) -> tuple[Observation, RewardBreakdown, bool, dict]:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        if not isinstance(action, Action):
            action = self.decode(action)
        else:
            action.check(self.model)
        m, sm = self.model, self.smodel
        t = self.hour
        demand = self.profiles[:, t]
        frac = np.clip(action.load_served, 0.0, 1.0) * self.load_live
        served = frac * demand
        # with every generator failed the slack band is the only supply
        gen = _project(action.gen_power, *self.gen_arr) if self.any_gen else np.zeros(len(action.gen_power))
        ess = _ess_step(self.energy, action.ess_power, m.dt, self._window, self.ess_arr)

        p = self.Cg @ gen - self.Cl @ served + self.Ce @ ess.applied
        if m.kind == "dc":
            sol = self.net.solve(p)
        else:
            sol = self.net.solve(p, -(self.Cl @ (frac * self.q_profiles[:, t])))

        info: dict = {"hour": t, "converged": sol.converged}
        if sol.converged:
            viol = self.limits.check(sol, Dispatch(gen))
            reward = compute_reward(sm, sol, viol, served, self.config, self.weights)
            sb = sm.slack_bus
            self.slack_feedback = sol.p_slack - float(np.clip(sol.p_slack, sb.slack_p_min, sb.slack_p_max))
            self.last_sol = sol
        else:
            viol = ViolationSet()
            reward = RewardBreakdown(0.0, 0.0, 0.0, 0.0, r_nonconv=-self.nonconv_penalty)
            log.info("interval %d of scenario %x infeasible: %s", t, self._scenario.id, sol.message)
            info["message"] = sol.message
        self.trace.attempts += 1
        info["violations"] = viol

        if sol.converged and viol and self.repairs < self.config.repair_cap:
            self.repairs += 1
            reward = replace(reward, r_obj=0.0)
            info.update(accepted=False, repairs=self.repairs, slack_excess=self.slack_feedback)
            return self.observe(), reward, False, info

        self.energy = ess.energy
        self.applied_sum = self.applied_sum + ess.applied
        rec = IntervalRecord(
            hour=t,
            repairs=self.repairs,
            action=action,
            observation=None,  # filled below
            reward=reward,
            violations=viol,
            served=served,
            demand=demand.copy(),
            gen=gen,
            ess=ess.applied,
            energy=ess.energy.copy(),
            p_slack=sol.p_slack if sol.converged else float("nan"),
            converged=sol.converged,
        )
        info.update(accepted=True, repairs=self.repairs)
        self.hour += 1
        self.repairs = 0
        if self.hour < m.horizon:
            self._window = self._compute_window()
        self.slack_feedback = 0.0
        if self.hour >= m.horizon:
            self.done = True
            self.trace.terminal = True
            residual = self.applied_sum.copy()
            self.trace.cycle_residual = residual
            info["cycle_residual"] = residual
            excess = np.maximum(np.abs(residual) - 1e-6, 0.0).sum()
            if excess > 0:
                reward = replace(reward, r_cycle=-self.config.cycle_penalty * float(excess))
                rec.reward = reward
        obs = self.observe()
        rec.observation = obs
        self.trace.records.append(rec)
        return obs, reward, self.done, info

    def rollout(self, policy, scenario: Scenario | None = None, seed: int | None = None) -> EpisodeTrace:
        """Run one episode with ``policy(obs_vector) -> normalized action``."""
        obs = self.reset(scenario, seed)
        done = False
        while not done:
            obs, _, done, _ = self.step(policy(obs.vector(self)))
        return self.trace
