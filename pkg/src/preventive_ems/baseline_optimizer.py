"""Linear-programming benchmark dispatch on the linearized network, plus a grid-search oracle.

The network is linearized around flat voltage: DC systems use
P_i = base * sum_k G_ik u_k with u = V - 1, AC systems the lossless angle form
P_i = -base * sum_k B_ik theta_k. Generation follows the clipped ray
P_i = clip(c / k_i, p_min, p_max), encoded as a piecewise-linear function of
the ray level c with one variable per segment between breakpoints.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .grid_model import LOAD_CLASSES, NetworkModel, Scenario, all_available, apply_scenario, energized_buses, admittance
from .scenario_engine import RiskReport, ScenarioSet, cvar_alpha, risk_from_served, single_scenario_set
from .simplex import LpBuilder, LpResult, complementary_slackness, solve_lp

RAY_TIE_BREAK = 1e-6  # cost per unit of ray level, relative to the smallest load weight
STATUSES = ("optimal", "infeasible", "iteration-limit")


class OracleTooLarge(ValueError):
    pass


@dataclass
class DispatchPlan:
    status: str
    objective: float
    seconds: float
    served: np.ndarray  # (T, loads) MW
    gen: np.ndarray  # (T, generators) MW
    ess: np.ndarray  # (T, ess) MW, positive = discharge
    energy: np.ndarray  # (T, ess) MWh after each interval
    p_slack: np.ndarray  # (T,)
    demand: np.ndarray  # (T, loads)
    method: str = ""
    iterations: int = 0
    ray_level: np.ndarray | None = None
    ray_residual: float = 0.0
    cs_residual: float = float("nan")
    scenario_ids: list[int] = field(default_factory=list)
    scenario_weights: np.ndarray | None = None
    scenario_served: np.ndarray | None = None  # (S, T, loads)
    scenario_gen: np.ndarray | None = None
    scenario_slack: np.ndarray | None = None
    weighted_by_scenario: np.ndarray | None = None
    epigraph_cvar: float = float("nan")
    beta: float = float("nan")
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def served_by_class(self, model: NetworkModel) -> dict[str, np.ndarray]:
        cls = np.array([ld.cls for ld in model.loads])
        return {c: self.served[:, cls == c].sum(axis=1) for c in LOAD_CLASSES}

    def rows(self, model: NetworkModel) -> list[dict]:
        """Per-interval dicts in the episode-trace CSV schema."""
        w = model.load_weights()
        cls = np.array([ld.cls for ld in model.loads])
        cap = np.array([e.capacity for e in model.ess_units])
        out = []
        for t in range(len(self.served)):
            r_obj = float(w @ self.served[t] * model.dt)
            row = {
                "hour": t, "repairs": 0, "r_obj": r_obj, "r_ineq": 0.0, "r_slack": 0.0, "total": r_obj,
                "p_slack": self.p_slack[t], "gen_total": self.gen[t].sum(), "ess_total": self.ess[t].sum(),
            }
            for c in LOAD_CLASSES:
                row[f"served_{c}"] = self.served[t, cls == c].sum()
                row[f"demand_{c}"] = self.demand[t, cls == c].sum()
            for e, en, cp in zip(model.ess_units, self.energy[t], cap):
                row[f"soc_{e.id}"] = en / cp
            for g, p in zip(model.generators, self.gen[t]):
                row[f"gen_{g.id}"] = p
            out.append(row)
        return out


def _failed_plan(model: NetworkModel, status: str, seconds: float, method: str, message: str = "") -> DispatchPlan:
    T = model.horizon
    z = lambda n: np.zeros((T, n))  # noqa: E731
    return DispatchPlan(
        status, float("nan"), seconds, z(len(model.loads)), z(len(model.generators)), z(len(model.ess_units)),
        z(len(model.ess_units)), np.zeros(T), model.profile_matrix().T.copy(), method, message=message,
    )


# --------------------------------------------------------------------------- ray segments


@dataclass
class RaySegments:
    """Piecewise-linear map from ray level c to unit outputs: P = base_out + slopes @ delta."""

    units: np.ndarray  # generator indices on the ray
    c_lo: float
    lengths: np.ndarray
    slopes: np.ndarray  # (units, segments)
    base_out: np.ndarray

    def outputs(self, c: float, k, lo, hi) -> np.ndarray:
        return np.clip(c / k[self.units], lo[self.units], hi[self.units])


def ray_segments(k, p_min, p_max) -> RaySegments:
    k, lo, hi = (np.asarray(a, dtype=float) for a in (k, p_min, p_max))
    units = np.arange(len(k))
    inv = float(np.sum(1.0 / k)) if len(k) else 0.0
    if not len(k):
        return RaySegments(units, 0.0, np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    c_lo, c_hi = lo.sum() / inv, hi.sum() / inv
    pts = np.concatenate([[c_lo, c_hi], k * lo, k * hi])
    pts = np.unique(pts[(pts >= c_lo) & (pts <= c_hi)])
    lengths = np.diff(pts)
    mid = 0.5 * (pts[:-1] + pts[1:])
    slopes = ((mid[None, :] > k[:, None] * lo[:, None]) & (mid[None, :] < k[:, None] * hi[:, None])) / k[:, None]
    return RaySegments(units, float(c_lo), lengths, slopes.astype(float), np.clip(c_lo / k, lo, hi))


# --------------------------------------------------------------------------- LP assembly


def _network(model: NetworkModel):
    """Bus matrix M (MW per unit of bus state), branch coefficients and bus-state bounds."""
    Y = admittance(model, require_connected=False)
    base = model.base_mva
    on = np.array([ln.in_service for ln in model.lines], dtype=float)
    if model.kind == "dc":
        M = Y.G * base
        coef = np.array([ln.g for ln in model.lines]) * on * base
        lo = np.array([b.v_min - 1.0 for b in model.buses])
        hi = np.array([b.v_max - 1.0 for b in model.buses])
    else:
        M = -Y.B * base
        coef = -np.array([ln.b for ln in model.lines]) * on * base
        lo = np.array([b.theta_min for b in model.buses])
        hi = np.array([b.theta_max for b in model.buses])
    return M, coef, lo, hi


class _Recourse:
    """Variables and constraints of one scenario's wait-and-see dispatch."""

    def __init__(self, lp: LpBuilder, tag: str, smodel: NetworkModel, demand: np.ndarray, ess_idx: np.ndarray,
                 ray: bool, tie_cost: float):
        T = smodel.horizon
        n, L, NG = smodel.n_bus, len(smodel.loads), len(smodel.generators)
        idx = smodel.bus_index
        live = energized_buses(smodel)
        load_bus = np.array([idx[ld.bus] for ld in smodel.loads], dtype=int)
        gen_bus = np.array([idx[g.bus] for g in smodel.generators], dtype=int)
        ess_bus = np.array([idx[e.bus] for e in smodel.ess_units], dtype=int)
        s = smodel.slack_index
        sb = smodel.slack_bus
        M, coef, x_lo, x_hi = _network(smodel)

        load_ub = demand * (live[load_bus][None, :] if L else 1.0)
        self.x = lp.add(f"{tag}/served", (T, L), 0.0, load_ub)
        g_lo = np.array([g.p_min for g in smodel.generators])
        g_hi = np.array([g.p_max for g in smodel.generators])
        on = np.array([g.available for g in smodel.generators], dtype=bool) & (live[gen_bus] if NG else True)
        self.g = lp.add(f"{tag}/gen", (T, NG), g_lo, g_hi)
        x_lo = np.where(live, x_lo, 0.0)
        x_hi = np.where(live, x_hi, 0.0)
        x_lo[s] = x_hi[s] = 0.0
        self.state = lp.add(f"{tag}/state", (T, n), np.broadcast_to(x_lo, (T, n)), np.broadcast_to(x_hi, (T, n)))
        self.slack = lp.add(f"{tag}/slack", T, sb.slack_p_min, sb.slack_p_max)
        self.seg = None
        self.ray_units = np.zeros(0, dtype=int)
        self.k = np.array([g.k_robust for g in smodel.generators])
        self.g_lo, self.g_hi = g_lo, g_hi
        if ray and on.any():
            units = np.where(on)[0]
            segs = ray_segments(self.k[units], g_lo[units], g_hi[units])
            self.seg = segs
            self.ray_units = units
            J = len(segs.lengths)
            self.delta = lp.add(f"{tag}/ray", (T, J), 0.0, np.broadcast_to(segs.lengths, (T, J)), tie_cost)
            # g_u - sum_j slope_uj delta_j = base_out_u
            U = len(units)
            ui, jj = np.nonzero(segs.slopes)
            tt = np.repeat(np.arange(T), len(ui))
            lp.rows(
                "eq",
                np.concatenate([np.arange(T * U), tt * U + np.tile(ui, T)]),
                np.concatenate([self.g[:, units].ravel(), self.delta[tt, np.tile(jj, T)]]),
                np.concatenate([np.ones(T * U), -np.tile(segs.slopes[ui, jj], T)]),
                np.tile(segs.base_out, T),
            )
        # bus balance: gen - served + ess + slack - M @ state = 0
        rows, cols, vals = [], [], []
        for t in range(T):
            base_row = t * n
            rows += [base_row + gen_bus, base_row + load_bus, base_row + ess_bus, [base_row + s]]
            cols += [self.g[t], self.x[t], ess_idx[t] if len(ess_bus) else np.zeros(0, dtype=int), [self.slack[t]]]
            vals += [np.ones(NG), -np.ones(L), np.ones(len(ess_bus)), [1.0]]
            mi, mk = np.nonzero(M)
            rows.append(base_row + mi)
            cols.append(self.state[t, mk])
            vals.append(-M[mi, mk])
        lp.rows("eq", np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), np.zeros(T * n))
        # line limits: |coef (x_f - x_t)| <= p_lim
        fi = np.array([idx[ln.from_bus] for ln in smodel.lines], dtype=int)
        ti = np.array([idx[ln.to_bus] for ln in smodel.lines], dtype=int)
        plim = np.array([ln.p_lim for ln in smodel.lines])
        act = np.where(coef != 0.0)[0]
        if len(act):
            nl = len(act)
            for sign in (1.0, -1.0):
                r = np.arange(T * nl)
                tt = np.repeat(np.arange(T), nl)
                li = np.tile(act, T)
                lp.rows("ub", np.concatenate([r, r]),
                        np.concatenate([self.state[tt, fi[li]], self.state[tt, ti[li]]]),
                        np.concatenate([sign * coef[li], -sign * coef[li]]), plim[li])
        self.weights = smodel.load_weights()
        self.dt = smodel.dt

    def weighted_row(self) -> tuple[np.ndarray, np.ndarray]:
        """Columns and coefficients of the weighted served energy."""
        T = self.x.shape[0]
        return self.x.ravel(), np.tile(self.weights * self.dt, T)

    def extract(self, xv: np.ndarray):
        served = xv[self.x]
        gen = xv[self.g]
        slack = xv[self.slack]
        c = None
        residual = 0.0
        if self.seg is not None:
            c = self.seg.c_lo + xv[self.delta].sum(axis=1)
            ray = np.clip(c[:, None] / self.k[self.ray_units], self.g_lo[self.ray_units], self.g_hi[self.ray_units])
            residual = float(np.max(np.abs(ray - gen[:, self.ray_units]), initial=0.0))
        return served, gen, slack, c, residual


def _ess_block(lp: LpBuilder, model: NetworkModel, fixed_ess: np.ndarray | None):
    T, NE = model.horizon, len(model.ess_units)
    u = model.ess_units
    c_max = np.array([e.c_max for e in u])
    d_max = np.array([e.d_max for e in u])
    eta = np.array([e.eta for e in u])
    if fixed_ess is not None:
        lo = hi = np.asarray(fixed_ess, dtype=float)
    else:
        lo, hi = np.broadcast_to(-c_max, (T, NE)), np.broadcast_to(d_max, (T, NE))
    P = lp.add("ess/power", (T, NE), lo, hi)
    E = lp.add("ess/energy", (T, NE), np.array([e.e_min for e in u]), np.array([e.e_max for e in u]))
    if NE:
        e0 = np.array([e.e_init for e in u])
        # E_t - E_{t-1} + eta dt P_t = 0
        for t in range(T):
            r = np.arange(NE)
            if t == 0:
                lp.rows("eq", np.concatenate([r, r]), np.concatenate([E[0], P[0]]),
                        np.concatenate([np.ones(NE), eta * model.dt]), e0)
            else:
                lp.rows("eq", np.concatenate([r, r, r]), np.concatenate([E[t], E[t - 1], P[t]]),
                        np.concatenate([np.ones(NE), -np.ones(NE), eta * model.dt]), np.zeros(NE))
        # cycling: sum_t P_t = 0
        lp.rows("eq", np.tile(np.arange(NE), T), P.ravel(), 1.0, np.zeros(NE))
    return P, E


def _tie_cost(model: NetworkModel) -> float:
    w = model.load_weights()
    return RAY_TIE_BREAK * (float(w.min()) if len(w) else 1.0) * model.dt


def _solve(lp: LpBuilder, method: str) -> tuple[LpResult, float]:
    prog = lp.build()
    res = solve_lp(prog, method)
    cs = complementary_slackness(prog, res) if res.status == "optimal" else float("nan")
    return res, cs


def solve_deterministic(
    model: NetworkModel,
    profiles: np.ndarray | None = None,
    scenario: Scenario | None = None,
    ray: bool = True,
    fixed_ess: np.ndarray | None = None,
    method: str = "auto",
) -> DispatchPlan:
    """Maximize weighted served energy over the horizon for one (possibly failed) network state.

    ``profiles`` overrides the load profiles (loads x T MW); ``fixed_ess``
    pins the storage schedule (T x ess MW) so only the recourse is optimized.
    """
    t0 = time.perf_counter()
    smodel = apply_scenario(model, scenario) if scenario is not None else model
    demand = (model.profile_matrix() if profiles is None else np.asarray(profiles, dtype=float)).T
    if demand.shape != (model.horizon, len(model.loads)):
        raise ValueError(f"profiles must be loads x horizon, got {demand.T.shape}")
    lp = LpBuilder()
    P, E = _ess_block(lp, model, fixed_ess)
    rec = _Recourse(lp, "s0", smodel, demand, P, ray, _tie_cost(model))
    cols, coef = rec.weighted_row()
    lp.cost(cols, -coef)
    res, cs = _solve(lp, method)
    secs = time.perf_counter() - t0
    if res.status != "optimal":
        return _failed_plan(model, res.status if res.status in STATUSES else "infeasible", secs, res.method, res.message)
    xv = res.x
    served, gen, slack, c, resid = rec.extract(xv)
    served = np.clip(served, 0.0, demand)
    w = model.load_weights()
    return DispatchPlan(
        status="optimal",
        objective=float(np.sum(served @ w) * model.dt),
        seconds=secs,
        served=served,
        gen=gen,
        ess=xv[P],
        energy=xv[E],
        p_slack=slack,
        demand=demand,
        method=res.method,
        iterations=res.iterations,
        ray_level=c,
        ray_residual=resid,
        cs_residual=cs,
        scenario_ids=[scenario.id if scenario is not None else 0],
    )


def solve_base_ems(model: NetworkModel, method: str = "auto") -> DispatchPlan:
    """Non-resilient reference: nominal network, no failures, generators free up to their limits."""
    return solve_deterministic(model, scenario=all_available(model), ray=False, method=method)


def solve_scenario_based(
    model: NetworkModel,
    scenario_set: ScenarioSet,
    alpha: float = 0.95,
    risk_weight: float = 0.5,
    method: str = "auto",
) -> tuple[DispatchPlan, RiskReport | None]:
    """One storage schedule shared by all scenarios, per-scenario load and generation recourse.

    Maximizes (expected weighted served) - risk_weight * CVaR_alpha(loss), with
    loss_s = E[served] - served_s, through the epigraph variables beta and z_s.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 <= risk_weight <= 1:
        raise ValueError("risk_weight must lie in [0, 1]")
    if not len(scenario_set):
        raise ValueError("scenario set is empty")
    t0 = time.perf_counter()
    T = model.horizon
    demand = model.profile_matrix().T
    weights = scenario_set.weights
    weights = weights / weights.sum()
    lp = LpBuilder()
    P, E = _ess_block(lp, model, None)
    tie = _tie_cost(model)
    recs = []
    for i, (sc, p) in enumerate(zip(scenario_set, weights)):
        recs.append(_Recourse(lp, f"s{i}", apply_scenario(model, sc), demand, P, True, tie))
    S = len(recs)
    served_var = lp.add("served_total", S, -np.inf, np.inf)
    beta = lp.add("beta", 1, -np.inf, np.inf)
    z = lp.add("shortfall", S, 0.0, np.inf)
    mean = lp.add("expected", 1, -np.inf, np.inf)
    # served_total_s = weighted served of scenario s
    for i, rec in enumerate(recs):
        cols, coef = rec.weighted_row()
        lp.rows("eq", np.zeros(len(cols) + 1, dtype=int), np.concatenate([cols, [served_var[i]]]),
                np.concatenate([coef, [-1.0]]), [0.0])
    lp.rows("eq", np.zeros(S + 1, dtype=int), np.concatenate([served_var, mean]),
            np.concatenate([weights, [-1.0]]), [0.0])
    # z_s >= (mean - served_s) - beta
    r = np.arange(S)
    lp.rows("ub", np.concatenate([r, r, r, r]),
            np.concatenate([np.full(S, mean[0]), served_var, np.full(S, beta[0]), z]),
            np.concatenate([np.ones(S), -np.ones(S), -np.ones(S), -np.ones(S)]), np.zeros(S))
    lp.cost(mean, -1.0)
    lp.cost(beta, risk_weight)
    lp.cost(z, risk_weight * weights / (1.0 - alpha))
    res, cs = _solve(lp, method if method != "auto" else "highs" if S > 1 or T * len(model.loads) > 60 else "auto")
    secs = time.perf_counter() - t0
    if res.status != "optimal":
        plan = _failed_plan(model, res.status if res.status in STATUSES else "infeasible", secs, res.method, res.message)
        plan.message = _diagnose(model, scenario_set, P) or plan.message
        return plan, None
    xv = res.x
    parts = [rec.extract(xv) for rec in recs]
    served_s = np.stack([np.clip(p[0], 0.0, demand) for p in parts])
    gen_s = np.stack([p[1] for p in parts])
    slack_s = np.stack([p[2] for p in parts])
    w_load = model.load_weights()
    weighted = np.einsum("stl,l->s", served_s, w_load) * model.dt
    ids = [sc.id for sc in scenario_set]
    risk = risk_from_served(ids, weighted, weights, alpha)
    epi = float(xv[beta[0]] + np.dot(weights, xv[z]) / (1.0 - alpha))
    plan = DispatchPlan(
        status="optimal",
        objective=float(np.dot(weights, weighted)),
        seconds=secs,
        served=np.einsum("s,stl->tl", weights, served_s),
        gen=np.einsum("s,stg->tg", weights, gen_s),
        ess=xv[P],
        energy=xv[E],
        p_slack=weights @ slack_s,
        demand=demand,
        method=res.method,
        iterations=res.iterations,
        ray_residual=max(p[4] for p in parts),
        cs_residual=cs,
        scenario_ids=ids,
        scenario_weights=weights,
        scenario_served=served_s,
        scenario_gen=gen_s,
        scenario_slack=slack_s,
        weighted_by_scenario=weighted,
        epigraph_cvar=epi,
        beta=float(xv[beta[0]]),
    )
    return plan, risk


def _diagnose(model: NetworkModel, scenario_set: ScenarioSet, _P) -> str:
    """Name the scenarios that are infeasible on their own."""
    bad = [
        sc.mask_hex for sc in scenario_set
        if solve_deterministic(model, scenario=sc, method="highs").status != "optimal"
    ]
    return f"infeasible under scenario(s) {', '.join(bad)}" if bad else ""


def evaluate_plan(model: NetworkModel, plan: DispatchPlan, scenario: Scenario, method: str = "auto") -> DispatchPlan:
    """Re-optimize loads and generation for ``scenario`` with the plan's storage schedule held fixed."""
    return solve_deterministic(model, scenario=scenario, fixed_ess=plan.ess, method=method)


def plan_scenario_set(model: NetworkModel, scenario: Scenario | None = None) -> ScenarioSet:
    return single_scenario_set(scenario if scenario is not None else all_available(model))


# --------------------------------------------------------------------------- oracle


def brute_force_oracle(
    model: NetworkModel,
    resolution: float = 0.25,
    ray_points: int = 41,
    ess_points: int = 9,
    scenario: Scenario | None = None,
    ray: bool = True,
    max_states: int = 2_000_000,
    tol: float = 1e-9,
) -> DispatchPlan:
    """Exhaustive search over load fractions on a grid of step ``resolution``,
    ray levels and storage powers, checked against the same linearized network.

    Intervals couple only through storage, so storage schedules are enumerated
    jointly (the last interval closes the cycle) and each interval is searched
    independently for every storage value it sees.
    """
    if model.n_bus > 3:
        raise OracleTooLarge("oracle is limited to 3 buses")
    if not 0 < resolution <= 1 or abs(round(1 / resolution) - 1 / resolution) > 1e-9:
        raise ValueError("resolution must divide 1")
    t0 = time.perf_counter()
    smodel = apply_scenario(model, scenario) if scenario is not None else model
    T, L, NG, NE = model.horizon, len(model.loads), len(model.generators), len(model.ess_units)
    fr = np.linspace(0.0, 1.0, int(round(1 / resolution)) + 1)
    idx = smodel.bus_index
    live = energized_buses(smodel)
    load_bus = np.array([idx[ld.bus] for ld in smodel.loads], dtype=int)
    gen_bus = np.array([idx[g.bus] for g in smodel.generators], dtype=int)
    ess_bus = np.array([idx[e.bus] for e in smodel.ess_units], dtype=int)
    k = np.array([g.k_robust for g in smodel.generators])
    g_lo = np.array([g.p_min for g in smodel.generators])
    g_hi = np.array([g.p_max for g in smodel.generators])
    on = np.array([g.available for g in smodel.generators], dtype=bool) & (live[gen_bus] if NG else True)

    # candidate generation vectors
    if ray and on.any():
        inv = float(np.sum(1.0 / k[on]))
        cs = np.linspace(g_lo[on].sum() / inv, g_hi[on].sum() / inv, ray_points)
        gens = np.zeros((len(cs), NG))
        gens[:, on] = np.clip(cs[:, None] / k[on], g_lo[on], g_hi[on])
        gens[:, ~on] = g_lo[~on]
    else:
        axes = [np.linspace(g_lo[i], g_hi[i], ray_points) if on[i] else np.array([g_lo[i]]) for i in range(NG)]
        gens = np.array(list(itertools.product(*axes))) if NG else np.zeros((1, 0))
    fracs = np.array(list(itertools.product(fr, repeat=L))) if L else np.zeros((1, 0))

    # storage schedules
    u = model.ess_units
    if NE:
        eta = np.array([e.eta for e in u])
        levels = [np.linspace(-e.c_max, e.d_max, ess_points) for e in u]
        single = np.array(list(itertools.product(*levels)))
        n_sched = len(single) ** max(T - 1, 0)
        if n_sched * len(fracs) * len(gens) > max_states * T:
            raise OracleTooLarge(f"{n_sched} storage schedules exceed the state-space cap")
        schedules = []
        for head in itertools.product(range(len(single)), repeat=max(T - 1, 0)):
            rows = [single[h] for h in head]
            last = -np.sum(rows, axis=0) if rows else np.zeros(NE)
            sched = np.array(rows + [last]) if T > 0 else np.zeros((0, NE))
            if np.any(sched[-1] < -np.array([e.c_max for e in u]) - tol) or np.any(
                    sched[-1] > np.array([e.d_max for e in u]) + tol):
                continue
            energy = np.array([e.e_init for e in u]) - np.cumsum(eta * sched * model.dt, axis=0)
            if np.any(energy < np.array([e.e_min for e in u]) - tol) or np.any(
                    energy > np.array([e.e_max for e in u]) + tol):
                continue
            schedules.append(sched)
    else:
        schedules = [np.zeros((T, 0))]
    if len(fracs) * len(gens) > max_states:
        raise OracleTooLarge(f"{len(fracs) * len(gens)} dispatch states per interval exceed the cap")

    M, coef, x_lo, x_hi = _network(smodel)
    s = smodel.slack_index
    sb = smodel.slack_bus
    free = np.array([i for i in range(smodel.n_bus) if live[i] and i != s], dtype=int)
    Minv = np.linalg.inv(M[np.ix_(free, free)]) if len(free) else np.zeros((0, 0))
    fi = np.array([idx[ln.from_bus] for ln in smodel.lines], dtype=int)
    ti = np.array([idx[ln.to_bus] for ln in smodel.lines], dtype=int)
    plim = np.array([ln.p_lim for ln in smodel.lines])
    demand = model.profile_matrix().T
    w = model.load_weights()
    cache: dict = {}

    def best_interval(t: int, ess: np.ndarray):
        key = (t, ess.tobytes())
        if key in cache:
            return cache[key]
        served = fracs * demand[t]  # (F, L)
        served = served * live[load_bus] if L else served
        served = np.unique(served, axis=0) if L else served
        n_b = smodel.n_bus
        inj_load = -served @ _incidence(n_b, load_bus).T
        inj_gen = gens @ _incidence(n_b, gen_bus).T
        inj_ess = _incidence(n_b, ess_bus) @ ess
        p = inj_load[:, None, :] + inj_gen[None, :, :] + inj_ess  # (F, G, n)
        state = np.zeros_like(p)
        if len(free):
            state[..., free] = p[..., free] @ Minv.T
        slack = (state @ M[s]) - p[..., s]
        ok = (slack >= sb.slack_p_min - tol) & (slack <= sb.slack_p_max + tol)
        dead = ~live
        if dead.any():
            ok &= np.all(np.abs(p[..., dead]) <= tol, axis=-1)
        ok &= np.all((state >= x_lo - tol) & (state <= x_hi + tol), axis=-1)
        if len(fi):
            flow = (state[..., fi] - state[..., ti]) * coef
            ok &= np.all(np.abs(flow) <= plim + tol, axis=-1)
        if not ok.any():
            cache[key] = None
            return None
        val = served @ w * model.dt
        score = np.where(ok, val[:, None], -np.inf)
        fi_, gi_ = np.unravel_index(int(np.argmax(score)), score.shape)
        out = (float(val[fi_]), served[fi_], gens[gi_], float(slack[fi_, gi_]))
        cache[key] = out
        return out

    best = None
    for sched in schedules:
        total, picks = 0.0, []
        for t in range(T):
            r = best_interval(t, sched[t])
            if r is None:
                break
            total += r[0]
            picks.append(r)
        else:
            if best is None or total > best[0] + 1e-12:
                best = (total, sched, picks)
    secs = time.perf_counter() - t0
    if best is None:
        return _failed_plan(model, "infeasible", secs, "oracle", "no feasible grid point")
    total, sched, picks = best
    energy = (np.array([e.e_init for e in u]) - np.cumsum(
        np.array([e.eta for e in u]) * sched * model.dt, axis=0)) if NE else np.zeros((T, 0))
    return DispatchPlan(
        status="optimal",
        objective=total,
        seconds=secs,
        served=np.array([p[1] for p in picks]).reshape(T, L),
        gen=np.array([p[2] for p in picks]).reshape(T, NG),
        ess=sched,
        energy=energy,
        p_slack=np.array([p[3] for p in picks]),
        demand=demand,
        method="oracle",
    )


def _incidence(n_bus: int, rows: np.ndarray) -> np.ndarray:
    C = np.zeros((n_bus, len(rows)))
    C[rows, np.arange(len(rows))] = 1.0
    return C


def oracle_bound(model: NetworkModel, resolution: float, ray_points: int = 41, ess_points: int = 9) -> float:
    """Objective the grid can miss: every load one cell down in every interval, plus the
    largest load weight times one generation step and one storage step per interval."""
    w = model.load_weights()
    loads = float(np.sum(model.profile_matrix().T @ w) * resolution)
    gens = model.generators
    # one ray step moves total output by at most (sum p_max - sum p_min) / (points - 1)
    gen_step = sum(g.p_max - g.p_min for g in gens) / (ray_points - 1)
    ess_step = sum((e.c_max + e.d_max) / (ess_points - 1) for e in model.ess_units)
    per_interval = float(w.max(initial=0.0)) * (gen_step + ess_step)
    return (loads + per_interval * model.horizon) * model.dt


def epigraph_consistency(plan: DispatchPlan, alpha: float) -> float:
    """|epigraph CVaR - CVaR recomputed from the plan's per-scenario losses|."""
    w = plan.scenario_weights
    expected = math.fsum(w * plan.weighted_by_scenario)
    losses = expected - plan.weighted_by_scenario
    return abs(plan.epigraph_cvar - cvar_alpha(losses, w, alpha))
