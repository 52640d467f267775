"""Newton power flow for resistive DC and polar AC networks, plus limit checks.

All solver inputs and outputs are in MW / MVAr; the iterations run in per
unit on ``model.base_mva``. The slack bus holds V = 1 (and theta = 0) and
absorbs the residual injection.

Reactive power uses the standard polar form
``Q_i = sum_k V_i V_k (G_ik sin t_ik - B_ik cos t_ik)``. Passing
``paper_q_sign=True`` flips the sign on the ``B cos`` term to reproduce the
``G sin + B cos`` variant some texts print.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
from scipy.linalg import lapack

from .grid_model import NetworkModel, admittance, energized_buses

DEFAULT_TOL = 1e-8


@dataclass
class PowerFlowSolution:
    v: np.ndarray
    theta: np.ndarray
    p_inj: np.ndarray  # MW, as solved (slack entry is the slack injection)
    q_inj: np.ndarray
    p_slack: float
    q_slack: float
    line_p: np.ndarray  # MW at the from end
    line_q: np.ndarray
    line_p_to: np.ndarray  # MW at the to end (flowing out of the to bus)
    line_q_to: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float  # per unit
    islanded: tuple[int, ...] = ()
    message: str = ""


class Violation(NamedTuple):
    kind: str
    component: int
    excess: float
    bound: str


@dataclass
class ViolationSet:
    items: list[Violation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)

    def total(self, *kinds: str) -> float:
        return float(sum(v.excess for v in self.items if not kinds or v.kind in kinds))

    def of(self, kind: str) -> list[Violation]:
        return [v for v in self.items if v.kind == kind]


class Dispatch(NamedTuple):
    gen_p: np.ndarray
    gen_q: np.ndarray | None = None


def _full(model: NetworkModel, values) -> np.ndarray:
    if values is None:
        return np.zeros(model.n_bus)
    if isinstance(values, Mapping):
        out = np.zeros(model.n_bus)
        idx = model.bus_index
        for bus_id, val in values.items():
            out[idx[bus_id]] = val
        return out
    arr = np.asarray(values, dtype=float)
    if arr.shape != (model.n_bus,):
        raise ValueError(f"expected {model.n_bus} bus injections, got shape {arr.shape}")
    return arr.copy()


def _empty(model: NetworkModel) -> PowerFlowSolution:
    n, m = model.n_bus, len(model.lines)
    return PowerFlowSolution(
        v=np.ones(n), theta=np.zeros(n), p_inj=np.zeros(n), q_inj=np.zeros(n), p_slack=0.0, q_slack=0.0,
        line_p=np.zeros(m), line_q=np.zeros(m), line_p_to=np.zeros(m), line_q_to=np.zeros(m),
        converged=False, iterations=0, max_mismatch=np.inf,
    )


# ----------------------------------------------------------------------------- DC


def dc_injections(G: np.ndarray, v: np.ndarray) -> np.ndarray:
    """P_i = sum_k V_i V_k G_ik (per unit)."""
    return v * (G @ v)


class _Branches:
    """Terminal index arrays and series parameters of the in-service lines."""

    def __init__(self, model: NetworkModel):
        idx = model.bus_index
        self.fi = np.array([idx[ln.from_bus] for ln in model.lines], dtype=int)
        self.ti = np.array([idx[ln.to_bus] for ln in model.lines], dtype=int)
        on = np.array([ln.in_service for ln in model.lines], dtype=float)
        self.g = np.array([ln.g for ln in model.lines], dtype=float) * on
        self.b = np.array([ln.b for ln in model.lines], dtype=float) * on


class DcNetwork:
    """Reusable DC solver for one network topology.

    Precomputes the energized set, the reduced conductance block and branch
    indices so repeated solves on the same model skip that work.
    """

    def __init__(self, model: NetworkModel, G: np.ndarray | None = None, live: np.ndarray | None = None):
        if model.kind != "dc":
            raise ValueError("solve_dc needs a dc model")
        self.model = model
        self.live = energized_buses(model) if live is None else np.asarray(live, dtype=bool)
        self.dead = tuple(b.id for b, ok in zip(model.buses, self.live) if not ok)
        self.G = admittance(model, require_connected=False).G if G is None else G
        self.s = model.slack_index
        self.free = np.array([i for i in range(model.n_bus) if self.live[i] and i != self.s], dtype=int)
        self.Gp = self.G[np.ix_(self.free, self.free)]
        self.diag = np.arange(len(self.free))
        self.branches = _Branches(model)

    def solve(self, p_mw: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = 20) -> PowerFlowSolution:
        model, G, free, s = self.model, self.G, self.free, self.s
        sol = _empty(model)
        sol.islanded = self.dead
        if self.dead and np.any(np.abs(p_mw[~self.live]) > 1e-12):
            sol.message = f"nonzero injection on islanded bus(es) {self.dead}"
            return sol
        base = model.base_mva
        target = p_mw[free] / base
        v = np.ones(model.n_bus)
        v[~self.live] = 0.0
        it = 0
        while True:
            gv = G @ v
            f = (v * gv)[free] - target
            mis = float(np.abs(f).max()) if len(free) else 0.0
            if mis < tol or it >= max_iter or not np.isfinite(mis):
                break
            J = self.Gp * v[free][:, None]
            J[self.diag, self.diag] += gv[free]
            _, _, dv, info = lapack.dgesv(J, -f)
            if info != 0:
                sol.message = "singular Jacobian"
                break
            v[free] += dv
            it += 1
        p_all = dc_injections(G, v)
        sol.v = v
        sol.p_inj = p_all * base
        sol.p_slack = float(p_all[s] * base - p_mw[s])
        sol.converged = bool(mis < tol)
        sol.iterations = it
        sol.max_mismatch = mis
        if not sol.converged and not sol.message:
            sol.message = f"no convergence after {it} iterations (mismatch {mis:.3e})"
        br = self.branches
        sol.line_p = v[br.fi] * (v[br.fi] - v[br.ti]) * br.g * base
        sol.line_p_to = v[br.ti] * (v[br.ti] - v[br.fi]) * br.g * base
        return sol


def solve_dc(
    model: NetworkModel,
    injections,
    tol: float = DEFAULT_TOL,
    max_iter: int = 20,
    G: np.ndarray | None = None,
    live: np.ndarray | None = None,
) -> PowerFlowSolution:
    """Newton iteration on bus voltages of a resistive DC network.

    ``injections`` gives the scheduled net MW injection per bus (array over
    all buses or a ``{bus_id: MW}`` mapping). ``p_slack`` in the result is
    what the slack bus must add on top of its own scheduled injection.
    """
    return DcNetwork(model, G, live).solve(_full(model, injections), tol, max_iter)


# ----------------------------------------------------------------------------- AC


def ac_injections(
    G: np.ndarray, B: np.ndarray, v: np.ndarray, theta: np.ndarray, paper_q_sign: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Polar injection equations (per unit)."""
    sigma = -1.0 if paper_q_sign else 1.0
    d = theta[:, None] - theta[None, :]
    C, S = np.cos(d), np.sin(d)
    MP = G * C + B * S
    MQ = G * S - sigma * B * C
    return v * (MP @ v), v * (MQ @ v)


class AcNetwork:
    """Reusable polar Newton-Raphson solver for one topology and PV set.

    ``pv_buses`` maps bus *index* to a voltage set-point; those buses keep V
    fixed and their reactive injection becomes an output. Every other
    non-slack bus is PQ.
    """

    def __init__(
        self,
        model: NetworkModel,
        pv_buses: Mapping[int, float] | None = None,
        paper_q_sign: bool = False,
        Y=None,
        live: np.ndarray | None = None,
    ):
        if model.kind != "ac":
            raise ValueError("solve_ac needs an ac model")
        self.model = model
        self.live = energized_buses(model) if live is None else np.asarray(live, dtype=bool)
        self.dead = tuple(b.id for b, ok in zip(model.buses, self.live) if not ok)
        Y = admittance(model, require_connected=False) if Y is None else Y
        self.G, self.B = Y.G, Y.B
        self.s = s = model.slack_index
        self.paper_q_sign = paper_q_sign
        self.sigma = -1.0 if paper_q_sign else 1.0
        self.pv_map = {i: vs for i, vs in (pv_buses or {}).items() if self.live[i] and i != s}
        self.ang = np.array([i for i in range(model.n_bus) if self.live[i] and i != s], dtype=int)
        self.mag = np.array([i for i in self.ang if i not in self.pv_map], dtype=int)
        self.branches = _Branches(model)
        self._pattern()

    def _pattern(self) -> None:
        """Admittance sparsity and where each nonzero lands in the Jacobian."""
        n, na = self.model.n_bus, len(self.ang)
        nz = (self.G != 0) | (self.B != 0)
        nz[np.diag_indices(n)] = True
        r, c = np.nonzero(nz)
        self.nz_r, self.nz_c = r, c
        self.nz_g, self.nz_b = self.G[r, c], self.B[r, c]
        self.nz_diag = r == c
        self.diag_pos = np.flatnonzero(self.nz_diag)  # ordered by bus
        pa = np.full(n, -1)
        pa[self.ang] = np.arange(na)
        pm = np.full(n, -1)
        pm[self.mag] = np.arange(len(self.mag))
        self.places = []
        for rows, cols, r_off, c_off in ((pa, pa, 0, 0), (pa, pm, 0, na), (pm, pa, na, 0), (pm, pm, na, na)):
            keep = np.flatnonzero((rows[r] >= 0) & (cols[c] >= 0))
            self.places.append((keep, rows[r[keep]] + r_off, cols[c[keep]] + c_off))

    def _terms(self, v: np.ndarray, theta: np.ndarray):
        n = self.model.n_bus
        r, c, g, b, sigma = self.nz_r, self.nz_c, self.nz_g, self.nz_b, self.sigma
        d = theta[r] - theta[c]
        C, S = np.cos(d), np.sin(d)
        mp = g * C + b * S
        mq = g * S - sigma * b * C
        mp_v = np.bincount(r, mp * v[c], n)
        mq_v = np.bincount(r, mq * v[c], n)
        return v * mp_v, v * mq_v, (C, S, mp, mq, mp_v, mq_v)

    def _assemble(self, v: np.ndarray, terms) -> np.ndarray:
        n = self.model.n_bus
        r, c, g, b, sigma = self.nz_r, self.nz_c, self.nz_g, self.nz_b, self.sigma
        C, S, mp, mq, mp_v, mq_v = terms
        vv = v[r] * v[c]
        dp_dth = vv * (g * S - b * C)
        dq_dth = -vv * (g * C + sigma * b * S)
        dp_dth[self.nz_diag] = 0.0
        dq_dth[self.nz_diag] = 0.0
        dg = self.diag_pos
        dp_dth[dg] = -np.bincount(r, dp_dth, n)
        dq_dth[dg] = -np.bincount(r, dq_dth, n)
        dp_dv = v[r] * mp
        dq_dv = v[r] * mq
        dp_dv[dg] += mp_v
        dq_dv[dg] += mq_v
        n_eq = len(self.ang) + len(self.mag)
        J = np.zeros((n_eq, n_eq))
        for (keep, rows, cols), vals in zip(self.places, (dp_dth, dp_dv, dq_dth, dq_dv)):
            J[rows, cols] = vals[keep]
        return J

    def jacobian(self, v: np.ndarray, theta: np.ndarray):
        """P, Q (p.u.) and the Jacobian over (angles of ``ang``, magnitudes of ``mag``)."""
        P, Q, terms = self._terms(v, theta)
        return P, Q, self._assemble(v, terms)

    def solve(
        self, p_mw: np.ndarray, q_mw: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = 50
    ) -> PowerFlowSolution:
        model, ang, mag, s = self.model, self.ang, self.mag, self.s
        sol = _empty(model)
        sol.islanded = self.dead
        off = ~self.live
        if self.dead and (np.any(np.abs(p_mw[off]) > 1e-12) or np.any(np.abs(q_mw[off]) > 1e-12)):
            sol.message = f"nonzero injection on islanded bus(es) {self.dead}"
            return sol
        base = model.base_mva
        v = np.ones(model.n_bus)
        th = np.zeros(model.n_bus)
        for i, vs in self.pv_map.items():
            v[i] = vs
        v[off] = 0.0
        p_t, q_t = p_mw[ang] / base, q_mw[mag] / base
        na = len(ang)
        it = 0
        while True:
            P, Q, terms = self._terms(v, th)
            f = np.concatenate([P[ang] - p_t, Q[mag] - q_t])
            mis = float(np.max(np.abs(f))) if len(f) else 0.0
            if mis < tol or it >= max_iter or not np.isfinite(mis):
                break
            J = self._assemble(v, terms)
            _, _, dx, info = lapack.dgesv(J, -f)
            if info != 0:
                sol.message = "singular Jacobian"
                break
            th[ang] += dx[:na]
            v[mag] += dx[na:]
            it += 1
        sol.v, sol.theta = v, th
        sol.p_inj, sol.q_inj = P * base, Q * base
        sol.p_slack = float(P[s] * base - p_mw[s])
        sol.q_slack = float(Q[s] * base - q_mw[s])
        sol.converged = bool(mis < tol) and bool(np.all(v[self.live] > 0))
        sol.iterations = it
        sol.max_mismatch = mis
        if not sol.converged and not sol.message:
            sol.message = f"no convergence after {it} iterations (mismatch {mis:.3e})"
        sol.line_p, sol.line_q, sol.line_p_to, sol.line_q_to = _ac_branch_flows(self.branches, v, th, self.sigma, base)
        return sol


def solve_ac(
    model: NetworkModel,
    p_injections,
    q_injections=None,
    pv_buses: Mapping[int, float] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 50,
    paper_q_sign: bool = False,
    Y=None,
    live: np.ndarray | None = None,
) -> PowerFlowSolution:
    """Newton-Raphson polar AC power flow from a flat start (see ``AcNetwork``)."""
    net = AcNetwork(model, pv_buses, paper_q_sign, Y, live)
    return net.solve(_full(model, p_injections), _full(model, q_injections), tol, max_iter)


def _ac_branch_flows(br: _Branches, v, th, sigma, base):
    def flow(a, c):
        d = th[a] - th[c]
        va, vc = v[a], v[c]
        p = va * va * br.g - va * vc * (br.g * np.cos(d) + br.b * np.sin(d))
        q = -sigma * va * va * br.b - va * vc * (br.g * np.sin(d) - sigma * br.b * np.cos(d))
        return p * base, q * base

    pf, qf = flow(br.fi, br.ti)
    pt, qt = flow(br.ti, br.fi)
    return pf, qf, pt, qt


# ----------------------------------------------------------------------------- flows and limits


def line_flows(model: NetworkModel, sol: PowerFlowSolution, paper_q_sign: bool = False):
    """Branch flows in MW/MVAr: (P_from, Q_from, P_to, Q_to), each leaving its terminal bus."""
    m = len(model.lines)
    if m == 0:
        return tuple(np.zeros(0) for _ in range(4))
    br = _Branches(model)
    v, base = sol.v, model.base_mva
    if model.kind == "dc":
        pf = v[br.fi] * (v[br.fi] - v[br.ti]) * br.g * base
        pt = v[br.ti] * (v[br.ti] - v[br.fi]) * br.g * base
        return pf, np.zeros(m), pt, np.zeros(m)
    return _ac_branch_flows(br, v, sol.theta, -1.0 if paper_q_sign else 1.0, base)


def bus_flow_residual(model: NetworkModel, sol: PowerFlowSolution) -> float:
    """max_i |sum of branch flows leaving bus i - net injection at i| in MW."""
    idx = model.bus_index
    out_p = np.zeros(model.n_bus)
    out_q = np.zeros(model.n_bus)
    for j, ln in enumerate(model.lines):
        out_p[idx[ln.from_bus]] += sol.line_p[j]
        out_q[idx[ln.from_bus]] += sol.line_q[j]
        out_p[idx[ln.to_bus]] += sol.line_p_to[j]
        out_q[idx[ln.to_bus]] += sol.line_q_to[j]
    res = np.abs(out_p - sol.p_inj)
    if model.kind == "ac":
        res = np.maximum(res, np.abs(out_q - sol.q_inj))
    return float(res.max()) if len(res) else 0.0


class LimitChecker:
    """Bound checks for one topology, with the bound vectors laid out once.

    Buses listed in ``islanded`` are skipped; so are lines out of service.
    """

    def __init__(self, model: NetworkModel, islanded=(), tol: float = 1e-9):
        self.model, self.tol = model, tol
        self.ac = ac = model.kind == "ac"
        dead = set(islanded)
        self.bus_rows = np.array([i for i, b in enumerate(model.buses) if b.id not in dead], dtype=int)
        self.line_rows = np.array([j for j, ln in enumerate(model.lines) if ln.in_service], dtype=int)
        buses = [model.buses[i] for i in self.bus_rows]
        lines = [model.lines[j] for j in self.line_rows]
        gens = model.generators
        sb = model.slack_bus
        groups = [("v", buses, "v_min", "v_max")]
        if ac:
            groups.append(("theta", buses, "theta_min", "theta_max"))
        groups.append(("line_p", lines, None, "p_lim"))
        if ac:
            groups.append(("line_q", lines, None, "q_lim"))
        groups += [("gen_p", gens, "p_min", "p_max"), ("slack", [sb], "slack_p_min", "slack_p_max")]
        if ac:
            groups.append(("gen_q", gens, "q_min", "q_max"))
        kinds, ids, lo, hi = [], [], [], []
        for kind, items, lo_attr, hi_attr in groups:
            kinds += [kind] * len(items)
            ids += [x.id for x in items]
            lo += [getattr(x, lo_attr) if lo_attr else -np.inf for x in items]
            hi += [getattr(x, hi_attr) for x in items]
        self.kinds, self.ids = kinds, ids
        self.lo, self.hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
        self.n_gen = len(gens)

    def check(self, sol: "PowerFlowSolution", dispatch: Dispatch | None = None) -> ViolationSet:
        b, ln = self.bus_rows, self.line_rows
        parts = [sol.v[b]]
        if self.ac:
            parts.append(sol.theta[b])
        parts.append(np.maximum(np.abs(sol.line_p[ln]), np.abs(sol.line_p_to[ln])))
        if self.ac:
            parts.append(np.maximum(np.abs(sol.line_q[ln]), np.abs(sol.line_q_to[ln])))
        nan = np.full(self.n_gen, np.nan)
        parts.append(nan if dispatch is None else np.asarray(dispatch.gen_p, dtype=float))
        parts.append([sol.p_slack])
        if self.ac:
            parts.append(nan if dispatch is None or dispatch.gen_q is None else np.asarray(dispatch.gen_q, dtype=float))
        value = np.concatenate(parts)
        below = value < self.lo - self.tol
        above = value > self.hi + self.tol
        if not (below.any() or above.any()):
            return ViolationSet()
        items = [Violation(self.kinds[i], self.ids[i], float(self.lo[i] - value[i]), "min") for i in np.flatnonzero(below)]
        items += [Violation(self.kinds[i], self.ids[i], float(value[i] - self.hi[i]), "max") for i in np.flatnonzero(above)]
        items.sort(key=lambda x: (x.kind, x.component))
        return ViolationSet(items)


def check_limits(
    model: NetworkModel,
    sol: PowerFlowSolution,
    dispatch: Dispatch | None = None,
    tol: float = 1e-9,
) -> ViolationSet:
    """One entry per violated bound, excess as a positive magnitude in natural units.

    Voltages in p.u., angles in rad, flows and generation in MW/MVAr.
    Islanded buses are skipped.
    """
    return LimitChecker(model, sol.islanded, tol).check(sol, dispatch)


def write_solution_csv(model: NetworkModel, sol: PowerFlowSolution, bus_path, line_path) -> None:
    with open(bus_path, "w", newline="") as fh:
        fh.write("bus,v,theta,p_inj,q_inj\n")
        for i, b in enumerate(model.buses):
            fh.write(f"{b.id},{sol.v[i]:.10f},{sol.theta[i]:.10f},{sol.p_inj[i]:.10f},{sol.q_inj[i]:.10f}\n")
    with open(line_path, "w", newline="") as fh:
        fh.write("line,from,to,p,q\n")
        for j, ln in enumerate(model.lines):
            fh.write(f"{ln.id},{ln.from_bus},{ln.to_bus},{sol.line_p[j]:.10f},{sol.line_q[j]:.10f}\n")
