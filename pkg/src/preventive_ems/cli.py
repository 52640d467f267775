"""Command-line front end: validate, powerflow, scenarios, train, evaluate, benchmark, report.

Exit codes: 0 success, 1 a check or sub-run failed, 2 bad usage or unreadable input.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baseline_optimizer as bo
from .ems_env import EmsEnv, EnvConfig, project_generation, trace_dicts, write_trace_csv
from .grid_model import (
    LOAD_CLASSES,
    CaseFormatError,
    CaseValidationError,
    NetworkModel,
    Scenario,
    all_available,
    apply_scenario,
    bundled_case,
    energized_buses,
    failable_components,
    load_case,
    parse_case,
    validate,
)
from .power_flow import check_limits, solve_ac, solve_dc, write_solution_csv
from .ppo_agent import (
    CheckpointError,
    PpoConfig,
    TrainingLog,
    evaluate,
    load_checkpoint,
    make_training_env,
    new_trainer_state,
    resume_state,
    save_checkpoint,
    train,
)
from .scenario_engine import (
    EnumerationTooLarge,
    ScenarioSet,
    model_scenarios,
    risk_from_served,
    single_scenario_set,
    write_scenarios_csv,
)

log = logging.getLogger("preventive_ems")

MODES = ("base", "resilient-rl", "resilient-opt")
METHODS = ("base", "opt", "rl")
# reference wall-clock seconds per system, tagged and never used as pass/fail targets
REFERENCE_TIMINGS = (("mvdc12", "rl", 1.43), ("mvdc12", "opt", 7.12), ("ieee30", "rl", 1.91), ("ieee30", "opt", 15.2))


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    case: str = "mvdc12"
    threshold: float = 0.0005
    alpha: float = 0.95
    out: str = "runs/out"
    seed: int = 0
    mode: str = "resilient-rl"
    risk_weight: float = 0.5
    ppo: PpoConfig = field(default_factory=PpoConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    def __post_init__(self):
        # threshold 1 is accepted so an audit can show that nothing survives it
        if not 0 <= self.threshold <= 1:
            raise UsageError("threshold must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            raise UsageError("alpha must lie in (0, 1)")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {', '.join(MODES)}")


def _coerce(raw: str, current):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if current is None:
        return None if raw.strip().lower() in ("", "none") else float(raw)
    return raw


def read_config(path: str | None) -> RunConfig:
    """INI file with optional [run], [ppo] and [env] sections mirroring RunConfig."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    run_kw = {}
    for section, target in (("run", cfg), ("ppo", cfg.ppo), ("env", cfg.env)):
        if not parser.has_section(section):
            continue
        names = {f.name for f in fields(target)}
        kw = {}
        for key, raw in parser.items(section):
            if key not in names or key in ("ppo", "env"):
                raise UsageError(f"{path}: unknown key [{section}] {key}")
            kw[key] = _coerce(raw, getattr(target, key))
        if section == "run":
            run_kw = kw
        elif section == "ppo":
            cfg = replace(cfg, ppo=replace(cfg.ppo, **kw))
        else:
            cfg = replace(cfg, env=replace(cfg.env, **kw))
    return replace(cfg, **run_kw)


def run_config(args) -> RunConfig:
    cfg = read_config(args.config)
    over = {k: getattr(args, k) for k in ("case", "threshold", "alpha", "out", "seed") if getattr(args, k) is not None}
    if getattr(args, "mode", None):
        over["mode"] = args.mode
    cfg = replace(cfg, **over)
    ppo = replace(cfg.ppo, seed=cfg.seed)
    if getattr(args, "episodes", None) is not None:
        ppo = replace(ppo, total_episodes=args.episodes)
    if getattr(args, "checkpoint_every", None) is not None:
        ppo = replace(ppo, checkpoint_every=args.checkpoint_every)
    env = replace(cfg.env, paper_q_sign=True) if getattr(args, "paper_q_sign", False) else cfg.env
    return replace(cfg, ppo=ppo, env=env)


def _model(case: str) -> NetworkModel:
    try:
        return load_case(case)
    except OSError as exc:
        raise UsageError(f"cannot read case {case}: {exc}") from exc


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _scenario_set(model: NetworkModel, cfg: RunConfig, mask: str | None) -> ScenarioSet:
    if mask is not None:
        n = len(failable_components(model))
        return single_scenario_set(Scenario(int(mask, 16), n, 1.0))
    return model_scenarios(model, cfg.threshold)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _f(x) -> str:
    return f"{float(x):.10g}"


# --------------------------------------------------------------------------- validate


def cmd_validate(args) -> int:
    path = Path(args.case)
    if not path.exists() and not path.suffix:
        try:
            path = bundled_case(args.case)
        except (FileNotFoundError, ValueError):
            pass
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: cannot read {args.case}: {exc}", file=sys.stderr)
        return 2
    try:
        model = parse_case(text, str(path))
    except CaseFormatError as exc:
        print(f"parse: {exc}")
        return 1
    report = validate(model)
    for f in report:
        print(f"{f.path}: {f.message}")
    if report.ok:
        print(f"{model.name}: ok ({model.n_bus} buses, {len(model.lines)} lines, "
              f"{len(model.generators)} generators, {len(model.ess_units)} storage, {len(model.loads)} loads)")
        return 0
    return 1


# --------------------------------------------------------------------------- powerflow


def nominal_injections(model: NetworkModel, hour: int) -> tuple[np.ndarray, np.ndarray]:
    """Full demand at ``hour`` with generation on the ray sized to cover it where possible."""
    idx = model.bus_index
    demand = model.profile_matrix()[:, hour]
    q_dem = model.q_profile_matrix()[:, hour]
    p = np.zeros(model.n_bus)
    q = np.zeros(model.n_bus)
    for ld, d, dq in zip(model.loads, demand, q_dem):
        p[idx[ld.bus]] -= d
        q[idx[ld.bus]] -= dq
    if model.generators and any(g.available for g in model.generators):
        cap = sum(g.p_max for g in model.generators if g.available)
        share = np.array([g.p_max / cap if g.available and cap > 0 else 0.0 for g in model.generators])
        gen = project_generation(share * min(float(demand.sum()), cap), model)
        for g, pg in zip(model.generators, gen):
            p[idx[g.bus]] += pg
    return p, q


def read_injections(path: str, model: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    idx = model.bus_index
    p = np.zeros(model.n_bus)
    q = np.zeros(model.n_bus)
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                bus = int(row["bus"])
                if bus not in idx:
                    raise UsageError(f"{path}: unknown bus {bus}")
                p[idx[bus]] += float(row["p_mw"])
                q[idx[bus]] += float(row.get("q_mvar") or 0.0)
    except OSError as exc:
        raise UsageError(f"cannot read injections {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: expected columns bus,p_mw[,q_mvar]: {exc}") from exc
    return p, q


def cmd_powerflow(args) -> int:
    cfg = run_config(args)
    model = _model(cfg.case)
    if args.scenario is not None:
        model = apply_scenario(model, Scenario(int(args.scenario, 16), len(failable_components(model)), 1.0))
    if args.no_load:
        p, q = np.zeros(model.n_bus), np.zeros(model.n_bus)
    elif args.injections:
        p, q = read_injections(args.injections, model)
    else:
        if not 0 <= args.hour < model.horizon:
            raise UsageError(f"hour must lie in [0, {model.horizon})")
        p, q = nominal_injections(model, args.hour)
    if model.kind == "dc":
        sol = solve_dc(model, p)
    else:
        live = energized_buses(model)
        idx = model.bus_index
        s = model.slack_index
        pv = {idx[g.bus]: g.v_set for g in model.generators if g.available and idx[g.bus] != s and live[idx[g.bus]]}
        sol = solve_ac(model, p, q, pv, paper_q_sign=cfg.env.paper_q_sign)
    out = _out(cfg)
    write_solution_csv(model, sol, out / "pf_bus.csv", out / "pf_line.csv")
    print(f"converged={sol.converged} iters={sol.iterations} mismatch={sol.max_mismatch:.3e}")
    if not sol.converged:
        print(f"residual: {sol.message}")
        return 1
    viol = check_limits(model, sol)
    print(f"p_slack={sol.p_slack:.6f} violations={len(viol)}")
    for v in viol:
        print(f"  {v.kind} {v.component} {v.bound} excess={v.excess:.6g}")
    return 0


# --------------------------------------------------------------------------- scenarios


def cmd_scenarios(args) -> int:
    cfg = run_config(args)
    model = _model(cfg.case)
    try:
        sset = model_scenarios(model, cfg.threshold)
    except EnumerationTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = _out(cfg)
    write_scenarios_csv(out / "scenarios.csv", sset)
    n = sset.n_components
    print(f"n={n} total={1 << n} retained={len(sset)} dropped_mass={sset.dropped_mass:.12g}")
    return 0


# --------------------------------------------------------------------------- train


def cmd_train(args) -> int:
    cfg = run_config(args)
    model = _model(cfg.case)
    out = _out(cfg)
    sset = model_scenarios(model, cfg.threshold)
    ckpt_dir = out / "checkpoints"
    resume = tlog = None
    if args.resume:
        try:
            resume, tlog = resume_state(args.resume, cfg.ppo)
        except (OSError, CheckpointError) as exc:
            print(f"error: cannot resume: {exc}", file=sys.stderr)
            return 1
    factory = lambda: make_training_env(model, cfg.ppo, cfg.env)  # noqa: E731
    if cfg.ppo.total_episodes == 0 and resume is None:
        env = factory()
        state = new_trainer_state(env.obs_dim, env.act_dim, cfg.ppo)
        tlog = TrainingLog()
    else:
        _, tlog, state = train(factory, sset, cfg.ppo, ckpt_dir, resume=resume, log_=tlog)
    save_checkpoint(state, out / "policy.bin", cfg.ppo, tlog)
    tlog.write_csv(out / "training_log.csv")
    tlog.write_timing_csv(out / "training_timing.csv")
    last = tlog.rows[-1] if tlog.rows else None
    msg = f"updates={state.update} episodes={state.episodes}"
    if last:
        msg += f" reward={last['mean_episode_reward']:.4g} critical={last['critical_fraction']:.4f}"
    print(msg)
    return 0


# --------------------------------------------------------------------------- evaluate


def _policy(cfg: RunConfig, model: NetworkModel, checkpoint: str | None):
    env = EmsEnv(model, cfg.env)
    path = checkpoint or str(Path(cfg.out) / "policy.bin")
    return load_checkpoint(path, env.obs_dim, env.act_dim)


def _write_curves(out: Path, prefix: str, curves, demand, weights: dict[int, float], worst: int) -> None:
    """Per class: hour, expected served and demand over scenarios, and the worst scenario's curve."""
    for cls in LOAD_CLASSES:
        T = len(next(iter(curves.values()))[cls])
        exp_s = sum(weights[s] * curves[s][cls] for s in curves)
        exp_d = sum(weights[s] * demand[s][cls] for s in curves)
        rows = [
            [h, _f(exp_s[h]), _f(exp_d[h]), _f(curves[worst][cls][h]), _f(demand[worst][cls][h])]
            for h in range(T)
        ]
        _write_csv(out / f"{prefix}served_{cls}.csv",
                   ["hour", "expected_served", "expected_demand", "worst_served", "worst_demand"], rows)


def _rl_evaluation(cfg, model, sset, checkpoint):
    params = _policy(cfg, model, checkpoint)
    t0 = time.perf_counter()
    ev = evaluate(params, model, sset, cfg.alpha, cfg.env)
    return ev, time.perf_counter() - t0


def _plan_series(model: NetworkModel, plan: bo.DispatchPlan) -> dict[str, np.ndarray]:
    return {c: v for c, v in plan.served_by_class(model).items()}


def cmd_evaluate(args) -> int:
    cfg = run_config(args)
    model = _model(cfg.case)
    out = _out(cfg)
    sset = _scenario_set(model, cfg, args.scenario)
    if cfg.mode == "resilient-rl":
        try:
            ev, _ = _rl_evaluation(cfg, model, sset, args.checkpoint)
        except (OSError, CheckpointError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        risk = ev.risk
        weights = {sid: p for sid, _, p in risk.per_scenario_loss}
        worst = sset.worst().id
        _write_curves(out, "", ev.curves, ev.demand, weights, worst)
        top = max(sset, key=lambda s: s.probability).id
        write_trace_csv(out / "trace_rl.csv", model, trace_dicts(model, ev.traces[top]))
        write_trace_csv(out / "trace_rl_worst.csv", model, trace_dicts(model, ev.traces[worst]))
        bad = sum(ev.infeasible.values())
        fractions = {c: ev.expected_fraction(c) for c in LOAD_CLASSES}
    else:
        if cfg.mode == "base":
            plan = bo.solve_base_ems(model)
            sset = single_scenario_set(all_available(model))
            served = [plan.objective]
        else:
            plan, _ = bo.solve_scenario_based(model, sset, cfg.alpha, cfg.risk_weight)
            served = list(plan.weighted_by_scenario) if plan.ok else []
        if not plan.ok:
            print(f"error: plan {plan.status}: {plan.message}", file=sys.stderr)
            return 1
        risk = risk_from_served([s.id for s in sset], served, sset.weights, cfg.alpha)
        series = _plan_series(model, plan)
        dem = {c: plan.demand[:, [ld.cls == c for ld in model.loads]].sum(axis=1) for c in LOAD_CLASSES}
        _write_curves(out, "", {0: series}, {0: dem}, {0: 1.0}, 0)
        write_trace_csv(out / f"plan_{cfg.mode}.csv", model, plan.rows(model))
        bad = 0
        fractions = {c: float(series[c].sum() / dem[c].sum()) if dem[c].sum() > 0 else 1.0 for c in LOAD_CLASSES}
    (out / "risk.json").write_text(risk.to_json() + "\n")
    print(" ".join(f"{c}={fractions[c]:.4f}" for c in LOAD_CLASSES)
          + f" expected={risk.expected_weighted:.6g} var={risk.var:.6g} cvar={risk.cvar:.6g} infeasible_intervals={bad}")
    return 0


# --------------------------------------------------------------------------- benchmark


def _class_totals(series: dict[str, np.ndarray]) -> list[str]:
    return [_f(series[c].sum()) for c in LOAD_CLASSES]


def cmd_benchmark(args) -> int:
    cfg = run_config(args)
    model = _model(cfg.case)
    out = _out(cfg)
    sset = _scenario_set(model, cfg, args.scenario)
    results: dict[str, dict] = {}
    failures: list[str] = []

    t0 = time.perf_counter()
    base = bo.solve_base_ems(model)
    results["base"] = {"seconds": time.perf_counter() - t0}
    if base.ok:
        write_trace_csv(out / "plan_base.csv", model, base.rows(model))
        results["base"].update(weighted=base.objective, series=_plan_series(model, base), cvar=0.0)
    else:
        failures.append(f"base: {base.status} {base.message}")

    t0 = time.perf_counter()
    opt, risk = bo.solve_scenario_based(model, sset, cfg.alpha, cfg.risk_weight)
    results["opt"] = {"seconds": time.perf_counter() - t0}
    if opt.ok:
        write_trace_csv(out / "plan_opt.csv", model, opt.rows(model))
        results["opt"].update(weighted=opt.objective, series=_plan_series(model, opt), cvar=risk.cvar)
    else:
        failures.append(f"opt: {opt.status} {opt.message}")

    try:
        ev, secs = _rl_evaluation(cfg, model, sset, args.checkpoint)
        w = {sid: p for sid, _, p in ev.risk.per_scenario_loss}
        series = {c: sum(w[s] * ev.curves[s][c] for s in ev.curves) for c in LOAD_CLASSES}
        results["rl"] = {"seconds": secs, "weighted": ev.risk.expected_weighted, "series": series, "cvar": ev.risk.cvar,
                         "per_rollout": float(np.mean(ev.rollout_seconds))}
        top = max(sset, key=lambda s: s.probability).id
        write_trace_csv(out / "trace_rl.csv", model, trace_dicts(model, ev.traces[top]))
    except (OSError, CheckpointError) as exc:
        failures.append(f"rl: {exc}")
        results["rl"] = {"seconds": float("nan")}

    rows = []
    for m in METHODS:
        r = results[m]
        if "weighted" in r:
            rows.append([m, "ok", _f(r["weighted"]), _f(r["cvar"]), *_class_totals(r["series"])])
        else:
            rows.append([m, "failed", "", "", "", "", ""])
    _write_csv(out / "benchmark_summary.csv",
               ["method", "status", "weighted_served", "cvar", *[f"served_{c}" for c in LOAD_CLASSES]], rows)
    comp = []
    T = model.horizon
    for h in range(T):
        for m in METHODS:
            if "series" in results[m]:
                comp.append([h, m, *[_f(results[m]["series"][c][h]) for c in LOAD_CLASSES]])
    _write_csv(out / "comparison.csv", ["hour", "method", *[f"served_{c}" for c in LOAD_CLASSES]], comp)
    timing = [["measured", model.name, m, _f(results[m]["seconds"])] for m in METHODS]
    if "per_rollout" in results["rl"]:
        timing.append(["measured", model.name, "rl-single-rollout", _f(results["rl"]["per_rollout"])])
    timing += [["paper-reference", case, m, _f(s)] for case, m, s in REFERENCE_TIMINGS]
    _write_csv(out / "timing.csv", ["source", "case", "method", "seconds"], timing)
    for m in METHODS:
        r = results[m]
        if "weighted" in r:
            print(f"{m}: weighted_served={r['weighted']:.6g} cvar={r['cvar']:.6g} seconds={r['seconds']:.3f}")
    for f in failures:
        print(f"failed {f}", file=sys.stderr)
    return 1 if failures else 0


# --------------------------------------------------------------------------- report


REPORT_INPUTS = ("benchmark_summary.csv", "comparison.csv", "timing.csv", "plan_base.csv", "plan_opt.csv")


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _md_table(header, rows) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(str(x) for x in r) + " |" for r in rows]
    return out


def _short(x: str) -> str:
    try:
        return f"{float(x):.4g}"
    except ValueError:
        return x


def cmd_report(args) -> int:
    out = Path(args.out if args.out is not None else RunConfig().out)
    missing = [n for n in REPORT_INPUTS if not (out / n).exists()]
    if missing:
        for n in missing:
            print(f"missing input: {out / n}")
        return 1
    summary = _read_rows(out / "benchmark_summary.csv")
    comp = _read_rows(out / "comparison.csv")
    timing = _read_rows(out / "timing.csv")
    traces = {"base": out / "plan_base.csv", "opt": out / "plan_opt.csv"}
    if (out / "trace_rl.csv").exists():
        traces["rl"] = out / "trace_rl.csv"
    lines = ["# Dispatch comparison", ""]
    lines += ["Three dispatch methods on identical inputs: the non-resilient base EMS, the "
              "DC-LP scenario benchmark (linearized network) and the PPO policy acting on the "
              "full nonlinear power flow. Weighted served load uses the class weights of the case.", ""]
    lines += ["## Totals", ""]
    lines += _md_table(["method", "status", "weighted served", "CVaR", *LOAD_CLASSES],
                       [[r["method"], r["status"], _short(r["weighted_served"]), _short(r["cvar"]),
                         *[_short(r[f"served_{c}"]) for c in LOAD_CLASSES]] for r in summary])
    lines += ["", "## Served load per class and hour (MW)", ""]
    methods = [m for m in METHODS if any(r["method"] == m for r in comp)]
    served_rows = []
    for h in sorted({int(r["hour"]) for r in comp}):
        row = [h]
        for m in methods:
            rec = next(r for r in comp if int(r["hour"]) == h and r["method"] == m)
            row += [_short(rec[f"served_{c}"]) for c in LOAD_CLASSES]
        served_rows.append(row)
    lines += _md_table(["hour", *[f"{m} {c}" for m in methods for c in LOAD_CLASSES]], served_rows)
    plot = out / "plot_data"
    plot.mkdir(exist_ok=True)
    _write_csv(plot / "served.csv", ["hour", *[f"{m}_{c}" for m in methods for c in LOAD_CLASSES]], served_rows)

    soc_rows, gen_rows = [], []
    soc_cols = gen_cols = None
    for m, path in traces.items():
        rows = _read_rows(path)
        soc_cols = [k for k in rows[0] if k.startswith("soc_")]
        gen_cols = [k for k in rows[0] if k.startswith("gen_") and k != "gen_total"]
        for r in rows:
            soc_rows.append([m, r["hour"], *[r[k] for k in soc_cols]])
        tot = {k: sum(float(r[k]) for r in rows) for k in gen_cols}
        s = sum(tot.values())
        gen_rows.append([m, *[_f(tot[k] / s) if s > 0 else "0" for k in gen_cols]])
    lines += ["", "## Storage state of charge", ""]
    if soc_cols:
        lines += _md_table(["method", "hour", *soc_cols], [[r[0], r[1], *map(_short, r[2:])] for r in soc_rows])
    else:
        lines += ["No storage units in this case."]
    _write_csv(plot / "soc.csv", ["method", "hour", *(soc_cols or [])], soc_rows)
    lines += ["", "## Converter output shares", ""]
    lines += _md_table(["method", *(gen_cols or [])], [[r[0], *map(_short, r[1:])] for r in gen_rows])
    _write_csv(plot / "converter_shares.csv", ["method", *(gen_cols or [])], gen_rows)
    lines += ["", "## Wall-clock", ""]
    lines += ["Measured rows depend on the host; `paper-reference` rows are external reference figures kept for context.", ""]
    lines += _md_table(["source", "case", "method", "seconds"],
                       [[r["source"], r["case"], r["method"], _short(r["seconds"])] for r in timing])
    if (out / "risk.json").exists():
        risk = json.loads((out / "risk.json").read_text())
        lines += ["", "## Policy risk summary", ""]
        lines += [f"alpha={risk['alpha']} VaR={risk['var']:.6g} CVaR={risk['cvar']:.6g} "
                  f"expected weighted served={risk['expected_weighted']:.6g} over {len(risk['scenarios'])} scenarios"]
    (out / "report.md").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'report.md'}")
    return 0


# --------------------------------------------------------------------------- entry point


GLOBAL_FLAGS = ("case", "out", "seed", "threshold", "alpha", "config", "paper_q_sign", "verbose")


def build_parser() -> argparse.ArgumentParser:
    # defaults are filled in after parsing so the flags work before or after the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--case", help="case file or bundled case name")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=float, help="scenario probability threshold")
    common.add_argument("--alpha", type=float, help="CVaR level")
    common.add_argument("--config", help="INI file with [run], [ppo], [env] sections")
    common.add_argument("--paper-q-sign", action="store_true", help="use the alternative reactive-flow sign")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="preventive-ems", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", parents=[common], help="check a case file")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("powerflow", parents=[common], help="solve one power flow")
    sp.add_argument("--injections", help="CSV with bus,p_mw[,q_mvar]")
    sp.add_argument("--hour", type=int, default=0, help="hour of the nominal dispatch")
    sp.add_argument("--no-load", action="store_true", help="solve with zero injections")
    sp.add_argument("--scenario", help="failure mask in hex")
    sp.set_defaults(func=cmd_powerflow)

    sp = sub.add_parser("scenarios", parents=[common], help="enumerate failure scenarios")
    sp.set_defaults(func=cmd_scenarios)

    sp = sub.add_parser("train", parents=[common], help="train the PPO policy")
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--checkpoint-every", type=int, default=None, help="updates between checkpoints")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "roll out a policy or plan on the scenario set"),
        ("benchmark", cmd_benchmark, "compare base EMS, DC-LP plan and PPO policy"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--checkpoint", help="policy checkpoint (default: <out>/policy.bin)")
        sp.add_argument("--scenario", help="evaluate a single failure mask (hex)")
        if name == "evaluate":
            sp.add_argument("--mode", choices=MODES, default=None)
        sp.set_defaults(func=func)

    sp = sub.add_parser("report", parents=[common], help="assemble report.md from benchmark outputs")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in GLOBAL_FLAGS:
        if not hasattr(args, name):
            setattr(args, name, False if name in ("paper_q_sign", "verbose") else None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate" and args.case is None:
        parser.error("validate needs --case")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CaseValidationError as exc:
        print(f"error: invalid case: {exc}", file=sys.stderr)
        return 1
    except CaseFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
