"""Small programmatic case builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from preventive_ems.grid_model import parse_case

CLASSES = ("critical", "semi_critical", "non_critical")


def case_text(
    buses,
    lines=(),
    generators=(),
    ess=(),
    loads=(),
    kind="dc",
    horizon=1,
    base_mva=10.0,
    line_failures=False,
    extra_meta="",
):
    """Assemble case-file text from row tuples.

    buses: (id, v_min, v_max, th_min, th_max, slack, p_min, p_max)
    lines: (id, from, to, g, b, p_lim, q_lim[, pof])
    generators: (id, bus, p_min, p_max, pof, k[, q_min, q_max])
    ess: (id, bus, capacity, soc_min, soc_max, c_max, d_max, eta, soc_init)
    loads: (id, bus, class, profile list[, pf])
    """
    out = ["[meta]", "name = generated", f"kind = {kind}", f"base_mva = {base_mva}", f"horizon = {horizon}"]
    if line_failures:
        out.append("line_failures = 1")
    if extra_meta:
        out.append(extra_meta)
    out += ["[buses]", "id, v_min, v_max, theta_min, theta_max, slack, slack_p_min, slack_p_max"]
    for b in buses:
        i, vlo, vhi, tlo, thi, slack, pmin, pmax = b
        out.append(f"{i}, {vlo}, {vhi}, {tlo}, {thi}, {int(slack)}, {'' if pmin is None else pmin}, "
                   f"{'' if pmax is None else pmax}")
    out += ["[lines]", "id, from, to, g, b, p_lim, q_lim, pof"]
    for ln in lines:
        ln = tuple(ln) + (0.0,) * (8 - len(ln))
        out.append(", ".join(str(x) for x in ln))
    out += ["[generators]", "id, name, bus, p_min, p_max, q_min, q_max, pof, k_robust"]
    for g in generators:
        gid, bus, pmin, pmax, pof, k, *q = g
        qmin, qmax = q if q else (-5.0, 5.0)
        out.append(f"{gid}, G{gid}, {bus}, {pmin}, {pmax}, {qmin}, {qmax}, {pof}, {k}")
    out += ["[ess]", "id, bus, capacity, soc_min, soc_max, c_max, d_max, eta, soc_init"]
    for e in ess:
        out.append(", ".join(str(x) for x in e))
    out += ["[loads]", "id, bus, class, pf, profile"]
    for ld in loads:
        lid, bus, cls, prof, *pf = ld
        out.append(f"{lid}, {bus}, {cls}, {pf[0] if pf else 1.0}, " + ", ".join(f"{x:.6f}" for x in prof))
    return "\n".join(out) + "\n"


def make_case(*args, **kwargs):
    return parse_case(case_text(*args, **kwargs))


def slack_bus(i=1, lo=-1.0, hi=1.0, vlo=0.9, vhi=1.1, th=1.0):
    return (i, vlo, vhi, -th, th, True, lo, hi)


def plain_bus(i, vlo=0.9, vhi=1.1, th=1.0):
    return (i, vlo, vhi, -th, th, False, None, None)


def random_tiny_case(rng: np.random.Generator, congested=False, kind=None, with_ess=None):
    """1-3 bus chain, 1-2 generators with p_min = 0, 1-3 loads, horizon 1-2, optional storage."""
    nb = int(rng.integers(1, 4))
    kind = kind or ("dc" if rng.random() < 0.5 else "ac")
    T = int(rng.integers(1, 3))
    if with_ess is None:
        with_ess = T == 2 and rng.random() < 0.5
    lo, hi = -rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)
    buses = [slack_bus(1, round(lo, 4), round(hi, 4))] + [plain_bus(i) for i in range(2, nb + 1)]
    lines = []
    for i in range(1, nb):
        lim = round(rng.uniform(0.5, 3.0), 3) if congested else 1000.0
        if kind == "dc":
            lines.append((i, i, i + 1, round(rng.uniform(20, 60), 3), 0.0, lim, 1000.0))
        else:
            lines.append((i, i, i + 1, 0.0, -round(rng.uniform(10, 40), 3), lim, 1000.0))
    gens = [(i, int(rng.integers(1, nb + 1)), 0.0, round(rng.uniform(1, 6), 3), 0.05, int(rng.integers(1, 4)))
            for i in range(1, int(rng.integers(1, 3)) + 1)]
    loads = [(i, int(rng.integers(1, nb + 1)), CLASSES[(i - 1) % 3], list(rng.uniform(0.5, 3.0, T)))
             for i in range(1, int(rng.integers(1, 4)) + 1)]
    ess = [(1, int(rng.integers(1, nb + 1)), 2.0, 0.2, 1.0, 1.0, 1.0, round(rng.uniform(0.85, 1.0), 3), 0.6)] \
        if with_ess else []
    return make_case(buses, lines, gens, ess, loads, kind=kind, horizon=T)
