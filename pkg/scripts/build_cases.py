"""Regenerate the bundled case files under src/preventive_ems/cases/.

Load profiles are synthesized (smooth daily shapes); they are not measured
data. Converter ratings, PoFs and ESS sizes for the ship system are fixed
inputs listed below. The 30-bus network
uses the standard IEEE 30-bus branch data (MATPOWER ``case30`` impedances and
ratings) with a 21st load bus added at bus 5.

    python scripts/build_cases.py
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "preventive_ems" / "cases"
T = 24
HOURS = np.arange(T)


def daily_shape(trough: float, morning: float = 9.0, evening: float = 19.0, width: float = 3.0) -> np.ndarray:
    """Two-peak daily curve scaled to [trough, 1]."""
    bump = np.exp(-0.5 * ((HOURS - morning) / width) ** 2) + 1.15 * np.exp(-0.5 * ((HOURS - evening) / width) ** 2)
    bump = (bump - bump.min()) / (bump.max() - bump.min())
    return trough + (1.0 - trough) * bump


def fmt(x: float) -> str:
    return f"{x:.6g}"


def profile(peak: float, shape: np.ndarray) -> str:
    return ", ".join(f"{peak * s:.4f}" for s in shape)


def write(name: str, parts: list[str]) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / f"{name}.case").write_text("\n".join(parts).rstrip() + "\n")
    print("wrote", OUT / f"{name}.case")


# ----------------------------------------------------------------------------- ship

def ship() -> None:
    # k_robust is proportional to PoF so that k_i * P_i = const pushes output to low-PoF units
    converters = [
        ("ATG-1", 2, 2.6, [0.05, 0.075]),
        ("ATG-2", 8, 2.6, [0.05, 0.05]),
        ("MTG-1", 5, 8.2, [0.05, 0.05, 0.05, 0.075, 0.05]),
        ("MTG-2", 11, 8.2, [0.025, 0.05, 0.05, 0.05, 0.05]),
    ]
    parts = [
        "# Notional 12-bus MVDC ship system (four zones).",
        "# Converter ratings, PoFs and ESS data are fixed inputs;",
        "# topology, line data and 24-hour load profiles are synthesized.",
        "[meta]",
        "name = mvdc12",
        "kind = dc",
        "base_mva = 10",
        "horizon = 24",
        "dt = 1.0",
        "k_c = 100",
        "k_sc = 10",
        "k_nc = 1",
        "line_failures = false",
        "",
        "[buses]",
        "id, v_min, v_max, theta_min, theta_max, slack, slack_p_min, slack_p_max",
    ]
    for b in range(1, 13):
        slack = b == 5
        parts.append(f"{b}, 0.95, 1.05, -0.5, 0.5, {int(slack)}, {'-3' if slack else ''}, {'3' if slack else ''}")
    parts += ["", "[lines]", "id, from, to, g, b, p_lim, q_lim"]
    ring = [(i, i % 12 + 1) for i in range(1, 13)]
    ties = [(3, 9), (6, 12)]
    for lid, (a, c) in enumerate(ring + ties, 1):
        g, lim = (100.0, 40.0) if (a, c) in ring else (50.0, 25.0)
        parts.append(f"{lid}, {a}, {c}, {fmt(g)}, 0, {fmt(lim)}, 0")
    parts += ["", "[generators]", "id, name, bus, p_min, p_max, q_min, q_max, pof, k_robust"]
    gid = 1
    for group, bus, cap, pofs in converters:
        for j, pof in enumerate(pofs, 1):
            parts.append(f"{gid}, {group}.{j}, {bus}, 0, {fmt(cap)}, 0, 0, {fmt(pof)}, {fmt(pof / 0.025)}")
            gid += 1
    parts += ["", "[ess]", "id, bus, capacity, soc_min, soc_max, c_max, d_max, eta, soc_init"]
    for eid, bus in enumerate([1, 3, 4, 6, 7, 9, 10, 12], 1):
        parts.append(f"{eid}, {bus}, 2.2, 0.2, 1.0, 10, 10, 1.0, 0.6")
    parts += ["", "[loads]", "id, bus, class, pf, profile"]
    aclc = daily_shape(0.75)
    pmm = daily_shape(0.85, morning=11.0, evening=17.0, width=4.0)
    lid = 1
    for bus in (1, 2, 3, 4, 9, 10, 11, 12):
        parts.append(f"{lid}, {bus}, critical, 1.0, {profile(3.75, aclc)}")
        lid += 1
    for bus in (6, 7):
        parts.append(f"{lid}, {bus}, semi_critical, 1.0, {profile(30.0, pmm)}")
        lid += 1
    for bus in (1, 2, 3, 4, 9, 10, 11, 12):
        parts.append(f"{lid}, {bus}, non_critical, 1.0, {profile(1.5, aclc)}")
        lid += 1
    write("mvdc12", parts)


# ----------------------------------------------------------------------------- IEEE 30

IEEE30_BRANCHES = [
    (1, 2, 0.02, 0.06, 130), (1, 3, 0.05, 0.19, 130), (2, 4, 0.06, 0.17, 65), (3, 4, 0.01, 0.04, 130),
    (2, 5, 0.05, 0.2, 130), (2, 6, 0.06, 0.18, 65), (4, 6, 0.01, 0.04, 90), (5, 7, 0.05, 0.12, 70),
    (6, 7, 0.03, 0.08, 130), (6, 8, 0.01, 0.04, 32), (6, 9, 0.0, 0.21, 65), (6, 10, 0.0, 0.56, 32),
    (9, 11, 0.0, 0.21, 65), (9, 10, 0.0, 0.11, 65), (4, 12, 0.0, 0.26, 65), (12, 13, 0.0, 0.14, 65),
    (12, 14, 0.12, 0.26, 32), (12, 15, 0.07, 0.13, 32), (12, 16, 0.09, 0.2, 32), (14, 15, 0.22, 0.2, 16),
    (16, 17, 0.08, 0.19, 16), (15, 18, 0.11, 0.22, 16), (18, 19, 0.06, 0.13, 16), (19, 20, 0.03, 0.07, 32),
    (10, 20, 0.09, 0.21, 32), (10, 17, 0.03, 0.08, 32), (10, 21, 0.03, 0.07, 32), (10, 22, 0.07, 0.15, 32),
    (21, 22, 0.01, 0.02, 32), (15, 23, 0.1, 0.2, 16), (22, 24, 0.12, 0.18, 16), (23, 24, 0.13, 0.27, 16),
    (24, 25, 0.19, 0.33, 16), (25, 26, 0.25, 0.38, 16), (25, 27, 0.11, 0.21, 16), (28, 27, 0.0, 0.4, 65),
    (27, 29, 0.22, 0.42, 16), (27, 30, 0.32, 0.6, 16), (29, 30, 0.24, 0.45, 16), (8, 28, 0.06, 0.2, 32),
    (6, 28, 0.02, 0.06, 32),
]
# bus: (P MW, Q MVAr); bus 5 carries the added 21st load
IEEE30_LOADS = {
    2: (21.7, 12.7), 3: (2.4, 1.2), 4: (7.6, 1.6), 5: (20.0, 5.0), 7: (22.8, 10.9), 8: (30.0, 30.0),
    10: (5.8, 2.0), 12: (11.2, 7.5), 14: (6.2, 1.6), 15: (8.2, 2.5), 16: (3.5, 1.8), 17: (9.0, 5.8),
    18: (3.2, 0.9), 19: (9.5, 3.4), 20: (2.2, 0.7), 21: (17.5, 11.2), 23: (3.2, 1.6), 24: (8.7, 6.7),
    26: (3.5, 2.3), 29: (2.4, 0.9), 30: (10.6, 1.9),
}
IEEE30_CRITICAL = {2, 5, 7, 8, 21, 30}
IEEE30_SEMI = {4, 10, 12, 17, 19, 24, 15}
# (bus, p_max, q_min, q_max, pof)
IEEE30_GENS = [
    (1, 80.0, -20.0, 150.0, 0.05),
    (2, 80.0, -20.0, 60.0, 0.05),
    (22, 50.0, -15.0, 62.5, 0.075),
    (27, 55.0, -15.0, 48.7, 0.05),
    (23, 30.0, -10.0, 40.0, 0.1),
    (13, 40.0, -15.0, 44.7, 0.025),
]


def ieee30() -> None:
    parts = [
        "# IEEE 30-bus system (MATPOWER case30 branch data, no shunts or taps)",
        "# with six ESS units; PoFs and 24-hour profiles are synthesized.",
        "[meta]",
        "name = ieee30",
        "kind = ac",
        "base_mva = 100",
        "horizon = 24",
        "dt = 1.0",
        "k_c = 100",
        "k_sc = 10",
        "k_nc = 1",
        "line_failures = false",
        "",
        "[buses]",
        "id, v_min, v_max, theta_min, theta_max, slack, slack_p_min, slack_p_max",
    ]
    for b in range(1, 31):
        slack = b == 1
        parts.append(f"{b}, 0.94, 1.06, -0.6, 0.6, {int(slack)}, {'-5' if slack else ''}, {'20' if slack else ''}")
    parts += ["", "[lines]", "id, from, to, g, b, p_lim, q_lim"]
    for lid, (a, c, r, x, rate) in enumerate(IEEE30_BRANCHES, 1):
        z2 = r * r + x * x
        parts.append(f"{lid}, {a}, {c}, {r / z2:.8g}, {-x / z2:.8g}, {fmt(rate)}, {fmt(rate)}")
    parts += ["", "[generators]", "id, name, bus, p_min, p_max, q_min, q_max, pof, k_robust, v_set"]
    for gid, (bus, pmax, qmin, qmax, pof) in enumerate(IEEE30_GENS, 1):
        parts.append(
            f"{gid}, G{bus}, {bus}, 0, {fmt(pmax)}, {fmt(qmin)}, {fmt(qmax)}, {fmt(pof)}, {fmt(pof / 0.025)}, 1.0"
        )
    parts += ["", "[ess]", "id, bus, capacity, soc_min, soc_max, c_max, d_max, eta, soc_init"]
    for eid, bus in enumerate([3, 10, 15, 19, 24, 30], 1):
        parts.append(f"{eid}, {bus}, 15, 0.2, 1.0, 5, 5, 1.0, 0.6")
    parts += ["", "[loads]", "id, bus, class, pf, profile"]
    shape = daily_shape(0.6)
    for lid, (bus, (p, q)) in enumerate(sorted(IEEE30_LOADS.items()), 1):
        cls = "critical" if bus in IEEE30_CRITICAL else "semi_critical" if bus in IEEE30_SEMI else "non_critical"
        pf = p / math.hypot(p, q)
        parts.append(f"{lid}, {bus}, {cls}, {pf:.6f}, {profile(p * 1.3, shape)}")
    write("ieee30", parts)


# ----------------------------------------------------------------------------- toy

def toy3() -> None:
    shape = daily_shape(0.7)
    parts = [
        "# Three-bus DC toy system for quick training checks.",
        "[meta]",
        "name = toy3",
        "kind = dc",
        "base_mva = 10",
        "horizon = 24",
        "dt = 1.0",
        "k_c = 100",
        "k_sc = 10",
        "k_nc = 1",
        "",
        "[buses]",
        "id, v_min, v_max, theta_min, theta_max, slack, slack_p_min, slack_p_max",
        "1, 0.95, 1.05, -0.5, 0.5, 1, -1, 1",
        "2, 0.95, 1.05, -0.5, 0.5, 0, , ",
        "3, 0.95, 1.05, -0.5, 0.5, 0, , ",
        "",
        "[lines]",
        "id, from, to, g, b, p_lim, q_lim",
        "1, 1, 2, 50, 0, 20, 0",
        "2, 2, 3, 50, 0, 20, 0",
        "",
        "[generators]",
        "id, name, bus, p_min, p_max, q_min, q_max, pof, k_robust",
        "1, G1, 1, 0, 6, 0, 0, 0.05, 2",
        "2, G2, 2, 0, 4, 0, 0, 0.025, 1",
        "",
        "[ess]",
        "id, bus, capacity, soc_min, soc_max, c_max, d_max, eta, soc_init",
        "1, 3, 2, 0.2, 1.0, 1, 1, 1.0, 0.6",
        "",
        "[loads]",
        "id, bus, class, pf, profile",
        f"1, 2, critical, 1.0, {profile(3.0, shape)}",
        f"2, 3, semi_critical, 1.0, {profile(4.0, shape)}",
        f"3, 3, non_critical, 1.0, {profile(3.0, shape)}",
    ]
    write("toy3", parts)


if __name__ == "__main__":
    ship()
    ieee30()
    toy3()
