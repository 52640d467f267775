"""Independent reference solvers used to cross-check the production code."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import least_squares

from casegen import make_case, plain_bus, slack_bus
from preventive_ems.ppo_agent import Batch, gaussian_log_prob, init_parameters, policy_forward


def random_ac_network(rng: np.random.Generator, n_bus: int | None = None):
    """Connected 3-5 bus AC network with PQ loads light enough to keep the high-voltage solution unique."""
    n = int(n_bus or rng.integers(3, 6))
    edges = {(i, int(rng.integers(1, i))) for i in range(2, n + 1)}
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(rng.choice(np.arange(1, n + 1), 2, replace=False).tolist())
        edges.add((b, a))
    lines = [
        (j + 1, a, b, round(rng.uniform(0.5, 4.0), 4), -round(rng.uniform(5.0, 20.0), 4), 1000.0, 1000.0)
        for j, (a, b) in enumerate(sorted(edges))
    ]
    buses = [slack_bus(1, -100.0, 100.0, 0.5, 1.5, 3.0)] + [plain_bus(i, 0.5, 1.5, 3.0) for i in range(2, n + 1)]
    model = make_case(buses, lines, kind="ac", base_mva=100.0)
    p = np.zeros(n)
    q = np.zeros(n)
    p[1:] = -rng.uniform(0.0, 30.0, n - 1)
    q[1:] = -rng.uniform(-5.0, 10.0, n - 1)
    return model, p, q


def complex_mismatch(Y: np.ndarray, v: np.ndarray, th: np.ndarray, p_pu, q_pu) -> np.ndarray:
    """S = V conj(Y V), written in rectangular complex form rather than the polar sums."""
    V = v * np.exp(1j * th)
    S = V * np.conj(Y @ V)
    return S.real - p_pu, S.imag - q_pu


def ac_grid_oracle(model, p_mw, q_mw, points: int = 4000, seed: int = 0):
    """Best of a dense random grid over (V, theta), then Levenberg-Marquardt polish."""
    n = model.n_bus
    base = model.base_mva
    from preventive_ems.grid_model import admittance  # only the bus matrix is shared

    Y = admittance(model).Y
    rng = np.random.default_rng(seed)
    p_pu, q_pu = np.asarray(p_mw) / base, np.asarray(q_mw) / base

    def resid(x):
        v = np.concatenate([[1.0], x[: n - 1]])
        th = np.concatenate([[0.0], x[n - 1 :]])
        dp, dq = complex_mismatch(Y, v, th, p_pu, q_pu)
        return np.concatenate([dp[1:], dq[1:]])

    grid = np.column_stack(
        [rng.uniform(0.85, 1.1, (points, n - 1)), rng.uniform(-0.4, 0.4, (points, n - 1))]
    )
    scores = [np.linalg.norm(resid(x)) for x in grid]
    start = grid[int(np.argmin(scores))]
    fit = least_squares(resid, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    x = fit.x
    return np.concatenate([[1.0], x[: n - 1]]), np.concatenate([[0.0], x[n - 1 :]]), float(np.max(np.abs(resid(x))))


def tail_oracle(losses, probs, alpha):
    """Sort descending and average the worst (1 - alpha) mass, splitting the boundary atom."""
    order = sorted(range(len(losses)), key=lambda i: -losses[i])
    need = 1.0 - alpha
    acc = 0.0
    for i in order:
        take = min(probs[i], need)
        acc += take * losses[i]
        need -= take
        if need <= 1e-15:
            break
    return acc / (1.0 - alpha)


def full_oracle(pofs):
    out = {}
    for bits in itertools.product((0, 1), repeat=len(pofs)):
        mask = sum(b << i for i, b in enumerate(bits))
        p = 1.0
        for b, q in zip(bits, pofs):
            p *= q if b else 1.0 - q
        out[mask] = p
    return out


def random_problem(seed, n=24):
    """Small random policy network with a batch sampled from a nearby old policy."""
    rng = np.random.default_rng(seed)
    obs_dim, act_dim = int(rng.integers(2, 7)), int(rng.integers(1, 4))
    hidden = (int(rng.integers(3, 8)), int(rng.integers(3, 8)))
    params = init_parameters(obs_dim, act_dim, hidden, seed)
    # move away from the near-zero output layer so every path carries gradient
    params = params.with_flat(params.flat() + 0.3 * rng.standard_normal(params.flat().size))
    old = params.with_flat(params.flat() + 0.05 * rng.standard_normal(params.flat().size))
    obs = rng.standard_normal((n, obs_dim))
    m_old, s_old = policy_forward(old, obs)
    act = m_old + s_old * rng.standard_normal(m_old.shape)
    batch = Batch(obs, act, gaussian_log_prob(m_old, old.log_std, act), rng.standard_normal(n), rng.standard_normal(n))
    return params, batch


def finite_difference(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def rel_error(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))
