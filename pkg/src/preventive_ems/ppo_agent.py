"""Proximal policy optimization in plain numpy.

Policy: diagonal Gaussian whose mean is a tanh-squashed MLP output and whose
log standard deviations are free parameters. Value function: separate MLP
with a linear head. Gradients are hand-derived reverse mode.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ems_env import EmsEnv, EnvConfig, EpisodeTrace
from .grid_model import NetworkModel, Scenario
from .scenario_engine import RiskReport, ScenarioSet, risk_from_served

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------- parameters


def layer_shapes(sizes: Sequence[int]) -> list[tuple[int, int]]:
    return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]


def mlp_size(sizes: Sequence[int]) -> int:
    return sum(a * b + b for a, b in layer_shapes(sizes))


def unpack(vec: np.ndarray, sizes: Sequence[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into a flat vector; W is (fan_in, fan_out), row-major."""
    out, pos = [], 0
    for a, b in layer_shapes(sizes):
        W = vec[pos : pos + a * b].reshape(a, b)
        pos += a * b
        out.append((W, vec[pos : pos + b]))
        pos += b
    return out


@dataclass
class PolicyParameters:
    """Flat policy vector (MLP weights then per-action log-std) and flat value vector."""

    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...]
    policy: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.policy.shape != (mlp_size(self.policy_sizes) + self.act_dim,):
            raise ValueError(f"policy vector length {self.policy.size} does not match shapes {self.policy_sizes}")
        if self.value.shape != (mlp_size(self.value_sizes),):
            raise ValueError(f"value vector length {self.value.size} does not match shapes {self.value_sizes}")

    @property
    def policy_sizes(self) -> tuple[int, ...]:
        return (self.obs_dim, *self.hidden, self.act_dim)

    @property
    def value_sizes(self) -> tuple[int, ...]:
        return (self.obs_dim, *self.hidden, 1)

    @property
    def log_std(self) -> np.ndarray:
        return self.policy[-self.act_dim :]

    def policy_layers(self):
        return unpack(self.policy[: -self.act_dim], self.policy_sizes)

    def value_layers(self):
        return unpack(self.value, self.value_sizes)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.policy, self.value])

    def with_flat(self, vec: np.ndarray) -> "PolicyParameters":
        n = self.policy.size
        return replace(self, policy=vec[:n].copy(), value=vec[n:].copy())

    def copy(self) -> "PolicyParameters":
        return replace(self, policy=self.policy.copy(), value=self.value.copy())

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.policy)) and np.all(np.isfinite(self.value)))


def _orthogonal(rng: np.random.Generator, a: int, b: int, gain: float) -> np.ndarray:
    m = rng.standard_normal((max(a, b), min(a, b)))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if a < b:
        q = q.T
    return gain * q[:a, :b]


def init_parameters(
    obs_dim: int,
    act_dim: int,
    hidden: Sequence[int] = (64, 64),
    seed: int = 0,
    log_std_init: float = -0.5,
) -> PolicyParameters:
    rng = np.random.default_rng(seed)

    def build(sizes, out_gain):
        parts = []
        shapes = layer_shapes(sizes)
        for i, (a, b) in enumerate(shapes):
            gain = out_gain if i == len(shapes) - 1 else math.sqrt(2.0)
            parts += [_orthogonal(rng, a, b, gain).ravel(), np.zeros(b)]
        return np.concatenate(parts)

    hidden = tuple(hidden)
    pol = np.concatenate([build((obs_dim, *hidden, act_dim), 0.01), np.full(act_dim, float(log_std_init))])
    val = build((obs_dim, *hidden, 1), 1.0)
    return PolicyParameters(obs_dim, act_dim, hidden, pol, val)


# --------------------------------------------------------------------------- forward / backward


def _mlp_forward(layers, x, squash_out: bool):
    acts = [x]
    h = x
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        last = i == len(layers) - 1
        h = np.tanh(z) if (not last or squash_out) else z
        acts.append(h)
    return h, acts


def _mlp_backward(layers, acts, grad_out, squash_out: bool) -> np.ndarray:
    """Gradient of sum(grad_out * output) w.r.t. the flat layer vector."""
    grads = []
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        out = acts[i + 1]
        last = i == len(layers) - 1
        if not last or squash_out:
            g = g * (1.0 - out * out)
        grads.append((acts[i].T @ g, g.sum(axis=0)))
        if i:
            g = g @ W.T
    flat = []
    for gW, gb in reversed(grads):
        flat += [gW.ravel(), gb]
    return np.concatenate(flat)


def policy_forward(params: PolicyParameters, obs) -> tuple[np.ndarray, np.ndarray]:
    """(mean, stddev) over the normalized action box; mean is tanh-squashed."""
    x = np.asarray(obs, dtype=float)
    if x.shape[-1] != params.obs_dim:
        raise ValueError(f"observation dimension {x.shape[-1]} != {params.obs_dim}")
    mean, _ = _mlp_forward(params.policy_layers(), x, squash_out=True)
    return mean, np.exp(params.log_std) * np.ones_like(mean)


def value_forward(params: PolicyParameters, obs) -> np.ndarray:
    x = np.asarray(obs, dtype=float)
    if x.shape[-1] != params.obs_dim:
        raise ValueError(f"observation dimension {x.shape[-1]} != {params.obs_dim}")
    v, _ = _mlp_forward(params.value_layers(), x, squash_out=False)
    return v[..., 0]


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, act: np.ndarray) -> np.ndarray:
    z = (act - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def advantage(rewards, values, next_values, gamma: float, terminal=None) -> np.ndarray:
    """One-step advantage r + gamma * V(s') - V(s); terminal steps use V(s') = 0."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    nv = np.asarray(next_values, dtype=float)
    if not (r.shape == v.shape == nv.shape):
        raise ValueError("rewards, values and next_values must have the same length")
    if terminal is not None:
        term = np.asarray(terminal, dtype=bool)
        if term.shape != r.shape:
            raise ValueError("terminal flags must match rewards")
        nv = np.where(term, 0.0, nv)
    return r + gamma * nv - v


def gae_advantage(rewards, values, next_values, terminal, gamma: float, lam: float) -> np.ndarray:
    """Lambda-weighted advantages over one contiguous trajectory."""
    delta = advantage(rewards, values, next_values, gamma, terminal)
    out = np.zeros_like(delta)
    acc = 0.0
    term = np.asarray(terminal, dtype=bool)
    for t in range(len(delta) - 1, -1, -1):
        acc = delta[t] + (0.0 if term[t] else gamma * lam * acc)
        out[t] = acc
    return out


@dataclass
class Batch:
    obs: np.ndarray
    act: np.ndarray
    logp_old: np.ndarray
    adv: np.ndarray
    ret: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.act[idx], self.logp_old[idx], self.adv[idx], self.ret[idx])


@dataclass
class LossParts:
    total: float
    ppo: float  # clipped surrogate objective (to maximize)
    value: float
    entropy: float
    mean_ratio: float
    clip_fraction: float
    grad_ppo: np.ndarray
    grad_value: np.ndarray
    grad_entropy: np.ndarray
    grad: np.ndarray  # of the total (minimization form)


def ppo_loss(batch: Batch, params_old: PolicyParameters | None, params: PolicyParameters, config: "PpoConfig") -> LossParts:
    """Total = -L_ppo + c1 * L_vf - c2 * H, with exact gradients w.r.t. the flat vector.

    Gradient vectors are laid out like ``params.flat()``. ``params_old`` is
    only needed when ``batch.logp_old`` is missing (NaN): then old
    log-probabilities are recomputed from it.
    """
    n = len(batch)
    eps = config.clip
    layers = params.policy_layers()
    mean, acts = _mlp_forward(layers, batch.obs, squash_out=True)
    log_std = params.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = batch.act - mean
    logp = np.sum(-0.5 * diff * diff * inv_var - log_std - 0.5 * LOG_2PI, axis=1)
    logp_old = batch.logp_old
    if np.any(np.isnan(logp_old)):
        if params_old is None:
            raise ValueError("old log-probabilities missing and no old parameters given")
        m_old, s_old = policy_forward(params_old, batch.obs)
        logp_old = gaussian_log_prob(m_old, np.log(s_old[0] if s_old.ndim > 1 else s_old), batch.act)
    ratio = np.exp(logp - logp_old)
    A = batch.adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    unclipped_arm = ratio * A
    clipped_arm = clipped * A
    surr = np.minimum(unclipped_arm, clipped_arm)
    l_ppo = float(surr.mean())
    active = unclipped_arm <= clipped_arm  # gradient flows only through the unclipped arm
    dsurr_dlogp = np.where(active, ratio * A, 0.0) / n

    # d logp / d mean and d logp / d log_std
    dlogp_dmean = diff * inv_var
    dlogp_dlogstd = diff * diff * inv_var - 1.0
    g_mean = dsurr_dlogp[:, None] * dlogp_dmean
    g_pol_net = _mlp_backward(layers, acts, g_mean, squash_out=True)
    g_logstd = (dsurr_dlogp[:, None] * dlogp_dlogstd).sum(axis=0)
    n_pol = params.policy.size
    n_val = params.value.size
    grad_ppo = np.concatenate([g_pol_net, g_logstd, np.zeros(n_val)])

    vlayers = params.value_layers()
    v, vacts = _mlp_forward(vlayers, batch.obs, squash_out=False)
    v = v[:, 0]
    err = v - batch.ret
    l_vf = float(0.5 * np.mean(err * err))
    g_val = _mlp_backward(vlayers, vacts, (err / n)[:, None], squash_out=False)
    grad_value = np.concatenate([np.zeros(n_pol), g_val])

    ent = gaussian_entropy(log_std)
    grad_entropy = np.zeros(n_pol + n_val)
    grad_entropy[n_pol - params.act_dim : n_pol] = 1.0

    total = -l_ppo + config.c1 * l_vf - config.c2 * ent
    grad = -grad_ppo + config.c1 * grad_value - config.c2 * grad_entropy
    return LossParts(
        total=float(total),
        ppo=l_ppo,
        value=l_vf,
        entropy=ent,
        mean_ratio=float(ratio.mean()),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
        grad_ppo=grad_ppo,
        grad_value=grad_value,
        grad_entropy=grad_entropy,
        grad=grad,
    )


# --------------------------------------------------------------------------- config / optimizer


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.95
    clip: float = 0.2
    c1: float = 0.5
    c2: float = 0.0
    learning_rate: float = 3e-4
    rollout_episodes: int = 8  # episodes collected per update
    minibatch_size: int = 256
    epochs: int = 10
    total_episodes: int = 50_000
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -0.5
    max_grad_norm: float = 0.5
    normalize_advantage: bool = True
    gae_lambda: float | None = None  # None: one-step advantage
    reward_scale: float | None = None  # None: 1 / largest hourly weighted demand
    train_repair_cap: int = 3
    checkpoint_every: int = 0  # updates; 0 disables periodic checkpoints

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be nonnegative")
        if self.rollout_episodes < 1 or self.minibatch_size < 1 or self.epochs < 1:
            raise ValueError("rollout_episodes, minibatch_size and epochs must be positive")
        if self.total_episodes < 0:
            raise ValueError("total_episodes must be nonnegative")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def digest(self) -> str:
        """Hash of every setting that shapes the parameter vector or the update rule."""
        d = asdict(self)
        for k in ("total_episodes", "checkpoint_every"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(x: np.ndarray, g: np.ndarray, st: AdamState, lr: float, b1=0.9, b2=0.999, eps=1e-8) -> np.ndarray:
    st.t += 1
    st.m = b1 * st.m + (1 - b1) * g
    st.v = b2 * st.v + (1 - b2) * g * g
    mh = st.m / (1 - b1**st.t)
    vh = st.v / (1 - b2**st.t)
    return x - lr * mh / (np.sqrt(vh) + eps)


# --------------------------------------------------------------------------- training


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)

    COLUMNS = (
        "update",
        "episodes",
        "mean_episode_reward",
        "mean_repairs",
        "critical_fraction",
        "policy_objective",
        "value_loss",
        "entropy",
        "mean_ratio",
        "param_norm",
        "skipped",
    )

    def append(self, row: dict, seconds: float) -> None:
        if self.rows and row["update"] <= self.rows[-1]["update"]:
            raise ValueError("update index must increase")
        self.rows.append(row)
        self.wall_clock.append(seconds)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in self.COLUMNS])

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["update", "seconds"])
            for r, s in zip(self.rows, self.wall_clock):
                w.writerow([r["update"], f"{s:.6f}"])


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


@dataclass
class TrainerState:
    params: PolicyParameters
    adam: AdamState
    rng: np.random.Generator
    update: int = 0
    episodes: int = 0


def default_reward_scale(env: EmsEnv) -> float:
    hourly = env.weights @ env.profiles * env.model.dt if len(env.profiles) else np.ones(1)
    return 1.0 / max(float(hourly.max()), 1e-9)


def make_training_env(model: NetworkModel, config: PpoConfig, env_config: EnvConfig | None = None) -> EmsEnv:
    ec = env_config or EnvConfig()
    return EmsEnv(model, replace(ec, repair_cap=config.train_repair_cap))


def collect(env: EmsEnv, state: TrainerState, scenario_set: ScenarioSet, config: PpoConfig, scale: float):
    """Roll out ``config.rollout_episodes`` stochastic episodes; returns the batch and episode stats."""
    params, rng = state.params, state.rng
    obs_l, act_l, logp_l, rew_l, val_l, nval_l, term_l = [], [], [], [], [], [], []
    ep_rewards, ep_repairs, ep_crit = [], [], []
    pol_layers = params.policy_layers()
    val_layers = params.value_layers()
    std = np.exp(params.log_std)
    for _ in range(config.rollout_episodes):
        scen = scenario_set.sample(rng)
        obs = env.reset(scen).vector(env)
        v_cur = _mlp_forward(val_layers, obs, False)[0][0]
        total = 0.0
        done = False
        while not done:
            mean = _mlp_forward(pol_layers, obs, True)[0]
            a = mean + std * rng.standard_normal(len(mean))
            o2, rew, done, _ = env.step(a)
            obs2 = o2.vector(env)
            v_next = _mlp_forward(val_layers, obs2, False)[0][0]
            obs_l.append(obs)
            act_l.append(a)
            logp_l.append(gaussian_log_prob(mean, params.log_std, a))
            rew_l.append(rew.total * scale)
            val_l.append(v_cur)
            nval_l.append(v_next)
            term_l.append(done)
            total += rew.total
            obs, v_cur = obs2, v_next
        tr = env.trace
        ep_rewards.append(total)
        ep_repairs.append(np.mean([r.repairs for r in tr.records]))
        ep_crit.append(tr.served_fraction(env.model, "critical"))
        state.episodes += 1
    rew = np.array(rew_l)
    val = np.array(val_l)
    nval = np.array(nval_l)
    term = np.array(term_l)
    if config.gae_lambda is None:
        adv = advantage(rew, val, nval, config.gamma, term)
    else:
        adv = gae_advantage(rew, val, nval, term, config.gamma, config.gae_lambda)
    batch = Batch(np.array(obs_l), np.array(act_l), np.array(logp_l), adv, adv + val)
    stats = {
        "mean_episode_reward": float(np.mean(ep_rewards)),
        "mean_repairs": float(np.mean(ep_repairs)),
        "critical_fraction": float(np.mean(ep_crit)),
    }
    return batch, stats


def update(state: TrainerState, batch: Batch, config: PpoConfig) -> dict:
    """Epochs x minibatches of clipped-objective gradient steps on one batch."""
    params = state.params
    adv = batch.adv
    if config.normalize_advantage and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    work = Batch(batch.obs, batch.act, batch.logp_old, adv, batch.ret)
    n = len(work)
    flat = params.flat()
    sums = {"policy_objective": 0.0, "value_loss": 0.0, "entropy": 0.0}
    count = 0
    skipped = 0
    for _ in range(config.epochs):
        order = state.rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            mb = work.take(order[start : start + config.minibatch_size])
            cur = params.with_flat(flat)
            parts = ppo_loss(mb, None, cur, config)
            if not (np.isfinite(parts.total) and np.all(np.isfinite(parts.grad))):
                skipped += 1
                log.warning("update %d: non-finite loss, minibatch skipped", state.update + 1)
                continue
            g = parts.grad
            norm = float(np.linalg.norm(g))
            if config.max_grad_norm and norm > config.max_grad_norm:
                g = g * (config.max_grad_norm / norm)
            flat = adam_step(flat, g, state.adam, config.learning_rate)
            sums["policy_objective"] += parts.ppo
            sums["value_loss"] += parts.value
            sums["entropy"] += parts.entropy
            count += 1
    state.params = params.with_flat(flat)
    mean_new, _ = policy_forward(state.params, batch.obs)
    ratio = np.exp(gaussian_log_prob(mean_new, state.params.log_std, batch.act) - batch.logp_old)
    out = {k: v / max(count, 1) for k, v in sums.items()}
    out["mean_ratio"] = float(ratio.mean())
    out["param_norm"] = float(np.linalg.norm(flat))
    out["skipped"] = skipped
    return out


def new_trainer_state(obs_dim: int, act_dim: int, config: PpoConfig) -> TrainerState:
    params = init_parameters(obs_dim, act_dim, config.hidden, config.seed, config.log_std_init)
    rng = np.random.default_rng([config.seed, 1])
    return TrainerState(params, AdamState.zeros(params.flat().size), rng)


def train(
    env_factory: Callable[[], EmsEnv],
    scenario_set: ScenarioSet,
    config: PpoConfig,
    checkpoint_dir: str | Path | None = None,
    resume: TrainerState | None = None,
    log_: TrainingLog | None = None,
    max_updates: int | None = None,
) -> tuple[PolicyParameters, TrainingLog, TrainerState]:
    """Collect-then-update loop; deterministic for a given seed.

    ``resume`` continues from a checkpointed state; ``max_updates`` stops
    early (used to produce interruption points for resume tests).
    """
    env = env_factory()
    state = resume or new_trainer_state(env.obs_dim, env.act_dim, config)
    tlog = log_ or TrainingLog()
    scale = config.reward_scale if config.reward_scale is not None else default_reward_scale(env)
    total_updates = config.total_episodes // config.rollout_episodes
    done_here = 0
    while state.update < total_updates:
        if max_updates is not None and done_here >= max_updates:
            break
        t0 = time.perf_counter()
        batch, stats = collect(env, state, scenario_set, config, scale)
        upd = update(state, batch, config)
        state.update += 1
        done_here += 1
        row = {"update": state.update, "episodes": state.episodes, **stats, **upd}
        tlog.append(row, time.perf_counter() - t0)
        if state.update % 50 == 0:
            log.info(
                "update %d episodes %d reward %.1f critical %.3f",
                state.update, state.episodes, stats["mean_episode_reward"], stats["critical_fraction"],
            )
        if checkpoint_dir is not None and config.checkpoint_every and state.update % config.checkpoint_every == 0:
            save_checkpoint(state, Path(checkpoint_dir) / f"ckpt_{state.update:06d}.bin", config, tlog)
    return state.params, tlog, state


# --------------------------------------------------------------------------- evaluation


def deterministic_policy(params: PolicyParameters) -> Callable[[np.ndarray], np.ndarray]:
    layers = params.policy_layers()
    return lambda obs: _mlp_forward(layers, obs, True)[0]


@dataclass
class Evaluation:
    risk: RiskReport
    traces: dict[int, EpisodeTrace]
    curves: dict[int, dict[str, np.ndarray]]  # scenario id -> class -> served MW per hour
    demand: dict[int, dict[str, np.ndarray]]
    rollout_seconds: list[float]
    infeasible: dict[int, int]  # scenario id -> non-converged intervals

    def served_fraction(self, cls: str, scenario_id: int | None = None) -> float:
        ids = [scenario_id] if scenario_id is not None else list(self.curves)
        served = sum(self.curves[i][cls].sum() for i in ids)
        dem = sum(self.demand[i][cls].sum() for i in ids)
        return float(served / dem) if dem > 0 else 1.0

    def expected_fraction(self, cls: str) -> float:
        w = {sid: p for sid, _, p in self.risk.per_scenario_loss}
        tot = 0.0
        for sid, c in self.curves.items():
            d = self.demand[sid][cls].sum()
            tot += w[sid] * (c[cls].sum() / d if d > 0 else 1.0)
        return float(tot)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EMS_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(
    params_or_policy,
    model: NetworkModel,
    scenario_set: ScenarioSet,
    alpha: float = 0.95,
    env_config: EnvConfig | None = None,
) -> Evaluation:
    """Mean-action rollout on every retained scenario, then VaR/CVaR of weighted served load."""
    policy = params_or_policy if callable(params_or_policy) else deterministic_policy(params_or_policy)
    ec = env_config or EnvConfig()
    scenarios = list(scenario_set)

    def run(s: Scenario):
        env = EmsEnv(model, ec)
        t0 = time.perf_counter()
        tr = env.rollout(policy, s)
        return tr, time.perf_counter() - t0

    workers = min(_threads(), max(1, len(scenarios)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, scenarios))
    else:
        results = [run(s) for s in scenarios]
    traces, curves, demand, secs, infeasible = {}, {}, {}, [], {}
    served = []
    for s, (tr, sec) in zip(scenarios, results):
        traces[s.id] = tr
        curves[s.id] = tr.served_by_class(model)
        demand[s.id] = tr.demand_by_class(model)
        secs.append(sec)
        infeasible[s.id] = sum(1 for r in tr.records if not r.converged)
        served.append(tr.weighted_served(model))
    risk = risk_from_served([s.id for s in scenarios], served, scenario_set.weights / scenario_set.weights.sum(), alpha)
    return Evaluation(risk, traces, curves, demand, secs, infeasible)


# --------------------------------------------------------------------------- checkpoints

MAGIC = b"EMSPPO01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    state: TrainerState | PolicyParameters,
    path: str | Path,
    config: PpoConfig | None = None,
    tlog: TrainingLog | None = None,
) -> None:
    """Binary header (magic, version, JSON metadata) followed by little-endian float64 arrays."""
    if isinstance(state, PolicyParameters):
        state = TrainerState(state, AdamState.zeros(state.flat().size), np.random.default_rng(0))
    p = state.params
    header = {
        "version": VERSION,
        "obs_dim": p.obs_dim,
        "act_dim": p.act_dim,
        "hidden": list(p.hidden),
        "policy_len": int(p.policy.size),
        "value_len": int(p.value.size),
        "config_hash": config.digest() if config is not None else None,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()} if config else None,
        "update": state.update,
        "episodes": state.episodes,
        "adam_t": state.adam.t,
        "rng": state.rng.bit_generator.state,
        "log": tlog.rows if tlog is not None else [],
    }
    raw = json.dumps(header, sort_keys=True, default=_json_default).encode()
    body = np.concatenate([p.policy, p.value, state.adam.m, state.adam.v]).astype("<f8").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(raw)))
        fh.write(raw)
        fh.write(body)
    tmp.replace(path)


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def read_checkpoint(path: str | Path) -> tuple[dict, TrainerState]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a policy checkpoint")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + hlen])
    arr = np.frombuffer(data[16 + hlen :], dtype="<f8").astype(float)
    npol, nval = header["policy_len"], header["value_len"]
    if arr.size != 3 * (npol + nval):  # parameters, adam m, adam v
        raise CheckpointError(f"{path}: truncated parameter block")
    params = PolicyParameters(
        header["obs_dim"], header["act_dim"], tuple(header["hidden"]), arr[:npol].copy(), arr[npol : npol + nval].copy()
    )
    n = npol + nval
    adam = AdamState(arr[n : 2 * n].copy(), arr[2 * n :].copy(), header["adam_t"])
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    return header, TrainerState(params, adam, rng, header["update"], header["episodes"])


def load_checkpoint(
    path: str | Path,
    obs_dim: int | None = None,
    act_dim: int | None = None,
    hidden: Sequence[int] | None = None,
    config: PpoConfig | None = None,
) -> PolicyParameters:
    """Load parameters, checking shapes (and config hash when given) against expectations."""
    header, state = read_checkpoint(path)
    checks = [("obs_dim", obs_dim, header["obs_dim"]), ("act_dim", act_dim, header["act_dim"])]
    if hidden is not None:
        checks.append(("hidden", list(hidden), header["hidden"]))
    for name, want, got in checks:
        if want is not None and want != got:
            raise CheckpointError(f"checkpoint shape mismatch: {name} is {got}, expected {want}")
    if config is not None and header["config_hash"] not in (None, config.digest()):
        raise CheckpointError(f"checkpoint config hash {header['config_hash']} != {config.digest()}")
    return state.params


def resume_state(path: str | Path, config: PpoConfig) -> tuple[TrainerState, TrainingLog]:
    header, state = read_checkpoint(path)
    if header["config_hash"] != config.digest():
        raise CheckpointError(f"checkpoint config hash {header['config_hash']} != {config.digest()}")
    tlog = TrainingLog()
    for row in header["log"]:
        tlog.append(row, float("nan"))
    return state, tlog


def config_from_dict(d: dict) -> PpoConfig:
    names = {f.name for f in fields(PpoConfig)}
    kw = {k: (tuple(v) if k == "hidden" else v) for k, v in d.items() if k in names}
    return PpoConfig(**kw)
