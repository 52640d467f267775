"""Failure-scenario enumeration and discrete tail-risk measures.

A scenario is a bitmask over failable components (bit set = failed). Its
probability is the product of per-component terms, multiplied in component
order so the value is reproducible bit-for-bit by a plain loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid_model import NetworkModel, Scenario, component_pofs, failable_components

MAX_COMPONENTS = 25
CUM_TOL = 1e-12  # slack on the cumulative-probability test at the VaR atom
_CHUNK = 1 << 18


class EnumerationTooLarge(ValueError):
    pass


@dataclass
class ScenarioSet:
    scenarios: list[Scenario]
    threshold: float
    dropped_mass: float
    normalized: bool = True
    n_components: int = 0
    total_enumerated: int = 0

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    @property
    def probabilities(self) -> np.ndarray:
        """Raw product probabilities of the retained scenarios."""
        return np.array([s.probability for s in self.scenarios], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """Scenario weights used for expectations: renormalized when ``normalized``."""
        p = self.probabilities
        if self.normalized and len(p):
            return p / p.sum()
        return p

    def sample(self, rng: np.random.Generator) -> Scenario:
        w = self.weights
        i = int(rng.choice(len(w), p=w / w.sum()))
        return self.scenarios[i]

    def worst(self) -> Scenario:
        """Retained scenario with the most failures (ties: lowest probability, then mask)."""
        return max(self.scenarios, key=lambda s: (bin(s.mask).count("1"), -s.probability, -s.mask))


def _mask_probabilities(pofs: np.ndarray, masks: np.ndarray) -> np.ndarray:
    prob = np.ones(len(masks))
    for i, q in enumerate(pofs):
        bit = (masks >> i) & 1
        prob = prob * np.where(bit == 1, q, 1.0 - q)
    return prob


def scenario_probability(pofs: Sequence[float], mask: int) -> float:
    """Reference product for one mask, multiplied in component order."""
    p = 1.0
    for i, q in enumerate(pofs):
        p *= q if (mask >> i) & 1 else 1.0 - q
    return p


def enumerate_scenarios(
    pofs: Sequence[float],
    threshold: float = 0.0005,
    normalize: bool = True,
    max_components: int = MAX_COMPONENTS,
) -> ScenarioSet:
    """All 2^n availability masks, keeping those with probability >= threshold."""
    q = np.asarray(pofs, dtype=float)
    n = len(q)
    if n > max_components:
        raise EnumerationTooLarge(
            f"{n} failable components exceed the enumeration guard of {max_components}; "
            "raise the threshold or reduce the component list"
        )
    if np.any(q < 0) or np.any(q >= 1):
        raise ValueError("each pof must lie in [0, 1)")
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    total = 1 << n
    kept: list[Scenario] = []
    dropped: list[float] = []
    for start in range(0, total, _CHUNK):
        masks = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        prob = _mask_probabilities(q, masks)
        keep = prob >= threshold
        kept.extend(Scenario(int(m), n, float(p)) for m, p in zip(masks[keep], prob[keep]))
        dropped.extend(prob[~keep].tolist())
    return ScenarioSet(
        scenarios=kept,
        threshold=float(threshold),
        dropped_mass=math.fsum(dropped),
        normalized=normalize,
        n_components=n,
        total_enumerated=total,
    )


def model_scenarios(model: NetworkModel, threshold: float = 0.0005, normalize: bool = True) -> ScenarioSet:
    return enumerate_scenarios(component_pofs(model), threshold, normalize)


def single_scenario_set(scenario: Scenario) -> ScenarioSet:
    return ScenarioSet([Scenario(scenario.mask, scenario.n_components, 1.0)], 0.0, 0.0, True, scenario.n_components, 1)


# --------------------------------------------------------------------------- risk


def loss(served_weighted: float, expected_weighted: float) -> float:
    """Shortfall of a scenario against the expectation; negative when it does better."""
    return expected_weighted - served_weighted


def _prepare(losses, probs) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(losses, dtype=float)
    p = np.asarray(probs, dtype=float)
    if x.size == 0:
        raise ValueError("empty loss distribution")
    if x.shape != p.shape:
        raise ValueError("losses and probs must have the same length")
    if np.any(p < 0) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise ValueError("probs must be nonnegative and sum to 1")
    order = np.argsort(x, kind="stable")
    return x[order], p[order]


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")


def var_alpha(losses, probs, alpha: float) -> float:
    """Smallest loss x with P(loss <= x) >= alpha."""
    _check_alpha(alpha)
    x, p = _prepare(losses, probs)
    cum = np.cumsum(p)
    i = int(np.searchsorted(cum, alpha - CUM_TOL, side="left"))
    return float(x[min(i, len(x) - 1)])


def cvar_alpha(losses, probs, alpha: float) -> float:
    """Mean of the worst (1 - alpha) probability mass, splitting the atom at VaR."""
    beta = var_alpha(losses, probs, alpha)
    x, p = _prepare(losses, probs)
    excess = np.maximum(x - beta, 0.0)
    return float(beta + math.fsum(p * excess) / (1.0 - alpha))


@dataclass
class RiskReport:
    alpha: float
    var: float
    cvar: float
    expected_weighted: float
    per_scenario_loss: list[tuple[int, float, float]] = field(default_factory=list)
    served: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "var": self.var,
            "cvar": self.cvar,
            "expected_weighted": self.expected_weighted,
            "scenarios": [
                {"id": sid, "loss": l, "probability": p, "served": s}
                for (sid, l, p), s in zip(self.per_scenario_loss, self.served)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class ScenarioEvaluationError(RuntimeError):
    def __init__(self, scenario_id: int, cause: BaseException):
        self.scenario_id = scenario_id
        super().__init__(f"scenario {scenario_id:x}: {cause}")


def risk_from_served(ids: Sequence[int], served: Sequence[float], weights: Sequence[float], alpha: float) -> RiskReport:
    w = np.asarray(weights, dtype=float)
    s = np.asarray(served, dtype=float)
    expected = math.fsum(w * s)
    losses = [loss(v, expected) for v in s]
    return RiskReport(
        alpha=alpha,
        var=var_alpha(losses, w, alpha),
        cvar=cvar_alpha(losses, w, alpha),
        expected_weighted=expected,
        per_scenario_loss=[(int(i), float(l), float(p)) for i, l, p in zip(ids, losses, w)],
        served=[float(v) for v in s],
    )


def risk_report(
    model: NetworkModel | None,
    scenario_set: ScenarioSet,
    dispatch_fn: Callable[[Scenario], float],
    alpha: float = 0.95,
) -> RiskReport:
    """Evaluate ``dispatch_fn`` on every retained scenario and attach VaR/CVaR.

    Expectations use the renormalized retained weights, so a set built with
    ``normalize=False`` is only accepted when nothing was pruned.
    """
    if not len(scenario_set):
        raise ValueError("scenario set is empty")
    if model is not None and scenario_set.n_components != len(failable_components(model)):
        raise ValueError("scenario set does not match the model's failable components")
    w = scenario_set.weights
    if not scenario_set.normalized:
        if scenario_set.dropped_mass > 1e-9:
            raise ValueError("unnormalized scenario set with pruned mass has no probability measure")
        w = w / w.sum()
    served = []
    for s in scenario_set:
        try:
            served.append(float(dispatch_fn(s)))
        except Exception as exc:  # noqa: BLE001 - re-raised with the scenario id
            raise ScenarioEvaluationError(s.id, exc) from exc
    return risk_from_served([s.id for s in scenario_set], served, w, alpha)


def write_scenarios_csv(path, scenario_set: ScenarioSet, losses: Sequence[float] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("mask_hex,probability" + (",loss" if losses is not None else "") + "\n")
        for i, s in enumerate(scenario_set):
            row = f"{s.mask_hex},{s.probability:.17g}"
            if losses is not None:
                row += f",{losses[i]:.17g}"
            fh.write(row + "\n")
