"""Network data model, case-file ingestion, validation and failure scenarios.

Power quantities are stored in MW / MVAr / MWh as written in the case file.
``to_per_unit`` and ``from_per_unit`` convert between physical units and the
system base; the power-flow solvers do that conversion internally.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

LOAD_CLASSES = ("critical", "semi_critical", "non_critical")
CASES_DIR = Path(__file__).parent / "cases"


class CaseFormatError(ValueError):
    """Malformed case file (syntax, missing section or column)."""


class CaseValidationError(ValueError):
    """A parsed case violates one or more model invariants."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(f"{f.path}: {f.message}" for f in report.findings))


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float = 0.95
    v_max: float = 1.05
    theta_min: float = -math.pi / 4
    theta_max: float = math.pi / 4
    is_slack: bool = False
    slack_p_min: float | None = None
    slack_p_max: float | None = None


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    g: float
    b: float
    p_lim: float
    q_lim: float = 0.0
    pof: float = 0.0
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    q_min: float = 0.0
    q_max: float = 0.0
    pof: float = 0.0
    k_robust: float = 1.0
    name: str = ""
    v_set: float = 1.0
    available: bool = True


@dataclass(frozen=True)
class EssUnit:
    id: int
    bus: int
    capacity: float
    e_min: float
    e_max: float
    c_max: float
    d_max: float
    soc_min: float
    soc_max: float
    eta: float
    e_init: float


@dataclass(frozen=True, eq=False)
class LoadPoint:
    id: int
    bus: int
    cls: str
    profile: np.ndarray
    q_profile: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, LoadPoint):
            return NotImplemented
        return (
            (self.id, self.bus, self.cls) == (other.id, other.bus, other.cls)
            and np.array_equal(self.profile, other.profile)
            and np.array_equal(self.q_profile, other.q_profile)
        )

    __hash__ = None


@dataclass(frozen=True)
class LoadWeights:
    k_c: float = 100.0
    k_sc: float = 10.0
    k_nc: float = 1.0

    def of(self, cls: str) -> float:
        return {"critical": self.k_c, "semi_critical": self.k_sc, "non_critical": self.k_nc}[cls]


@dataclass(frozen=True)
class NetworkModel:
    name: str
    kind: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    ess_units: tuple[EssUnit, ...]
    loads: tuple[LoadPoint, ...]
    weights: LoadWeights = LoadWeights()
    base_mva: float = 100.0
    horizon: int = 24
    dt: float = 1.0
    line_failures: bool = False
    per_unit: bool = False
    islanded: tuple[int, ...] = ()

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def slack_index(self) -> int:
        for i, b in enumerate(self.buses):
            if b.is_slack:
                return i
        raise ValueError(f"{self.name}: no slack bus")

    @property
    def slack_bus(self) -> Bus:
        return self.buses[self.slack_index]

    def load_weights(self) -> np.ndarray:
        return np.array([self.weights.of(ld.cls) for ld in self.loads])

    def profile_matrix(self) -> np.ndarray:
        """(n_loads, T) matrix of MW demand."""
        if not self.loads:
            return np.zeros((0, self.horizon))
        return np.vstack([ld.profile for ld in self.loads])

    def q_profile_matrix(self) -> np.ndarray:
        if not self.loads:
            return np.zeros((0, self.horizon))
        return np.vstack([ld.q_profile for ld in self.loads])

    def installed_capacity(self) -> float:
        return float(sum(g.p_max for g in self.generators))


@dataclass(frozen=True)
class Scenario:
    """Joint availability outcome; bit i of ``mask`` set means component i failed."""

    mask: int
    n_components: int
    probability: float

    @property
    def id(self) -> int:
        return self.mask

    @property
    def mask_hex(self) -> str:
        width = max(1, (self.n_components + 3) // 4)
        return f"{self.mask:0{width}x}"

    def failed(self, i: int) -> bool:
        return bool((self.mask >> i) & 1)

    def bits(self) -> np.ndarray:
        return np.array([(self.mask >> i) & 1 for i in range(self.n_components)], dtype=float)


def all_available(model: NetworkModel) -> Scenario:
    return Scenario(0, len(failable_components(model)), 1.0)


@dataclass(frozen=True)
class Finding:
    path: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, path: str, message: str) -> None:
        self.findings.append(Finding(path, message))

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)


# --------------------------------------------------------------------------- parsing

_SECTIONS = ("meta", "buses", "lines", "generators", "ess", "loads")
_REQUIRED = {
    "buses": ("id", "v_min", "v_max", "theta_min", "theta_max", "slack", "slack_p_min", "slack_p_max"),
    "lines": ("id", "from", "to", "g", "b", "p_lim"),
    "generators": ("id", "bus", "p_min", "p_max", "pof"),
    "ess": ("id", "bus", "capacity", "soc_min", "soc_max", "c_max", "d_max"),
    "loads": ("id", "bus", "class", "profile"),
}


def _split_sections(text: str, source: str) -> dict[str, list[tuple[int, str]]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise CaseFormatError(f"{source}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise CaseFormatError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise CaseFormatError(f"{source}:{lineno}: content before first section")
        sections[current].append((lineno, line))
    for name in ("meta", "buses", "lines", "generators", "loads"):
        if name not in sections:
            raise CaseFormatError(f"{source}: missing section [{name}]")
    sections.setdefault("ess", [])
    return sections


def _parse_meta(rows: list[tuple[int, str]], source: str) -> dict[str, str]:
    meta = {}
    for lineno, line in rows:
        if "=" not in line:
            raise CaseFormatError(f"{source}:{lineno}: expected key = value in [meta]")
        key, value = line.split("=", 1)
        meta[key.strip().lower()] = value.strip()
    return meta


def _parse_table(name: str, rows: list[tuple[int, str]], source: str) -> list[tuple[int, dict]]:
    if not rows:
        return []
    reader = csv.reader(io.StringIO("\n".join(line for _, line in rows)), skipinitialspace=True)
    table = [[c.strip() for c in r] for r in reader]
    header = [h.lower() for h in table[0]]
    missing = [c for c in _REQUIRED.get(name, ()) if c not in header]
    if missing:
        raise CaseFormatError(f"{source}:{rows[0][0]}: [{name}] header lacks column(s) {missing}")
    out = []
    for (lineno, _), cells in zip(rows[1:], table[1:]):
        if name == "loads":
            k = header.index("profile")
            if len(cells) < k + 1:
                raise CaseFormatError(f"{source}:{lineno}: load row has no profile values")
            rec = dict(zip(header[:k], cells[:k]))
            rec["profile"] = cells[k:]
        else:
            if len(cells) != len(header):
                raise CaseFormatError(
                    f"{source}:{lineno}: [{name}] row has {len(cells)} fields, header has {len(header)}"
                )
            rec = dict(zip(header, cells))
        out.append((lineno, rec))
    return out


def _num(rec: dict, key: str, where: str, default=None) -> float:
    raw = rec.get(key, "")
    if raw == "" or raw is None:
        if default is None:
            raise CaseFormatError(f"{where}: missing value for '{key}'")
        return float(default)
    try:
        return float(raw)
    except ValueError as exc:
        raise CaseFormatError(f"{where}: '{key}' = {raw!r} is not a number") from exc


def _flag(raw: str) -> bool:
    return str(raw).strip().lower() in ("1", "true", "yes", "y")


def parse_case(text: str, source: str = "<string>") -> NetworkModel:
    """Parse case-file text into a model (no invariant checks)."""
    sec = _split_sections(text, source)
    meta = _parse_meta(sec["meta"], source)
    try:
        horizon = int(meta.get("horizon", 24))
        dt = float(meta.get("dt", 1.0))
        base_mva = float(meta.get("base_mva", 100.0))
        weights = LoadWeights(
            float(meta.get("k_c", 100.0)), float(meta.get("k_sc", 10.0)), float(meta.get("k_nc", 1.0))
        )
    except ValueError as exc:
        raise CaseFormatError(f"{source}: bad [meta] value: {exc}") from exc
    kind = meta.get("kind", "dc").lower()
    if kind not in ("dc", "ac"):
        raise CaseFormatError(f"{source}: kind must be dc or ac, got {kind!r}")

    buses = []
    for lineno, r in _parse_table("buses", sec["buses"], source):
        w = f"{source}:{lineno}"
        slack = _flag(r["slack"])
        buses.append(
            Bus(
                id=int(_num(r, "id", w)),
                v_min=_num(r, "v_min", w),
                v_max=_num(r, "v_max", w),
                theta_min=_num(r, "theta_min", w),
                theta_max=_num(r, "theta_max", w),
                is_slack=slack,
                slack_p_min=_num(r, "slack_p_min", w) if slack else None,
                slack_p_max=_num(r, "slack_p_max", w) if slack else None,
            )
        )
    lines = []
    for lineno, r in _parse_table("lines", sec["lines"], source):
        w = f"{source}:{lineno}"
        lines.append(
            Line(
                id=int(_num(r, "id", w)),
                from_bus=int(_num(r, "from", w)),
                to_bus=int(_num(r, "to", w)),
                g=_num(r, "g", w),
                b=_num(r, "b", w),
                p_lim=_num(r, "p_lim", w),
                q_lim=_num(r, "q_lim", w, 0.0),
                pof=_num(r, "pof", w, 0.0),
            )
        )
    gens = []
    for lineno, r in _parse_table("generators", sec["generators"], source):
        w = f"{source}:{lineno}"
        gens.append(
            Generator(
                id=int(_num(r, "id", w)),
                bus=int(_num(r, "bus", w)),
                p_min=_num(r, "p_min", w),
                p_max=_num(r, "p_max", w),
                q_min=_num(r, "q_min", w, 0.0),
                q_max=_num(r, "q_max", w, 0.0),
                pof=_num(r, "pof", w),
                k_robust=_num(r, "k_robust", w, 1.0),
                name=r.get("name", "") or f"G{int(_num(r, 'id', w))}",
                v_set=_num(r, "v_set", w, 1.0),
            )
        )
    ess = []
    for lineno, r in _parse_table("ess", sec["ess"], source):
        w = f"{source}:{lineno}"
        cap = _num(r, "capacity", w)
        soc_min, soc_max = _num(r, "soc_min", w), _num(r, "soc_max", w)
        soc_init = _num(r, "soc_init", w, soc_max)
        ess.append(
            EssUnit(
                id=int(_num(r, "id", w)),
                bus=int(_num(r, "bus", w)),
                capacity=cap,
                e_min=soc_min * cap,
                e_max=soc_max * cap,
                c_max=_num(r, "c_max", w),
                d_max=_num(r, "d_max", w),
                soc_min=soc_min,
                soc_max=soc_max,
                eta=_num(r, "eta", w, 1.0),
                e_init=soc_init * cap,
            )
        )
    loads = []
    for lineno, r in _parse_table("loads", sec["loads"], source):
        w = f"{source}:{lineno}"
        try:
            prof = np.array([float(x) for x in r["profile"] if x != ""])
        except ValueError as exc:
            raise CaseFormatError(f"{w}: non-numeric profile value") from exc
        cls = r["class"].strip().lower().replace("-", "_")
        if cls not in LOAD_CLASSES:
            raise CaseFormatError(f"{w}: load class must be one of {LOAD_CLASSES}, got {cls!r}")
        pf = _num(r, "pf", w, 1.0)
        q = prof * math.tan(math.acos(min(max(pf, 0.0), 1.0))) if kind == "ac" else np.zeros_like(prof)
        prof.setflags(write=False)
        q.setflags(write=False)
        loads.append(LoadPoint(int(_num(r, "id", w)), int(_num(r, "bus", w)), cls, prof, q))

    return NetworkModel(
        name=meta.get("name", Path(source).stem),
        kind=kind,
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        ess_units=tuple(ess),
        loads=tuple(loads),
        weights=weights,
        base_mva=base_mva,
        horizon=horizon,
        dt=dt,
        line_failures=_flag(meta.get("line_failures", "false")),
    )


def bundled_case(name: str) -> Path:
    """Path of a case shipped with the package (``mvdc12``, ``ieee30``, ``toy3``)."""
    path = CASES_DIR / (name if name.endswith(".case") else f"{name}.case")
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def load_case(path: str | Path) -> NetworkModel:
    """Read and validate a case file. Bundled case names are accepted too."""
    p = Path(path)
    if not p.exists() and not p.suffix and (CASES_DIR / f"{p.name}.case").exists():
        p = CASES_DIR / f"{p.name}.case"
    text = p.read_text()
    model = parse_case(text, str(p))
    report = validate(model)
    if not report.ok:
        raise CaseValidationError(report)
    return model


# --------------------------------------------------------------------------- validation


def _components(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Connected-component label per node (BFS)."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    label = [-1] * n
    comp = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = comp
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = comp
                    q.append(v)
        comp += 1
    return label


def energized_buses(model: NetworkModel) -> np.ndarray:
    """Boolean mask of buses connected to the slack bus through in-service lines."""
    idx = model.bus_index
    edges = [(idx[ln.from_bus], idx[ln.to_bus]) for ln in model.lines if ln.in_service]
    label = _components(model.n_bus, edges)
    s = model.slack_index
    return np.array([lab == label[s] for lab in label])


def validate(model: NetworkModel) -> ValidationReport:
    rep = ValidationReport()
    ids = [b.id for b in model.buses]
    if len(set(ids)) != len(ids):
        rep.add("buses.id", "duplicate bus id")
    known = set(ids)
    slack = [b for b in model.buses if b.is_slack]
    if len(slack) != 1:
        rep.add("buses.is_slack", f"exactly one slack bus required, found {len(slack)}")
    for b in model.buses:
        p = f"buses[{b.id}]"
        if not b.v_min < b.v_max:
            rep.add(f"{p}.v_min", f"v_min {b.v_min} must be below v_max {b.v_max}")
        if not b.theta_min < b.theta_max:
            rep.add(f"{p}.theta_min", "theta_min must be below theta_max")
        if b.is_slack:
            if b.slack_p_min is None or b.slack_p_max is None or not b.slack_p_min < b.slack_p_max:
                rep.add(f"{p}.slack_p_min", "slack_p_min must be below slack_p_max")
    for ln in model.lines:
        p = f"lines[{ln.id}]"
        if ln.from_bus not in known or ln.to_bus not in known:
            rep.add(f"{p}.from_bus", "references unknown bus")
        if ln.from_bus == ln.to_bus:
            rep.add(f"{p}.to_bus", "line endpoints must differ")
        if not ln.p_lim > 0:
            rep.add(f"{p}.p_lim", "p_lim must be positive")
        if ln.q_lim < 0:
            rep.add(f"{p}.q_lim", "q_lim must be nonnegative")
        if not 0 <= ln.pof < 1:
            rep.add(f"{p}.pof", "pof must lie in [0, 1)")
    for g in model.generators:
        p = f"generators[{g.id}]"
        if g.bus not in known:
            rep.add(f"{p}.bus", "references unknown bus")
        if not 0 <= g.p_min <= g.p_max:
            rep.add(f"{p}.p_min", "need 0 <= p_min <= p_max")
        if g.q_min > g.q_max:
            rep.add(f"{p}.q_min", "q_min must not exceed q_max")
        if not 0 <= g.pof < 1:
            rep.add(f"{p}.pof", "pof must lie in [0, 1)")
        if not g.k_robust > 0:
            rep.add(f"{p}.k_robust", "k_robust must be positive")
    for e in model.ess_units:
        p = f"ess[{e.id}]"
        if e.bus not in known:
            rep.add(f"{p}.bus", "references unknown bus")
        if not 0 < e.e_min < e.e_max <= e.capacity + 1e-12:
            rep.add(f"{p}.e_min", "need 0 < e_min < e_max <= capacity")
        if abs(e.e_min - e.soc_min * e.capacity) > 1e-9:
            rep.add(f"{p}.e_min", "e_min must equal soc_min * capacity")
        if not 0 < e.eta <= 1:
            rep.add(f"{p}.eta", "eta must lie in (0, 1]")
        if not e.e_min - 1e-12 <= e.e_init <= e.e_max + 1e-12:
            rep.add(f"{p}.e_init", f"e_init {e.e_init} outside [{e.e_min}, {e.e_max}]")
        if e.c_max < 0 or e.d_max < 0:
            rep.add(f"{p}.c_max", "charge/discharge rates must be nonnegative")
    for ld in model.loads:
        p = f"loads[{ld.id}]"
        if ld.bus not in known:
            rep.add(f"{p}.bus", "references unknown bus")
        if ld.cls not in LOAD_CLASSES:
            rep.add(f"{p}.class", f"unknown class {ld.cls!r}")
        if len(ld.profile) != model.horizon:
            rep.add(f"{p}.profile", f"profile length {len(ld.profile)} != horizon {model.horizon}")
        if np.any(ld.profile < 0) or not np.all(np.isfinite(ld.profile)):
            rep.add(f"{p}.profile", "profile values must be finite and >= 0")
    w = model.weights
    if not w.k_c > w.k_sc > w.k_nc > 0:
        rep.add("meta.weights", f"need k_c > k_sc > k_nc > 0, got {w.k_c}, {w.k_sc}, {w.k_nc}")
    if model.horizon <= 0:
        rep.add("meta.horizon", "horizon must be positive")
    if not model.dt > 0:
        rep.add("meta.dt", "dt must be positive")
    if not model.base_mva > 0:
        rep.add("meta.base_mva", "base_mva must be positive")
    if rep.ok and len(slack) == 1 and not energized_buses(model).all():
        rep.add("lines", "network graph is not connected")
    return rep


# --------------------------------------------------------------------------- admittance


@dataclass(frozen=True)
class BusAdmittance:
    G: np.ndarray
    B: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        return self.G + 1j * self.B


def admittance(model: NetworkModel, require_connected: bool = True) -> BusAdmittance:
    """Bus conductance/susceptance matrices from in-service lines (series branches only)."""
    if require_connected and not energized_buses(model).all():
        raise ValueError(f"{model.name}: network graph is disconnected")
    n = model.n_bus
    idx = model.bus_index
    G = np.zeros((n, n))
    B = np.zeros((n, n))
    dc = model.kind == "dc"
    for ln in model.lines:
        if not ln.in_service:
            continue
        i, k = idx[ln.from_bus], idx[ln.to_bus]
        G[i, i] += ln.g
        G[k, k] += ln.g
        G[i, k] -= ln.g
        G[k, i] -= ln.g
        if not dc:
            B[i, i] += ln.b
            B[k, k] += ln.b
            B[i, k] -= ln.b
            B[k, i] -= ln.b
    return BusAdmittance(G, B)


# --------------------------------------------------------------------------- scenarios


def failable_components(model: NetworkModel) -> list[tuple[str, int]]:
    """Ordered (kind, index) list matching scenario mask bits."""
    comps = [("gen", i) for i in range(len(model.generators))]
    if model.line_failures:
        comps += [("line", i) for i in range(len(model.lines))]
    return comps


def component_pofs(model: NetworkModel) -> list[float]:
    out = []
    for kind, i in failable_components(model):
        out.append(model.generators[i].pof if kind == "gen" else model.lines[i].pof)
    return out


def apply_scenario(model: NetworkModel, s: Scenario) -> NetworkModel:
    """Zero the limits of failed generators and take failed lines out of service."""
    comps = failable_components(model)
    if s.n_components != len(comps) or s.mask >> len(comps):
        raise ValueError(f"scenario mask covers {s.n_components} components, model has {len(comps)}")
    gens = list(model.generators)
    lines = list(model.lines)
    for bit, (kind, i) in enumerate(comps):
        if not s.failed(bit):
            continue
        if kind == "gen":
            gens[i] = replace(gens[i], p_min=0.0, p_max=0.0, q_min=0.0, q_max=0.0, available=False)
        else:
            lines[i] = replace(lines[i], in_service=False)
    out = replace(model, generators=tuple(gens), lines=tuple(lines), islanded=())
    if any(not ln.in_service for ln in lines):
        live = energized_buses(out)
        dead = tuple(b.id for b, ok in zip(out.buses, live) if not ok)
        if dead:
            log.warning("scenario %s islands buses %s; their loads are unservable", s.mask_hex, dead)
            out = replace(out, islanded=dead)
    return out


# --------------------------------------------------------------------------- per unit

_POWER_FIELDS = {
    Bus: ("slack_p_min", "slack_p_max"),
    Line: ("p_lim", "q_lim"),
    Generator: ("p_min", "p_max", "q_min", "q_max"),
    EssUnit: ("capacity", "e_min", "e_max", "c_max", "d_max", "e_init"),
}


def _scale(model: NetworkModel, factor: float) -> NetworkModel:
    def sc(obj):
        changes = {}
        for name in _POWER_FIELDS[type(obj)]:
            v = getattr(obj, name)
            if v is not None:
                changes[name] = v * factor
        return replace(obj, **changes)

    loads = tuple(
        LoadPoint(ld.id, ld.bus, ld.cls, ld.profile * factor, ld.q_profile * factor) for ld in model.loads
    )
    return replace(
        model,
        buses=tuple(sc(b) for b in model.buses),
        lines=tuple(sc(ln) for ln in model.lines),
        generators=tuple(sc(g) for g in model.generators),
        ess_units=tuple(sc(e) for e in model.ess_units),
        loads=loads,
    )


def to_per_unit(model: NetworkModel) -> NetworkModel:
    if model.per_unit:
        return model
    return replace(_scale(model, 1.0 / model.base_mva), per_unit=True)


def from_per_unit(model: NetworkModel) -> NetworkModel:
    if not model.per_unit:
        return model
    return replace(_scale(model, model.base_mva), per_unit=False)


def power_fields(model: NetworkModel) -> np.ndarray:
    """Every MW/MVAr/MWh quantity in the model, flattened (for round-trip checks)."""
    vals: list[float] = []
    for group in (model.buses, model.lines, model.generators, model.ess_units):
        for obj in group:
            vals += [getattr(obj, n) for n in _POWER_FIELDS[type(obj)] if getattr(obj, n) is not None]
    for ld in model.loads:
        vals += list(ld.profile) + list(ld.q_profile)
    return np.array(vals, dtype=float)


def summarize(model: NetworkModel) -> dict:
    by_class = {c: 0.0 for c in LOAD_CLASSES}
    for ld in model.loads:
        by_class[ld.cls] += float(ld.profile.max())
    return {
        "name": model.name,
        "kind": model.kind,
        "buses": model.n_bus,
        "lines": len(model.lines),
        "generators": len(model.generators),
        "ess": len(model.ess_units),
        "load_points": len(model.loads),
        "load_buses": len({ld.bus for ld in model.loads}),
        "installed_mw": model.installed_capacity(),
        "peak_by_class_mw": by_class,
    }

