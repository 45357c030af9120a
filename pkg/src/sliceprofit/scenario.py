"""Scenario files and result serialization.

Scenarios are JSON documents; loading validates every field and rejects
rather than repairs, naming the offending field. Results are written as
RFC-4180 style CSV with LF line endings, full-precision floats and a fixed
column order, so identical runs produce identical bytes. The run manifest is
embedded as a leading '#' comment row.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .closedloop import EnvironmentModel
from .game import MarketConfig, OperatorPartition
from .longterm import DemandTrace
from .model import (
    DEDICATED,
    SHARED,
    ConfigurationError,
    ResourcePool,
    SliceSpec,
    VnfScheme,
    unit_demand,
)


class ScenarioError(Exception):
    """Base class for scenario file problems."""


class ScenarioParseError(ScenarioError):
    """The file is not valid JSON."""


class ScenarioValidationError(ScenarioError):
    """The document violates the scenario schema."""


@dataclass(frozen=True, eq=False)
class Scenario:
    """A fully validated problem instance."""

    name: str
    resource_names: tuple
    kpi_names: tuple
    pool: ResourcePool
    specs: tuple
    scheme: VnfScheme
    sharing_eligible: tuple = ()
    environment: Optional[EnvironmentModel] = None
    trace: Optional[DemandTrace] = None
    operators: Optional[tuple] = None
    market: Optional[MarketConfig] = None

    @property
    def n_slices(self) -> int:
        return len(self.specs)

    @property
    def n_resources(self) -> int:
        return self.pool.n_resources

    @property
    def n_kpis(self) -> int:
        return len(self.kpi_names)

    def resource_index(self, name: str) -> int:
        try:
            return self.resource_names.index(name)
        except ValueError:
            raise ScenarioValidationError(f"unknown resource {name!r}") from None

    def slice_index(self, slice_id: str) -> int:
        for i, spec in enumerate(self.specs):
            if spec.id == slice_id:
                return i
        raise ScenarioValidationError(f"unknown slice {slice_id!r}")

    def with_specs(self, specs) -> "Scenario":
        return replace(self, specs=tuple(specs))

    def with_kpis(self, kpis) -> "Scenario":
        kpis = np.asarray(kpis, dtype=float)
        if kpis.shape != (self.n_slices, self.n_kpis):
            raise ConfigurationError("KPI matrix must have shape (M, L)")
        return self.with_specs(
            replace(spec, kpi=kpis[i]) for i, spec in enumerate(self.specs)
        )

    def with_scheme(self, scheme: VnfScheme) -> "Scenario":
        return replace(self, scheme=scheme)

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "resources": [
                {
                    "name": n,
                    "capacity": float(self.pool.capacity[j]),
                    "unit_cost": float(self.pool.unit_cost[j]),
                }
                for j, n in enumerate(self.resource_names)
            ],
            "kpis": list(self.kpi_names),
            "slices": [
                {
                    "id": spec.id,
                    "kpi": [float(x) for x in spec.kpi],
                    "customer_size": float(spec.customer_size),
                    "price": float(spec.price),
                    "min_resources": [float(x) for x in spec.min_resources],
                    "demand_matrix": [[float(x) for x in row] for row in self.scheme.demand[i]],
                    "overhead": [float(x) for x in self.scheme.overhead[i]],
                }
                for i, spec in enumerate(self.specs)
            ],
            "sharing": {
                n: self.scheme.sharing[j] for j, n in enumerate(self.resource_names)
            },
            "sharing_eligible": [self.resource_names[j] for j in self.sharing_eligible],
        }
        if self.environment is not None:
            entries = []
            gamma = self.environment.gamma
            for i in range(gamma.shape[0]):
                for l in range(gamma.shape[1]):
                    for k in range(gamma.shape[2]):
                        if gamma[i, l, k] != 0:
                            entries.append(
                                {
                                    "slice": self.specs[i].id,
                                    "kpi": l,
                                    "source": self.specs[k].id,
                                    "rate": float(gamma[i, l, k]),
                                }
                            )
            doc["environment"] = {
                "coupling": entries,
                "damping": self.environment.damping,
                "tol": self.environment.tol,
                "max_iter": self.environment.max_iter,
            }
        if self.trace is not None:
            block = {"horizon": self.trace.horizon}
            for key in ("customer_size", "price", "kpi_scale"):
                series = getattr(self.trace, key)
                if series:
                    block[key] = {k: list(v) for k, v in sorted(series.items())}
            doc["trace"] = block
        if self.operators is not None:
            doc["operators"] = [
                {
                    "id": part.id,
                    "slices": list(part.slice_ids),
                    "capacity": [float(x) for x in part.capacity],
                    "unit_cost": [float(x) for x in part.unit_cost],
                }
                for part in self.operators
            ]
        if self.market is not None:
            grids = {}
            for op_id, by_res in sorted(self.market.grids.items()):
                grids[op_id] = {
                    self.resource_names[j]: {
                        "lo": float(axis[0]),
                        "hi": float(axis[-1]),
                        "points": int(len(axis)),
                    }
                    for j, axis in sorted(by_res.items())
                }
            doc["market"] = {
                "traded": [self.resource_names[j] for j in self.market.traded],
                "eta": self.market.eta,
                "price0": {
                    self.resource_names[j]: float(p)
                    for j, p in zip(self.market.traded, self.market.price0)
                },
                "tol": self.market.tol,
                "max_rounds": self.market.max_rounds,
                "grids": grids,
            }
        return doc


def _expect(condition: bool, message: str):
    if not condition:
        raise ScenarioValidationError(message)


def _number(doc: dict, key: str, where: str, minimum=None, positive=False) -> float:
    _expect(key in doc, f"{where}: missing field {key!r}")
    value = doc[key]
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
            f"{where}: field {key!r} must be a number")
    value = float(value)
    _expect(math.isfinite(value), f"{where}: field {key!r} must be finite")
    if positive:
        _expect(value > 0, f"{where}: field {key!r} must be positive")
    if minimum is not None:
        _expect(value >= minimum, f"{where}: field {key!r} must be >= {minimum}")
    return value


def _vector(doc: dict, key: str, where: str, length: Optional[int] = None) -> list:
    _expect(key in doc, f"{where}: missing field {key!r}")
    value = doc[key]
    _expect(isinstance(value, list), f"{where}: field {key!r} must be an array")
    for x in value:
        _expect(isinstance(x, (int, float)) and not isinstance(x, bool),
                f"{where}: field {key!r} must contain numbers")
        _expect(math.isfinite(float(x)), f"{where}: field {key!r} must be finite")
        _expect(float(x) >= 0, f"{where}: field {key!r} must be non-negative")
    if length is not None:
        _expect(len(value) == length, f"{where}: field {key!r} must have length {length}")
    return [float(x) for x in value]


def scenario_from_dict(doc: dict) -> Scenario:
    _expect(isinstance(doc, dict), "scenario document must be a JSON object")
    _expect(isinstance(doc.get("name"), str) and doc["name"],
            "scenario: field 'name' must be a non-empty string")
    name = doc["name"]

    resources = doc.get("resources")
    _expect(isinstance(resources, list) and resources,
            "scenario: field 'resources' must be a non-empty array")
    resource_names = []
    capacity, unit_cost = [], []
    for r in resources:
        _expect(isinstance(r, dict), "resources: entries must be objects")
        _expect(isinstance(r.get("name"), str) and r["name"],
                "resources: field 'name' must be a non-empty string")
        where = f"resource {r['name']!r}"
        resource_names.append(r["name"])
        capacity.append(_number(r, "capacity", where, positive=True))
        unit_cost.append(_number(r, "unit_cost", where, minimum=0.0))
    _expect(len(set(resource_names)) == len(resource_names),
            "resources: names must be unique")
    n = len(resource_names)
    pool = ResourcePool(np.array(capacity), np.array(unit_cost))

    kpis = doc.get("kpis")
    _expect(isinstance(kpis, list) and kpis and all(isinstance(k, str) for k in kpis),
            "scenario: field 'kpis' must be a non-empty array of names")
    l = len(kpis)

    slices = doc.get("slices")
    _expect(isinstance(slices, list), "scenario: field 'slices' must be an array")
    _expect(len(slices) >= 1, "scenario: M must be >= 1 (need at least one slice)")
    specs = []
    demand_rows = []
    overhead_rows = []
    ids = []
    for s in slices:
        _expect(isinstance(s, dict), "slices: entries must be objects")
        _expect(isinstance(s.get("id"), str) and s["id"],
                "slices: field 'id' must be a non-empty string")
        sid = s["id"]
        where = f"slice {sid!r}"
        ids.append(sid)
        kpi = _vector(s, "kpi", where, length=l)
        c = _number(s, "customer_size", where, minimum=0.0)
        p = _number(s, "price", where, minimum=0.0)
        mins = _vector(s, "min_resources", where, length=n)
        for j, m in enumerate(mins):
            _expect(m <= capacity[j],
                    f"{where}: min_resources[{resource_names[j]}] exceeds pool capacity")
        matrix = s.get("demand_matrix")
        _expect(isinstance(matrix, list) and len(matrix) == n,
                f"{where}: field 'demand_matrix' must be an {n}x{l} array")
        rows = []
        for row in matrix:
            _expect(isinstance(row, list) and len(row) == l,
                    f"{where}: field 'demand_matrix' must be an {n}x{l} array")
            for x in row:
                _expect(isinstance(x, (int, float)) and not isinstance(x, bool)
                        and math.isfinite(float(x)) and float(x) >= 0,
                        f"{where}: demand_matrix entries must be non-negative numbers")
            rows.append([float(x) for x in row])
        demand_rows.append(rows)
        overhead_rows.append(_vector(s, "overhead", where, length=n))
        specs.append(SliceSpec(sid, np.array(kpi), c, p, np.array(mins)))
    _expect(len(set(ids)) == len(ids), "slices: ids must be unique")

    sharing_doc = doc.get("sharing", {})
    _expect(isinstance(sharing_doc, dict), "scenario: field 'sharing' must be an object")
    sharing = []
    for j, rname in enumerate(resource_names):
        mode = sharing_doc.get(rname, DEDICATED)
        _expect(mode in (DEDICATED, SHARED),
                f"sharing[{rname}]: mode must be 'dedicated' or 'shared'")
        sharing.append(mode)
    for key in sharing_doc:
        _expect(key in resource_names, f"sharing: unknown resource {key!r}")
    scheme = VnfScheme(tuple(ids), np.array(demand_rows), np.array(overhead_rows),
                       tuple(sharing))

    eligible_doc = doc.get("sharing_eligible", [])
    _expect(isinstance(eligible_doc, list), "scenario: 'sharing_eligible' must be an array")
    eligible = []
    for rname in eligible_doc:
        _expect(rname in resource_names, f"sharing_eligible: unknown resource {rname!r}")
        eligible.append(resource_names.index(rname))
    _expect(len(set(eligible)) == len(eligible), "sharing_eligible: duplicate resource")

    scenario = Scenario(
        name=name,
        resource_names=tuple(resource_names),
        kpi_names=tuple(kpis),
        pool=pool,
        specs=tuple(specs),
        scheme=scheme,
        sharing_eligible=tuple(eligible),
    )

    if "environment" in doc:
        scenario = replace(scenario, environment=_environment_block(doc["environment"], scenario))
    if "trace" in doc:
        scenario = replace(scenario, trace=_trace_block(doc["trace"], scenario))
    if "operators" in doc:
        scenario = replace(scenario, operators=_operators_block(doc["operators"], scenario))
    if "market" in doc:
        _expect(scenario.operators is not None,
                "market: requires an 'operators' block")
        scenario = replace(scenario, market=_market_block(doc["market"], scenario))
    return scenario


def _environment_block(block, scenario: Scenario) -> EnvironmentModel:
    _expect(isinstance(block, dict), "environment: must be an object")
    m, l = scenario.n_slices, scenario.n_kpis
    gamma = np.zeros((m, l, m))
    coupling = block.get("coupling", [])
    _expect(isinstance(coupling, list), "environment: 'coupling' must be an array")
    for entry in coupling:
        _expect(isinstance(entry, dict), "environment: coupling entries must be objects")
        for key in ("slice", "source"):
            _expect(isinstance(entry.get(key), str),
                    f"environment: coupling field {key!r} must be a slice id")
        i = scenario.slice_index(entry["slice"])
        k = scenario.slice_index(entry["source"])
        _expect(i != k, "environment: self-coupling is not allowed")
        kpi = entry.get("kpi")
        if isinstance(kpi, str):
            _expect(kpi in scenario.kpi_names,
                    f"environment: coupling names unknown KPI {kpi!r}")
            kpi = scenario.kpi_names.index(kpi)
        _expect(isinstance(kpi, int) and not isinstance(kpi, bool) and 0 <= kpi < l,
                "environment: coupling field 'kpi' must be a KPI name or index")
        rate = _number(entry, "rate", "environment coupling", minimum=0.0)
        if rate > 0:
            shared_overlap = False
            for j in range(scenario.n_resources):
                if scenario.scheme.sharing[j] != SHARED:
                    continue
                u_i = unit_demand(scenario.specs[i], scenario.scheme)[j]
                u_k = unit_demand(scenario.specs[k], scenario.scheme)[j]
                if u_i > 0 and u_k > 0:
                    shared_overlap = True
                    break
            _expect(shared_overlap,
                    f"environment: slices {entry['slice']!r} and {entry['source']!r} "
                    "must share a shared-mode resource to couple")
        gamma[i, kpi, k] = rate
    baseline = np.stack([spec.kpi for spec in scenario.specs])
    damping = float(block.get("damping", 1.0))
    tol = float(block.get("tol", 1e-6))
    max_iter = int(block.get("max_iter", 50))
    try:
        return EnvironmentModel(baseline, gamma, damping, tol, max_iter)
    except ConfigurationError as exc:
        raise ScenarioValidationError(f"environment: {exc}") from None


def _trace_block(block, scenario: Scenario) -> DemandTrace:
    _expect(isinstance(block, dict), "trace: must be an object")
    _expect("horizon" in block and isinstance(block["horizon"], int)
            and not isinstance(block["horizon"], bool) and block["horizon"] >= 1,
            "trace: field 'horizon' must be an integer >= 1")
    horizon = block["horizon"]
    series = {}
    for key in ("customer_size", "price", "kpi_scale"):
        sub = block.get(key, {})
        _expect(isinstance(sub, dict), f"trace: field {key!r} must be an object")
        parsed = {}
        for sid, values in sub.items():
            scenario.slice_index(sid)  # raises on unknown ids
            _expect(isinstance(values, list) and len(values) == horizon,
                    f"trace: {key}[{sid}] must list {horizon} values")
            for v in values:
                _expect(isinstance(v, (int, float)) and not isinstance(v, bool)
                        and math.isfinite(float(v)) and float(v) >= 0,
                        f"trace: {key}[{sid}] must contain non-negative numbers")
            parsed[sid] = tuple(float(v) for v in values)
        series[key] = parsed
    try:
        return DemandTrace(horizon, series["customer_size"], series["price"],
                           series["kpi_scale"])
    except ConfigurationError as exc:
        raise ScenarioValidationError(f"trace: {exc}") from None


def _operators_block(block, scenario: Scenario) -> tuple:
    _expect(isinstance(block, list) and block, "operators: must be a non-empty array")
    seen_ids = set()
    claimed = set()
    parts = []
    total_cap = np.zeros(scenario.n_resources)
    for entry in block:
        _expect(isinstance(entry, dict), "operators: entries must be objects")
        _expect(isinstance(entry.get("id"), str) and entry["id"],
                "operators: field 'id' must be a non-empty string")
        oid = entry["id"]
        _expect(oid not in seen_ids, f"operators: duplicate id {oid!r}")
        seen_ids.add(oid)
        where = f"operator {oid!r}"
        slice_ids = entry.get("slices")
        _expect(isinstance(slice_ids, list) and slice_ids,
                f"{where}: field 'slices' must be a non-empty array")
        for sid in slice_ids:
            scenario.slice_index(sid)
            _expect(sid not in claimed, f"operators: slice {sid!r} assigned twice")
            claimed.add(sid)
        cap = _vector(entry, "capacity", where, length=scenario.n_resources)
        _expect(all(c > 0 for c in cap), f"{where}: capacity must be positive")
        cost = (_vector(entry, "unit_cost", where, length=scenario.n_resources)
                if "unit_cost" in entry else list(scenario.pool.unit_cost))
        total_cap += np.array(cap)
        parts.append(OperatorPartition(oid, tuple(slice_ids), np.array(cap), np.array(cost)))
    _expect(claimed == {s.id for s in scenario.specs},
            "operators: every slice must belong to exactly one operator")
    _expect(np.allclose(total_cap, scenario.pool.capacity),
            "operators: capacities must partition the main pool exactly")
    return tuple(parts)


def _market_block(block, scenario: Scenario) -> MarketConfig:
    _expect(isinstance(block, dict), "market: must be an object")
    traded_names = block.get("traded")
    _expect(isinstance(traded_names, list) and traded_names,
            "market: field 'traded' must be a non-empty array")
    traded = tuple(scenario.resource_index(rn) for rn in traded_names)
    eta = _number(block, "eta", "market", minimum=0.0)
    price0_doc = block.get("price0", {})
    _expect(isinstance(price0_doc, dict), "market: field 'price0' must be an object")
    for key in price0_doc:
        _expect(key in traded_names, f"market: price0 names unknown resource {key!r}")
    price0 = np.array([float(price0_doc.get(rn, 0.0)) for rn in traded_names])
    tol = float(block.get("tol", 1e-3))
    max_rounds = block.get("max_rounds", 100)
    _expect(isinstance(max_rounds, int) and not isinstance(max_rounds, bool)
            and max_rounds >= 1, "market: field 'max_rounds' must be an integer >= 1")
    grids_doc = block.get("grids", {})
    _expect(isinstance(grids_doc, dict), "market: field 'grids' must be an object")
    op_ids = {p.id for p in (scenario.operators or ())}
    grids = {}
    for oid, by_res in grids_doc.items():
        _expect(oid in op_ids, f"market: grid for unknown operator {oid!r}")
        _expect(isinstance(by_res, dict), f"market: grids[{oid}] must be an object")
        parsed = {}
        for rn, spec in by_res.items():
            j = scenario.resource_index(rn)
            _expect(j in traded, f"market: grids[{oid}][{rn}] is not a traded resource")
            _expect(isinstance(spec, dict), f"market: grids[{oid}][{rn}] must be an object")
            lo = _number(spec, "lo", f"market grid {oid}/{rn}", minimum=None)
            hi = _number(spec, "hi", f"market grid {oid}/{rn}", minimum=None)
            _expect(lo <= hi, f"market: grids[{oid}][{rn}] needs lo <= hi")
            points = spec.get("points", 11)
            _expect(isinstance(points, int) and not isinstance(points, bool) and points >= 2,
                    f"market: grids[{oid}][{rn}] needs integer points >= 2")
            axis = np.linspace(lo, hi, points)
            axis[np.abs(axis) < 1e-12] = 0.0
            _expect(bool(np.any(axis == 0.0)),
                    f"market: grids[{oid}][{rn}] must contain 0 (the no-trade option)")
            parsed[j] = axis
        grids[oid] = parsed
    try:
        return MarketConfig(traded=traded, eta=eta, price0=price0, tol=tol,
                            max_rounds=max_rounds, grids=grids)
    except ConfigurationError as exc:
        raise ScenarioValidationError(f"market: {exc}") from None


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    try:
        return scenario_from_dict(doc)
    except ScenarioValidationError as exc:
        raise ScenarioValidationError(f"{path}: {exc}") from None


def load_trace(path, scenario: Scenario) -> DemandTrace:
    """Parse a standalone trace file (same schema as the 'trace' block)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    try:
        return _trace_block(doc, scenario)
    except ScenarioValidationError as exc:
        raise ScenarioValidationError(f"{path}: {exc}") from None


def save_scenario(scenario: Scenario, path) -> None:
    """Canonical JSON dump; loading it back reproduces the scenario."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    return str(value)


def write_csv(path, fieldnames: Sequence[str], rows: Sequence[dict],
              manifest: Optional[dict] = None) -> None:
    """Deterministic CSV writer: optional manifest comment line, fixed
    column order, LF endings, round-trippable float formatting."""
    buf = io.StringIO()
    if manifest is not None:
        buf.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        writer.writerow([_format_cell(row.get(name, "")) for name in fieldnames])
    data = buf.getvalue()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)


def result_fieldnames(scenario: Scenario) -> list:
    names = ["scenario", "solver", "seed"]
    names += [f"size_{spec.id}" for spec in scenario.specs]
    names += [f"profit_{spec.id}" for spec in scenario.specs]
    # machine-readable run status ("ok", "infeasible", ...) goes last so the
    # leading columns keep a plot-friendly fixed layout
    names += ["total_profit", "feasible", "iterations", "status"]
    return names


def result_row(scenario: Scenario, result, seed: int, status: str = "ok") -> dict:
    row = {
        "scenario": scenario.name,
        "solver": result.meta.get("solver", ""),
        "seed": seed,
        "status": status,
        "total_profit": float(result.outcome.total_profit),
        "feasible": bool(result.outcome.feasible),
        "iterations": int(result.meta.get("iterations", 0)),
    }
    for spec, size in zip(scenario.specs, result.sizes):
        row[f"size_{spec.id}"] = float(size)
    for spec, w in zip(scenario.specs, result.outcome.profits):
        row[f"profit_{spec.id}"] = float(w)
    return row


def save_outcome(scenario: Scenario, results: Sequence, path,
                 seed: int = 0, manifest: Optional[dict] = None,
                 statuses: Optional[Sequence[str]] = None,
                 fmt: str = "csv") -> None:
    """Write one row per solve result in the fixed result column order."""
    if fmt != "csv":
        raise ConfigurationError(f"unsupported output format {fmt!r}")
    statuses = statuses or ["ok"] * len(results)
    rows = [
        result_row(scenario, res, seed, status)
        for res, status in zip(results, statuses)
    ]
    write_csv(path, result_fieldnames(scenario), rows, manifest)
