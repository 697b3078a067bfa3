"""Candidate views, size estimation, objective functions and greedy selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from ..model import Warehouse
from ..query import Query, representative_attributes
from .matrix import Partition

OBJECTIVES = ("profit", "ratio", "hybrid")


@dataclass(frozen=True)
class WarehouseStats:
    cell_count: int
    distinct_counts: Mapping[str, int]
    attr_widths: Mapping[str, float]
    measure_widths: Mapping[str, float]


def collect_stats(w: Warehouse) -> WarehouseStats:
    """Distinct-value counts and average encoded widths measured on ``w``."""
    distinct: dict[str, int] = {}
    widths: dict[str, float] = {}
    for d in w.schema.dimension_names:
        members = w.dimensions.members.get(d, [])
        for a in w.schema.attributes_per_dimension[d]:
            values = [m.attributes[a] for m in members]
            distinct[a] = len(set(values))
            widths[a] = sum(len(v.encode("utf-8")) for v in values) / len(values) if values else 0.0
    mwidths = {}
    for name in w.schema.measure_names:
        total = sum(len(str(c.measures[name])) for c in w.facts)
        mwidths[name] = total / len(w.facts) if w.facts else 0.0
    return WarehouseStats(w.cell_count, distinct, widths, mwidths)


def estimate_cells(ms: int, cell_count: int) -> float:
    """Expected distinct groups when ``cell_count`` cells fall uniformly into ``ms`` slots."""
    if ms < 1:
        raise ValueError(f"ms must be at least 1, got {ms}")
    if cell_count < 0:
        raise ValueError("cell_count must be nonnegative")
    if cell_count == 0:
        return 0.0
    if ms == 1:
        return 1.0
    if cell_count <= 64 and ms <= 10**6:
        # exact rational evaluation for small cases
        return float(ms * (1 - (1 - Fraction(1, ms)) ** cell_count))
    return float(ms) * -math.expm1(cell_count * math.log1p(-1.0 / ms))


@dataclass(frozen=True)
class CandidateView:
    view_id: str
    attrs: tuple[str, ...]
    source_cluster: int
    queries: tuple[int, ...]
    ms: int
    est_cells: float
    est_bytes: float


def estimate_size(v: CandidateView | float, widths: Mapping[str, float],
                  measure_widths: Mapping[str, float] | None = None, attrs: Sequence[str] | None = None) -> float:
    """Cells times the summed column widths (key attributes plus one aggregate column per measure)."""
    cells = v.est_cells if isinstance(v, CandidateView) else float(v)
    names = v.attrs if isinstance(v, CandidateView) else (attrs if attrs is not None else list(widths))
    missing = [a for a in names if a not in widths]
    if missing:
        raise KeyError(f"no byte width for attribute(s) {missing}")
    total = sum(widths[a] for a in names) + sum((measure_widths or {}).values())
    return cells * total


def build_candidates(partition: Partition, workload: Sequence[Query], stats: WarehouseStats,
                     schema=None) -> list[CandidateView]:
    """One candidate per cluster over the union of its queries' representative attributes."""
    order = schema.attribute_order if schema is not None else None
    out = []
    for ci, members in enumerate(partition.clusters):
        attrs: dict[str, None] = {}
        for qi in members:
            for a in representative_attributes(workload[qi], schema):
                attrs.setdefault(a)
        names = list(attrs)
        if order is not None:
            names.sort(key=lambda a: order.get(a, len(order)))
        unknown = [a for a in names if a not in stats.distinct_counts]
        if unknown:
            raise ValueError(f"attribute(s) {unknown} are absent from the warehouse schema")
        ms = math.prod(max(1, stats.distinct_counts[a]) for a in names)
        cells = estimate_cells(ms, stats.cell_count)
        size = estimate_size(cells, stats.attr_widths, stats.measure_widths, names)
        out.append(CandidateView(f"v{ci + 1}", tuple(names), ci, tuple(members), ms, cells, size))
    return out


# -- objectives ------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionConfig:
    objective: str = "profit"
    storage_space: float | None = None  # M, bytes
    alpha: float | None = None
    update_query_ratio: float = 0.0
    update_cost_multiplier: float = 1.0

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.objective in ("ratio", "hybrid") and not (self.storage_space and self.storage_space > 0):
            raise ValueError(f"objective {self.objective!r} needs a positive storage space")
        if self.objective == "hybrid" and not (self.alpha is not None and 0 < self.alpha <= 1):
            raise ValueError("hybrid objective needs 0 < alpha <= 1")
        if self.update_query_ratio < 0:
            raise ValueError("update/query ratio must be nonnegative")

    @property
    def space_bound(self) -> bool:
        return self.objective in ("ratio", "hybrid")


@dataclass(frozen=True)
class WorkloadModel:
    """What the objectives need to know about the workload."""

    query_attrs: tuple[frozenset[str], ...]
    fact_cells: int

    @classmethod
    def of(cls, workload: Sequence[Query], fact_cells: int, schema=None) -> "WorkloadModel":
        return cls(tuple(frozenset(representative_attributes(q, schema)) for q in workload), fact_cells)

    def query_cost(self, qi: int, views: Sequence[CandidateView]) -> float:
        """Cells read by query ``qi``: the smallest applicable view, else the whole fact cube."""
        need = self.query_attrs[qi]
        best = float(self.fact_cells)
        for v in views:
            if v.est_cells < best and need <= set(v.attrs):
                best = v.est_cells
        return best

    def cost(self, views: Sequence[CandidateView]) -> float:
        return sum(self.query_cost(i, views) for i in range(len(self.query_attrs)))


def profit(v: CandidateView, selected: Sequence[CandidateView], wl: WorkloadModel, cfg: SelectionConfig) -> float:
    p_update = cfg.update_query_ratio / cfg.storage_space if cfg.storage_space else 0.0
    beta = len(wl.query_attrs) * p_update
    update_cost = cfg.update_cost_multiplier * v.est_cells
    return wl.cost(selected) - wl.cost([*selected, v]) - beta * update_cost


def ratio(v: CandidateView, selected: Sequence[CandidateView], wl: WorkloadModel, cfg: SelectionConfig) -> float | None:
    if v.est_bytes <= 0:
        return None
    return profit(v, selected, wl, cfg) / v.est_bytes


def hybrid(v: CandidateView, selected: Sequence[CandidateView], wl: WorkloadModel, cfg: SelectionConfig,
           used: float | None = None) -> float | None:
    assert cfg.storage_space is not None and cfg.alpha is not None
    if used is None:
        used = sum(s.est_bytes for s in selected)
    remaining = cfg.storage_space - used - v.est_bytes
    if remaining / cfg.storage_space <= cfg.alpha:
        return profit(v, selected, wl, cfg)
    return ratio(v, selected, wl, cfg)


def objective_value(v: CandidateView, selected: Sequence[CandidateView], wl: WorkloadModel,
                    cfg: SelectionConfig, used: float = 0.0) -> float | None:
    if cfg.objective == "profit":
        return profit(v, selected, wl, cfg)
    if cfg.objective == "ratio":
        return ratio(v, selected, wl, cfg)
    return hybrid(v, selected, wl, cfg, used)


# -- greedy selection --------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    view_id: str
    objective: float
    est_cells: float
    est_bytes: float
    remaining_space: float | None
    workload_cost: float


@dataclass
class Selection:
    selected: list[CandidateView] = field(default_factory=list)
    trace: list[TraceStep] = field(default_factory=list)
    initial_cost: float = 0.0
    est_workload_cost: float = 0.0


def select_views(candidates: Sequence[CandidateView], wl: WorkloadModel, cfg: SelectionConfig) -> Selection:
    """Greedy construction: add the best-scoring candidate while its score is positive.

    Scores are recomputed against the current selection every round. Under
    the ratio and hybrid objectives a candidate that no longer fits in the
    remaining space is not eligible, which also ends the loop once space runs out.
    """
    result = Selection(initial_cost=wl.cost([]))
    result.est_workload_cost = result.initial_cost
    pool = list(candidates)
    used = 0.0
    while pool:
        best, f_max = None, 0.0
        for v in pool:
            if cfg.space_bound and used + v.est_bytes > cfg.storage_space:
                continue
            f = objective_value(v, result.selected, wl, cfg, used)
            if f is not None and f > f_max:
                best, f_max = v, f
        if best is None:
            break
        result.selected.append(best)
        pool.remove(best)
        used += best.est_bytes
        result.est_workload_cost = wl.cost(result.selected)
        remaining = cfg.storage_space - used if cfg.storage_space else None
        result.trace.append(TraceStep(len(result.trace) + 1, best.view_id, f_max, best.est_cells,
                                      best.est_bytes, remaining, result.est_workload_cost))
    return result


def trace_csv(trace: Sequence[TraceStep]) -> str:
    lines = ["iteration,view_id,objective,est_cells,est_bytes,remaining_space,workload_cost"]
    for t in trace:
        rem = "" if t.remaining_space is None else f"{t.remaining_space:.6g}"
        lines.append(f"{t.iteration},{t.view_id},{t.objective:.10g},{t.est_cells:.10g},{t.est_bytes:.10g},"
                     f"{rem},{t.workload_cost:.10g}")
    return "\n".join(lines) + "\n"
