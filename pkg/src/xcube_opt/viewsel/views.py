"""Materialized views: construction, XML persistence and query rewriting.

A view is materialized unfiltered over its key attributes and stores
sum/count/min/max per measure, so any query whose selection and grouping
attributes are a subset of the view's keys can be answered by filtering
view cells and re-aggregating the partial states.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import IO, Mapping, Sequence

from ..aggregate import accumulate
from ..model import XML_DECL, DocumentError, Warehouse, XmlSource, _decimal, _iterparse, _PathTracker, _require, quote_attr
from ..query import AggSpec, Predicate, Query, representative_attributes
from .clustering import cluster
from .costs import (
    CandidateView,
    Selection,
    SelectionConfig,
    WorkloadModel,
    build_candidates,
    collect_stats,
    select_views,
)
from .matrix import Partition, QueryAttributeMatrix, build_matrix

AGG_FIELDS = ("sum", "count", "min", "max")


@dataclass(frozen=True)
class ViewCell:
    key: Mapping[str, str]
    aggregates: Mapping[str, tuple[Decimal, int, Decimal, Decimal]]  # measure -> (sum, count, min, max)


@dataclass(frozen=True)
class ViewDocument:
    view_id: str
    attrs: tuple[str, ...]
    cells: list[ViewCell]


@dataclass
class ViewConfiguration:
    selected: list[CandidateView]
    materialized: dict[str, ViewDocument]
    est_workload_cost: float
    selection: Selection | None = None
    matrix: QueryAttributeMatrix | None = None
    partition: Partition | None = None
    candidates: list[CandidateView] = field(default_factory=list)


def materialize(v: CandidateView, w: Warehouse) -> ViewDocument:
    schema = w.schema
    attrs = list(v.attrs)
    missing = [a for a in attrs if a not in schema.dimension_of]
    if missing:
        raise ValueError(f"view {v.view_id} uses unknown attribute(s) {missing}")
    dims = list(dict.fromkeys(schema.dimension_of[a] for a in attrs))
    # member id -> that member's values for the view attributes it owns
    per_dim = {
        d: {
            m.member_id: tuple(m.attributes[a] for a in attrs if schema.dimension_of[a] == d)
            for m in w.dimensions.members.get(d, [])
        }
        for d in dims
    }
    # positions to reassemble keys in view attribute order
    layout = [(dims.index(schema.dimension_of[a]),
               [x for x in attrs if schema.dimension_of[x] == schema.dimension_of[a]].index(a)) for a in attrs]
    measures = list(schema.measure_names)

    def rows():
        for cell in w.facts:
            parts = [per_dim[d][cell.dimension_refs[d]] for d in dims]
            yield tuple(parts[i][j] for i, j in layout), cell.measures

    parts = accumulate(rows(), measures)
    cells = [
        ViewCell(dict(zip(attrs, key)), {m: tuple(st) for m, st in zip(measures, state)})
        for key, state in sorted(parts.items())
    ]
    return ViewDocument(v.view_id, tuple(attrs), cells)


# -- XML ---------------------------------------------------------------------------


def write_view(doc: ViewDocument, out: IO[bytes]) -> None:
    out.write(XML_DECL)
    out.write(f"<CubeView id={quote_attr(doc.view_id)} attrs={quote_attr(','.join(doc.attrs))}>\n".encode())
    buf = []
    for cell in doc.cells:
        buf.append("  <Cell>\n")
        buf += [f"    <attribute name={quote_attr(k)} value={quote_attr(val)}/>\n" for k, val in cell.key.items()]
        for m, agg in cell.aggregates.items():
            buf += [f"    <aggregate measure={quote_attr(m)} op=\"{op}\" value=\"{x}\"/>\n"
                    for op, x in zip(AGG_FIELDS, agg)]
        buf.append("  </Cell>\n")
    out.write("".join(buf).encode())
    out.write(b"</CubeView>\n")


def serialize_view(doc: ViewDocument) -> bytes:
    out = io.BytesIO()
    write_view(doc, out)
    return out.getvalue()


def parse_view(document: XmlSource) -> ViewDocument:
    tracker = _PathTracker()
    view_id, attrs = "", ()
    cells: list[ViewCell] = []
    key: dict[str, str] = {}
    aggs: dict[str, dict[str, Decimal]] = {}
    for event, elem in _iterparse(document, tracker):
        depth, tag = len(tracker.stack), elem.tag
        if event == "start":
            if depth == 1:
                if tag != "CubeView":
                    raise DocumentError(f"unexpected root element {tag!r}, expected CubeView", tracker.path())
                view_id = elem.get("id", "")
                attrs = tuple(a for a in _require(elem, "attrs", tracker).split(",") if a)
            elif depth == 2 and tag == "Cell":
                key, aggs = {}, {}
            elif depth == 3 and tag == "attribute":
                key[_require(elem, "name", tracker)] = _require(elem, "value", tracker)
            elif depth == 3 and tag == "aggregate":
                m = _require(elem, "measure", tracker)
                op = _require(elem, "op", tracker)
                if op not in AGG_FIELDS:
                    raise DocumentError(f"unknown aggregate op {op!r}", tracker.path("op"))
                aggs.setdefault(m, {})[op] = _decimal(_require(elem, "value", tracker), tracker)
            else:
                raise DocumentError(f"unexpected element {tag!r}", tracker.path())
        elif depth == 2 and tag == "Cell":
            if set(key) != set(attrs):
                raise DocumentError("cell keys do not match the view attributes", tracker.path())
            packed = {}
            for m, ops in aggs.items():
                if set(ops) != set(AGG_FIELDS):
                    raise DocumentError(f"incomplete aggregates for {m!r}", tracker.path())
                packed[m] = (ops["sum"], int(ops["count"]), ops["min"], ops["max"])
            cells.append(ViewCell(key, packed))
    return ViewDocument(view_id, attrs, cells)


def save_views(cfg: ViewConfiguration, directory: str | os.PathLike) -> list[Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for vid, doc in cfg.materialized.items():
        path = root / f"{vid}.xml"
        with open(path, "wb") as fh:
            write_view(doc, fh)
        paths.append(path)
    return paths


def load_views(directory: str | os.PathLike) -> ViewConfiguration:
    """Rebuild a configuration from saved view documents (estimates are not persisted)."""
    root = Path(directory)
    materialized = {}
    selected = []
    for path in sorted(root.glob("*.xml")):
        with open(path, "rb") as fh:
            doc = parse_view(fh)
        materialized[doc.view_id] = doc
        n = float(len(doc.cells))
        selected.append(CandidateView(doc.view_id, doc.attrs, -1, (), 0, n, 0.0))
    return ViewConfiguration(selected, materialized, float("nan"))


# -- rewriting ---------------------------------------------------------------------


@dataclass(frozen=True)
class RewrittenQuery:
    view_id: str
    predicate: tuple[Predicate, ...]
    group_by: tuple[str, ...]
    aggregations: tuple[AggSpec, ...]


def rewrite_for_view(q: Query, cfg: ViewConfiguration) -> RewrittenQuery | None:
    """Target the smallest selected view covering q's attributes; None when no view applies."""
    need = set(representative_attributes(q))
    best: CandidateView | None = None
    for v in cfg.selected:
        if v.view_id in cfg.materialized and need <= set(v.attrs):
            if best is None or v.est_cells < best.est_cells:
                best = v
    if best is None:
        return None
    return RewrittenQuery(best.view_id, tuple(q.selections), tuple(q.group_by), tuple(q.aggregations))


# -- pipeline ----------------------------------------------------------------------


def choose_views(workload: Sequence[Query], w: Warehouse, cfg: SelectionConfig,
                 materialize_views: bool = True) -> ViewConfiguration:
    """Matrix, clustering, candidates, greedy selection, then materialization."""
    m = build_matrix(workload, w.schema)
    partition = cluster(m)
    stats = collect_stats(w)
    candidates = build_candidates(partition, workload, stats, w.schema)
    wl = WorkloadModel.of(workload, w.cell_count, w.schema)
    sel = select_views(candidates, wl, cfg)
    docs = {v.view_id: materialize(v, w) for v in sel.selected} if materialize_views else {}
    return ViewConfiguration(list(sel.selected), docs, sel.est_workload_cost, sel, m, partition, candidates)
