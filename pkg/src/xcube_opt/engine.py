"""Query execution over the raw warehouse, the join index, and materialized views.

All three paths produce the same :class:`~xcube_opt.aggregate.ResultTable`
for a given query. The baseline joins facts to dimension members through
hash tables built from the filtered members. The index path scans cells
once, either cell by cell or over the packed column layout. The view path
filters and re-aggregates partial aggregates stored in view cells.

``threads`` splits the cell stream into contiguous chunks aggregated
independently and merged, so results do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal
from typing import Callable, Sequence

import numpy as np

from .aggregate import Partials, ResultTable, accumulate, finalize, measures_of, merge_partials
from .joinindex import IndexQuery, JoinIndex, PackedIndex, pack_index, rewrite_for_index
from .model import Warehouse
from .query import Query
from .viewsel.views import ViewConfiguration, rewrite_for_view


class DigestMismatch(ValueError):
    pass


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("XCUBE_OPT_THREADS", "1")))
    except ValueError:
        return 1


def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n)) if n else 1
    step, extra = divmod(n, parts)
    bounds, lo = [], 0
    for i in range(parts):
        hi = lo + step + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def _parallel(n: int, threads: int, work: Callable[[int, int], Partials]) -> Partials:
    bounds = _chunks(n, threads)
    if len(bounds) == 1:
        return work(*bounds[0])
    with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
        results = list(pool.map(lambda b: work(*b), bounds))
    merged: Partials = {}
    for r in results:
        merge_partials(merged, r)
    return merged


def _dimensions_used(q: Query, dimension_of: dict[str, str]) -> list[str]:
    dims = list(q.dimensions)
    for a in [p.attribute for p in q.selections] + list(q.group_by):
        d = dimension_of[a]
        if d not in dims:
            dims.append(d)
    return dims


# -- baseline -------------------------------------------------------------------------


def execute_baseline(w: Warehouse, q: Query, threads: int = 1) -> ResultTable:
    """Filter members, hash-join facts on (dimension, member key), group, aggregate."""
    schema = w.schema
    dim_of = schema.dimension_of
    dims = _dimensions_used(q, dim_of)
    group_attrs = {d: [a for a in q.group_by if dim_of[a] == d] for d in dims}
    tables: list[tuple[str, dict[str, tuple]]] = []
    for d in dims:
        preds = [(p.attribute, p.value) for p in q.selections if p.dimension == d]
        gattrs = group_attrs[d]
        table = {
            m.member_id: tuple(m.attributes[a] for a in gattrs)
            for m in w.dimensions.members.get(d, [])
            if all(m.attributes.get(a) == v for a, v in preds)
        }
        tables.append((d, table))
    # key position -> (table index, offset within that table's tuple)
    where = {}
    for ti, (d, _) in enumerate(tables):
        for j, a in enumerate(group_attrs[d]):
            where[a] = (ti, j)
    layout = [where[a] for a in q.group_by]
    measures = measures_of(q.aggregations)
    facts = w.facts

    def work(lo: int, hi: int) -> Partials:
        def rows():
            if len(tables) == 1:
                d, table = tables[0]
                for cell in facts[lo:hi]:
                    part = table.get(cell.dimension_refs[d])
                    if part is not None:
                        yield part, cell.measures
                return
            for cell in facts[lo:hi]:
                parts = []
                for d, table in tables:
                    part = table.get(cell.dimension_refs[d])
                    if part is None:
                        break
                    parts.append(part)
                else:
                    yield tuple(parts[i][j] for i, j in layout), cell.measures

        # single-table keys already follow group_by order (the attrs all live in that dimension)
        return accumulate(rows(), measures, lo)

    parts = _parallel(len(facts), threads, work)
    return finalize(parts, q.group_by, q.aggregations)


# -- join index ------------------------------------------------------------------------


def _index_rows(idx: JoinIndex, iq: IndexQuery, lo: int, hi: int):
    dim_of = idx.schema.dimension_of
    preds = [(p.dimension, p.attribute, p.value) for p in iq.predicate]
    groups = [(dim_of[a], a) for a in iq.group_by]
    for cell in idx.cells[lo:hi]:
        dims = {d.id: d.attributes for d in cell.dimensions}
        if all(dims[d].get(a) == v for d, a, v in preds):
            yield tuple(dims[d][a] for d, a in groups), cell.measures


def _packed_partials(pk: PackedIndex, iq: IndexQuery, lo: int, hi: int) -> Partials:
    mask = np.ones(hi - lo, dtype=bool)
    for p in iq.predicate:
        code = pk.lookup[p.attribute].get(p.value)
        if code is None:
            return {}
        mask &= pk.codes[p.attribute][lo:hi] == code
    rows = np.flatnonzero(mask) + lo
    if rows.size == 0:
        return {}
    cols = [np.asarray(pk.codes[a])[rows].astype(np.int64) for a in iq.group_by]
    sizes = [max(1, len(pk.dictionaries[a])) for a in iq.group_by]
    if float(np.prod(np.array(sizes, dtype=float))) < 2.0**62:
        combined = np.zeros(rows.size, dtype=np.int64)
        for col, size in zip(cols, sizes):
            combined = combined * size + col
        uniq, inverse = np.unique(combined, return_inverse=True)
        decoded = []
        rest = uniq.copy()
        for size in reversed(sizes):
            decoded.append(rest % size)
            rest //= size
        key_codes = np.stack(decoded[::-1], axis=1) if decoded else np.zeros((len(uniq), 0), dtype=np.int64)
    else:
        key_codes, inverse = np.unique(np.stack(cols, axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    sorted_inv = inverse[order]
    starts = np.flatnonzero(np.r_[True, sorted_inv[1:] != sorted_inv[:-1]])
    counts = np.diff(np.r_[starts, sorted_inv.size])
    stats = []
    for m in measures_of(iq.aggregations):
        vals = np.asarray(pk.measures[m])[rows][order]
        sums, mins, maxs = (np.add.reduceat(vals, starts), np.minimum.reduceat(vals, starts),
                            np.maximum.reduceat(vals, starts))
        if vals.dtype == object:
            conv = [(list(sums), list(mins), list(maxs))]
        else:
            k = pk.scales.get(m, 0)
            conv = [tuple([Decimal(int(x)).scaleb(-k) for x in arr] for arr in (sums, mins, maxs))]
        stats.append(conv[0])
    dictionaries = [pk.dictionaries[a] for a in iq.group_by]
    parts: Partials = {}
    for g, codes in enumerate(key_codes.tolist()):
        key = tuple(dic[c] for dic, c in zip(dictionaries, codes))
        parts[key] = [[s[0][g], int(counts[g]), s[1][g], s[2][g]] for s in stats]
    return parts


def execute_on_index(idx: JoinIndex | PackedIndex, iq: IndexQuery | Query, threads: int = 1,
                     packed: bool = True, expected_digest: str | None = None) -> ResultTable:
    """Single scan over index cells; no joins.

    ``packed=True`` runs over the column layout (built on first use and
    cached on the index); ``packed=False`` scans :class:`IndexCell` objects.
    """
    if isinstance(iq, Query):
        iq = rewrite_for_index(iq)
    digest = idx.digest if isinstance(idx, PackedIndex) else idx.source_digest
    if expected_digest is not None and digest != expected_digest:
        raise DigestMismatch(f"index digest {digest[:12]} does not match warehouse digest {expected_digest[:12]}")
    if isinstance(idx, PackedIndex):
        pk = idx
    elif packed:
        pk = packed_view(idx)
    else:
        measures = measures_of(iq.aggregations)
        parts = _parallel(len(idx.cells), threads,
                          lambda lo, hi: accumulate(_index_rows(idx, iq, lo, hi), measures, lo))
        return finalize(parts, iq.group_by, iq.aggregations)
    parts = _parallel(pk.n, threads, lambda lo, hi: _packed_partials(pk, iq, lo, hi))
    return finalize(parts, iq.group_by, iq.aggregations)


def packed_view(idx: JoinIndex) -> PackedIndex:
    cached = idx.__dict__.get("_packed")
    if cached is None:
        cached = pack_index(idx)
        object.__setattr__(idx, "_packed", cached)
    return cached


# -- views ---------------------------------------------------------------------------------


def execute_on_views(cfg: ViewConfiguration, q: Query) -> ResultTable | None:
    """Answer ``q`` from a materialized view, or None when no view applies (run the baseline instead)."""
    rq = rewrite_for_view(q, cfg)
    if rq is None:
        return None
    doc = cfg.materialized[rq.view_id]
    measures = measures_of(rq.aggregations)
    preds = [(p.attribute, p.value) for p in rq.predicate]
    group = rq.group_by
    parts: Partials = {}
    for cell in doc.cells:
        key = cell.key
        if preds and not all(key[a] == v for a, v in preds):
            continue
        gk = tuple(key[a] for a in group)
        state = [list(cell.aggregates[m]) for m in measures]
        mine = parts.get(gk)
        if mine is None:
            parts[gk] = state
            continue
        for a, b in zip(mine, state):
            a[0] += b[0]
            a[1] += b[1]
            if b[2] < a[2]:
                a[2] = b[2]
            if b[3] > a[3]:
                a[3] = b[3]
    return finalize(parts, group, rq.aggregations)


def execute(mode: str, q: Query, *, warehouse: Warehouse | None = None, index: JoinIndex | PackedIndex | None = None,
            views: ViewConfiguration | None = None, threads: int = 1) -> tuple[ResultTable, str]:
    """Run ``q`` in ``mode``; returns the table and the label of the path actually taken."""
    if mode == "baseline":
        if warehouse is None:
            raise ValueError("baseline mode needs the warehouse")
        return execute_baseline(warehouse, q, threads), "baseline"
    if mode == "index":
        if index is None:
            raise ValueError("index mode needs a join index")
        return execute_on_index(index, q, threads), "index"
    if mode == "views":
        if views is None:
            raise ValueError("views mode needs a view configuration")
        table = execute_on_views(views, q)
        if table is not None:
            return table, "views"
        if warehouse is None:
            raise ValueError("query is not answerable from views and no warehouse was given for fallback")
        return execute_baseline(warehouse, q, threads), "baseline(fallback)"
    raise ValueError(f"unknown mode {mode!r}")


MODES: Sequence[str] = ("baseline", "index", "views")
