"""Workload benchmark across execution modes and warehouse sizes.

Before any timing, every query's results are compared across the requested
modes; a mismatch aborts the run, since a wrong answer invalidates the
timings. Each (query, mode) is timed with a monotonic clock as the median
of ``repeat`` runs after ``warmup`` discarded runs.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .aggregate import ResultTable
from .datagen import ScaleProfile, generate
from .engine import execute, packed_view
from .joinindex import build_index
from .model import Warehouse
from .query import Query
from .viewsel import SelectionConfig, choose_views
from .workload import generate_workload, parse_workload

log = logging.getLogger(__name__)


class ResultMismatch(AssertionError):
    """Two execution modes disagree on a query's result."""


@dataclass(frozen=True)
class BenchRow:
    query_id: str
    mode: str
    seconds: float
    rows: int
    cells: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def summary(self) -> list[tuple[int | str, str, float, int]]:
        """Geometric-mean speedup of each mode over baseline, per scale and overall.

        Only same-scale (query, mode) pairs where the mode really ran
        (not a fallback) are used.
        """
        out = []
        scales = sorted({r.cells for r in self.rows})
        for scope in [*scales, "all"]:
            base = {(r.query_id, r.cells): r.seconds for r in self.rows
                    if r.mode == "baseline" and (scope == "all" or r.cells == scope)}
            for mode in ("index", "views"):
                ratios = [base[(r.query_id, r.cells)] / r.seconds for r in self.rows
                          if r.mode == mode and (r.query_id, r.cells) in base and r.seconds > 0
                          and (scope == "all" or r.cells == scope)]
                if ratios:
                    out.append((scope, f"baseline/{mode}", geometric_mean(ratios), len(ratios)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["query_id", "mode", "wall_seconds", "rows", "cells"])
        for r in self.rows:
            w.writerow([r.query_id, r.mode, f"{r.seconds:.9f}", r.rows, r.cells])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cells", "pair", "geomean_speedup", "queries"])
        for scope, pair, value, n in self.summary():
            w.writerow([scope, pair, f"{value:.6g}", n])
        return buf.getvalue()


def geometric_mean(values: Sequence[float]) -> float:
    return math.exp(sum(math.log(v) for v in values) / len(values))


def time_call(fn: Callable[[], object], repeat: int = 5, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


@dataclass
class Prepared:
    warehouse: Warehouse
    queries: list[Query]
    texts: list[str]
    index: object
    views: object


def prepare(cells: int, seed: int = 0, workload_texts: Sequence[str] | None = None,
            selection: SelectionConfig | None = None, modes: Sequence[str] = ("baseline", "index", "views")) -> Prepared:
    w = generate(ScaleProfile.for_cells(cells, seed=seed))
    texts = list(workload_texts) if workload_texts is not None else generate_workload(w, seed)
    queries = parse_workload(texts, w)
    idx = packed_view(build_index(w)) if "index" in modes else None
    views = choose_views(queries, w, selection or SelectionConfig()) if "views" in modes else None
    return Prepared(w, queries, texts, idx, views)


def check_equal(tables: dict[str, ResultTable], query_id: str) -> None:
    ref_mode, ref = next(iter(tables.items()))
    for mode, table in tables.items():
        diff = ref.difference(table)
        if diff is not None:
            raise ResultMismatch(f"{query_id}: {mode} differs from {ref_mode}: {diff}")


def run_bench(cell_counts: Sequence[int], seed: int = 0, modes: Sequence[str] = ("baseline", "index", "views"),
              workload_texts: Sequence[str] | None = None, repeat: int = 5, warmup: int = 1, threads: int = 1,
              selection: SelectionConfig | None = None, query_ids: Sequence[int] | None = None) -> BenchReport:
    report = BenchReport()
    modes = list(modes)
    if "baseline" not in modes and "views" in modes:
        modes.insert(0, "baseline")
    for cells in cell_counts:
        prep = prepare(cells, seed, workload_texts, selection, modes)
        log.info("prepared %d cells", cells)
        chosen = range(len(prep.queries)) if query_ids is None else query_ids
        for qi in chosen:
            q = prep.queries[qi]
            qid = f"q{qi + 1}"
            kw = dict(warehouse=prep.warehouse, index=prep.index, views=prep.views, threads=threads)
            tables, labels = {}, {}
            for mode in modes:
                tables[mode], labels[mode] = execute(mode, q, **kw)
            check_equal(tables, qid)
            for mode in modes:
                seconds = time_call(lambda: execute(mode, q, **kw), repeat, warmup)
                report.rows.append(BenchRow(qid, labels[mode], seconds, len(tables[mode]), cells))
    return report
