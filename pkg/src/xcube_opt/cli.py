"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal invariant violation (e.g. execution modes disagree).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import datagen
from .bench import ResultMismatch, run_bench
from .engine import MODES, default_threads, execute
from .joinindex import (
    INDEX_FILE,
    PACKED_DIR,
    CostParams,
    PackedIndex,
    build_index,
    cost_curve,
    cost_curve_csv,
    pack_index,
    warehouse_digest,
    parse_index,
    write_index,
)
from .model import DocumentError, Warehouse, load_warehouse, save_warehouse, validate_warehouse
from .query import QueryError, join_workload, parse_query, split_workload
from .viewsel import SelectionConfig, choose_views, load_views, save_views, trace_csv
from .workload import generate_workload

log = logging.getLogger("xcube_opt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scale(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid scale {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("scale must be positive")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("count must be positive")
    return value


def _load(data: str, validate: bool = True) -> Warehouse:
    try:
        w = load_warehouse(data)
    except (FileNotFoundError, DocumentError) as exc:
        raise DataError(str(exc)) from None
    if validate:
        report = validate_warehouse(w)
        if report:
            raise DataError(f"warehouse in {data} failed validation:\n{report.summary()}")
    return w


def _read_workload(path: str, w: Warehouse):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read workload {path}: {exc}") from None
    texts = split_workload(text)
    if not texts:
        raise DataError(f"workload {path} contains no queries")
    queries = []
    for i, t in enumerate(texts, 1):
        try:
            queries.append(parse_query(t, w.schema))
        except QueryError as exc:
            raise DataError(f"{path}: query {i}: {exc}") from None
    return texts, queries


def _threads(args) -> int:
    return args.threads if args.threads else default_threads()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


# -- commands -----------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.cells is not None:
        profile = datagen.ScaleProfile.for_cells(args.cells, seed=args.seed)
    else:
        profile = datagen.ScaleProfile(scale=args.scale, seed=args.seed)
    if args.attrs_per_dimension:
        profile = datagen.ScaleProfile(
            scale=profile.scale, seed=args.seed,
            attrs_per_dimension={d: args.attrs_per_dimension for d in datagen.DIMENSIONS},
        )
    try:
        w = datagen.generate(profile)
    except datagen.BudgetExceeded as exc:
        raise DataError(str(exc)) from None
    paths = save_warehouse(w, args.out)
    print(f"wrote {len(w.facts)} cells, members {dict(zip(w.schema.dimension_names, w.node_counts))} "
          f"to {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_gen_workload(args) -> int:
    w = _load(args.data, validate=False)
    _write(args.out, join_workload(generate_workload(w, args.seed)))
    return EXIT_OK


def cmd_build_index(args) -> int:
    w = _load(args.data)
    t0 = time.perf_counter()
    idx = build_index(w)
    out = Path(args.out) if args.out else Path(args.data) / INDEX_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        write_index(idx, fh)
    if not args.no_packed:
        pack_index(idx).save(out.parent / PACKED_DIR)
    elapsed = time.perf_counter() - t0
    print(f"index cells: {len(idx.cells)}")
    print(f"build time: {elapsed:.3f} s")
    print(f"wrote {out}")
    return EXIT_OK


def _selection_config(args) -> SelectionConfig:
    try:
        return SelectionConfig(objective=args.objective, storage_space=args.space, alpha=args.alpha,
                               update_query_ratio=args.update_ratio)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_select_views(args) -> int:
    cfg = _selection_config(args)
    w = _load(args.data)
    _, queries = _read_workload(args.workload, w)
    conf = choose_views(queries, w, cfg)
    out = Path(args.out)
    if out.exists():
        for old in out.glob("*.xml"):
            old.unlink()
    save_views(conf, out)
    trace = trace_csv(conf.selection.trace if conf.selection else [])
    _write(args.trace or str(out / "selection.csv"), trace)
    if not conf.selected:
        print("warning: no candidate view was selected (empty configuration)", file=sys.stderr)
    clusters = "; ".join("{" + ", ".join(f"q{i + 1}" for i in c) + "}" for c in conf.partition.clusters)
    print(f"clusters: {clusters}")
    print(f"selected {len(conf.selected)} of {len(conf.candidates)} candidate views; "
          f"estimated workload cost {conf.est_workload_cost:.6g} cells")
    return EXIT_OK


def _load_index(path: Path, w: Warehouse):
    packed = path.parent / PACKED_DIR
    if packed.is_dir():
        try:
            return PackedIndex.load(packed)
        except (OSError, ValueError, KeyError):
            log.warning("ignoring unreadable packed index at %s", packed)
    if not path.is_file():
        raise DataError(f"missing index: {path} (run build-index first)")
    with open(path, "rb") as fh:
        try:
            return parse_index(fh, w.schema)
        except DocumentError as exc:
            raise DataError(str(exc)) from None


def cmd_run(args) -> int:
    w = _load(args.data, validate=False)
    if args.query:
        try:
            text = Path(args.query).read_text(encoding="utf-8")
            queries = [parse_query(text, w.schema)]
        except OSError as exc:
            raise DataError(f"cannot read query {args.query}: {exc}") from None
        except QueryError as exc:
            raise DataError(f"{args.query}: {exc}") from None
    else:
        _, queries = _read_workload(args.workload, w)
    index = views = None
    if args.mode == "index":
        index = _load_index(Path(args.index) if args.index else Path(args.data) / INDEX_FILE, w)
        digest = index.digest if isinstance(index, PackedIndex) else index.source_digest
        if digest != warehouse_digest(w):
            raise DataError("index was built from a different warehouse (digest mismatch); rebuild it")
    if args.mode == "views":
        vdir = Path(args.views) if args.views else Path(args.data) / "views"
        if not vdir.is_dir():
            raise DataError(f"missing views directory: {vdir} (run select-views first)")
        views = load_views(vdir)
    parts = []
    for i, q in enumerate(queries, 1):
        t0 = time.perf_counter()
        table, label = execute(args.mode, q, warehouse=w, index=index, views=views, threads=_threads(args))
        elapsed = time.perf_counter() - t0
        print(f"q{i}: {label}, {len(table)} rows, {elapsed * 1e3:.2f} ms", file=sys.stderr)
        parts.append(f"# q{i} mode={label}\n" + table.to_csv() if len(queries) > 1 else table.to_csv())
    _write(args.out, "".join(parts))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _selection_config(args)
    texts = None
    if args.workload:
        texts = split_workload(Path(args.workload).read_text(encoding="utf-8"))
    try:
        report = run_bench(args.cells, seed=args.seed, modes=args.modes, workload_texts=texts,
                           repeat=args.repeat, warmup=args.warmup, threads=_threads(args), selection=cfg)
    except QueryError as exc:
        raise DataError(str(exc)) from None
    out = Path(args.out)
    _write(str(out), report.to_csv())
    summary_path = out.with_name(out.stem + "_summary.csv")
    _write(str(summary_path), report.summary_csv())
    sys.stdout.write(report.summary_csv())
    print(f"wrote {out} and {summary_path}")
    return EXIT_OK


def cmd_cost_curve(args) -> int:
    if args.data:
        params = CostParams.from_warehouse(_load(args.data, validate=False))
    else:
        profile = datagen.ScaleProfile()
        counts = profile.counts()
        dims = profile.dimensions
        params = CostParams(counts[datagen.FACT_ENTITY], len(dims), tuple(counts[d] for d in dims),
                            tuple(profile.attrs_per_dimension[d] for d in dims))
    cells = args.cells or [10**k for k in range(3, 8)]
    _write(args.out, cost_curve_csv(cost_curve(params, cells)))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xcube-opt", description="Join index and materialized view selection for XML warehouses.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def threads(sp):
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help="worker cap (default: $XCUBE_OPT_THREADS or 1)")

    def selection(sp):
        sp.add_argument("--objective", choices=("profit", "ratio", "hybrid"), default="profit")
        sp.add_argument("--space", type=float, default=None, help="storage space M for views, bytes")
        sp.add_argument("--alpha", type=float, default=None, help="hybrid threshold, 0 < alpha <= 1")
        sp.add_argument("--update-ratio", type=float, default=0.0, help="%%update / %%query")

    sp = sub.add_parser("gen-data", help="generate Schema.xml, Dimensions.xml and Facts.xml")
    size = sp.add_mutually_exclusive_group()
    size.add_argument("--scale", type=_scale, default=Fraction(1, 10_000))
    size.add_argument("--cells", type=_positive_int, default=None, help="exact fact count instead of a scale")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--attrs-per-dimension", type=_positive_int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("gen-workload", help="write the stand-in ten-query workload for a warehouse")
    sp.add_argument("--data", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_gen_workload)

    sp = sub.add_parser("build-index", help="build Index.xml (and its packed column layout)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", default=None, help="default: <data>/Index.xml")
    sp.add_argument("--no-packed", action="store_true")
    sp.set_defaults(func=cmd_build_index)

    sp = sub.add_parser("select-views", help="cluster the workload and materialize the selected views")
    sp.add_argument("--data", required=True)
    sp.add_argument("--workload", required=True)
    sp.add_argument("--out", required=True, help="directory for view documents")
    sp.add_argument("--trace", default=None, help="selection trace CSV (default: <out>/selection.csv)")
    selection(sp)
    sp.set_defaults(func=cmd_select_views)

    sp = sub.add_parser("run", help="execute a query or workload in one mode")
    sp.add_argument("--data", required=True)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--query")
    src.add_argument("--workload")
    sp.add_argument("--mode", choices=MODES, default="baseline")
    sp.add_argument("--index", default=None)
    sp.add_argument("--views", default=None)
    sp.add_argument("--out", default=None)
    threads(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bench", help="time the workload across modes and warehouse sizes")
    sp.add_argument("--cells", type=_positive_int, nargs="+", default=[1_000, 10_000, 100_000])
    sp.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workload", default=None)
    sp.add_argument("--repeat", type=_positive_int, default=5)
    sp.add_argument("--warmup", type=int, default=1)
    sp.add_argument("--out", default="bench.csv")
    selection(sp)
    threads(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("cost-curve", help="analytic traversal costs with and without the index")
    sp.add_argument("--data", default=None, help="take dimension sizes from a warehouse (default: full profile)")
    sp.add_argument("--cells", type=_positive_int, nargs="+", default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_cost_curve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"xcube-opt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"xcube-opt: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ResultMismatch as exc:
        print(f"xcube-opt: result mismatch, aborting: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
