"""Star join index: facts with their dimension attributes inlined.

Each index cell carries the cell's measures plus, for every dimension, the
member key and that member's full attribute map, so a query runs as one
scan with no fact/dimension join. ``Index.xml`` is the interchange form::

    <CubeIndex digest="...">
      <Cell>
        <fact id="amount" value="10"/>
        <dimension id="customers" node="C1">
          <attribute name="cust city" value="Lyon"/>
        </dimension>
      </Cell>
    </CubeIndex>

For execution the index is also packed column-wise (one dictionary-coded
array per attribute, one fixed-point array per measure), which can be
saved as ``.npy`` files and memory-mapped back.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .model import (
    XML_DECL,
    DocumentError,
    Warehouse,
    WarehouseSchema,
    XmlSource,
    _iterparse,
    _PathTracker,
    _require,
    _decimal,
    quote_attr,
    write_dimensions,
    write_facts,
)
from .query import AggSpec, Predicate, Query

INDEX_FILE = "Index.xml"
PACKED_DIR = "index.packed"


@dataclass(frozen=True)
class IndexDimension:
    id: str
    node: str
    attributes: Mapping[str, str]


@dataclass(frozen=True)
class IndexCell:
    measures: Mapping[str, Decimal]
    dimensions: tuple[IndexDimension, ...]

    def dimension(self, name: str) -> IndexDimension | None:
        for d in self.dimensions:
            if d.id == name:
                return d
        return None


@dataclass(frozen=True)
class JoinIndex:
    schema: WarehouseSchema
    cells: list[IndexCell]
    source_digest: str

    def __len__(self) -> int:
        return len(self.cells)


class IndexBuildError(ValueError):
    pass


class _HashWriter:
    def __init__(self) -> None:
        self.h = hashlib.sha256()

    def write(self, data: bytes) -> int:
        self.h.update(data)
        return len(data)


def warehouse_digest(w: Warehouse) -> str:
    """sha256 over the canonical Dimensions and Facts documents."""
    out = _HashWriter()
    write_dimensions(w.dimensions, out)  # type: ignore[arg-type]
    write_facts(w.facts, out)  # type: ignore[arg-type]
    return out.h.hexdigest()


def build_index(w: Warehouse) -> JoinIndex:
    """Expand every fact's dimension refs with the referenced member's attributes."""
    dims = w.schema.dimension_names
    lookup = w.dimensions.by_id
    # one shared IndexDimension per member keeps the index compact
    expanded = {
        d: {mid: IndexDimension(d, mid, m.attributes) for mid, m in lookup.get(d, {}).items()} for d in dims
    }
    cells = []
    for i, fact in enumerate(w.facts):
        parts = []
        for d in dims:
            ref = fact.dimension_refs.get(d)
            entry = expanded[d].get(ref) if ref is not None else None
            if entry is None:
                raise IndexBuildError(f"cell {i} has dangling reference {ref!r} for dimension {d!r}")
            parts.append(entry)
        cells.append(IndexCell(fact.measures, tuple(parts)))
    return JoinIndex(w.schema, cells, warehouse_digest(w))


# -- Index.xml ------------------------------------------------------------------


def write_index(idx: JoinIndex, out: IO[bytes], chunk: int = 1024) -> None:
    out.write(XML_DECL)
    out.write(f"<CubeIndex digest={quote_attr(idx.source_digest)}>\n".encode())
    buf: list[str] = []
    for n, cell in enumerate(idx.cells, 1):
        buf.append("  <Cell>\n")
        buf += [f"    <fact id={quote_attr(k)} value=\"{v}\"/>\n" for k, v in cell.measures.items()]
        for d in cell.dimensions:
            buf.append(f"    <dimension id={quote_attr(d.id)} node={quote_attr(d.node)}>\n")
            buf += [
                f"      <attribute name={quote_attr(k)} value={quote_attr(v)}/>\n" for k, v in d.attributes.items()
            ]
            buf.append("    </dimension>\n")
        buf.append("  </Cell>\n")
        if n % chunk == 0:
            out.write("".join(buf).encode())
            buf.clear()
    out.write("".join(buf).encode())
    out.write(b"</CubeIndex>\n")


def serialize_index(idx: JoinIndex) -> bytes:
    out = io.BytesIO()
    write_index(idx, out)
    return out.getvalue()


def parse_index(document: XmlSource, schema: WarehouseSchema) -> JoinIndex:
    tracker = _PathTracker()
    cells: list[IndexCell] = []
    digest = ""
    root: ET.Element | None = None
    measures: dict[str, Decimal] = {}
    dims: list[IndexDimension] = []
    cur: tuple[str, str] | None = None
    attrs: dict[str, str] = {}
    for event, elem in _iterparse(document, tracker):
        depth, tag = len(tracker.stack), elem.tag
        if event == "start":
            if depth == 1:
                if tag != "CubeIndex":
                    raise DocumentError(f"unexpected root element {tag!r}, expected CubeIndex", tracker.path())
                digest = elem.get("digest", "")
                root = elem
            elif depth == 2 and tag == "Cell":
                measures, dims = {}, []
            elif depth == 3 and tag == "fact":
                measures[_require(elem, "id", tracker)] = _decimal(_require(elem, "value", tracker), tracker)
            elif depth == 3 and tag == "dimension":
                cur = (_require(elem, "id", tracker), _require(elem, "node", tracker))
                attrs = {}
            elif depth == 4 and tag == "attribute" and cur is not None:
                attrs[_require(elem, "name", tracker)] = _require(elem, "value", tracker)
            else:
                raise DocumentError(f"unexpected element {tag!r}", tracker.path())
        elif depth == 3 and tag == "dimension":
            assert cur is not None
            dims.append(IndexDimension(cur[0], cur[1], attrs))
            cur = None
        elif depth == 2 and tag == "Cell":
            cells.append(IndexCell(measures, tuple(dims)))
            if root is not None:
                root.clear()
    return JoinIndex(schema, cells, digest)


# -- rewriting ------------------------------------------------------------------


@dataclass(frozen=True)
class IndexQuery:
    """Single-document query: per-cell attribute tests, grouping, aggregation.

    An empty ``predicate`` is the always-true predicate.
    """

    predicate: tuple[Predicate, ...]
    group_by: tuple[str, ...]
    aggregations: tuple[AggSpec, ...]


def rewrite_for_index(q: Query) -> IndexQuery:
    # join equalities were absorbed at parse time; the index subsumes them
    return IndexQuery(tuple(q.selections), tuple(q.group_by), tuple(q.aggregations))


# -- packed columnar layout -------------------------------------------------------


def _fixed_point(v: Decimal, k: int) -> int:
    # exact v * 10**k; Decimal.scaleb would round to the context precision
    sign, digits, exp = v.as_tuple()
    mant = int("".join(map(str, digits)) or "0")
    return (-mant if sign else mant) * 10 ** (exp + k)


def _exponent(v: Decimal) -> int:
    e = v.as_tuple().exponent
    return -e if isinstance(e, int) and e < 0 else 0


@dataclass
class PackedIndex:
    """Column-wise image of a :class:`JoinIndex`.

    ``codes[attr][i]`` indexes ``dictionaries[attr]``; measure column ``m``
    holds ``value * 10**scales[m]`` as int64, or Decimal objects when the
    fixed-point form could overflow during summation.
    """

    n: int
    digest: str
    dimension_of: dict[str, str]
    codes: dict[str, np.ndarray]
    dictionaries: dict[str, list[str]]
    measures: dict[str, np.ndarray]
    scales: dict[str, int] = field(default_factory=dict)

    @property
    def lookup(self) -> dict[str, dict[str, int]]:
        cached = self.__dict__.get("_lookup")
        if cached is None:
            cached = {a: {v: i for i, v in enumerate(vals)} for a, vals in self.dictionaries.items()}
            self.__dict__["_lookup"] = cached
        return cached

    def save(self, directory: str | os.PathLike) -> Path:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        meta = {
            "n": self.n,
            "digest": self.digest,
            "dimension_of": self.dimension_of,
            "attributes": list(self.codes),
            "dictionaries": self.dictionaries,
            "measures": {m: {"scale": self.scales.get(m), "object": arr.dtype == object}
                         for m, arr in self.measures.items()},
        }
        for i, (a, arr) in enumerate(self.codes.items()):
            np.save(root / f"attr{i}.npy", arr)
        for i, (m, arr) in enumerate(self.measures.items()):
            if arr.dtype == object:
                meta["measures"][m]["values"] = [str(v) for v in arr]
            else:
                np.save(root / f"measure{i}.npy", arr)
        (root / "meta.json").write_text(json.dumps(meta, ensure_ascii=False))
        return root

    @classmethod
    def load(cls, directory: str | os.PathLike, mmap: bool = True) -> "PackedIndex":
        root = Path(directory)
        meta = json.loads((root / "meta.json").read_text())
        mode = "r" if mmap else None
        codes = {a: np.load(root / f"attr{i}.npy", mmap_mode=mode) for i, a in enumerate(meta["attributes"])}
        measures, scales = {}, {}
        for i, (m, info) in enumerate(meta["measures"].items()):
            if info["object"]:
                measures[m] = np.array([Decimal(v) for v in info["values"]], dtype=object)
            else:
                measures[m] = np.load(root / f"measure{i}.npy", mmap_mode=mode)
                scales[m] = info["scale"]
        return cls(meta["n"], meta["digest"], meta["dimension_of"], codes, meta["dictionaries"], measures, scales)


def pack_index(idx: JoinIndex) -> PackedIndex:
    schema = idx.schema
    n = len(idx.cells)
    dims = schema.dimension_names
    codes: dict[str, np.ndarray] = {}
    dictionaries: dict[str, list[str]] = {}
    for di, d in enumerate(dims):
        attrs = schema.attributes_per_dimension[d]
        value_ids: list[dict[str, int]] = [{} for _ in attrs]
        cols = [np.empty(n, dtype=np.int32) for _ in attrs]
        seen: dict[int, tuple] = {}  # id(IndexDimension) -> codes, valid for shared entries
        for i, cell in enumerate(idx.cells):
            entry = cell.dimensions[di] if di < len(cell.dimensions) else None
            if entry is None or entry.id != d:
                entry = cell.dimension(d)
                if entry is None:
                    raise IndexBuildError(f"index cell {i} lacks dimension {d!r}")
            row = seen.get(id(entry))
            if row is None or row[0] is not entry:
                vals = []
                for ids, a in zip(value_ids, attrs):
                    v = entry.attributes[a]
                    vals.append(ids.setdefault(v, len(ids)))
                row = (entry, tuple(vals))
                seen[id(entry)] = row
            for col, c in zip(cols, row[1]):
                col[i] = c
        for a, col, ids in zip(attrs, cols, value_ids):
            codes[a] = col
            dictionaries[a] = list(ids)
    measures: dict[str, np.ndarray] = {}
    scales: dict[str, int] = {}
    for m in schema.measure_names:
        vals = [cell.measures[m] for cell in idx.cells]
        k = max((_exponent(v) for v in vals), default=0)
        ints = [_fixed_point(v, k) for v in vals]
        biggest = max((abs(x) for x in ints), default=0)
        if biggest * max(n, 1) < 2**62:
            measures[m] = np.asarray(ints, dtype=np.int64)
            scales[m] = k
        else:
            measures[m] = np.asarray(vals, dtype=object)
    return PackedIndex(n, idx.source_digest, dict(schema.dimension_of), codes, dictionaries, measures, scales)


# -- analytic cost models -------------------------------------------------------


@dataclass(frozen=True)
class CostParams:
    cell_count: int
    dimension_count: int
    node_counts: tuple[int, ...]
    attr_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "node_counts", tuple(self.node_counts))
        object.__setattr__(self, "attr_counts", tuple(self.attr_counts))
        if min((self.cell_count, self.dimension_count, *self.node_counts, *self.attr_counts), default=0) < 0:
            raise ValueError("cost parameters must be nonnegative")
        if len(self.node_counts) != self.dimension_count or len(self.attr_counts) != self.dimension_count:
            raise ValueError("node_counts and attr_counts need one entry per dimension")

    @classmethod
    def from_warehouse(cls, w: Warehouse) -> "CostParams":
        return cls(w.cell_count, w.dimension_count, tuple(w.node_counts), tuple(w.attr_counts))

    def with_cells(self, cells: int) -> "CostParams":
        return CostParams(cells, self.dimension_count, self.node_counts, self.attr_counts)


def cost_no_index(p: CostParams) -> int:
    """Traversal cost over Facts + Dimensions: (cells*dims) * (dims + sum_i nodes_i*attrs_i)."""
    inner = p.dimension_count + sum(d * a for d, a in zip(p.node_counts, p.attr_counts))
    return p.cell_count * p.dimension_count * inner


def cost_index(p: CostParams) -> int:
    """Traversal cost over the index: cells * (dims + sum_i attrs_i)."""
    return p.cell_count * (p.dimension_count + sum(p.attr_counts))


def cost_curve(p: CostParams, cell_counts: Iterable[int]) -> list[tuple[int, int, int]]:
    return [(c, cost_no_index(p.with_cells(c)), cost_index(p.with_cells(c))) for c in cell_counts]


def cost_curve_csv(rows: Sequence[tuple[int, int, int]]) -> str:
    lines = ["cells,cost_no_index,cost_index,ratio"]
    for c, a, b in rows:
        ratio = f"{a / b:.6g}" if b else ""
        lines.append(f"{c},{a},{b},{ratio}")
    return "\n".join(lines) + "\n"
