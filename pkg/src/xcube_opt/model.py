"""Warehouse domain types and the three XCube documents.

A warehouse is held in memory as a :class:`Warehouse` (schema, dimension
members, fact cells) and exchanged as three XML documents:

* ``Schema.xml``      root ``schema`` with ``dimension``/``attribute`` and ``measure`` declarations
* ``Dimensions.xml``  ``dimensionData/classification/Level[@node]/node[@id]/attribute[@name,@value]``
* ``Facts.xml``       ``CubeFact/cube/Cell`` holding ``fact[@id,@value]`` and ``dimension[@id,@value]``

Facts documents are parsed incrementally so memory stays bounded per cell.
"""

from __future__ import annotations

import io
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Union
from xml.sax.saxutils import escape

XmlSource = Union[bytes, IO[bytes]]

SCHEMA_FILE = "Schema.xml"
DIMENSIONS_FILE = "Dimensions.xml"
FACTS_FILE = "Facts.xml"

XML_DECL = b'<?xml version="1.0" encoding="UTF-8"?>\n'
_ATTR_ENTITIES = {'"': "&quot;", "\n": "&#10;", "\r": "&#13;", "\t": "&#9;"}


class DocumentError(ValueError):
    """A warehouse document could not be read; ``path`` locates the element."""

    def __init__(self, message: str, path: str = "", position: tuple[int, int] | None = None):
        self.path = path
        self.position = position
        where = f" at {path}" if path else ""
        if position is not None:
            where += f" (line {position[0]}, column {position[1]})"
        super().__init__(f"{message}{where}")


def quote_attr(value: str) -> str:
    return '"' + escape(value, _ATTR_ENTITIES) + '"'


@dataclass(frozen=True)
class WarehouseSchema:
    dimension_names: tuple[str, ...]
    attributes_per_dimension: Mapping[str, tuple[str, ...]]
    measure_names: tuple[str, ...]

    def __post_init__(self) -> None:
        dims = tuple(self.dimension_names)
        object.__setattr__(self, "dimension_names", dims)
        object.__setattr__(self, "measure_names", tuple(self.measure_names))
        object.__setattr__(
            self,
            "attributes_per_dimension",
            {d: tuple(self.attributes_per_dimension.get(d, ())) for d in dims},
        )
        if len(set(dims)) != len(dims) or any(not d for d in dims):
            raise ValueError(f"dimension names must be unique and nonempty: {dims}")
        if set(self.attributes_per_dimension) - set(dims):
            raise ValueError("attributes declared for undeclared dimensions")
        seen: dict[str, str] = {}
        for d in dims:
            attrs = self.attributes_per_dimension[d]
            if not attrs:
                raise ValueError(f"dimension {d!r} has no attributes")
            for a in attrs:
                # group-by lists name bare attributes, so names must resolve globally
                if a in seen:
                    raise ValueError(f"attribute {a!r} declared in both {seen[a]!r} and {d!r}")
                seen[a] = d
        if len(set(self.measure_names)) != len(self.measure_names):
            raise ValueError("measure names must be unique")

    @cached_property
    def dimension_of(self) -> dict[str, str]:
        """attribute name -> owning dimension"""
        return {a: d for d in self.dimension_names for a in self.attributes_per_dimension[d]}

    @cached_property
    def attribute_order(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.dimension_of)}

    @property
    def all_attributes(self) -> list[str]:
        return list(self.dimension_of)


@dataclass(frozen=True)
class DimensionMember:
    member_id: str
    attributes: Mapping[str, str]


@dataclass(frozen=True)
class DimensionSet:
    members: Mapping[str, list[DimensionMember]]

    @cached_property
    def by_id(self) -> dict[str, dict[str, DimensionMember]]:
        return {d: {m.member_id: m for m in ms} for d, ms in self.members.items()}

    def count(self, dimension: str) -> int:
        return len(self.members.get(dimension, ()))


@dataclass(frozen=True)
class FactCell:
    dimension_refs: Mapping[str, str]
    measures: Mapping[str, Decimal]


@dataclass(frozen=True)
class Warehouse:
    schema: WarehouseSchema
    dimensions: DimensionSet
    facts: list[FactCell] = field(default_factory=list)

    @property
    def cell_count(self) -> int:
        return len(self.facts)

    @property
    def dimension_count(self) -> int:
        return len(self.schema.dimension_names)

    @property
    def node_counts(self) -> list[int]:
        return [self.dimensions.count(d) for d in self.schema.dimension_names]

    @property
    def attr_counts(self) -> list[int]:
        return [len(self.schema.attributes_per_dimension[d]) for d in self.schema.dimension_names]


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    kind: str  # dangling_ref | duplicate_member | schema_mismatch
    message: str
    cell_index: int | None = None
    dimension: str | None = None


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.findings)

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self) -> Iterator[Finding]:
        return iter(self.findings)

    def summary(self, limit: int = 10) -> str:
        lines = [f.message for f in self.findings[:limit]]
        if len(self.findings) > limit:
            lines.append(f"... and {len(self.findings) - limit} more")
        return "\n".join(lines)


def validate_warehouse(w: Warehouse) -> ValidationReport:
    """Check referential integrity and schema conformance; errors are the output."""
    report = ValidationReport()
    add = report.findings.append
    schema = w.schema
    dims = set(schema.dimension_names)
    for d in w.dimensions.members:
        if d not in dims:
            add(Finding("schema_mismatch", f"dimension {d!r} is not declared in the schema", dimension=d))
    known: dict[str, set[str]] = {}
    for d in schema.dimension_names:
        expected = set(schema.attributes_per_dimension[d])
        ids: set[str] = set()
        for m in w.dimensions.members.get(d, ()):
            if m.member_id in ids:
                add(Finding("duplicate_member", f"duplicate member id {m.member_id!r} in {d!r}", dimension=d))
            ids.add(m.member_id)
            if set(m.attributes) != expected:
                add(Finding(
                    "schema_mismatch",
                    f"member {m.member_id!r} of {d!r} has attributes {sorted(m.attributes)}, "
                    f"expected {sorted(expected)}",
                    dimension=d,
                ))
        known[d] = ids
    measures = set(schema.measure_names)
    for i, cell in enumerate(w.facts):
        if set(cell.dimension_refs) != dims:
            add(Finding(
                "schema_mismatch",
                f"cell {i} references dimensions {sorted(cell.dimension_refs)}, expected {sorted(dims)}",
                cell_index=i,
            ))
        for d, ref in cell.dimension_refs.items():
            if d in known and ref not in known[d]:
                add(Finding("dangling_ref", f"cell {i} references missing member {ref!r} of {d!r}",
                            cell_index=i, dimension=d))
        if set(cell.measures) != measures:
            add(Finding(
                "schema_mismatch",
                f"cell {i} has measures {sorted(cell.measures)}, expected {sorted(measures)}",
                cell_index=i,
            ))
    return report


# -- parsing ------------------------------------------------------------------


def _stream(document: XmlSource) -> IO[bytes]:
    if isinstance(document, (bytes, bytearray, memoryview)):
        return io.BytesIO(bytes(document))
    return document


class _PathTracker:
    """Keeps an XPath-like location (``/a/b[3]``) during iterparse."""

    def __init__(self) -> None:
        self.stack: list[tuple[str, dict[str, int]]] = []
        self.parts: list[str] = []

    def start(self, tag: str) -> None:
        if self.stack:
            counts = self.stack[-1][1]
            counts[tag] = counts.get(tag, 0) + 1
            self.parts.append(f"{tag}[{counts[tag]}]")
        else:
            self.parts.append(tag)
        self.stack.append((tag, {}))

    def end(self) -> None:
        self.stack.pop()
        self.parts.pop()

    def path(self, extra: str = "") -> str:
        return "/" + "/".join(self.parts) + (f"/@{extra}" if extra else "")


def _iterparse(document: XmlSource, tracker: _PathTracker) -> Iterator[tuple[str, ET.Element]]:
    try:
        for event, elem in ET.iterparse(_stream(document), events=("start", "end")):
            if event == "start":
                tracker.start(elem.tag)
                yield event, elem
            else:
                yield event, elem
                tracker.end()
    except ET.ParseError as exc:
        raise DocumentError(f"malformed XML: {exc.msg if hasattr(exc, 'msg') else exc}",
                            tracker.path() if tracker.parts else "", getattr(exc, "position", None)) from None


def _require(elem: ET.Element, name: str, tracker: _PathTracker) -> str:
    value = elem.get(name)
    if value is None:
        raise DocumentError(f"missing @{name}", tracker.path(name))
    return value


def _expect_root(elem: ET.Element, names: Iterable[str], tracker: _PathTracker) -> None:
    names = tuple(names)
    if elem.tag not in names:
        raise DocumentError(f"unexpected root element {elem.tag!r}, expected {' or '.join(names)}", tracker.path())


def parse_schema(document: XmlSource) -> WarehouseSchema:
    tracker = _PathTracker()
    dims: list[str] = []
    attrs: dict[str, list[str]] = {}
    measures: list[str] = []
    current: str | None = None
    for event, elem in _iterparse(document, tracker):
        depth = len(tracker.stack)
        if event == "start":
            if depth == 1:
                _expect_root(elem, ["schema"], tracker)
            elif depth == 2 and elem.tag == "dimension":
                current = _require(elem, "name", tracker)
                dims.append(current)
                attrs[current] = []
            elif depth == 2 and elem.tag == "measure":
                measures.append(_require(elem, "name", tracker))
            elif depth == 3 and elem.tag == "attribute" and current is not None:
                attrs[current].append(_require(elem, "name", tracker))
            else:
                raise DocumentError(f"unexpected element {elem.tag!r}", tracker.path())
    try:
        return WarehouseSchema(tuple(dims), {d: tuple(a) for d, a in attrs.items()}, tuple(measures))
    except ValueError as exc:
        raise DocumentError(f"invalid schema: {exc}", "/schema") from None


def parse_dimensions(document: XmlSource, schema: WarehouseSchema) -> DimensionSet:
    """Read a Dimensions document; every schema dimension gets a (possibly empty) member list."""
    tracker = _PathTracker()
    members: dict[str, list[DimensionMember]] = {d: [] for d in schema.dimension_names}
    level: str | None = None
    node_id: str | None = None
    node_attrs: dict[str, str] = {}
    for event, elem in _iterparse(document, tracker):
        depth = len(tracker.stack)
        tag = elem.tag
        if event == "start":
            if depth == 1:
                _expect_root(elem, ["dimensionData"], tracker)
            elif depth == 2 and tag == "classification":
                pass
            elif depth == 3 and tag == "Level":
                level = _require(elem, "node", tracker)
                if level not in members:
                    raise DocumentError(f"unknown dimension {level!r}", tracker.path("node"))
            elif depth == 4 and tag == "node":
                node_id = _require(elem, "id", tracker)
                node_attrs = {}
            elif depth == 5 and tag == "attribute":
                name = _require(elem, "name", tracker)
                if name in node_attrs:
                    raise DocumentError(f"duplicate attribute {name!r}", tracker.path("name"))
                node_attrs[name] = _require(elem, "value", tracker)
            else:
                raise DocumentError(f"unexpected element {tag!r}", tracker.path())
        elif depth == 4 and tag == "node":
            assert level is not None and node_id is not None
            expected = schema.attributes_per_dimension[level]
            if set(node_attrs) != set(expected):
                raise DocumentError(
                    f"attribute set {sorted(node_attrs)} does not match schema {sorted(expected)}",
                    tracker.path(),
                )
            members[level].append(DimensionMember(node_id, {a: node_attrs[a] for a in expected}))
            elem.clear()
    return DimensionSet(members)


def _decimal(text: str, tracker: _PathTracker) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise DocumentError(f"non-numeric measure value {text!r}", tracker.path("value")) from None
    if not value.is_finite():
        raise DocumentError(f"non-finite measure value {text!r}", tracker.path("value"))
    return value


def iter_facts(document: XmlSource, schema: WarehouseSchema | None = None) -> Iterator[FactCell]:
    """Stream ``FactCell`` values from a Facts document in document order.

    Both ``CubeFact`` and ``CubeFacts`` roots are accepted. When a schema is
    given, each cell must reference every schema dimension.
    """
    tracker = _PathTracker()
    refs: dict[str, str] = {}
    measures: dict[str, Decimal] = {}
    cube: ET.Element | None = None
    for event, elem in _iterparse(document, tracker):
        depth = len(tracker.stack)
        tag = elem.tag
        if event == "start":
            if depth == 1:
                _expect_root(elem, ["CubeFact", "CubeFacts"], tracker)
            elif depth == 2 and tag == "cube":
                cube = elem
            elif depth == 3 and tag == "Cell":
                refs, measures = {}, {}
            elif depth == 4 and tag == "fact":
                name = _require(elem, "id", tracker)
                if schema is not None and name not in schema.measure_names:
                    raise DocumentError(f"unknown measure {name!r}", tracker.path("id"))
                measures[name] = _decimal(_require(elem, "value", tracker), tracker)
            elif depth == 4 and tag == "dimension":
                name = _require(elem, "id", tracker)
                if schema is not None and name not in schema.attributes_per_dimension:
                    raise DocumentError(f"unknown dimension {name!r}", tracker.path("id"))
                refs[name] = _require(elem, "value", tracker)
            else:
                raise DocumentError(f"unexpected element {tag!r}", tracker.path())
        elif depth == 3 and tag == "Cell":
            if schema is not None:
                missing = [d for d in schema.dimension_names if d not in refs]
                if missing:
                    raise DocumentError(f"missing dimension reference(s) {missing}", tracker.path())
            yield FactCell(refs, measures)
            if cube is not None:
                cube.clear()


def parse_facts(document: XmlSource, schema: WarehouseSchema | None = None) -> list[FactCell]:
    return list(iter_facts(document, schema))


# -- serialization ------------------------------------------------------------


def write_schema(schema: WarehouseSchema, out: IO[bytes]) -> None:
    out.write(XML_DECL)
    out.write(b"<schema>\n")
    for d in schema.dimension_names:
        out.write(f"  <dimension name={quote_attr(d)}>\n".encode())
        for a in schema.attributes_per_dimension[d]:
            out.write(f"    <attribute name={quote_attr(a)}/>\n".encode())
        out.write(b"  </dimension>\n")
    for m in schema.measure_names:
        out.write(f"  <measure name={quote_attr(m)}/>\n".encode())
    out.write(b"</schema>\n")


def write_dimensions(d: DimensionSet, out: IO[bytes]) -> None:
    out.write(XML_DECL)
    out.write(b"<dimensionData>\n")
    if not d.members:
        out.write(b"  <classification/>\n")
    else:
        out.write(b"  <classification>\n")
        for level, members in d.members.items():
            if not members:
                out.write(f"    <Level node={quote_attr(level)}/>\n".encode())
                continue
            out.write(f"    <Level node={quote_attr(level)}>\n".encode())
            for m in members:
                parts = [f"      <node id={quote_attr(m.member_id)}>\n"]
                parts += [
                    f"        <attribute name={quote_attr(k)} value={quote_attr(v)}/>\n"
                    for k, v in m.attributes.items()
                ]
                parts.append("      </node>\n")
                out.write("".join(parts).encode())
            out.write(b"    </Level>\n")
        out.write(b"  </classification>\n")
    out.write(b"</dimensionData>\n")


def write_facts(cells: Iterable[FactCell], out: IO[bytes], chunk: int = 2048) -> None:
    out.write(XML_DECL)
    out.write(b"<CubeFact>\n")
    buf: list[str] = []
    any_cell = False
    for cell in cells:
        if not any_cell:
            out.write(b"  <cube>\n")
            any_cell = True
        buf.append("    <Cell>\n")
        buf += [f"      <fact id={quote_attr(k)} value=\"{v}\"/>\n" for k, v in cell.measures.items()]
        buf += [
            f"      <dimension id={quote_attr(k)} value={quote_attr(v)}/>\n"
            for k, v in cell.dimension_refs.items()
        ]
        buf.append("    </Cell>\n")
        if len(buf) >= chunk:
            out.write("".join(buf).encode())
            buf.clear()
    out.write("".join(buf).encode())
    out.write(b"  </cube>\n" if any_cell else b"  <cube/>\n")
    out.write(b"</CubeFact>\n")


def _to_bytes(writer, value) -> bytes:
    out = io.BytesIO()
    writer(value, out)
    return out.getvalue()


def serialize_schema(schema: WarehouseSchema) -> bytes:
    return _to_bytes(write_schema, schema)


def serialize_dimensions(d: DimensionSet) -> bytes:
    return _to_bytes(write_dimensions, d)


def serialize_facts(cells: Iterable[FactCell]) -> bytes:
    return _to_bytes(write_facts, cells)


# -- directories --------------------------------------------------------------


def save_warehouse(w: Warehouse, directory: str | os.PathLike) -> dict[str, Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths = {name: root / name for name in (SCHEMA_FILE, DIMENSIONS_FILE, FACTS_FILE)}
    with open(paths[SCHEMA_FILE], "wb") as fh:
        write_schema(w.schema, fh)
    with open(paths[DIMENSIONS_FILE], "wb") as fh:
        write_dimensions(w.dimensions, fh)
    with open(paths[FACTS_FILE], "wb") as fh:
        write_facts(w.facts, fh)
    return paths


def load_warehouse(directory: str | os.PathLike) -> Warehouse:
    root = Path(directory)
    for name in (SCHEMA_FILE, DIMENSIONS_FILE, FACTS_FILE):
        if not (root / name).is_file():
            raise FileNotFoundError(f"missing warehouse document: {root / name}")
    with open(root / SCHEMA_FILE, "rb") as fh:
        schema = parse_schema(fh)
    with open(root / DIMENSIONS_FILE, "rb") as fh:
        dims = parse_dimensions(fh, schema)
    with open(root / FACTS_FILE, "rb") as fh:
        facts = parse_facts(fh, schema)
    return Warehouse(schema, dims, facts)
