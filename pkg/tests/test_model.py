import xml.etree.ElementTree as ET
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xcube_opt.datagen import ScaleProfile, generate
from xcube_opt.model import (
    DimensionMember,
    DimensionSet,
    DocumentError,
    FactCell,
    Warehouse,
    WarehouseSchema,
    load_warehouse,
    parse_dimensions,
    parse_facts,
    parse_schema,
    save_warehouse,
    serialize_dimensions,
    serialize_facts,
    serialize_schema,
    validate_warehouse,
)

SCHEMA = WarehouseSchema(("customers",), {"customers": ("cust city",)}, ("amount", "quantity"))


def test_golden_documents_round_trip_byte_for_byte(golden_dir, tiny):
    assert serialize_schema(tiny.schema) == (golden_dir / "Schema.xml").read_bytes()
    assert serialize_dimensions(tiny.dimensions) == (golden_dir / "Dimensions.xml").read_bytes()
    assert serialize_facts(tiny.facts) == (golden_dir / "Facts.xml").read_bytes()


def test_golden_values(tiny):
    assert tiny.dimensions.members["customers"][1].attributes["cust name"] == "Dupont & Fils"
    assert tiny.facts[1].measures == {"amount": Decimal("7.5"), "quantity": Decimal(3)}
    assert tiny.cell_count == 3 and tiny.dimension_count == 2
    assert tiny.node_counts == [2, 1] and tiny.attr_counts == [2, 1]


def test_single_member_document():
    doc = b"""<dimensionData><classification><Level node="customers">
      <node id="C1"><attribute name="cust city" value="Lyon"/></node>
    </Level></classification></dimensionData>"""
    d = parse_dimensions(doc, SCHEMA)
    assert d.members == {"customers": [DimensionMember("C1", {"cust city": "Lyon"})]}


def test_empty_level_gives_empty_members():
    d = parse_dimensions(b'<dimensionData><classification><Level node="customers"/></classification></dimensionData>',
                         SCHEMA)
    assert d.members == {"customers": []}


def test_empty_dimension_set_serializes_empty_classification():
    assert b"<classification/>" in serialize_dimensions(DimensionSet({}))


def test_single_cell_with_five_refs():
    dims = ("customers", "products", "times", "promotions", "channels")
    doc = ("<CubeFact><cube><Cell><fact id='amount' value='10'/><fact id='quantity' value='2'/>"
           + "".join(f"<dimension id='{d}' value='X1'/>" for d in dims) + "</Cell></cube></CubeFact>")
    [cell] = parse_facts(doc.encode())
    assert len(cell.measures) == 2 and len(cell.dimension_refs) == 5
    assert cell.measures["amount"] == Decimal(10)


def test_empty_cube_and_plural_root():
    assert parse_facts(b"<CubeFact><cube/></CubeFact>") == []
    assert parse_facts(b"<CubeFacts><cube/></CubeFacts>") == []


@pytest.mark.parametrize("doc, fragment", [
    (b"<CubeFact><cube><Cell>", "malformed"),
    (b"<CubeFact><cube><Cell><fact id='amount' value='ten'/></Cell></cube></CubeFact>", "non-numeric"),
    (b"<CubeFact><cube><Cell><fact id='amount' value='1'/><fact id='quantity' value='1'/></Cell></cube></CubeFact>",
     "missing dimension"),
])
def test_fact_errors_carry_paths(doc, fragment):
    with pytest.raises(DocumentError) as info:
        parse_facts(doc, SCHEMA)
    assert fragment in str(info.value)
    if fragment != "malformed":
        assert "/CubeFact/cube[1]/Cell[1]" in str(info.value)


@pytest.mark.parametrize("doc, fragment", [
    (b'<dimensionData><classification><Level node="stores"/></classification></dimensionData>', "unknown dimension"),
    (b'<dimensionData><classification><Level node="customers"><node><attribute name="cust city" value="x"/>'
     b'</node></Level></classification></dimensionData>', "missing @id"),
    (b'<dimensionData><classification><Level node="customers"><node id="C1"><attribute name="zip" value="x"/>'
     b'</node></Level></classification></dimensionData>', "does not match schema"),
])
def test_dimension_errors(doc, fragment):
    with pytest.raises(DocumentError) as info:
        parse_dimensions(doc, SCHEMA)
    assert fragment in str(info.value)
    assert "/dimensionData/classification[1]/Level[1]" in str(info.value)


def test_schema_round_trip(tiny):
    assert parse_schema(serialize_schema(tiny.schema)) == tiny.schema


def test_schema_invariants():
    with pytest.raises(ValueError):
        WarehouseSchema(("a", "a"), {"a": ("x",)}, ("m",))
    with pytest.raises(ValueError):
        WarehouseSchema(("a",), {"a": ()}, ("m",))
    with pytest.raises(ValueError):
        WarehouseSchema(("a",), {"a": ("x", "x")}, ("m",))


def test_validate_consistent_and_dangling(tiny):
    assert not validate_warehouse(tiny)
    bad = Warehouse(tiny.schema, tiny.dimensions,
                    [*tiny.facts, FactCell({"customers": "X9", "products": "P1"},
                                           {"amount": Decimal(1), "quantity": Decimal(1)})])
    report = validate_warehouse(bad)
    assert len(report) == 1
    [f] = report
    assert f.kind == "dangling_ref" and f.cell_index == 3 and f.dimension == "customers"


def test_validate_duplicate_member(tiny):
    members = dict(tiny.dimensions.members)
    members["products"] = members["products"] * 2
    report = validate_warehouse(Warehouse(tiny.schema, DimensionSet(members), tiny.facts))
    assert [f.kind for f in report] == ["duplicate_member"]


def test_generated_documents_round_trip(tmp_path):
    w = generate(ScaleProfile.for_cells(1_000, seed=4))
    save_warehouse(w, tmp_path)
    back = load_warehouse(tmp_path)
    assert back == w
    assert serialize_facts(back.facts) == (tmp_path / "Facts.xml").read_bytes()


def test_missing_file_is_named(tmp_path, tiny):
    save_warehouse(tiny, tmp_path)
    (tmp_path / "Dimensions.xml").unlink()
    with pytest.raises(FileNotFoundError, match="Dimensions.xml"):
        load_warehouse(tmp_path)


def test_scale_0001_member_counts():
    w = generate(ScaleProfile(scale="0.001", seed=0))
    doc = serialize_dimensions(w.dimensions)
    # count node elements per Level directly in the emitted document
    root = ET.fromstring(doc)
    counts = {lvl.get("node"): len(lvl.findall("node")) for lvl in root.iter("Level")}
    assert counts == {"customers": 50, "products": 10, "times": 2, "promotions": 1, "channels": 1}


_text = st.text(st.characters(blacklist_categories=("Cs", "Cc")), max_size=8)


@st.composite
def warehouses(draw):
    n_attr = draw(st.integers(1, 3))
    schema = WarehouseSchema(("d1", "d2"), {"d1": tuple(f"a{i}" for i in range(n_attr)), "d2": ("b",)}, ("m",))
    m1 = [DimensionMember(f"K{i}", {f"a{j}": draw(_text) for j in range(n_attr)}) for i in range(draw(st.integers(1, 3)))]
    m2 = [DimensionMember("L", {"b": draw(_text)})]
    facts = [FactCell({"d1": draw(st.sampled_from(m1)).member_id, "d2": "L"},
                      {"m": draw(st.decimals(allow_nan=False, allow_infinity=False, places=3))})
             for _ in range(draw(st.integers(0, 5)))]
    return Warehouse(schema, DimensionSet({"d1": m1, "d2": m2}), facts)


@settings(max_examples=60, deadline=None)
@given(warehouses())
def test_parse_serialize_identity(w):
    assert parse_dimensions(serialize_dimensions(w.dimensions), w.schema) == w.dimensions
    assert parse_facts(serialize_facts(w.facts), w.schema) == w.facts
    assert not validate_warehouse(w)
