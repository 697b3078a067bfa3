import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xcube_opt.datagen import ScaleProfile
from xcube_opt.query import (
    AggSpec,
    Predicate,
    Query,
    QueryError,
    join_workload,
    parse_query,
    print_query,
    representative_attributes,
    split_workload,
    tokenize,
)
from xcube_opt.workload import SAMPLE_QUERY, generate_workload

SCHEMA = ScaleProfile().schema()


def test_sample_query_ast():
    q = parse_query(SAMPLE_QUERY, SCHEMA)
    assert q.dimensions == ("customers",)
    assert q.selections == (Predicate("customers", "cust city", "Lyon"),)
    assert q.group_by == ("cust name", "cust zip code")
    assert q.aggregations == (AggSpec("sum", "quantity"),)
    assert q.source_text == SAMPLE_QUERY


def test_sample_query_representative_attributes():
    q = parse_query(SAMPLE_QUERY, SCHEMA)
    assert set(representative_attributes(q, SCHEMA)) == {"cust city", "cust name", "cust zip code"}
    assert "quantity" not in representative_attributes(q, SCHEMA)


def test_minimal_sentence():
    text = """for $a in //dimensionData/classification/Level[@node='customers']/node,
                  $x in //CubeFact/cube/Cell
              where $x/dimension/@value=$a/@id and $x/dimension/@id='customers'
              group by(cust city) return aggregation(count, amount)"""
    q = parse_query(text, SCHEMA)
    assert q.selections == () and q.group_by == ("cust city",)
    assert q.aggregations == (AggSpec("count", "amount"),)


def test_where_clause_optional():
    q = parse_query("for $a in //classification/Level[@node='customers']/node, $x in //CubeFacts/cube/Cell "
                    "group by(cust city) return aggregation(sum, amount)", SCHEMA)
    assert q.selections == ()


def test_unsupported_op_points_at_op_token():
    text = SAMPLE_QUERY.replace("aggregation(sum, quantity)", "aggregation(median, quantity)")
    with pytest.raises(QueryError) as info:
        parse_query(text, SCHEMA)
    err = info.value
    assert "unsupported aggregation op 'median'" in str(err)
    assert text[err.offset:].startswith("median")
    assert err.line == 11


@pytest.mark.parametrize("mutate, fragment", [
    (lambda t: t.replace("and $a/attribute/@value='Lyon'", "or $a/attribute/@value='Lyon'"), "disjunction"),
    (lambda t: t.replace("'cust city'", "'cust planet'"), "unknown attribute"),
    (lambda t: t.replace("quantity)", "weight)"), "unknown measure"),
    (lambda t: t.replace("'customers']/node", "'stores']/node"), "unknown dimension"),
    (lambda t: t.replace("group by", "order by"), "expected"),
    (lambda t: t.replace("$x in //CubeFacts/cube/Cell", "$x in //CubeFacts/cube/Row"), ""),
])
def test_diagnostics(mutate, fragment):
    with pytest.raises(QueryError) as info:
        parse_query(mutate(SAMPLE_QUERY), SCHEMA)
    assert fragment in str(info.value)


def test_attribute_in_wrong_dimension():
    text = SAMPLE_QUERY.replace("group by(cust name,@cust zip code)", "group by(prod brand)")
    with pytest.raises(QueryError):
        parse_query(text, SCHEMA)


def test_diagnostic_line_column():
    with pytest.raises(QueryError) as info:
        parse_query("for $a in\n  //classification/Level[@node='customers']/node,\n  $x in //CubeFact/cube/Cell\n"
                    "group by(cust city) return aggregation(sum, amount) trailing", SCHEMA)
    assert info.value.line == 4


def test_lexer_handles_comments_and_escaped_quotes():
    toks = tokenize("(: note :) 'it''s' $v")
    assert [(t.kind, t.value) for t in toks[:-1]] == [("STRING", "it's"), ("VAR", "v")]


def test_bytes_input_and_bad_utf8():
    assert parse_query(SAMPLE_QUERY.encode(), SCHEMA).group_by == ("cust name", "cust zip code")
    with pytest.raises(QueryError, match="UTF-8"):
        parse_query(b"\xff\xfe", SCHEMA)


def test_workload_split_and_join():
    texts = ["a\nb\n", "c\n"]
    assert split_workload(join_workload(texts)) == texts
    assert split_workload("x\n---\n\n---\ny") == ["x\n", "y\n"]


def _regex_attrs(text: str) -> set[str]:
    names = set(re.findall(r"@name='([^']*)'", text))
    group = re.search(r"group by\(([^)]*)\)", text).group(1)
    names |= {g.strip().lstrip("@").strip() for g in group.split(",")}
    return names


def test_workload_representative_attributes_match_regex_oracle(small):
    for text in generate_workload(small, seed=3):
        q = parse_query(text, small.schema)
        assert set(representative_attributes(q, small.schema)) == _regex_attrs(text)


def test_representative_attributes_ignore_order_and_duplicates():
    a = Query(("customers",), (Predicate("customers", "cust city", "x"), Predicate("customers", "cust name", "y")),
              ("cust zip code",), (AggSpec("sum", "amount"),))
    b = Query(("customers",), (Predicate("customers", "cust name", "y"), Predicate("customers", "cust city", "x"),
                               Predicate("customers", "cust city", "x")), ("cust zip code",), (AggSpec("sum", "amount"),))
    assert representative_attributes(a, SCHEMA) == representative_attributes(b, SCHEMA)
    c = Query(("customers",), (Predicate("customers", "cust city", "x"),), ("cust city",), (AggSpec("sum", "amount"),))
    assert set(representative_attributes(c)) == {"cust city"}


# -- properties ---------------------------------------------------------------------

_values = st.text(st.characters(blacklist_categories=("Cs", "Cc")), max_size=10)


@st.composite
def queries(draw):
    dims = draw(st.lists(st.sampled_from(SCHEMA.dimension_names), min_size=1, max_size=3, unique=True))
    attrs = [a for d in dims for a in SCHEMA.attributes_per_dimension[d]]
    sels = tuple(Predicate(SCHEMA.dimension_of[a], a, draw(_values))
                 for a in draw(st.lists(st.sampled_from(attrs), max_size=3)))
    group = tuple(draw(st.lists(st.sampled_from(attrs), min_size=1, max_size=3, unique=True)))
    aggs = tuple(AggSpec(op, m) for op, m in draw(st.lists(
        st.tuples(st.sampled_from(["sum", "avg", "count", "min", "max"]), st.sampled_from(SCHEMA.measure_names)),
        min_size=1, max_size=3)))
    return Query(tuple(dims), sels, group, aggs)


@settings(max_examples=150, deadline=None)
@given(queries())
def test_print_reparse_identity(q):
    assert parse_query(print_query(q), SCHEMA) == q


_fragments = st.sampled_from(["for", "$a", "in", "//", "/", "Level", "[", "]", "@node", "=", "'x'", ",", "where",
                              "and", "or", "group", "by", "(", ")", "return", "aggregation", "sum", "let", ":=",
                              "cust city", "'", "(:", ":)", "!=", "\x00", "é"])


@settings(max_examples=300, deadline=None)
@given(st.one_of(st.binary(max_size=64), st.text(max_size=64),
                 st.lists(_fragments, max_size=30).map(" ".join)))
def test_parse_is_total(data):
    try:
        parse_query(data, SCHEMA)
    except QueryError:
        pass


@settings(max_examples=100, deadline=None)
@given(st.integers(0, len(SAMPLE_QUERY) - 1))
def test_truncated_sample_never_crashes(cut):
    try:
        parse_query(SAMPLE_QUERY[:cut], SCHEMA)
    except QueryError:
        pass
