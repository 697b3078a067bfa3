"""Stand-in ten-query decision-support workload over the sales schema.

Query 1 is the sample query verbatim (customers in Lyon grouped by name
and zip code). The others follow the same shape over other dimensions.
Predicate constants are drawn (seeded) from existing members, so each
query selects at least one fact-bearing member with high probability.
"""

from __future__ import annotations

import random
from typing import Sequence

from .model import Warehouse
from .query import Query, parse_query

SAMPLE_QUERY = """for $a in //dimensionData/classification/Level
  [@node='customers']/node,
  $x in //CubeFacts/cube/Cell
let $q := $b/attribute[@name='cust name']/@value
let $z := $b/attribute[@name='cust zip code']/@value
where $a/attribute/@name='cust city'
and $a/attribute/@value='Lyon'
and $x/dimension /@id=$a/@id
and $x/dimension /@id='customers'
group by(cust name,@cust zip code)
return name='cust name', aggregation(sum, quantity)
"""

# (selections as (dimension, attribute), group-by attributes, aggregations)
TEMPLATES: list[tuple[list[tuple[str, str]], list[str], list[tuple[str, str]]]] = [
    ([("customers", "cust city")], ["cust zip code"], [("sum", "amount")]),
    ([("customers", "cust country")], ["cust city"], [("avg", "amount"), ("count", "amount")]),
    ([], ["cust city", "cust name"], [("count", "quantity")]),
    ([("products", "prod category")], ["prod brand"], [("sum", "quantity")]),
    ([("products", "prod category")], ["prod subcategory", "prod brand"], [("max", "amount")]),
    ([("times", "time year")], ["time quarter"], [("sum", "amount")]),
    ([("times", "time year")], ["time quarter", "time month"], [("min", "quantity"), ("avg", "quantity")]),
    ([("channels", "channel name")], ["time year"], [("sum", "amount")]),
    ([("promotions", "promo category")], ["prod category"], [("avg", "quantity")]),
]


def _lit(v: str) -> str:
    return "'" + v.replace("'", "''") + "'"


def render(dims: Sequence[str], selections: Sequence[tuple[str, str, str]], group_by: Sequence[str],
           aggs: Sequence[tuple[str, str]]) -> str:
    """Text in the sample query's style (name/value test pairs plus join equalities)."""
    var = {d: f"${'abcdefgh'[i]}" for i, d in enumerate(dims)}
    lines = []
    binds = [f"{var[d]} in //dimensionData/classification/Level[@node={_lit(d)}]/node" for d in dims]
    binds.append("$x in //CubeFact/cube/Cell")
    lines.append("for " + ",\n    ".join(binds))
    conds = []
    for d, a, v in selections:
        conds.append(f"{var[d]}/attribute/@name={_lit(a)}")
        conds.append(f"{var[d]}/attribute/@value={_lit(v)}")
    for d in dims:
        conds.append(f"$x/dimension/@value={var[d]}/@id")
        conds.append(f"$x/dimension/@id={_lit(d)}")
    lines.append("where " + "\nand ".join(conds))
    lines.append("group by(" + ", ".join(group_by) + ")")
    lines.append("return " + ", ".join(f"aggregation({op}, {m})" for op, m in aggs))
    return "\n".join(lines) + "\n"


def generate_workload(w: Warehouse, seed: int = 0) -> list[str]:
    """Ten query texts for warehouse ``w`` (which must use the default sales schema)."""
    rng = random.Random(seed)
    dim_of = w.schema.dimension_of
    texts = [SAMPLE_QUERY]
    for sels, group, aggs in TEMPLATES:
        dims: list[str] = []
        for d in [d for d, _ in sels] + [dim_of[a] for a in group]:
            if d not in dims:
                dims.append(d)
        chosen = []
        for d, a in sels:
            members = w.dimensions.members[d]
            chosen.append((d, a, rng.choice(members).attributes[a]))
        texts.append(render(dims, chosen, group, aggs))
    return texts


def parse_workload(texts: Sequence[str], w: Warehouse) -> list[Query]:
    return [parse_query(t, w.schema) for t in texts]
