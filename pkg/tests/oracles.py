"""Independent reference implementations used as test oracles.

These deliberately avoid the package's own kernels: no hashing joins, no
partial-aggregate merging, no modular quality formula.
"""

from __future__ import annotations

import math
import random
from decimal import Decimal
from fractions import Fraction
from itertools import product

from xcube_opt.aggregate import ResultTable
from xcube_opt.viewsel import CandidateView, WorkloadModel


def nested_loop_query(w, q) -> dict[tuple, dict[str, Decimal]]:
    """Evaluate q by nested loops over facts and members, then sort-and-scan grouping."""
    dim_of = {a: d for d in w.schema.dimension_names for a in w.schema.attributes_per_dimension[d]}
    dims = list(q.dimensions)
    for a in [p.attribute for p in q.selections] + list(q.group_by):
        if dim_of[a] not in dims:
            dims.append(dim_of[a])
    joined = []
    for cell in w.facts:
        attrs = {}
        for d in dims:
            member = None
            for m in w.dimensions.members[d]:  # linear scan, no lookup table
                if m.member_id == cell.dimension_refs[d]:
                    member = m
                    break
            attrs.update(member.attributes)
        if all(attrs[p.attribute] == p.value for p in q.selections):
            joined.append((tuple(attrs[a] for a in q.group_by), cell.measures))
    return sort_scan(joined, q.aggregations)


def sort_scan(rows, specs) -> dict[tuple, dict[str, Decimal]]:
    """Group by sorting on the key and scanning runs."""
    rows = sorted(rows, key=lambda r: r[0])
    out = {}
    i = 0
    while i < len(rows):
        j = i
        while j < len(rows) and rows[j][0] == rows[i][0]:
            j += 1
        run = rows[i:j]
        vals = {}
        for s in specs:
            xs = [Decimal(r[1][s.measure]) for r in run]
            if s.op == "sum":
                vals[s.label] = sum(xs, Decimal(0))
            elif s.op == "count":
                vals[s.label] = Decimal(len(xs))
            elif s.op == "min":
                vals[s.label] = min(xs)
            elif s.op == "max":
                vals[s.label] = max(xs)
            else:
                vals[s.label] = sum(xs, Decimal(0)) / len(xs)
        out[rows[i][0]] = vals
        i = j
    return out


def same_rows(table: ResultTable, expected: dict, rel_tol: float = 1e-9) -> bool:
    if set(table.rows) != set(expected):
        return False
    for key, vals in expected.items():
        got = table.rows[key]
        for label, v in vals.items():
            if label.startswith("avg("):
                if not math.isclose(float(got[label]), float(v), rel_tol=rel_tol):
                    return False
            elif got[label] != v:
                return False
    return True


# -- view selection ----------------------------------------------------------------


def brute_sim(a, b) -> int:
    return sum(1 for k in range(len(a)) if a[k] and b[k])


def brute_dissim(a, b) -> int:
    return sum(1 for k in range(len(a)) if a[k] != b[k])


def first_principles_quality(bits, clusters) -> int:
    """Direct double loop over query pairs: cross pairs add sim, same-cluster pairs add dissim."""
    label = {}
    for ci, c in enumerate(clusters):
        for q in c:
            label[q] = ci
    n = len(bits)
    total = 0
    for k in range(n):
        for l in range(k + 1, n):
            if label[k] == label[l]:
                total += brute_dissim(bits[k], bits[l])
            else:
                total += brute_sim(bits[k], bits[l])
    return total


def set_partitions(items):
    """Every partition of ``items`` (restricted-growth enumeration)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in set_partitions(rest):
        yield [[first]] + p
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]


def bell(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def brute_distinct_expectation(ms: int, n: int) -> Fraction:
    """Mean number of distinct slots over all ms**n equally likely assignments."""
    total = sum(len(set(a)) for a in product(range(ms), repeat=n))
    return Fraction(total, ms**n)


def monte_carlo_distinct(ms: int, n: int, trials: int, seed: int = 0) -> float:
    rng = random.Random(seed)
    acc = 0
    for _ in range(trials):
        acc += len({rng.randrange(ms) for _ in range(n)})
    return acc / trials


def reference_greedy(candidates, query_attrs, fact_cells, cfg):
    """Algorithm-level reference: at each step score every remaining candidate from scratch.

    Costs are recomputed directly: each query reads the smallest selected view
    covering its attributes, else every fact cell.
    """
    def workload_cost(sel):
        total = 0.0
        for need in query_attrs:
            best = float(fact_cells)
            for v in sel:
                if set(need) <= set(v.attrs):
                    best = min(best, v.est_cells)
            total += best
        return total

    beta = len(query_attrs) * (cfg.update_query_ratio / cfg.storage_space if cfg.storage_space else 0.0)
    selected, trace, used = [], [], 0.0
    remaining = list(candidates)
    while remaining:
        scores = []
        for v in remaining:
            if cfg.objective != "profit" and used + v.est_bytes > cfg.storage_space:
                continue
            p = workload_cost(selected) - workload_cost(selected + [v]) - beta * cfg.update_cost_multiplier * v.est_cells
            r = p / v.est_bytes if v.est_bytes > 0 else None
            if cfg.objective == "profit":
                f = p
            elif cfg.objective == "ratio":
                f = r
            else:
                left = (cfg.storage_space - used - v.est_bytes) / cfg.storage_space
                f = p if left <= cfg.alpha else r
            if f is not None:
                scores.append((f, v))
        positive = [(f, v) for f, v in scores if f > 0]
        if not positive:
            break
        top = max(f for f, _ in positive)
        v = next(v for f, v in positive if f == top)  # first in candidate order wins ties
        selected.append(v)
        remaining.remove(v)
        used += v.est_bytes
        trace.append((v.view_id, top))
    return trace


def random_instance(rng: random.Random):
    """A random greedy-selection instance: up to 6 candidates over 5 attributes."""
    attrs = "abcde"
    queries = tuple(frozenset(rng.sample(attrs, rng.randint(1, 3))) for _ in range(rng.randint(1, 6)))
    cands = []
    for i in range(rng.randint(0, 6)):
        chosen = rng.sample(attrs, rng.randint(1, 5))
        cells = rng.choice([1, 5, 20, 100, 400, 2_000])
        cands.append(CandidateView(f"v{i + 1}", tuple(sorted(chosen)), i, (), cells, float(cells),
                                   float(cells * rng.randint(5, 40))))
    return cands, WorkloadModel(queries, rng.choice([500, 1_000, 5_000]))
