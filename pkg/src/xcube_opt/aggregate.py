"""Group/aggregate kernel shared by every execution path.

Aggregation goes through mergeable partial states (sum, count, min, max per
measure) so work can be split across workers and partially aggregated view
cells can be re-grouped. ``avg`` is always derived as sum/count at the end.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

from .query import AggSpec

# key tuple -> per-measure [sum, count, min, max]
Partials = dict[tuple, list[list]]


class AggregationError(ValueError):
    pass


def _fmt(d: Decimal) -> str:
    return format(d.normalize(), "f")


@dataclass
class ResultTable:
    key_columns: tuple[str, ...]
    labels: tuple[str, ...]
    rows: dict[tuple[str, ...], dict[str, Decimal]]

    def __len__(self) -> int:
        return len(self.rows)

    def sorted_rows(self) -> list[tuple[tuple[str, ...], dict[str, Decimal]]]:
        return sorted(self.rows.items())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"attr:{k}" for k in self.key_columns] + [f"agg:{lab}" for lab in self.labels])
        for key, vals in self.sorted_rows():
            w.writerow(list(key) + [_fmt(vals[lab]) for lab in self.labels])
        return buf.getvalue()

    def difference(self, other: "ResultTable", rel_tol: float = 1e-9) -> str | None:
        """First difference from ``other`` as text, or None when equivalent.

        sum/count/min/max must match exactly; avg within ``rel_tol`` relative.
        """
        if self.key_columns != other.key_columns or self.labels != other.labels:
            return f"shape differs: {self.key_columns}/{self.labels} vs {other.key_columns}/{other.labels}"
        for key in sorted(set(self.rows) | set(other.rows)):
            a, b = self.rows.get(key), other.rows.get(key)
            if a is None or b is None:
                return f"row {key} present only in {'second' if a is None else 'first'} table"
            for lab in self.labels:
                x, y = a[lab], b[lab]
                if lab.startswith("avg("):
                    scale = max(abs(x), abs(y))
                    if scale and abs(x - y) / scale > Decimal(rel_tol):
                        return f"row {key} {lab}: {x} vs {y}"
                elif x != y:
                    return f"row {key} {lab}: {x} vs {y}"
        return None

    def equivalent(self, other: "ResultTable", rel_tol: float = 1e-9) -> bool:
        return self.difference(other, rel_tol) is None


def measures_of(specs: Sequence[AggSpec]) -> list[str]:
    return list(dict.fromkeys(s.measure for s in specs))


def _check(value, index: int, measure: str) -> Decimal:
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise AggregationError(f"non-finite value {value} for {measure!r} in row {index}")
        return value
    if isinstance(value, int):
        return Decimal(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise AggregationError(f"non-finite value {value} for {measure!r} in row {index}")
        return Decimal(repr(value))
    raise AggregationError(f"non-numeric value {value!r} for {measure!r} in row {index}")


def accumulate(rows: Iterable[tuple[tuple, Mapping]], measures: Sequence[str], start: int = 0) -> Partials:
    parts: Partials = {}
    for i, (key, vals) in enumerate(rows, start):
        state = parts.get(key)
        if state is None:
            parts[key] = [[v, 1, v, v] for v in (_check(vals[m], i, m) for m in measures)]
            continue
        for st, m in zip(state, measures):
            v = vals[m]
            if type(v) is not Decimal or not v.is_finite():
                v = _check(v, i, m)
            st[0] += v
            st[1] += 1
            if v < st[2]:
                st[2] = v
            elif v > st[3]:
                st[3] = v
    return parts


def merge_partials(into: Partials, other: Partials) -> Partials:
    for key, state in other.items():
        mine = into.get(key)
        if mine is None:
            into[key] = [list(s) for s in state]
            continue
        for a, b in zip(mine, state):
            a[0] += b[0]
            a[1] += b[1]
            a[2] = min(a[2], b[2])
            a[3] = max(a[3], b[3])
    return into


def finalize(parts: Partials, key_columns: Sequence[str], specs: Sequence[AggSpec]) -> ResultTable:
    measures = measures_of(specs)
    pos = {m: i for i, m in enumerate(measures)}
    rows: dict[tuple, dict[str, Decimal]] = {}
    for key, state in parts.items():
        out = {}
        for s in specs:
            total, count, lo, hi = state[pos[s.measure]]
            if s.op == "sum":
                out[s.label] = total
            elif s.op == "count":
                out[s.label] = Decimal(count)
            elif s.op == "min":
                out[s.label] = lo
            elif s.op == "max":
                out[s.label] = hi
            else:
                out[s.label] = total / Decimal(count)
        rows[key] = out
    return ResultTable(tuple(key_columns), tuple(s.label for s in specs), rows)


def group_aggregate(rows: Iterable[tuple[tuple, Mapping]], specs: Sequence[AggSpec],
                    key_columns: Sequence[str] = ()) -> ResultTable:
    """One output row per distinct key tuple; an empty stream gives an empty table."""
    return finalize(accumulate(rows, measures_of(specs)), key_columns, specs)
