"""Query-attribute matrix and the query/cluster (dis)similarity measures."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

from ..model import WarehouseSchema
from ..query import Query, representative_attributes

Row = Sequence[int]


@dataclass(frozen=True)
class QueryAttributeMatrix:
    queries: tuple[str, ...]
    attributes: tuple[str, ...]
    bits: tuple[tuple[int, ...], ...]

    @property
    def p(self) -> int:
        return len(self.attributes)

    def __len__(self) -> int:
        return len(self.queries)

    def row(self, i: int) -> tuple[int, ...]:
        return self.bits[i]

    def row_attributes(self, i: int) -> tuple[str, ...]:
        return tuple(a for a, b in zip(self.attributes, self.bits[i]) if b)


def build_matrix(workload: Sequence[Query], schema: WarehouseSchema | None = None,
                 ids: Sequence[str] | None = None) -> QueryAttributeMatrix:
    if not workload:
        raise ValueError("cannot build a query-attribute matrix from an empty workload")
    ids = tuple(ids) if ids is not None else tuple(f"q{i + 1}" for i in range(len(workload)))
    if len(ids) != len(workload):
        raise ValueError("one id per workload query is required")
    reps = [set(representative_attributes(q, schema)) for q in workload]
    columns: dict[str, None] = {}
    for q in workload:
        for a in representative_attributes(q, schema):
            columns.setdefault(a)
    attrs = tuple(columns)
    bits = tuple(tuple(int(a in r) for a in attrs) for r in reps)
    return QueryAttributeMatrix(ids, attrs, bits)


def _same_length(a: Row, b: Row) -> None:
    if len(a) != len(b):
        raise ValueError(f"row length mismatch: {len(a)} vs {len(b)}")


def sim_q(a: Row, b: Row) -> int:
    """Number of attributes present in both queries."""
    _same_length(a, b)
    return sum(1 for x, y in zip(a, b) if x == 1 and y == 1)


def dissim_q(a: Row, b: Row) -> int:
    """Number of attributes present in exactly one of the queries."""
    _same_length(a, b)
    return sum(1 for x, y in zip(a, b) if x != y)


def _disjoint(ca: Sequence[int], cb: Sequence[int]) -> None:
    if set(ca) & set(cb):
        raise ValueError(f"clusters overlap: {sorted(set(ca) & set(cb))}")


def sim_c(m: QueryAttributeMatrix, ca: Sequence[int], cb: Sequence[int]) -> int:
    _disjoint(ca, cb)
    return sum(sim_q(m.bits[k], m.bits[l]) for k in ca for l in cb)


def dissim_c(m: QueryAttributeMatrix, ca: Sequence[int], cb: Sequence[int]) -> int:
    _disjoint(ca, cb)
    return sum(dissim_q(m.bits[k], m.bits[l]) for k in ca for l in cb)


def sim_within(m: QueryAttributeMatrix, ca: Sequence[int]) -> int:
    return sum(sim_q(m.bits[k], m.bits[l]) for k, l in combinations(sorted(ca), 2))


def dissim_within(m: QueryAttributeMatrix, ca: Sequence[int]) -> int:
    return sum(dissim_q(m.bits[k], m.bits[l]) for k, l in combinations(sorted(ca), 2))


@dataclass(frozen=True)
class Partition:
    clusters: tuple[tuple[int, ...], ...]

    @property
    def z(self) -> int:
        return len(self.clusters)

    @classmethod
    def of(cls, clusters) -> "Partition":
        return cls(tuple(tuple(sorted(c)) for c in clusters))

    def validate(self, n: int) -> None:
        members = [q for c in self.clusters for q in c]
        if not self.clusters or any(not c for c in self.clusters):
            raise ValueError("a partition needs at least one cluster and no empty clusters")
        if len(members) != len(set(members)) or set(members) != set(range(n)):
            raise ValueError(f"clusters must be a disjoint cover of queries 0..{n - 1}")


def quality(partition: Partition, m: QueryAttributeMatrix) -> int:
    """Cross-cluster similarity plus within-cluster dissimilarity; lower is more natural."""
    partition.validate(len(m))
    cs = partition.clusters
    cross = sum(sim_c(m, cs[a], cs[b]) for a, b in combinations(range(len(cs)), 2))
    return cross + sum(dissim_within(m, c) for c in cs)
