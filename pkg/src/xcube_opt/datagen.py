"""Seeded synthetic warehouses shaped like the Oracle sales star schema.

Counts are scaled from the reference profile (16,260,336 sales cells over
customers, products, times, promotions and channels) with
``max(1, ceil(base * scale))``. Scales are kept as exact fractions so the
ceiling never suffers from float rounding.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Mapping

import numpy as np

from .model import DimensionMember, DimensionSet, FactCell, Warehouse, WarehouseSchema

FACT_ENTITY = "sales"

BASE_COUNTS: dict[str, int] = {
    "sales": 16_260_336,
    "customers": 50_000,
    "products": 10_000,
    "times": 1_461,
    "promotions": 501,
    "channels": 5,
}

DIMENSIONS = ("customers", "products", "times", "promotions", "channels")

DEFAULT_ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "customers": ("cust name", "cust city", "cust zip code", "cust country", "cust gender"),
    "products": ("prod name", "prod category", "prod subcategory", "prod brand", "prod color"),
    "times": ("time year", "time quarter", "time month", "time day name", "time week"),
    "promotions": ("promo name", "promo category", "promo subcategory", "promo cost band", "promo media"),
    "channels": ("channel name", "channel class", "channel category", "channel region", "channel code"),
}

MEMBER_PREFIX = {"customers": "C", "products": "P", "times": "T", "promotions": "PR", "channels": "CH"}

# Readable seeds for a few attribute domains; other values are "<attr> <k>".
_VALUE_NAMES: dict[str, tuple[str, ...]] = {
    "cust city": ("Lyon", "Paris", "Marseille", "Toulouse", "Nice", "Nantes", "Strasbourg", "Lille",
                  "Bordeaux", "Rennes", "Grenoble", "Dijon"),
    "cust country": ("France", "Germany", "Italy", "Spain", "Belgium", "Portugal"),
    "cust gender": ("F", "M"),
    "prod category": ("Hardware", "Software", "Electronics", "Photo", "Peripherals"),
    "time year": ("1998", "1999", "2000", "2001", "2002"),
    "time quarter": ("Q1", "Q2", "Q3", "Q4"),
    "channel name": ("Direct Sales", "Internet", "Catalog", "Partners", "Tele Sales"),
}

# Rough resident bytes per fact cell / member for the in-memory model.
_BYTES_PER_CELL = 1_200
_BYTES_PER_MEMBER = 1_500
DEFAULT_MEMORY_BUDGET = int(os.environ.get("XCUBE_OPT_MEMORY_BUDGET", 4 * 1024**3))


class BudgetExceeded(MemoryError):
    pass


def _as_fraction(scale) -> Fraction:
    if isinstance(scale, Fraction):
        return scale
    if isinstance(scale, float):
        # decimal text keeps 1e-4 exact instead of its binary approximation
        return Fraction(repr(scale))
    return Fraction(scale)


@dataclass(frozen=True)
class ScaleProfile:
    scale: Fraction = Fraction(1)
    seed: int = 0
    base_counts: Mapping[str, int] = field(default_factory=lambda: dict(BASE_COUNTS))
    attrs_per_dimension: Mapping[str, int] = field(default_factory=lambda: {d: 5 for d in DIMENSIONS})
    measures: tuple[str, ...] = ("amount", "quantity")
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", _as_fraction(self.scale))
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def for_cells(cls, cells: int, **kw) -> "ScaleProfile":
        """Profile whose fact count is exactly ``cells``."""
        base = kw.get("base_counts", BASE_COUNTS)[FACT_ENTITY]
        return cls(scale=Fraction(cells, base), **kw)

    def scaled(self, entity: str) -> int:
        return max(1, math.ceil(self.base_counts[entity] * self.scale))

    def counts(self) -> dict[str, int]:
        return {e: self.scaled(e) for e in self.base_counts}

    @property
    def dimensions(self) -> tuple[str, ...]:
        return tuple(e for e in self.base_counts if e != FACT_ENTITY)

    def schema(self) -> WarehouseSchema:
        attrs = {}
        for d in self.dimensions:
            n = self.attrs_per_dimension.get(d, 5)
            names = list(DEFAULT_ATTRIBUTES.get(d, ()))[:n]
            prefix = names[0].split()[0] if names else d
            names += [f"{prefix} attr {k}" for k in range(len(names) + 1, n + 1)]
            attrs[d] = tuple(names)
        return WarehouseSchema(self.dimensions, attrs, tuple(self.measures))

    def required_bytes(self) -> int:
        counts = self.counts()
        members = sum(c for e, c in counts.items() if e != FACT_ENTITY)
        return counts[FACT_ENTITY] * _BYTES_PER_CELL + members * _BYTES_PER_MEMBER


def domain_size(member_count: int) -> int:
    # isqrt(n - 1) + 1 == ceil(sqrt(n)) for n >= 1, without float error
    return max(2, math.isqrt(member_count - 1) + 1) if member_count >= 1 else 2


def attribute_value(attr: str, k: int) -> str:
    names = _VALUE_NAMES.get(attr)
    if names:
        return names[k] if k < len(names) else f"{names[k % len(names)]} {k // len(names)}"
    return f"{attr} {k + 1}"


def generate(profile: ScaleProfile) -> Warehouse:
    """Build a warehouse for ``profile``; deterministic in ``profile.seed``."""
    need = profile.required_bytes()
    if need > profile.memory_budget:
        raise BudgetExceeded(
            f"scale {profile.scale} needs about {need / 1024**2:,.0f} MiB in memory, "
            f"budget is {profile.memory_budget / 1024**2:,.0f} MiB"
        )
    rng = np.random.Generator(np.random.PCG64(profile.seed))
    schema = profile.schema()
    counts = profile.counts()

    members: dict[str, list[DimensionMember]] = {}
    for d in schema.dimension_names:
        n = counts[d]
        dom = domain_size(n)
        attrs = schema.attributes_per_dimension[d]
        codes = rng.integers(0, dom, size=(len(attrs), n))
        values = [[attribute_value(a, k) for k in range(dom)] for a in attrs]
        prefix = MEMBER_PREFIX.get(d, d[:2].upper())
        members[d] = [
            DimensionMember(
                f"{prefix}{i + 1}",
                {a: values[j][codes[j, i]] for j, a in enumerate(attrs)},
            )
            for i in range(n)
        ]

    n_cells = counts[FACT_ENTITY]
    ref_idx = {d: rng.integers(0, counts[d], size=n_cells) for d in schema.dimension_names}
    meas = {m: rng.integers(1, 1001, size=n_cells) for m in schema.measure_names}
    ids = {d: [m.member_id for m in members[d]] for d in schema.dimension_names}
    dec = [Decimal(k) for k in range(1001)]
    ref_cols = [(d, ids[d], ref_idx[d].tolist()) for d in schema.dimension_names]
    meas_cols = [(m, v.tolist()) for m, v in meas.items()]
    facts = [
        FactCell(
            {d: col_ids[col[i]] for d, col_ids, col in ref_cols},
            {m: dec[col[i]] for m, col in meas_cols},
        )
        for i in range(n_cells)
    ]
    return Warehouse(schema, DimensionSet(members), facts)
