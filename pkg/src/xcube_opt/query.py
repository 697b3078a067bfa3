"""Decision-support query dialect: a fixed-shape FLWOR with grouping.

Accepted shape::

    for $a in //dimensionData/classification/Level[@node='customers']/node,
        $x in //CubeFact/cube/Cell
    let $q := $a/attribute[@name='cust name']/@value
    where $a/attribute/@name='cust city'
      and $a/attribute/@value='Lyon'
      and $x/dimension/@id=$a/@id
      and $x/dimension/@id='customers'
    group by(cust name, cust zip code)
    return name='cust name', aggregation(sum, quantity)

One ``for`` binding per dimension plus exactly one over the facts cube
(``CubeFact`` or ``CubeFacts``). Selections are ``@name``/``@value`` test
pairs on a dimension iterator (or the single-step form
``$a/attribute[@name='x']/@value='y'``), combined with ``and`` only. The
two fact/dimension join equalities are recognised and absorbed: joins are
implied by the dimension iterators. A variable used in ``let``/``where``
without a ``for`` binding is taken as an alias of the dimension iterator
when exactly one exists.

Errors are raised as :class:`QueryError` carrying the offending position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .model import WarehouseSchema

AGG_OPS = ("sum", "avg", "count", "min", "max")

_FACT = None  # iterator target for the facts cube


class QueryError(ValueError):
    def __init__(self, message: str, text: str = "", offset: int | None = None):
        self.message = message
        self.offset = offset
        self.line = self.column = None
        if offset is not None:
            self.line = text.count("\n", 0, offset) + 1
            self.column = offset - (text.rfind("\n", 0, offset) + 1) + 1
            message = f"{message} (line {self.line}, column {self.column})"
        super().__init__(message)


@dataclass(frozen=True)
class Predicate:
    dimension: str
    attribute: str
    value: str


@dataclass(frozen=True)
class AggSpec:
    op: str
    measure: str

    @property
    def label(self) -> str:
        return f"{self.op}({self.measure})"


@dataclass(frozen=True)
class Query:
    dimensions: tuple[str, ...]
    selections: tuple[Predicate, ...]
    group_by: tuple[str, ...]
    aggregations: tuple[AggSpec, ...]
    source_text: str = field(default="", compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.aggregations and not self.group_by:
            raise ValueError("group_by must be nonempty when aggregations are present")


@dataclass(frozen=True)
class RepresentativeAttributes:
    attrs: tuple[str, ...]

    def __contains__(self, name: object) -> bool:
        return name in self.attrs

    def __iter__(self):
        return iter(self.attrs)

    def __len__(self) -> int:
        return len(self.attrs)

    def issubset(self, other: Iterable[str]) -> bool:
        return set(self.attrs) <= set(other)


def representative_attributes(q: Query, schema: WarehouseSchema | None = None) -> RepresentativeAttributes:
    """Selection attributes plus group-by attributes, deduplicated.

    Ordered by schema position when a schema is given, lexicographically otherwise,
    so the result does not depend on predicate order.
    """
    names = {p.attribute for p in q.selections} | set(q.group_by)
    if schema is not None:
        order = schema.attribute_order
        return RepresentativeAttributes(tuple(sorted(names, key=lambda a: (order.get(a, len(order)), a))))
    return RepresentativeAttributes(tuple(sorted(names)))


# -- lexer --------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # VAR STRING NAME PUNCT EOF
    value: str
    offset: int


_PUNCT = ("//", ":=", "!=", "/", "[", "]", "(", ")", "@", ",", "=")
_NAME_RE = re.compile(r"[\w][\w.\-]*")


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if text.startswith("(:", i):
            end = text.find(":)", i + 2)
            if end < 0:
                raise QueryError("unterminated comment", text, i)
            i = end + 2
            continue
        if c == "$":
            m = _NAME_RE.match(text, i + 1)
            if not m:
                raise QueryError("expected variable name after '$'", text, i)
            tokens.append(Token("VAR", m.group(), i))
            i = m.end()
            continue
        if c in "'\"":
            j, buf = i + 1, []
            while True:
                k = text.find(c, j)
                if k < 0:
                    raise QueryError("unterminated string literal", text, i)
                buf.append(text[j:k])
                if text.startswith(c, k + 1):  # doubled quote escapes itself
                    buf.append(c)
                    j = k + 2
                    continue
                break
            tokens.append(Token("STRING", "".join(buf), i))
            i = k + 1
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("PUNCT", p, i))
                i += len(p)
                break
        else:
            m = _NAME_RE.match(text, i)
            if not m:
                raise QueryError(f"unexpected character {c!r}", text, i)
            tokens.append(Token("NAME", m.group(), i))
            i = m.end()
    tokens.append(Token("EOF", "", n))
    return tokens


# -- parser -------------------------------------------------------------------


@dataclass(frozen=True)
class _Step:
    name: str
    is_attr: bool
    pred: tuple[str, str] | None  # (@attr, literal)
    token: Token


class _Parser:
    def __init__(self, text: str, schema: WarehouseSchema | None):
        self.text = text
        self.schema = schema
        self.toks = tokenize(text)
        self.pos = 0
        self.iters: dict[str, str | None] = {}  # var -> dimension name, None for the cube
        self.dims: list[str] = []
        self.aliases: dict[str, str] = {}
        self.lets: dict[str, str] = {}  # var -> attribute name
        self.attr_uses: list[tuple[str, str | None, Token]] = []

    # token helpers
    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> QueryError:
        tok = tok or self.peek()
        return QueryError(message, self.text, tok.offset)

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "NAME" and t.value == word

    def at_punct(self, p: str) -> bool:
        t = self.peek()
        return t.kind == "PUNCT" and t.value == p

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            raise self.error(f"expected '{word}', found {self.describe(self.peek())}")
        return self.next()

    def expect_punct(self, p: str) -> Token:
        if not self.at_punct(p):
            raise self.error(f"expected '{p}', found {self.describe(self.peek())}")
        return self.next()

    def expect(self, kind: str, what: str) -> Token:
        if self.peek().kind != kind:
            raise self.error(f"expected {what}, found {self.describe(self.peek())}")
        return self.next()

    @staticmethod
    def describe(tok: Token) -> str:
        if tok.kind == "EOF":
            return "end of query"
        if tok.kind == "VAR":
            return f"${tok.value}"
        if tok.kind == "STRING":
            return f"string {tok.value!r}"
        return f"'{tok.value}'"

    # grammar
    def parse(self) -> Query:
        if not self.at_kw("for"):
            raise self.error(f"expected 'for', found {self.describe(self.peek())}")
        while self.at_kw("for"):
            self.for_clause()
        facts = [v for v, d in self.iters.items() if d == _FACT]
        if len(facts) != 1:
            raise self.error("exactly one iterator over the facts cube (//CubeFact/cube/Cell) is required",
                             self.toks[0])
        while self.at_kw("let"):
            self.let_clause()
        selections: list[Predicate] = []
        if self.at_kw("where"):
            selections = self.where_clause()
        self.expect_kw("group")
        self.expect_kw("by")
        group_by = self.group_clause()
        self.expect_kw("return")
        aggs = self.return_clause()
        if self.peek().kind != "EOF":
            raise self.error(f"unexpected {self.describe(self.peek())} after return clause")
        if self.schema is not None:
            self.bind()
        return Query(tuple(self.dims), tuple(selections), tuple(group_by), tuple(aggs), self.text)

    def for_clause(self) -> None:
        self.expect_kw("for")
        while True:
            var = self.expect("VAR", "a variable")
            if var.value in self.iters:
                raise self.error(f"variable ${var.value} is bound twice", var)
            self.expect_kw("in")
            steps, start = self.absolute_path()
            self.iters[var.value] = self.classify_iterator(steps, start)
            if not self.at_punct(","):
                break
            self.next()

    def classify_iterator(self, steps: list[_Step], start: Token) -> str:
        names = [s.name for s in steps]
        if any(s.is_attr for s in steps):
            raise self.error("unsupported iterator path", start)
        if names and names[0] == "dimensionData":
            steps, names = steps[1:], names[1:]
        if names == ["classification", "Level", "node"]:
            lvl = steps[1]
            if steps[0].pred or steps[2].pred or not lvl.pred or lvl.pred[0] != "node":
                raise self.error("dimension iterator must select Level[@node='<dimension>']", lvl.token)
            dim = lvl.pred[1]
            if self.schema is not None and dim not in self.schema.attributes_per_dimension:
                raise self.error(f"unknown dimension {dim!r}", lvl.token)
            if dim in self.dims:
                raise self.error(f"dimension {dim!r} is iterated twice", lvl.token)
            self.dims.append(dim)
            return dim
        if names and names[0] in ("CubeFact", "CubeFacts"):
            names = names[1:]
            steps = steps[1:]
        if names == ["cube", "Cell"] and not any(s.pred for s in steps):
            if _FACT in self.iters.values():
                raise self.error("the facts cube is iterated twice", start)
            return _FACT
        raise self.error("unsupported iterator path: nested or arbitrary FLWOR sources are not part of the dialect",
                         start)

    def absolute_path(self) -> tuple[list[_Step], Token]:
        start = self.peek()
        if not (self.at_punct("//") or self.at_punct("/")):
            raise self.error(f"expected a path starting with '/' or '//', found {self.describe(start)}")
        self.next()
        return self.steps(), start

    def steps(self) -> list[_Step]:
        out = [self.step()]
        while self.at_punct("/"):
            self.next()
            out.append(self.step())
        if self.at_punct("//"):
            raise self.error("descendant steps are only allowed at the start of a path")
        return out

    def step(self) -> _Step:
        tok = self.peek()
        is_attr = False
        if self.at_punct("@"):
            self.next()
            is_attr = True
        name = self.expect("NAME", "a path step name").value
        pred = None
        if self.at_punct("["):
            self.next()
            self.expect_punct("@")
            key = self.expect("NAME", "an attribute name").value
            self.expect_punct("=")
            lit = self.expect("STRING", "a string literal").value
            self.expect_punct("]")
            pred = (key, lit)
        return _Step(name, is_attr, pred, tok)

    def var_path(self) -> tuple[Token, list[_Step]]:
        var = self.expect("VAR", "a variable")
        steps: list[_Step] = []
        if self.at_punct("/"):
            self.next()
            steps = self.steps()
        return var, steps

    def resolve(self, var: Token) -> str:
        if var.value in self.iters:
            return self.iters[var.value]
        if var.value in self.aliases:
            return self.aliases[var.value]
        if var.value in self.lets:
            raise self.error(f"${var.value} is a let-bound value, not an iterator", var)
        dims = [v for v, d in self.iters.items() if d != _FACT]
        if len(dims) == 1:
            self.aliases[var.value] = self.iters[dims[0]]
            return self.aliases[var.value]
        raise self.error(f"undeclared variable ${var.value}", var)

    def let_clause(self) -> None:
        self.expect_kw("let")
        var = self.expect("VAR", "a variable")
        if var.value in self.iters or var.value in self.lets:
            raise self.error(f"variable ${var.value} is bound twice", var)
        self.expect_punct(":=")
        src, steps = self.var_path()
        dim = self.resolve(src)
        attr = self.attribute_value_ref(steps)
        if dim == _FACT or attr is None:
            raise self.error("let must bind $dim/attribute[@name='...']/@value", src)
        self.attr_uses.append((attr, dim, steps[0].token))
        self.lets[var.value] = attr

    @staticmethod
    def attribute_value_ref(steps: list[_Step]) -> str | None:
        if (len(steps) == 2 and steps[0].name == "attribute" and not steps[0].is_attr
                and steps[0].pred and steps[0].pred[0] == "name"
                and steps[1].is_attr and steps[1].name == "value" and not steps[1].pred):
            return steps[0].pred[1]
        return None

    @staticmethod
    def shape(steps: list[_Step]) -> tuple:
        return tuple(("@" if s.is_attr else "") + s.name + ("[]" if s.pred else "") for s in steps)

    def where_clause(self) -> list[Predicate]:
        self.expect_kw("where")
        selections: list[Predicate] = []
        pending: list[tuple[str, str, Token]] = []  # (dim, attribute, token)
        while True:
            self.condition(selections, pending)
            if self.at_kw("or"):
                raise self.error("disjunction is not supported; the dialect only combines conditions with 'and'")
            if not self.at_kw("and"):
                break
            self.next()
        if pending:
            raise self.error("attribute name test without a matching @value test", pending[0][2])
        return selections

    def operand(self):
        if self.peek().kind == "STRING":
            return self.next()
        if self.peek().kind == "VAR":
            return self.var_path()
        raise self.error(f"expected a variable path or string literal, found {self.describe(self.peek())}")

    def condition(self, selections: list[Predicate], pending: list) -> None:
        first = self.peek()
        left = self.operand()
        if self.at_punct("!="):
            raise self.error("only equality comparisons are supported")
        self.expect_punct("=")
        right = self.operand()
        if isinstance(left, Token) and isinstance(right, Token):
            raise self.error("comparison between two literals", first)
        if isinstance(left, Token) or isinstance(right, Token):
            lit, (var, steps) = (left, right) if isinstance(left, Token) else (right, left)
            dim = self.resolve(var)
            shape = self.shape(steps)
            if dim == _FACT:
                if shape == ("dimension", "@id"):
                    if lit.value not in self.dims:
                        raise self.error(f"join references dimension {lit.value!r} which has no iterator", lit)
                    return
                raise self.error("unsupported condition on the facts cube", first)
            if shape == ("attribute", "@name"):
                pending.append((dim, lit.value, lit))
                self.attr_uses.append((lit.value, dim, lit))
                return
            if shape == ("attribute", "@value"):
                for i in range(len(pending) - 1, -1, -1):
                    if pending[i][0] == dim:
                        _, attr, _ = pending.pop(i)
                        selections.append(Predicate(dim, attr, lit.value))
                        return
                raise self.error("@value test without a preceding @name test", first)
            attr = self.attribute_value_ref(steps)
            if attr is not None:
                selections.append(Predicate(dim, attr, lit.value))
                self.attr_uses.append((attr, dim, steps[0].token))
                return
            raise self.error("unsupported selection condition", first)
        (lv, ls), (rv, rs) = left, right
        ld, rd = self.resolve(lv), self.resolve(rv)
        if rd == _FACT and ld != _FACT:
            (ld, ls), (rd, rs) = (rd, rs), (ld, ls)
        if (ld == _FACT and rd != _FACT and self.shape(ls) in (("dimension", "@id"), ("dimension", "@value"))
                and self.shape(rs) == ("@id",)):
            return  # fact/dimension join equality, implied by the iterators
        raise self.error("unsupported join condition", first)

    def group_clause(self) -> list[str]:
        self.expect_punct("(")
        items: list[str] = []
        while True:
            tok = self.peek()
            if self.at_punct("@"):
                self.next()
            if self.peek().kind == "STRING":
                name = self.next().value
            elif self.peek().kind == "VAR":
                var = self.next()
                if var.value not in self.lets:
                    raise self.error(f"${var.value} is not a let-bound attribute", var)
                name = self.lets[var.value]
            elif self.peek().kind == "NAME":
                words = []
                while self.peek().kind == "NAME":
                    words.append(self.next().value)
                name = " ".join(words)
            else:
                raise self.error(f"expected a group-by attribute, found {self.describe(self.peek())}")
            items.append(name)
            self.attr_uses.append((name, None, tok))
            if self.at_punct(","):
                self.next()
                continue
            self.expect_punct(")")
            return items

    def return_clause(self) -> list[AggSpec]:
        t0, t1 = self.peek(), self.peek(1)
        if t0.kind == "NAME" and t0.value != "aggregation" and t1.kind == "PUNCT" and t1.value == "=":
            self.next()
            self.next()
            self.expect("STRING", "a string literal")
            self.expect_punct(",")
        aggs = [self.aggregation()]
        while self.at_punct(",") or self.at_kw("aggregation"):
            if self.at_punct(","):
                self.next()
            aggs.append(self.aggregation())
        return aggs

    def aggregation(self) -> AggSpec:
        self.expect_kw("aggregation")
        self.expect_punct("(")
        op_tok = self.expect("NAME", "an aggregation op")
        op = op_tok.value.lower()
        if op not in AGG_OPS:
            raise self.error(f"unsupported aggregation op {op_tok.value!r} (expected one of {', '.join(AGG_OPS)})",
                             op_tok)
        self.expect_punct(",")
        m_tok = self.peek()
        if m_tok.kind == "STRING":
            measure = self.next().value
        else:
            words = [self.expect("NAME", "a measure name").value]
            while self.peek().kind == "NAME":
                words.append(self.next().value)
            measure = " ".join(words)
        self.expect_punct(")")
        if self.schema is not None and measure not in self.schema.measure_names:
            raise self.error(f"unknown measure {measure!r}", m_tok)
        return AggSpec(op, measure)

    def bind(self) -> None:
        schema = self.schema
        assert schema is not None
        for attr, dim, tok in self.attr_uses:
            owner = schema.dimension_of.get(attr)
            if owner is None:
                raise self.error(f"unknown attribute {attr!r}", tok)
            if dim is not None and owner != dim:
                raise self.error(f"attribute {attr!r} belongs to dimension {owner!r}, not {dim!r}", tok)
            if owner not in self.dims:
                raise self.error(f"attribute {attr!r} needs an iterator over dimension {owner!r}", tok)


def parse_query(text: str | bytes, schema: WarehouseSchema | None = None) -> Query:
    """Parse (and, given a schema, bind-check) one dialect query.

    Raises :class:`QueryError` for lexical, syntax and binding problems.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise QueryError(f"query text is not valid UTF-8: {exc.reason}", "", None) from None
    if not isinstance(text, str):
        raise QueryError(f"query text must be str or bytes, not {type(text).__name__}")
    return _Parser(text, schema).parse()


def bind_query(q: Query, schema: WarehouseSchema) -> Query:
    """Re-check an already parsed query against ``schema``."""
    return parse_query(q.source_text or print_query(q), schema)


# -- printer ------------------------------------------------------------------

_SIMPLE_WORDS = re.compile(r"\w[\w.\-]*( \w[\w.\-]*)*")


def _lit(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def _words(name: str) -> str:
    return name if _SIMPLE_WORDS.fullmatch(name) else _lit(name)


def print_query(q: Query) -> str:
    """Canonical dialect text for ``q``; ``parse_query(print_query(q)) == q``."""
    var = {d: f"$d{i + 1}" for i, d in enumerate(q.dimensions)}
    bindings = [f"{var[d]} in //dimensionData/classification/Level[@node={_lit(d)}]/node" for d in q.dimensions]
    bindings.append("$x in //CubeFact/cube/Cell")
    lines = ["for " + ",\n    ".join(bindings)]
    conds = []
    for p in q.selections:
        if p.dimension not in var:
            raise ValueError(f"selection on dimension {p.dimension!r} which the query does not iterate")
        conds.append(f"{var[p.dimension]}/attribute[@name={_lit(p.attribute)}]/@value={_lit(p.value)}")
    for d in q.dimensions:
        conds.append(f"$x/dimension/@id={_lit(d)}")
        conds.append(f"$x/dimension/@value={var[d]}/@id")
    if conds:
        lines.append("where " + "\n  and ".join(conds))
    lines.append("group by(" + ", ".join(_words(a) for a in q.group_by) + ")")
    lines.append("return " + ", ".join(f"aggregation({a.op}, {_words(a.measure)})" for a in q.aggregations))
    return "\n".join(lines) + "\n"


def split_workload(text: str) -> list[str]:
    """Split a workload file on lines that contain only ``---``."""
    chunks, buf = [], []
    for line in text.splitlines():
        if line.strip() == "---":
            chunks.append("\n".join(buf))
            buf = []
        else:
            buf.append(line)
    chunks.append("\n".join(buf))
    return [c.strip() + "\n" for c in chunks if c.strip()]


def join_workload(texts: Iterable[str]) -> str:
    return "---\n".join(t if t.endswith("\n") else t + "\n" for t in texts)
