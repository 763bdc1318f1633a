"""Logical forms: triple patterns, filters, modifiers, and their
canonical SPARQL-subset text.

Canonical grammar (entities and relations angle-bracketed by id)::

    SELECT (?vN | (COUNT(DISTINCT ?vN) AS ?c))
    WHERE { pattern . pattern . ... FILTER(expr) ... }
    [ORDER BY (ASC|DESC)(?vN) [OFFSET n] LIMIT 1]

    expr ::= ?var op literal | ?var op ?var
           | YEAR(?var) = n | YEAR(?var) = YEAR(?var)

Canonicalization renumbers variables in first-use order over the sorted
pattern list, so structurally equal forms serialize to equal texts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Union

from .kg import Literal, parse_object, serialize_object
from .kg import TYPE_RELATION


class FormError(Exception):
    """Invalid logical form or unparseable serialization."""


# -- terms ------------------------------------------------------------------

@dataclass(frozen=True)
class Entity:
    id: str


@dataclass(frozen=True)
class Lit:
    value: Literal


@dataclass(frozen=True)
class Var:
    name: str


Term = Union[Entity, Lit, Var]


def term_text(t: Term) -> str:
    if isinstance(t, Entity):
        return f"<{t.id}>"
    if isinstance(t, Lit):
        return serialize_object(t.value)
    return f"?{t.name}"


def _blind_text(t: Term) -> str:
    return "?" if isinstance(t, Var) else term_text(t)


@dataclass(frozen=True)
class TriplePattern:
    subject: Term
    relation: str  # always concrete
    object: Term

    def __post_init__(self):
        if isinstance(self.subject, Lit):
            raise FormError("pattern subject cannot be a literal")

    def text(self) -> str:
        return f"{term_text(self.subject)} <{self.relation}> {term_text(self.object)}"

    def blind_key(self):
        return (_blind_text(self.subject), self.relation, _blind_text(self.object))

    def terms(self) -> tuple:
        return (self.subject, self.object)


# -- filters and modifiers ---------------------------------------------------

GREATER = ">"
LESS = "<"
EQUAL = "="
COMPARE_OPS = (GREATER, LESS, EQUAL)


@dataclass(frozen=True)
class Compare:
    var: Var
    op: str
    operand: Union[Lit, Var]

    def __post_init__(self):
        if self.op not in COMPARE_OPS:
            raise FormError(f"bad comparison operator {self.op!r}")

    def text(self) -> str:
        return f"{term_text(self.var)} {self.op} {term_text(self.operand)}"

    def vars(self) -> tuple:
        ops = (self.operand,) if isinstance(self.operand, Var) else ()
        return (self.var, *ops)


@dataclass(frozen=True)
class YearEquals:
    var: Var
    other: Union[Var, int]

    def text(self) -> str:
        if isinstance(self.other, Var):
            return f"YEAR({term_text(self.var)}) = YEAR({term_text(self.other)})"
        return f"YEAR({term_text(self.var)}) = {self.other}"

    def vars(self) -> tuple:
        ops = (self.other,) if isinstance(self.other, Var) else ()
        return (self.var, *ops)


Filter = Union[Compare, YearEquals]

ASC = "ASC"
DESC = "DESC"


@dataclass(frozen=True)
class Order:
    var: Var
    direction: str  # ASC or DESC
    offset: int = 0
    limit: int = 1

    def __post_init__(self):
        if self.direction not in (ASC, DESC):
            raise FormError(f"bad order direction {self.direction!r}")
        if self.offset < 0 or self.limit != 1:
            raise FormError("order must have offset >= 0 and limit 1")


COUNT = "count"


@dataclass(frozen=True)
class LogicalForm:
    patterns: tuple  # of TriplePattern
    answer_var: str
    filters: tuple = ()  # of Filter
    order: Optional[Order] = None
    aggregation: Optional[str] = None  # COUNT or None

    def vars(self) -> frozenset:
        names = set()
        for p in self.patterns:
            for t in p.terms():
                if isinstance(t, Var):
                    names.add(t.name)
        return frozenset(names)

    def entity_ids(self) -> frozenset:
        ids = set()
        for p in self.patterns:
            for t in p.terms():
                if isinstance(t, Entity):
                    ids.add(t.id)
        return frozenset(ids)

    def relations(self, include_reserved: bool = True) -> tuple:
        rels = [p.relation for p in self.patterns]
        if not include_reserved:
            rels = [r for r in rels if r != TYPE_RELATION and r != "label"]
        return tuple(sorted(set(rels)))


# -- validation ---------------------------------------------------------------

def _adjacency(form: LogicalForm) -> dict:
    """term text -> set of neighbouring term texts, one pattern = one step."""
    adj: dict = {}
    for p in form.patterns:
        a, b = term_text(p.subject), term_text(p.object)
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    return adj


def _entity_distances(form: LogicalForm) -> dict:
    """BFS distance (in patterns) from the nearest entity term."""
    adj = _adjacency(form)
    dist = {}
    frontier = []
    for p in form.patterns:
        for t in p.terms():
            if isinstance(t, Entity):
                key = term_text(t)
                if key not in dist:
                    dist[key] = 0
                    frontier.append(key)
    while frontier:
        nxt = []
        for key in frontier:
            for nb in adj.get(key, ()):
                if nb not in dist:
                    dist[nb] = dist[key] + 1
                    nxt.append(nb)
        frontier = nxt
    return dist


def validate_form(form: LogicalForm, max_hops: int = 2) -> None:
    """Raise FormError unless the form satisfies all invariants:
    known answer/order/filter variables, every variable pattern-connected
    to an entity term, and the answer variable within max_hops steps.
    """
    if not form.patterns:
        raise FormError("unconstrained form: no patterns")
    names = form.vars()
    if form.answer_var not in names:
        raise FormError(f"answer variable ?{form.answer_var} not in patterns")
    for f in form.filters:
        for v in f.vars():
            if v.name not in names:
                raise FormError(f"filter variable ?{v.name} not in patterns")
    if form.order is not None and form.order.var.name not in names:
        raise FormError(f"order variable ?{form.order.var.name} not in patterns")
    dist = _entity_distances(form)
    if not dist:
        raise FormError("form contains no entity term")
    for name in names:
        key = f"?{name}"
        if key not in dist:
            raise FormError(f"variable ?{name} not connected to any entity")
    if dist[f"?{form.answer_var}"] > max_hops:
        raise FormError(
            f"answer variable ?{form.answer_var} beyond {max_hops} hops")


# -- canonicalization ----------------------------------------------------------

def canonicalize(form: LogicalForm) -> LogicalForm:
    """Sort patterns, renumber variables ?v0.. in first-use order, and
    sort filters; the result serializes to the canonical text."""
    indexed = sorted(enumerate(form.patterns),
                     key=lambda ip: (ip[1].blind_key(), ip[0]))
    rename: dict = {}

    def renamed(t: Term) -> Term:
        if not isinstance(t, Var):
            return t
        if t.name not in rename:
            rename[t.name] = f"v{len(rename)}"
        return Var(rename[t.name])

    patterns = tuple(
        replace(p, subject=renamed(p.subject), object=renamed(p.object))
        for _, p in indexed
    )

    def var_index(v: Var) -> int:
        return int(rename[v.name][1:]) if v.name in rename else 1 << 30

    filters = []
    for f in form.filters:
        if isinstance(f, Compare):
            operand = renamed(f.operand) if isinstance(f.operand, Var) else f.operand
            filters.append(Compare(renamed(f.var), f.op, operand))
        else:
            if isinstance(f.other, Var):
                a, b = renamed(f.var), renamed(f.other)
                if int(b.name[1:]) < int(a.name[1:]):
                    a, b = b, a
                filters.append(YearEquals(a, b))
            else:
                filters.append(YearEquals(renamed(f.var), f.other))
    filters.sort(key=lambda f: f.text())

    order = form.order
    if order is not None:
        order = replace(order, var=renamed(order.var))
    if form.answer_var not in rename:
        raise FormError(f"answer variable ?{form.answer_var} not in patterns")
    return LogicalForm(
        patterns=patterns,
        answer_var=rename[form.answer_var],
        filters=tuple(filters),
        order=order,
        aggregation=form.aggregation,
    )


def serialize_sparql(form: LogicalForm) -> str:
    """Canonical text of the form; equal forms yield equal texts."""
    c = canonicalize(form)
    if c.aggregation == COUNT:
        head = f"SELECT (COUNT(DISTINCT ?{c.answer_var}) AS ?c)"
    else:
        head = f"SELECT ?{c.answer_var}"
    parts = [f"{p.text()} ." for p in c.patterns]
    parts += [f"FILTER({f.text()})" for f in c.filters]
    text = f"{head} WHERE {{ {' '.join(parts)} }}"
    if c.order is not None:
        text += f" ORDER BY {c.order.direction}(?{c.order.var.name})"
        if c.order.offset:
            text += f" OFFSET {c.order.offset}"
        text += f" LIMIT {c.order.limit}"
    return text


# -- parsing --------------------------------------------------------------------

_HEAD_RE = re.compile(
    r"^SELECT\s+(?:\?(?P<var>\w+)|\(COUNT\(DISTINCT\s+\?(?P<cvar>\w+)\)\s+AS\s+\?c\))"
    r"\s+WHERE\s+\{(?P<body>.*)\}"
    r"(?:\s+ORDER\s+BY\s+(?P<dir>ASC|DESC)\(\?(?P<ovar>\w+)\)"
    r"(?:\s+OFFSET\s+(?P<offset>\d+))?\s+LIMIT\s+(?P<limit>\d+))?\s*$",
    re.DOTALL,
)
_FILTER_RE = re.compile(r"FILTER\(([^()]*(?:\([^()]*\)[^()]*)*)\)")
_YEAR_YEAR_RE = re.compile(r"^YEAR\(\?(\w+)\)\s*=\s*YEAR\(\?(\w+)\)$")
_YEAR_INT_RE = re.compile(r"^YEAR\(\?(\w+)\)\s*=\s*(\d+)$")
_COMPARE_RE = re.compile(r"^\?(\w+)\s*(>|<|=)\s*(.+)$")


def _parse_term(text: str) -> Term:
    text = text.strip()
    if text.startswith("?"):
        return Var(text[1:])
    if text.startswith("<") and text.endswith(">"):
        return Entity(text[1:-1])
    obj = parse_object(text)
    if isinstance(obj, Literal):
        return Lit(obj)
    raise FormError(f"unparseable term: {text!r}")


def parse_sparql(text: str) -> LogicalForm:
    """Parse canonical SPARQL-subset text back into a LogicalForm."""
    m = _HEAD_RE.match(text.strip())
    if not m:
        raise FormError(f"unparseable query: {text!r}")
    answer = m.group("var") or m.group("cvar")
    aggregation = COUNT if m.group("cvar") else None
    body = m.group("body").strip()

    filters = []
    for fm in _FILTER_RE.finditer(body):
        expr = fm.group(1).strip()
        ym = _YEAR_YEAR_RE.match(expr)
        if ym:
            filters.append(YearEquals(Var(ym.group(1)), Var(ym.group(2))))
            continue
        ym = _YEAR_INT_RE.match(expr)
        if ym:
            filters.append(YearEquals(Var(ym.group(1)), int(ym.group(2))))
            continue
        cm = _COMPARE_RE.match(expr)
        if not cm:
            raise FormError(f"unparseable filter: {expr!r}")
        operand = _parse_term(cm.group(3))
        if isinstance(operand, Entity):
            raise FormError("comparison operand cannot be an entity")
        filters.append(Compare(Var(cm.group(1)), cm.group(2), operand))
    body = _FILTER_RE.sub("", body).strip()

    patterns = []
    for chunk in body.split(" ."):
        chunk = chunk.strip()
        if not chunk:
            continue
        fields = chunk.split()
        if len(fields) != 3:
            raise FormError(f"unparseable pattern: {chunk!r}")
        subject = _parse_term(fields[0])
        if not fields[1].startswith("<") or not fields[1].endswith(">"):
            raise FormError(f"relation must be angle-bracketed: {fields[1]!r}")
        patterns.append(TriplePattern(
            subject=subject,
            relation=fields[1][1:-1],
            object=_parse_term(fields[2]),
        ))

    order = None
    if m.group("dir"):
        if int(m.group("limit")) != 1:
            raise FormError("only LIMIT 1 is supported")
        order = Order(
            var=Var(m.group("ovar")),
            direction=m.group("dir"),
            offset=int(m.group("offset") or 0),
        )
    return LogicalForm(
        patterns=tuple(patterns),
        answer_var=answer,
        filters=tuple(filters),
        order=order,
        aggregation=aggregation,
    )
