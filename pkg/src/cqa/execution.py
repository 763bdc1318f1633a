"""Evaluation of logical forms against the knowledge graph.

``execute`` joins patterns most-selective-first over the KG indexes;
``brute_force_execute`` assigns every variable tuple over the graph's
node/literal domain with no indexes or join planning, as an independent
oracle for fixture-scale graphs. Both apply filters, order/offset/limit,
distinct projection, and optional counting identically by contract.

An answer set is a frozenset of entity ids (str) and Literal values, or
a plain int when the form aggregates.
"""

from __future__ import annotations

import logging
from typing import Union

from .kg import (LABEL_RELATION, KGError, KnowledgeGraph, Literal,
                 TYPE_RELATION, serialize_object)
from .forms import (COUNT, Compare, Entity, FormError, Lit, LogicalForm,
                    TriplePattern, Var, YearEquals)

log = logging.getLogger(__name__)

AnswerSet = Union[frozenset, int]

DEFAULT_BRUTE_FORCE_GUARD = 2000


class ExecutionError(Exception):
    pass


def _resolve(term, binding):
    if isinstance(term, Var):
        return binding.get(term.name)
    if isinstance(term, Entity):
        return term.id
    return term.value


def _reserved_rows(g: KnowledgeGraph, relation: str) -> tuple:
    if relation == TYPE_RELATION:
        return tuple(
            (e, ty) for e, types in sorted(g.type_map.items())
            for ty in sorted(types)
        )
    return tuple(
        (e, Literal("text", lab)) for e, labs in sorted(g.label_map.items())
        for lab in sorted(labs)
    )


def _pattern_rows(g: KnowledgeGraph, p: TriplePattern, binding: dict) -> list:
    """(subject, object) pairs the pattern can match under the binding."""
    s = _resolve(p.subject, binding)
    o = _resolve(p.object, binding)
    if p.relation in (TYPE_RELATION, LABEL_RELATION):
        rows = _reserved_rows(g, p.relation)
    elif s is not None:
        if isinstance(s, Literal):
            return []
        rows = [(t.subject, t.object) for t in g.match(s, p.relation)]
        return [(rs, ro) for rs, ro in rows if o is None or ro == o]
    elif o is not None and isinstance(o, str):
        rows = [(t.subject, t.object) for t in g.incoming(o)
                if t.relation == p.relation]
        return rows
    else:
        rows = [(t.subject, t.object) for t in g.by_relation(p.relation)]
    return [
        (rs, ro) for rs, ro in rows
        if (s is None or rs == s) and (o is None or ro == o)
    ]


def _bind_pattern(p: TriplePattern, rows, binding: dict):
    for rs, ro in rows:
        new = binding
        if isinstance(p.subject, Var):
            cur = new.get(p.subject.name)
            if cur is None:
                new = dict(new)
                new[p.subject.name] = rs
            elif cur != rs:
                continue
        if isinstance(p.object, Var):
            cur = new.get(p.object.name)
            if cur is None:
                new = dict(new)
                new[p.object.name] = ro
            elif cur != ro:
                continue
        yield new


def _selectivity(g: KnowledgeGraph, p: TriplePattern, bound: set) -> tuple:
    bound_terms = sum(
        1 for t in p.terms()
        if not isinstance(t, Var) or t.name in bound
    )
    if p.relation in (TYPE_RELATION, LABEL_RELATION):
        width = len(_reserved_rows(g, p.relation))
    else:
        width = len(g.by_relation(p.relation))
    return (-bound_terms, width)


def _apply_filters(form: LogicalForm, bindings: list) -> list:
    out = []
    for b in bindings:
        ok = True
        for f in form.filters:
            if not _filter_holds(f, b):
                ok = False
                break
        if ok:
            out.append(b)
    return out


def _filter_holds(f, binding: dict) -> bool:
    if isinstance(f, Compare):
        left = binding.get(f.var.name)
        right = (binding.get(f.operand.name) if isinstance(f.operand, Var)
                 else f.operand.value)
        if not isinstance(left, Literal) or not isinstance(right, Literal):
            log.debug("filter %s dropped non-literal binding", f.text())
            return False
        try:
            c = left.compare(right)
        except KGError:
            log.warning("cross-kind comparison in %s; binding dropped", f.text())
            return False
        return {">": c > 0, "<": c < 0, "=": c == 0}[f.op]
    # YearEquals
    left = _year_of(binding.get(f.var.name))
    if isinstance(f.other, Var):
        right = _year_of(binding.get(f.other.name))
    else:
        right = f.other
    if left is None or right is None:
        return False
    return left == right


def _year_of(value):
    if isinstance(value, Literal):
        if value.kind == "date":
            return value.value.year
        if value.kind == "integer":
            return value.value
    return None


def _order_key(value):
    # total order across kinds so ORDER BY never fails: rank, then value
    if isinstance(value, Literal):
        if value.kind in ("integer", "decimal"):
            return (0, float(value.value), "")
        if value.kind == "date":
            return (1, float(value.value.toordinal()), "")
        return (2, 0.0, value.value)
    return (3, 0.0, str(value))


def _binding_key(b: dict) -> tuple:
    return tuple(sorted(
        (name, serialize_object(v) if isinstance(v, Literal) else str(v))
        for name, v in b.items()
    ))


def _finish(form: LogicalForm, bindings: list) -> AnswerSet:
    """Shared order/offset/limit + projection tail, post-join."""
    unique = {}
    for b in bindings:
        unique.setdefault(_binding_key(b), b)
    rows = [unique[k] for k in sorted(unique)]

    if form.order is not None:
        o = form.order
        # ascending on (value, answer id); a stable reverse pass on the
        # value alone flips direction while keeping ties id-ascending
        rows.sort(key=lambda b: (
            _order_key(b.get(o.var.name)),
            _answer_key(b.get(form.answer_var)),
        ))
        if o.direction == "DESC":
            rows.sort(key=lambda b: _order_key(b.get(o.var.name)), reverse=True)
        rows = rows[o.offset:o.offset + o.limit]

    answers = frozenset(b[form.answer_var] for b in rows if form.answer_var in b)
    if form.aggregation == COUNT:
        return len(answers)
    return answers


def _answer_key(value) -> str:
    if isinstance(value, Literal):
        return serialize_object(value)
    return str(value)


def execute(form: LogicalForm, g: KnowledgeGraph) -> AnswerSet:
    """Evaluate the form: natural join, filters, order, projection, count."""
    if not form.patterns:
        raise ExecutionError("unconstrained form")
    remaining = list(form.patterns)
    bindings = [dict()]
    bound: set = set()
    while remaining:
        remaining.sort(key=lambda p: _selectivity(g, p, bound))
        p = remaining.pop(0)
        nxt = []
        for b in bindings:
            rows = _pattern_rows(g, p, b)
            nxt.extend(_bind_pattern(p, rows, b))
        bindings = nxt
        for t in p.terms():
            if isinstance(t, Var):
                bound.add(t.name)
        if not bindings:
            break
    bindings = _apply_filters(form, bindings)
    return _finish(form, bindings)


def brute_force_execute(form: LogicalForm, g: KnowledgeGraph,
                        guard: int = DEFAULT_BRUTE_FORCE_GUARD) -> AnswerSet:
    """Naive oracle: try every assignment of variables to graph nodes and
    literals, keeping assignments that satisfy all patterns. Refuses to
    run above the node-count guard."""
    if not form.patterns:
        raise ExecutionError("unconstrained form")
    domain = list(g.entities()) + list(g.literals())
    if len(domain) > guard:
        raise ExecutionError(
            f"graph has {len(domain)} nodes, above the brute-force guard {guard}")

    names = []
    for p in form.patterns:
        for t in p.terms():
            if isinstance(t, Var) and t.name not in names:
                names.append(t.name)

    fact_set = set()
    for t in g.triples:
        fact_set.add((t.subject, t.relation, t.object))
    for e, types in g.type_map.items():
        for ty in types:
            fact_set.add((e, TYPE_RELATION, ty))
    for e, labs in g.label_map.items():
        for lab in labs:
            fact_set.add((e, LABEL_RELATION, Literal("text", lab)))

    def grounded(p: TriplePattern, b: dict):
        s = _resolve(p.subject, b)
        o = _resolve(p.object, b)
        return None if (s is None or o is None) else (s, p.relation, o)

    results = []

    def assign(i: int, b: dict):
        for p in form.patterns:
            fact = grounded(p, b)
            if fact is not None and fact not in fact_set:
                return
        if i == len(names):
            results.append(dict(b))
            return
        name = names[i]
        for value in domain:
            b[name] = value
            assign(i + 1, b)
        del b[name]

    assign(0, {})
    satisfied = _apply_filters(form, results)
    return _finish(form, satisfied)
