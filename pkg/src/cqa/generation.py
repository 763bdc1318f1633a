"""Candidate logical form assembly.

Four-step priority:

1. depth-position operational constraints are resolved first: a depth
   superlative runs a sub-query anchored at its attached entity and the
   unique result becomes a virtual topic entity; a depth comparative
   becomes a variable-rooted subgraph (its multi-valued result is kept
   symbolic rather than collapsed);
2. the chosen topic is expanded along pruned 1- and 2-hop paths, both
   directions, the last hop variable becoming the answer;
3. entity, explicit-time, implicit-time, and type constraints attach to
   the variables created so far, enumerated as alternative forms;
4. terminal operations apply to the answer: a comparative re-designates
   the answer as a fresh variable compared against the old tail value, a
   superlative adds ordering with offset ordinal-1 and limit 1, and
   aggregation marks a distinct count.

Forms that execute to an empty answer set are removed; if several topic
entities produce non-empty forms, only those from the highest-link-score
topics are kept; candidates are deduplicated by canonical serialization
and returned in serialization order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

from .config import PipelineConfig
from .constraints import (DEPTH, GREATER, TERMINAL, Aggregation, Comparative,
                          ConstraintSet, EntityConstraint, Superlative,
                          TemporalExplicit, TemporalImplicit, TypeConstraint)
from .execution import AnswerSet, execute
from .forms import (ASC, COUNT, DESC, Compare, Entity, FormError, LogicalForm,
                    Order, TriplePattern, Var, YearEquals, serialize_sparql,
                    validate_form)
from .kg import IN, OUT, RESERVED_RELATIONS, TYPE_RELATION, KnowledgeGraph, Literal
from .matching import RelationMatcher, prune_relations
from .questions import AnnotatedQuestion

log = logging.getLogger(__name__)

TYPE_ROOTED = "type-rooted"


class GenerationError(Exception):
    pass


@dataclass(frozen=True)
class Candidate:
    form: LogicalForm
    topic_entity: str
    topic_link_score: float
    min_relation_match: float
    serialized: str
    answers: AnswerSet


@dataclass(frozen=True)
class VirtualTopic:
    """Step 1 output: a resolved entity or a variable-rooted subgraph."""

    entity: Optional[str]  # None for variable-rooted topics
    link_score: float
    result_type: Optional[str]
    source_entity: str
    root_var: Optional[str] = None
    base_patterns: tuple = ()
    base_filters: tuple = ()

    @property
    def is_variable(self) -> bool:
        return self.entity is None


@dataclass
class Assembly:
    """One form under construction; variables are allocated in hop order."""

    patterns: list
    answer_var: str
    adjacent_vars: tuple  # variables adjacent to the topic
    filters: list = field(default_factory=list)
    order: Optional[Order] = None
    aggregation: Optional[str] = None
    next_var: int = 0

    def fresh(self) -> str:
        name = f"v{self.next_var}"
        self.next_var += 1
        return name

    def clone(self) -> "Assembly":
        return Assembly(
            patterns=list(self.patterns),
            answer_var=self.answer_var,
            adjacent_vars=self.adjacent_vars,
            filters=list(self.filters),
            order=self.order,
            aggregation=self.aggregation,
            next_var=self.next_var,
        )

    def add_pattern(self, p: TriplePattern):
        if p not in self.patterns:
            self.patterns.append(p)

    def all_vars(self) -> tuple:
        seen = []
        for p in self.patterns:
            for t in (p.subject, p.object):
                if isinstance(t, Var) and t.name not in seen:
                    seen.append(t.name)
        return tuple(seen)

    def to_form(self) -> LogicalForm:
        return LogicalForm(
            patterns=tuple(self.patterns),
            answer_var=self.answer_var,
            filters=tuple(self.filters),
            order=self.order,
            aggregation=self.aggregation,
        )


@dataclass(frozen=True)
class GenerationResult:
    candidates: tuple
    failures: dict  # reason -> count
    trace: dict


def _literal_relations(g: KnowledgeGraph) -> tuple:
    rels = sorted({t.relation for t in g.triples if isinstance(t.object, Literal)})
    return tuple(rels)


def _ordering_relations(g: KnowledgeGraph, matcher: RelationMatcher,
                        q: AnnotatedQuestion, hint: Optional[str],
                        result_type: Optional[str],
                        config: PipelineConfig) -> tuple:
    """The keyword's hint when the KG knows it, else the best-matching
    literal-valued relations of the result type (graph-wide fallback)."""
    if hint and hint in g.relations():
        return (hint,)
    if result_type:
        pool = g.literal_valued_relations(result_type)
    else:
        pool = _literal_relations(g)
    ranked = sorted(pool, key=lambda r: (-matcher.score(q, r), r))
    return tuple(ranked[:config.ordering_fallback_count])


def _connection_options(g: KnowledgeGraph, entity: str,
                        allowed: frozenset) -> tuple:
    """(relation, direction) pairs linking a variable to the entity."""
    out = []
    for rel, direction in g.relation_inventory(entity):
        if rel in RESERVED_RELATIONS or rel not in allowed:
            continue
        out.append((rel, direction))
    return tuple(out)


def resolve_depth_operations(q: AnnotatedQuestion, cs: ConstraintSet,
                             g: KnowledgeGraph, matcher: RelationMatcher,
                             config: PipelineConfig) -> tuple:
    """Step 1. Returns (virtual topics, residual constraints, failures)."""
    virtual: list = []
    residual: list = []
    failures: list = []
    for c in cs.constraints:
        if isinstance(c, Superlative) and c.position == DEPTH:
            topics = _resolve_depth_superlative(q, c, g, matcher, config)
            if topics:
                virtual.extend(topics)
            else:
                failures.append("depth-superlative-unresolved")
        elif isinstance(c, Comparative) and c.position == DEPTH:
            topics = _resolve_depth_comparative(q, c, g, matcher, config)
            if topics:
                virtual.extend(topics)
            else:
                failures.append("depth-comparative-unresolved")
        else:
            residual.append(c)
    return tuple(virtual), tuple(residual), tuple(failures)


def _resolve_depth_superlative(q, c: Superlative, g, matcher, config) -> tuple:
    anchor = c.attached_entity
    allowed = prune_relations(
        matcher, q, [r for r, _ in g.relation_inventory(anchor)],
        config.match_threshold)
    orderings = _ordering_relations(
        g, matcher, q, c.ordering_relation_hint, c.result_type, config)
    found = []
    for rel, direction in _connection_options(g, anchor, allowed):
        for r_ord in orderings:
            root = Var("m")
            value = Var("t")
            if direction == IN:
                conn = TriplePattern(root, rel, Entity(anchor))
            else:
                conn = TriplePattern(Entity(anchor), rel, root)
            sub = LogicalForm(
                patterns=(conn, TriplePattern(root, r_ord, value)),
                answer_var="m",
                order=Order(value, DESC if c.direction == "desc" else ASC,
                            offset=c.ordinal_k - 1),
            )
            answers = execute(sub, g)
            if isinstance(answers, frozenset) and len(answers) == 1:
                result = next(iter(answers))
                if isinstance(result, str):
                    found.append(VirtualTopic(
                        entity=result,
                        link_score=c.attached_link_score,
                        result_type=c.result_type,
                        source_entity=anchor,
                    ))
                    continue
            log.debug("depth superlative sub-form via %s/%s gave no unique "
                      "entity", rel, r_ord)
    unique = []
    for vt in found:
        if vt not in unique:
            unique.append(vt)
    return tuple(unique)


def _resolve_depth_comparative(q, c: Comparative, g, matcher, config) -> tuple:
    pivot = c.pivot_entity
    orderings = _ordering_relations(
        g, matcher, q, c.ordering_relation_hint, None, config)
    found = []
    for r_ord in orderings:
        if not g.match(pivot, r_ord):
            continue
        root = Var("m")
        value = Var("x")
        pivot_value = Var("p")
        op = ">" if c.direction == GREATER else "<"
        found.append(VirtualTopic(
            entity=None,
            link_score=c.pivot_link_score,
            result_type=None,
            source_entity=pivot,
            root_var="m",
            base_patterns=(
                TriplePattern(root, r_ord, value),
                TriplePattern(Entity(pivot), r_ord, pivot_value),
            ),
            base_filters=(Compare(value, op, pivot_value),),
        ))
    return tuple(found)


@dataclass(frozen=True)
class TopicChoice:
    entity: Optional[str]  # None only for the type-rooted route
    link_score: float
    virtual: Optional[VirtualTopic] = None
    type_rooted: Optional[str] = None

    def label(self) -> str:
        if self.type_rooted:
            return f"{TYPE_ROOTED}:{self.type_rooted}"
        return self.entity if self.entity else f"?{self.virtual.root_var}"


def expand_topic_entity(topic: TopicChoice, g: KnowledgeGraph,
                        matcher: RelationMatcher, q: AnnotatedQuestion,
                        threshold: float, config: PipelineConfig) -> tuple:
    """Step 2: one skeleton per pruned hop sequence through the topic."""
    if topic.virtual is not None and topic.virtual.is_variable:
        vt = topic.virtual
        asm = Assembly(
            patterns=list(vt.base_patterns),
            answer_var=vt.root_var,
            adjacent_vars=(vt.root_var,),
            filters=list(vt.base_filters),
        )
        asm.next_var = 0
        return (asm,)
    if topic.type_rooted is not None:
        asm = Assembly(patterns=[], answer_var="v0", adjacent_vars=("v0",))
        asm.next_var = 1
        asm.add_pattern(TriplePattern(
            Var("v0"), TYPE_RELATION, Entity(topic.type_rooted)))
        return (asm,)

    entity = topic.entity
    paths = g.expand_paths(entity, config.max_hops)
    rels = {step.relation for path in paths for step in path}
    rels -= RESERVED_RELATIONS
    allowed = prune_relations(matcher, q, sorted(rels), threshold)

    sequences = []
    for path in paths:
        seq = tuple((step.relation, step.direction) for step in path)
        if any(r in RESERVED_RELATIONS or r not in allowed for r, _ in seq):
            continue
        if seq not in sequences:
            sequences.append(seq)

    skeletons = []
    for seq in sequences:
        asm = Assembly(patterns=[], answer_var="", adjacent_vars=())
        prev = Entity(entity)
        first_var = None
        for rel, direction in seq:
            nxt = Var(asm.fresh())
            if direction == OUT:
                asm.add_pattern(TriplePattern(prev, rel, nxt))
            else:
                asm.add_pattern(TriplePattern(nxt, rel, prev))
            if first_var is None:
                first_var = nxt.name
            prev = nxt
        asm.answer_var = prev.name
        asm.adjacent_vars = (first_var,)
        skeletons.append(asm)
    return tuple(skeletons)


def attach_constraints(skeleton: Assembly, residual: tuple,
                       entity_constraints: tuple, g: KnowledgeGraph,
                       matcher: RelationMatcher, q: AnnotatedQuestion,
                       threshold: float, config: PipelineConfig) -> tuple:
    """Step 3: attach entity/temporal/type constraints, enumerating the
    attachment variable and relation as alternative forms."""
    forms = [skeleton]

    for ec in entity_constraints:
        allowed = prune_relations(
            matcher, q, [r for r, _ in g.relation_inventory(ec.entity)],
            threshold)
        options = _connection_options(g, ec.entity, allowed)
        nxt = []
        for asm in forms:
            for v in asm.adjacent_vars:
                for rel, direction in options:
                    alt = asm.clone()
                    if direction == IN:
                        alt.add_pattern(TriplePattern(Var(v), rel, Entity(ec.entity)))
                    else:
                        alt.add_pattern(TriplePattern(Entity(ec.entity), rel, Var(v)))
                    nxt.append(alt)
        forms = nxt
        if not forms:
            return ()

    for c in residual:
        if isinstance(c, TemporalExplicit):
            nxt = []
            for asm in forms:
                for v in asm.all_vars():
                    for r_t in sorted(config.temporal_relations):
                        alt = asm.clone()
                        tvar = Var(alt.fresh())
                        alt.add_pattern(TriplePattern(Var(v), r_t, tvar))
                        alt.filters.append(YearEquals(tvar, c.year))
                        nxt.append(alt)
            forms = nxt
        elif isinstance(c, TemporalImplicit):
            event_rels = [r for r in sorted(config.temporal_relations)
                          if g.match(c.event_entity, r)]
            nxt = []
            for asm in forms:
                for v in asm.adjacent_vars:
                    for r_t in sorted(config.temporal_relations):
                        for r_et in event_rels:
                            alt = asm.clone()
                            t1 = Var(alt.fresh())
                            t2 = Var(alt.fresh())
                            alt.add_pattern(TriplePattern(Var(v), r_t, t1))
                            alt.add_pattern(TriplePattern(
                                Entity(c.event_entity), r_et, t2))
                            alt.filters.append(YearEquals(t1, t2))
                            nxt.append(alt)
            forms = nxt

    type_c = next((c for c in residual if isinstance(c, TypeConstraint)), None)
    if type_c is not None:
        for asm in forms:
            asm.add_pattern(TriplePattern(
                Var(asm.answer_var), TYPE_RELATION, Entity(type_c.type_id)))
    return tuple(forms)


def apply_terminal_operations(asm: Assembly, residual: tuple,
                              g: KnowledgeGraph, matcher: RelationMatcher,
                              q: AnnotatedQuestion,
                              config: PipelineConfig) -> tuple:
    """Step 4: terminal comparative, terminal superlative, aggregation."""
    comparative = next(
        (c for c in residual
         if isinstance(c, Comparative) and c.position == TERMINAL), None)
    superlative = next(
        (c for c in residual
         if isinstance(c, Superlative) and c.position == TERMINAL), None)
    aggregation = any(isinstance(c, Aggregation) for c in residual)

    forms = [asm]
    if comparative is not None:
        redesignated = _apply_terminal_comparative(asm, comparative)
        if redesignated is None:
            return ()
        forms = [redesignated]

    if superlative is not None:
        orderings = _ordering_relations(
            g, matcher, q, superlative.ordering_relation_hint,
            superlative.result_type, config)
        if not orderings:
            return ()
        nxt = []
        for base in forms:
            for r_ord in orderings:
                alt = base.clone()
                value = Var(alt.fresh())
                alt.add_pattern(TriplePattern(
                    Var(alt.answer_var), r_ord, value))
                alt.order = Order(
                    value,
                    DESC if superlative.direction == "desc" else ASC,
                    offset=superlative.ordinal_k - 1,
                )
                nxt.append(alt)
        forms = nxt

    if aggregation:
        for f in forms:
            f.aggregation = COUNT
    return tuple(forms)


def _apply_terminal_comparative(asm: Assembly,
                                c: Comparative) -> Optional[Assembly]:
    """The answer becomes a fresh variable whose value under the tail
    relation is compared against the old answer's bound value. Requires
    the old answer in object position of its final hop pattern."""
    tail = None
    for p in asm.patterns:
        if isinstance(p.object, Var) and p.object.name == asm.answer_var \
                and p.relation not in RESERVED_RELATIONS:
            tail = p
    if tail is None:
        return None
    alt = asm.clone()
    new_answer = Var(alt.fresh())
    new_value = Var(alt.fresh())
    alt.add_pattern(TriplePattern(new_answer, tail.relation, new_value))
    op = ">" if c.direction == GREATER else "<"
    alt.filters.append(Compare(new_value, op, Var(asm.answer_var)))
    # type patterns belong to the answer; follow it to the new variable
    moved = []
    for p in alt.patterns:
        if (p.relation == TYPE_RELATION and isinstance(p.subject, Var)
                and p.subject.name == asm.answer_var):
            moved.append(replace(p, subject=new_answer))
        else:
            moved.append(p)
    alt.patterns = moved
    alt.answer_var = new_answer.name
    return alt


def generate_candidates(q: AnnotatedQuestion, cs: ConstraintSet,
                        g: KnowledgeGraph, matcher: RelationMatcher,
                        config: PipelineConfig) -> GenerationResult:
    """Steps 1-4 over every candidate topic entity, with empty-answer
    removal, link-score tie-breaking, and canonical deduplication."""
    failures: dict = {}
    trace: dict = {"topics": [], "forms_built": 0, "forms_nonempty": 0}

    def fail(reason: str):
        failures[reason] = failures.get(reason, 0) + 1

    depth_ops = [c for c in cs.operational() if c.position == DEPTH]
    if len(depth_ops) > 1:
        fail("conflicting-operational-constraints")
        return GenerationResult((), failures, trace)

    virtual, residual, step1_failures = resolve_depth_operations(
        q, cs, g, matcher, config)
    for reason in step1_failures:
        fail(reason)

    topics = [TopicChoice(entity=e, link_score=cs.link_scores.get(e, 0.0))
              for e in cs.e_topic]
    topics += [TopicChoice(entity=vt.entity, link_score=vt.link_score,
                           virtual=vt)
               for vt in virtual]
    if not topics:
        tc = cs.type_constraint()
        if tc is not None:
            topics = [TopicChoice(entity=None, link_score=0.0,
                                  type_rooted=tc.type_id)]
        else:
            fail("no-topic-entity")
            return GenerationResult((), failures, trace)

    kept: dict = {}  # serialization -> (candidate fields)
    producers: dict = {}  # topic label -> link score

    for topic in topics:
        trace["topics"].append(topic.label())
        skeletons = expand_topic_entity(
            topic, g, matcher, q, config.match_threshold, config)
        if not skeletons:
            fail("no-skeletons")
            continue
        others = tuple(
            EntityConstraint(t.entity, t.link_score)
            for t in topics
            if t.entity is not None and t is not topic
        )
        for skeleton in skeletons:
            step3 = attach_constraints(
                skeleton, residual, others, g, matcher, q,
                config.match_threshold, config)
            if not step3:
                fail("entity-constraint-unattachable")
                continue
            for asm in step3:
                finals = apply_terminal_operations(
                    asm, residual, g, matcher, q, config)
                if not finals:
                    fail("terminal-operation-inapplicable")
                    continue
                for final in finals:
                    form = final.to_form()
                    trace["forms_built"] += 1
                    try:
                        validate_form(form, config.max_hops)
                    except FormError:
                        fail("invalid-form")
                        continue
                    answers = execute(form, g)
                    if answers == 0 or answers == frozenset():
                        fail("empty-answer")
                        continue
                    trace["forms_nonempty"] += 1
                    text = serialize_sparql(form)
                    label = topic.label()
                    producers[label] = max(
                        producers.get(label, 0.0), topic.link_score)
                    entry = (form, label, topic.link_score, answers)
                    prev = kept.get(text)
                    if prev is None or topic.link_score > prev[2]:
                        kept[text] = entry

    if not kept:
        fail("no-candidates")
        return GenerationResult((), failures, trace)

    best_score = max(producers.values())
    winners = {label for label, s in producers.items() if s == best_score}

    candidates = []
    for text in sorted(kept):
        form, label, score, answers = kept[text]
        if label not in winners:
            continue
        rels = form.relations(include_reserved=False)
        min_match = min((matcher.score(q, r) for r in rels), default=0.0)
        candidates.append(Candidate(
            form=form,
            topic_entity=label,
            topic_link_score=score,
            min_relation_match=min_match,
            serialized=text,
            answers=answers,
        ))
    if len(candidates) > config.candidate_cap:
        log.warning("question %s: truncating %d candidates to cap %d",
                    q.id, len(candidates), config.candidate_cap)
        candidates = candidates[:config.candidate_cap]
    return GenerationResult(tuple(candidates), failures, trace)
