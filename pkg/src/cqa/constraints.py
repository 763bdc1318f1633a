"""Dependency-tree constraint detection.

Detects type, aggregation, superlative, comparative, temporal
(explicit/implicit), and entity constraints, and partitions linked
entities into E_depth (consumed inside deep operational/temporal
phrases) and E_topic (topic-entity candidates).

Position rules, with root depth 0:

* a superlative keyword deeper than ``sup_threshold`` whose head's
  subtree contains an entity mention is depth-position (applied first,
  seeding a virtual topic); otherwise it is terminal (applied last);
* a comparative keyword deeper than ``cmp_threshold`` with an entity in
  its second parent's subtree is depth-position; otherwise terminal;
* a temporal subordinator ("when") whose head verb's clause contains an
  entity mention yields an implicit temporal constraint on that entity.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .kg import KnowledgeGraph
from .linking import EntityLink, best_link
from .questions import (AGGREGATION, COMPARATIVE, ORDINAL, SUPERLATIVE,
                        TEMPORAL_SUBORDINATOR, AnnotatedQuestion, DepTree,
                        KeywordHit, Lexicon, find_question_word,
                        locate_keywords)

log = logging.getLogger(__name__)

DEFAULT_SUP_THRESHOLD = 2
DEFAULT_CMP_THRESHOLD = 3
DEFAULT_YEAR_RANGE = (1000, 2100)

DEPTH = "depth"
TERMINAL = "terminal"

GREATER = "greater"
LESS = "less"

_YEAR_RE = re.compile(r"^\d{3,4}$")


class ConstraintError(Exception):
    pass


@dataclass(frozen=True)
class TypeConstraint:
    type_id: str


@dataclass(frozen=True)
class Aggregation:
    kind: str = "count"


@dataclass(frozen=True)
class Superlative:
    keyword_index: int
    depth: int
    head_index: Optional[int]
    direction: str  # ASC/DESC applied downstream; here asc|desc
    ordering_relation_hint: Optional[str]
    ordinal_k: int
    position: str  # DEPTH or TERMINAL
    attached_entity: Optional[str] = None
    attached_link_score: float = 0.0
    result_type: Optional[str] = None


@dataclass(frozen=True)
class Comparative:
    keyword_index: int
    depth: int
    direction: str  # GREATER or LESS
    ordering_relation_hint: Optional[str]
    position: str
    pivot_entity: Optional[str] = None
    pivot_link_score: float = 0.0


@dataclass(frozen=True)
class TemporalExplicit:
    year: int


@dataclass(frozen=True)
class TemporalImplicit:
    event_entity: str
    event_mention: str
    link_score: float = 0.0


@dataclass(frozen=True)
class EntityConstraint:
    entity: str
    link_score: float


Constraint = Union[TypeConstraint, Aggregation, Superlative, Comparative,
                   TemporalExplicit, TemporalImplicit, EntityConstraint]


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple
    e_all: tuple  # every linked entity, in mention order
    e_depth: tuple
    e_topic: tuple
    link_scores: dict = field(default_factory=dict)

    def of_kind(self, cls) -> tuple:
        return tuple(c for c in self.constraints if isinstance(c, cls))

    def type_constraint(self) -> Optional[TypeConstraint]:
        found = self.of_kind(TypeConstraint)
        return found[0] if found else None

    def aggregation(self) -> Optional[Aggregation]:
        found = self.of_kind(Aggregation)
        return found[0] if found else None

    def operational(self) -> tuple:
        return tuple(c for c in self.constraints
                     if isinstance(c, (Superlative, Comparative)))


def resolve_type_label(g: KnowledgeGraph, lemma: str) -> Optional[str]:
    """Match a lemma against KG type labels, then type ids, case-folded."""
    want = lemma.casefold()
    hits = []
    for type_id in g.type_ids():
        labels = {lab.casefold() for lab in g.labels(type_id)}
        if want in labels:
            hits.append(type_id)
    if hits:
        return sorted(hits)[0]
    for type_id in g.type_ids():
        if type_id.casefold() == want:
            return type_id
    return None


def detect_type(q: AnnotatedQuestion, g: KnowledgeGraph,
                lexicon: Lexicon) -> Optional[TypeConstraint]:
    hit = find_question_word(q.tree, lexicon)
    if hit is None:
        return None
    if hit.intrinsic_type is not None:
        return TypeConstraint(hit.intrinsic_type)
    if hit.head_index is None:
        return None
    lemma = q.tree.token(hit.head_index).lemma
    resolved = resolve_type_label(g, lemma)
    return TypeConstraint(resolved) if resolved else None


def detect_aggregation(q: AnnotatedQuestion,
                       lexicon: Lexicon) -> Optional[Aggregation]:
    hits = [h for h in locate_keywords(q.tree, lexicon)
            if h.keyword_class == AGGREGATION]
    if not hits:
        return None
    if len(hits) > 1:
        log.warning("question %s: %d aggregation keywords, keeping the first",
                    q.id, len(hits))
    return Aggregation(kind=hits[0].payload.get("kind", "count"))


def _mention_for_index(q: AnnotatedQuestion, index: int):
    for m in q.mentions:
        if m.start <= index <= m.end:
            return m
    return None


def _mention_head_depth(tree: DepTree, mention) -> int:
    # the shallowest token of the span stands for the mention
    return min(tree.depth_of(i) for i in range(mention.start, mention.end + 1))


def _entity_in_subtree(q: AnnotatedQuestion, links: dict,
                       subtree: frozenset):
    """Linked mention fully inside the subtree; shallowest mention head
    wins, leftmost on ties."""
    found = []
    for m in q.mentions:
        if not set(range(m.start, m.end + 1)) <= subtree:
            continue
        top = best_link(links.get(m, ()))
        if top is None:
            continue
        found.append((_mention_head_depth(q.tree, m), m.start, top))
    if not found:
        return None
    found.sort(key=lambda t: (t[0], t[1]))
    return found[0][2]


def _ordinal_for(tree: DepTree, hits: tuple, kw: KeywordHit) -> int:
    for h in hits:
        if h.keyword_class != ORDINAL:
            continue
        adjacent = h.end + 1 == kw.start
        same_head = tree.head_of(h.start) == tree.head_of(kw.start)
        if adjacent or same_head:
            return int(h.payload.get("k", 1))
    return 1


def detect_superlatives(q: AnnotatedQuestion, g: KnowledgeGraph,
                        links: dict, lexicon: Lexicon,
                        sup_threshold: int = DEFAULT_SUP_THRESHOLD) -> tuple:
    if sup_threshold < 0:
        raise ConstraintError("sup_threshold must be >= 0")
    tree = q.tree
    hits = locate_keywords(tree, lexicon)
    out = []
    for kw in hits:
        if kw.keyword_class != SUPERLATIVE:
            continue
        depth = tree.depth_of(kw.start)
        head = tree.head_of(kw.start)
        result_type = None
        if head is not None:
            result_type = resolve_type_label(g, tree.token(head).lemma)
        attached = None
        if depth > sup_threshold and head is not None:
            attached = _entity_in_subtree(q, links, tree.subtree_of(head))
        position = DEPTH if attached is not None else TERMINAL
        out.append(Superlative(
            keyword_index=kw.start,
            depth=depth,
            head_index=head,
            direction=kw.payload.get("direction", "desc"),
            ordering_relation_hint=kw.payload.get("relation_hint"),
            ordinal_k=_ordinal_for(tree, hits, kw),
            position=position,
            attached_entity=attached.entity if attached else None,
            attached_link_score=attached.score if attached else 0.0,
            result_type=result_type,
        ))
    return tuple(out)


def detect_comparatives(q: AnnotatedQuestion, links: dict, lexicon: Lexicon,
                        cmp_threshold: int = DEFAULT_CMP_THRESHOLD) -> tuple:
    if cmp_threshold < 0:
        raise ConstraintError("cmp_threshold must be >= 0")
    tree = q.tree
    out = []
    for kw in locate_keywords(tree, lexicon):
        if kw.keyword_class != COMPARATIVE:
            continue
        depth = tree.depth_of(kw.start)
        pivot = None
        if depth > cmp_threshold:
            first = tree.head_of(kw.start)
            second = tree.head_of(first) if first is not None else None
            if second is not None:
                pivot = _entity_in_subtree(q, links, tree.subtree_of(second))
        position = DEPTH if pivot is not None else TERMINAL
        out.append(Comparative(
            keyword_index=kw.start,
            depth=depth,
            direction=kw.payload.get("direction", GREATER),
            ordering_relation_hint=kw.payload.get("relation_hint"),
            position=position,
            pivot_entity=pivot.entity if pivot else None,
            pivot_link_score=pivot.score if pivot else 0.0,
        ))
    return tuple(out)


def detect_temporal(q: AnnotatedQuestion, links: dict, lexicon: Lexicon,
                    year_range: tuple = DEFAULT_YEAR_RANGE) -> tuple:
    tree = q.tree
    out = []
    lo, hi = year_range
    for tok in tree.tokens:
        if _YEAR_RE.match(tok.surface) and lo <= int(tok.surface) <= hi:
            out.append(TemporalExplicit(year=int(tok.surface)))
    for kw in locate_keywords(tree, lexicon):
        if kw.keyword_class != TEMPORAL_SUBORDINATOR:
            continue
        head = tree.head_of(kw.start)
        if head is None or tree.token(head).upos != "VERB":
            continue
        found = _entity_in_subtree(q, links, tree.subtree_of(head))
        if found is not None:
            out.append(TemporalImplicit(
                event_entity=found.entity,
                event_mention=found.mention.surface,
                link_score=found.score,
            ))
    return tuple(out)


def partition_entities(links: dict, depth_constraints: tuple) -> tuple:
    """(E_depth, E_topic): depth-consumed entities vs topic candidates."""
    consumed = set()
    for c in depth_constraints:
        if isinstance(c, Superlative) and c.position == DEPTH:
            consumed.add(c.attached_entity)
        elif isinstance(c, Comparative) and c.position == DEPTH:
            consumed.add(c.pivot_entity)
        elif isinstance(c, TemporalImplicit):
            consumed.add(c.event_entity)
    consumed.discard(None)

    ordered = []
    for m in sorted(links, key=lambda m: m.start):
        top = best_link(links[m])
        if top is not None and top.entity not in ordered:
            ordered.append(top.entity)
    e_depth = tuple(e for e in ordered if e in consumed)
    e_topic = tuple(e for e in ordered if e not in consumed)
    return e_depth, e_topic


def detect_constraints(q: AnnotatedQuestion, g: KnowledgeGraph, links: dict,
                       lexicon: Lexicon,
                       sup_threshold: int = DEFAULT_SUP_THRESHOLD,
                       cmp_threshold: int = DEFAULT_CMP_THRESHOLD,
                       year_range: tuple = DEFAULT_YEAR_RANGE) -> ConstraintSet:
    """Run every detector and assemble the partitioned constraint set."""
    constraints: list = []
    tc = detect_type(q, g, lexicon)
    if tc:
        constraints.append(tc)
    agg = detect_aggregation(q, lexicon)
    if agg:
        constraints.append(agg)
    constraints.extend(detect_superlatives(q, g, links, lexicon, sup_threshold))
    constraints.extend(detect_comparatives(q, links, lexicon, cmp_threshold))
    constraints.extend(detect_temporal(q, links, lexicon, year_range))

    e_depth, e_topic = partition_entities(links, tuple(constraints))
    # entity constraints are derived per topic choice during generation
    # (every unselected E_topic entity becomes one), not materialized here
    scores = {}
    for m in q.mentions:
        top = best_link(links.get(m, ()))
        if top is not None:
            scores.setdefault(top.entity, top.score)

    return ConstraintSet(
        constraints=tuple(constraints),
        e_all=tuple(e_depth + e_topic),
        e_depth=e_depth,
        e_topic=e_topic,
        link_scores=scores,
    )
