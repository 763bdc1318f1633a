"""Lexicon-based entity linking over the KG label map.

Scoring rule: exact label match 1.0; match after case-folding and
diacritic stripping 0.9; otherwise token-set Jaccard similarity.
Candidates below the link floor are dropped.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

from .kg import KnowledgeGraph
from .questions import AnnotatedQuestion, Mention

DEFAULT_LINK_FLOOR = 0.5

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class EntityLink:
    mention: Mention
    entity: str
    score: float


def _fold(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text.casefold())
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def _token_set(text: str) -> frozenset:
    return frozenset(m.group(0) for m in _TOKEN_RE.finditer(_fold(text)))


def label_score(mention_surface: str, label: str) -> float:
    if mention_surface == label:
        return 1.0
    if _fold(mention_surface) == _fold(label):
        return 0.9
    a, b = _token_set(mention_surface), _token_set(label)
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def link_mention(g: KnowledgeGraph, mention: Mention,
                 floor: float = DEFAULT_LINK_FLOOR) -> tuple:
    """Candidate links for one mention, score descending, id ascending."""
    scored = []
    for entity, labels in sorted(g.label_map.items()):
        best = max((label_score(mention.surface, lab) for lab in labels),
                   default=0.0)
        if best >= floor:
            scored.append(EntityLink(mention, entity, best))
    scored.sort(key=lambda l: (-l.score, l.entity))
    return tuple(scored)


def link_all(g: KnowledgeGraph, q: AnnotatedQuestion,
             floor: float = DEFAULT_LINK_FLOOR) -> dict:
    """link_mention applied to every mention of the question."""
    return {m: link_mention(g, m, floor) for m in q.mentions}


def best_link(links: tuple):
    return links[0] if links else None
