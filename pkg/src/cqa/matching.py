"""Semantic matching of questions against KG relations.

The scoring contract is cosine similarity in [-1, 1] between an encoded
question and an encoded relation, maximized over the question text and
its paraphrases. The encoder here is deterministic mean pooling over a
word-embedding table; anything honouring the ``RelationMatcher``
protocol (e.g. a trained encoder) can be swapped in.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .questions import AnnotatedQuestion

log = logging.getLogger(__name__)

NO_PRUNE_THRESHOLD = -1.0
DEFAULT_MATCH_THRESHOLD = 0.3

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


class EmbeddingError(Exception):
    pass


@dataclass(frozen=True)
class MatchScore:
    relation: str
    score: float


class EmbeddingTable:
    """Word -> vector table of a fixed dimension."""

    def __init__(self, dimension: int, vectors: dict):
        self.dimension = int(dimension)
        for word, vec in vectors.items():
            if len(vec) != self.dimension:
                raise EmbeddingError(
                    f"vector for {word!r} has length {len(vec)}, "
                    f"expected {self.dimension}")
        self._vectors = {w: np.asarray(v, dtype=float) for w, v in vectors.items()}

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def get(self, word: str):
        return self._vectors.get(word)


def load_embeddings(path) -> EmbeddingTable:
    """Read the common text format: header ``|V| d``, then word + floats."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise EmbeddingError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise EmbeddingError(f"{path}:1: header must be '<count> <dimension>'")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError:
        raise EmbeddingError(f"{path}:1: non-integer header") from None
    vectors: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        word = parts[0]
        if len(parts) - 1 != dim:
            raise EmbeddingError(
                f"{path}:{lineno}: expected {dim} floats, got {len(parts) - 1}")
        try:
            vec = [float(x) for x in parts[1:]]
        except ValueError:
            raise EmbeddingError(f"{path}:{lineno}: non-numeric component") from None
        if word in vectors:
            log.warning("duplicate embedding for %r at line %d; last one wins",
                        word, lineno)
        vectors[word] = vec
    if len(vectors) != count:
        log.warning("embedding header declares %d words, file has %d",
                    count, len(vectors))
    return EmbeddingTable(dim, vectors)


def text_tokens(text: str) -> tuple:
    return tuple(m.group(0).casefold() for m in _WORD_RE.finditer(text))


def relation_tokens(relation: str) -> tuple:
    """Split a relation id on underscores, hyphens, and camel case."""
    spaced = _CAMEL_RE.sub(" ", relation.replace("_", " ").replace("-", " "))
    return tuple(t.casefold() for t in spaced.split() if t)


def embed_tokens(table: EmbeddingTable, tokens: Iterable[str]) -> np.ndarray:
    """Mean of in-vocabulary vectors; zero vector if none are known."""
    vecs = [table.get(t) for t in tokens]
    vecs = [v for v in vecs if v is not None]
    if not vecs:
        return np.zeros(table.dimension)
    return np.mean(vecs, axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class RelationMatcher(Protocol):
    def score(self, q: AnnotatedQuestion, relation: str) -> float: ...


class EmbeddingMatcher:
    """Mean-pooled bag-of-embeddings cosine matcher."""

    def __init__(self, table: EmbeddingTable):
        self.table = table

    def score(self, q: AnnotatedQuestion, relation: str) -> float:
        rel_vec = embed_tokens(self.table, relation_tokens(relation))
        best = 0.0
        first = True
        for text in (q.text, *q.paraphrases):
            q_vec = embed_tokens(self.table, text_tokens(text))
            c = _cosine(q_vec, rel_vec)
            if first or c > best:
                best, first = c, False
        return best


class NullMatcher:
    """Scores every relation 0.0; used when no embeddings are configured."""

    def score(self, q: AnnotatedQuestion, relation: str) -> float:
        return 0.0


def score_relation(table: EmbeddingTable, q: AnnotatedQuestion,
                   relation: str) -> MatchScore:
    return MatchScore(relation, EmbeddingMatcher(table).score(q, relation))


def prune_relations(matcher: RelationMatcher, q: AnnotatedQuestion,
                    relations: Sequence[str], threshold: float) -> frozenset:
    """Relations scoring at least the threshold. threshold in [-1, 1]."""
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [-1, 1], got {threshold}")
    return frozenset(r for r in relations if matcher.score(q, r) >= threshold)
