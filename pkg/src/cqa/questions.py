"""Annotated question ingestion and dependency-tree primitives.

Questions arrive pre-parsed (CoNLL-U core columns) with gold mention
spans; no tokenization, tagging, parsing, or NER happens here. Keyword
and question-word lexicons are configuration files so the rule engine
stays language-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence


class QuestionLoadError(Exception):
    """Schema or tree-invariant violation in a question file."""


class LexiconError(Exception):
    pass


@dataclass(frozen=True)
class Token:
    index: int  # 1-based
    surface: str
    lemma: str
    upos: str
    head: int  # 0 = root
    deprel: str


class DepTree:
    """Dependency tree over 1-based token indices, single root, acyclic."""

    def __init__(self, tokens: Sequence[Token]):
        self._tokens = tuple(tokens)
        n = len(self._tokens)
        roots = []
        for tok in self._tokens:
            if tok.head == tok.index:
                raise QuestionLoadError(f"self-headed token at index {tok.index}")
            if not 0 <= tok.head <= n:
                raise QuestionLoadError(
                    f"token {tok.index} head {tok.head} out of range 0..{n}")
            if tok.head == 0:
                roots.append(tok.index)
        if len(roots) != 1:
            raise QuestionLoadError(f"expected exactly one root, found {roots}")
        self._root = roots[0]

        children: dict = {i: [] for i in range(0, n + 1)}
        for tok in self._tokens:
            children[tok.head].append(tok.index)
        self._children = {k: tuple(v) for k, v in children.items()}

        # acyclicity: walking heads from every token must reach the root
        depths = {}
        for tok in self._tokens:
            seen = []
            i = tok.index
            while i != 0:
                if i in depths:
                    base = depths[i]
                    break
                if i in seen:
                    raise QuestionLoadError(f"cycle through token {i}")
                seen.append(i)
                i = self._tokens[i - 1].head
            else:
                base = -1
            for off, j in enumerate(reversed(seen)):
                depths[j] = base + 1 + off
        self._depths = depths

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> tuple:
        return self._tokens

    def token(self, i: int) -> Token:
        self._check(i)
        return self._tokens[i - 1]

    def root(self) -> int:
        return self._root

    def _check(self, i: int):
        if not 1 <= i <= len(self._tokens):
            raise IndexError(f"token index {i} out of range 1..{len(self._tokens)}")

    def depth_of(self, i: int) -> int:
        """Number of head edges from token i to the root (root = 0)."""
        self._check(i)
        return self._depths[i]

    def head_of(self, i: int) -> Optional[int]:
        """Index of the governing token, None for the root."""
        self._check(i)
        h = self._tokens[i - 1].head
        return None if h == 0 else h

    def children_of(self, i: int) -> tuple:
        self._check(i)
        return self._children[i]

    def subtree_of(self, i: int) -> frozenset:
        """Token i plus everything transitively headed by it."""
        self._check(i)
        out = set()
        stack = [i]
        while stack:
            j = stack.pop()
            out.add(j)
            stack.extend(self._children[j])
        return frozenset(out)


@dataclass(frozen=True)
class Mention:
    start: int  # inclusive token indices
    end: int
    surface: str

    def span(self) -> tuple:
        return (self.start, self.end)


@dataclass(frozen=True)
class Gold:
    sparql: Optional[str]
    answers: Optional[tuple]


@dataclass(frozen=True)
class AnnotatedQuestion:
    id: str
    text: str
    paraphrases: tuple
    tree: DepTree
    mentions: tuple
    gold: Optional[Gold] = None

    def token_surfaces(self) -> tuple:
        return tuple(t.surface for t in self.tree.tokens)


def _build_tree(qid: str, raw_tokens) -> DepTree:
    toks = []
    for j, rt in enumerate(raw_tokens, start=1):
        try:
            tok = Token(
                index=int(rt["index"]),
                surface=str(rt["surface"]),
                lemma=str(rt["lemma"]),
                upos=str(rt["upos"]),
                head=int(rt["head"]),
                deprel=str(rt["deprel"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise QuestionLoadError(f"question {qid}: bad token {j}: {exc}") from None
        if tok.index != j:
            raise QuestionLoadError(
                f"question {qid}: token {j} has index {tok.index}")
        toks.append(tok)
    try:
        return DepTree(toks)
    except QuestionLoadError as exc:
        raise QuestionLoadError(f"question {qid}: {exc}") from None


def load_questions(path) -> tuple:
    """Parse a question JSON file into validated AnnotatedQuestions."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise QuestionLoadError("top level must be a JSON array")
    out = []
    for item in data:
        qid = str(item.get("id", f"<item {len(out)}>"))
        for key in ("id", "text", "tokens"):
            if key not in item:
                raise QuestionLoadError(f"question {qid}: missing field {key!r}")
        tree = _build_tree(qid, item["tokens"])
        n = len(tree)
        mentions = []
        taken = set()
        for rm in item.get("mentions", ()):
            m = Mention(int(rm["start"]), int(rm["end"]), str(rm["surface"]))
            if not 1 <= m.start <= m.end <= n:
                raise QuestionLoadError(
                    f"question {qid}: mention span {m.span()} outside 1..{n}")
            span = set(range(m.start, m.end + 1))
            if span & taken:
                raise QuestionLoadError(f"question {qid}: overlapping mentions")
            taken |= span
            mentions.append(m)
        gold = None
        if "gold" in item and item["gold"] is not None:
            g = item["gold"]
            answers = tuple(str(a) for a in g["answers"]) if "answers" in g else None
            gold = Gold(sparql=g.get("sparql"), answers=answers)
        out.append(AnnotatedQuestion(
            id=qid,
            text=str(item["text"]),
            paraphrases=tuple(str(p) for p in item.get("paraphrases", ())),
            tree=tree,
            mentions=tuple(mentions),
            gold=gold,
        ))
    return tuple(out)


# -- lexicons --------------------------------------------------------------

AGGREGATION = "aggregation"
SUPERLATIVE = "superlative"
COMPARATIVE = "comparative"
ORDINAL = "ordinal"
TEMPORAL_SUBORDINATOR = "temporal_subordinator"

KEYWORD_CLASSES = (
    AGGREGATION, SUPERLATIVE, COMPARATIVE, ORDINAL, TEMPORAL_SUBORDINATOR,
)


@dataclass(frozen=True)
class QuestionWordEntry:
    pattern: str
    intrinsic_type: Optional[str] = None


@dataclass(frozen=True)
class KeywordEntry:
    keyword_class: str
    pattern: tuple  # casefolded token tuple
    payload: dict = field(default_factory=dict)


class Lexicon:
    """Question-word and keyword patterns loaded from a JSON config."""

    def __init__(self, question_words, keywords):
        self.question_words = tuple(question_words)
        self.keywords = tuple(keywords)
        self._by_first: dict = {}
        for entry in self.keywords:
            self._by_first.setdefault(entry.pattern[0], []).append(entry)
        # longest pattern first so multiword keywords win at a position
        for lst in self._by_first.values():
            lst.sort(key=lambda e: (-len(e.pattern), e.keyword_class, e.pattern))

    def question_word(self, surface: str) -> Optional[QuestionWordEntry]:
        s = surface.casefold()
        for entry in self.question_words:
            if entry.pattern == s:
                return entry
        return None

    def candidates_at(self, first_token: str) -> tuple:
        return tuple(self._by_first.get(first_token.casefold(), ()))


def load_lexicon(path) -> Lexicon:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return lexicon_from_dict(data)


def lexicon_from_dict(data: dict) -> Lexicon:
    qwords = []
    for item in data.get("question_words", ()):
        qwords.append(QuestionWordEntry(
            pattern=item["pattern"].casefold(),
            intrinsic_type=item.get("type"),
        ))
    keywords = []
    for cls in KEYWORD_CLASSES:
        for item in data.get(cls, ()):
            pattern = tuple(item["pattern"].casefold().split())
            if not pattern:
                raise LexiconError(f"empty pattern in class {cls}")
            keywords.append(KeywordEntry(
                keyword_class=cls,
                pattern=pattern,
                payload=dict(item.get("payload", {})),
            ))
    return Lexicon(qwords, keywords)


@dataclass(frozen=True)
class QuestionWordHit:
    index: int
    surface: str
    intrinsic_type: Optional[str]
    head_index: Optional[int]


def find_question_word(tree: DepTree, lexicon: Lexicon) -> Optional[QuestionWordHit]:
    """First token matching the question-word lexicon, with its type hint.

    The hint is the lexicon's intrinsic type when present ("who" ->
    Person); otherwise the head token index, whose lemma is later
    resolved against KG type labels. None if no question word occurs.
    """
    for tok in tree.tokens:
        entry = lexicon.question_word(tok.surface)
        if entry is not None:
            return QuestionWordHit(
                index=tok.index,
                surface=tok.surface,
                intrinsic_type=entry.intrinsic_type,
                head_index=tree.head_of(tok.index),
            )
    return None


@dataclass(frozen=True)
class KeywordHit:
    start: int
    end: int
    keyword_class: str
    surface: str
    payload: dict


def locate_keywords(tree: DepTree, lexicon: Lexicon) -> tuple:
    """All non-overlapping keyword matches, longest-first, in token order."""
    hits = []
    n = len(tree)
    i = 1
    while i <= n:
        matched = None
        for entry in lexicon.candidates_at(tree.token(i).surface):
            span = entry.pattern
            if i + len(span) - 1 > n:
                continue
            surfaces = tuple(
                tree.token(j).surface.casefold()
                for j in range(i, i + len(span))
            )
            if surfaces == span:
                matched = entry
                break
        if matched is None:
            i += 1
            continue
        end = i + len(matched.pattern) - 1
        hits.append(KeywordHit(
            start=i,
            end=end,
            keyword_class=matched.keyword_class,
            surface=" ".join(tree.token(j).surface for j in range(i, end + 1)),
            payload=dict(matched.payload),
        ))
        i = end + 1
    return tuple(hits)
