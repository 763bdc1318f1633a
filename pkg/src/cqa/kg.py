"""In-memory knowledge graph of subject-relation-object triples.

The store is CVT-free: every fact is a plain triple whose subject is an
entity and whose object is an entity or a typed literal. Two relation
names are reserved: ``type`` rows populate the entity-type map and
``label`` rows the surface-label map; neither participates in hop
expansion, but both are preserved for round-tripping and for
relation-per-type enumeration.

File format (UTF-8, one triple per line)::

    subject<TAB>relation<TAB>object

where the object is a bare token (entity id), ``"..."`` (text literal),
or ``"..."^^int`` / ``"..."^^decimal`` / ``"..."^^date``. Dates are
``YYYY-MM-DD``. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Union

TYPE_RELATION = "type"
LABEL_RELATION = "label"
RESERVED_RELATIONS = frozenset({TYPE_RELATION, LABEL_RELATION})

OUT = "out"
IN = "in"


class KGError(Exception):
    """Malformed KG file or violated store contract."""


_LITERAL_RE = re.compile(r'^"([^"\t]*)"(?:\^\^(int|decimal|date))?$')
_ENTITY_RE = re.compile(r"^[^\s\"]\S*$")


@dataclass(frozen=True, order=True)
class Literal:
    """Typed literal value: text, integer, decimal, or calendar date."""

    kind: str
    value: Union[str, int, Decimal, datetime.date] = field(compare=False)

    def __post_init__(self):
        if self.kind not in ("text", "integer", "decimal", "date"):
            raise KGError(f"unknown literal kind: {self.kind!r}")

    def sort_key(self) -> str:
        return serialize_object(self)

    def compare(self, other: "Literal") -> int:
        """Three-way comparison. Raises KGError on incompatible kinds."""
        if not isinstance(other, Literal):
            raise KGError("cannot compare a literal with a non-literal")
        numeric = ("integer", "decimal")
        if self.kind in numeric and other.kind in numeric:
            a, b = Decimal(self.value), Decimal(other.value)
        elif self.kind == other.kind:
            a, b = self.value, other.value
        else:
            raise KGError(
                f"cross-kind comparison: {self.kind} vs {other.kind}"
            )
        return (a > b) - (a < b)


def parse_object(text: str) -> Union[str, Literal]:
    """Parse the object field of a KG line into an entity id or Literal."""
    m = _LITERAL_RE.match(text)
    if m:
        payload, tag = m.group(1), m.group(2)
        if tag is None:
            return Literal("text", payload)
        if tag == "int":
            try:
                return Literal("integer", int(payload))
            except ValueError:
                raise KGError(f"bad int literal: {payload!r}") from None
        if tag == "decimal":
            try:
                return Literal("decimal", Decimal(payload))
            except InvalidOperation:
                raise KGError(f"bad decimal literal: {payload!r}") from None
        try:
            return Literal("date", datetime.date.fromisoformat(payload))
        except ValueError:
            raise KGError(f"bad date literal: {payload!r}") from None
    if _ENTITY_RE.match(text):
        return text
    raise KGError(f"unparseable object: {text!r}")


def serialize_object(obj: Union[str, Literal]) -> str:
    """Inverse of parse_object; entity ids stay bare, literals get tags."""
    if isinstance(obj, str):
        return obj
    if obj.kind == "text":
        return f'"{obj.value}"'
    if obj.kind == "integer":
        return f'"{obj.value}"^^int'
    if obj.kind == "decimal":
        return f'"{obj.value}"^^decimal'
    return f'"{obj.value.isoformat()}"^^date'


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: Union[str, Literal]

    def object_key(self) -> str:
        return serialize_object(self.object)

    def sort_key(self):
        return (self.subject, self.relation, self.object_key())

    def line(self) -> str:
        return f"{self.subject}\t{self.relation}\t{self.object_key()}"


@dataclass(frozen=True)
class PathStep:
    """One hop of a path: relation, direction, and the node reached."""

    relation: str
    direction: str  # OUT or IN
    endpoint: Union[str, Literal]

    def endpoint_key(self) -> str:
        return serialize_object(self.endpoint)


Path = tuple  # tuple[PathStep, ...]


class KnowledgeGraph:
    """Immutable, indexed triple set with type and label maps.

    Data triples exclude the reserved ``type``/``label`` rows, which are
    diverted into ``type_map``/``label_map`` at load. All query methods
    return deterministically ordered, freshly built sequences.
    """

    def __init__(self, triples: Iterable[Triple],
                 type_rows: Iterable[tuple] = (),
                 label_rows: Iterable[tuple] = ()):
        data = sorted(set(triples), key=Triple.sort_key)
        self._triples = tuple(data)
        self._type_rows = tuple(sorted(set(type_rows)))
        self._label_rows = tuple(sorted(set(label_rows)))

        by_subject: dict = {}
        by_object: dict = {}
        by_subject_rel: dict = {}
        by_relation: dict = {}
        for t in self._triples:
            by_subject.setdefault(t.subject, []).append(t)
            by_subject_rel.setdefault((t.subject, t.relation), []).append(t)
            by_relation.setdefault(t.relation, []).append(t)
            if isinstance(t.object, str):
                by_object.setdefault(t.object, []).append(t)
        for rows in by_object.values():
            rows.sort(key=lambda t: (t.relation, t.subject))
        self._by_subject = {k: tuple(v) for k, v in by_subject.items()}
        self._by_object = {k: tuple(v) for k, v in by_object.items()}
        self._by_subject_rel = {k: tuple(v) for k, v in by_subject_rel.items()}
        self._by_relation = {k: tuple(v) for k, v in by_relation.items()}

        tm: dict = {}
        for e, ty in self._type_rows:
            tm.setdefault(e, set()).add(ty)
        self._type_map = {e: frozenset(v) for e, v in tm.items()}
        lm: dict = {}
        for e, lab in self._label_rows:
            lm.setdefault(e, set()).add(lab)
        self._label_map = {e: frozenset(v) for e, v in lm.items()}

    # -- basic views ------------------------------------------------------

    @property
    def triples(self) -> tuple:
        return self._triples

    @property
    def type_map(self) -> dict:
        return dict(self._type_map)

    @property
    def label_map(self) -> dict:
        return dict(self._label_map)

    def entities(self) -> tuple:
        """All entity ids appearing in data triples, sorted."""
        seen = set()
        for t in self._triples:
            seen.add(t.subject)
            if isinstance(t.object, str):
                seen.add(t.object)
        return tuple(sorted(seen))

    def relations(self) -> tuple:
        return tuple(sorted(self._by_relation))

    def literals(self) -> tuple:
        """All distinct literal objects in data triples, sorted by key."""
        vals = {t.object for t in self._triples if isinstance(t.object, Literal)}
        return tuple(sorted(vals, key=Literal.sort_key))

    # -- query operations -------------------------------------------------

    def outgoing(self, entity: str) -> tuple:
        return self._by_subject.get(entity, ())

    def incoming(self, entity: str) -> tuple:
        return self._by_object.get(entity, ())

    def match(self, subject: str, relation: str) -> tuple:
        return self._by_subject_rel.get((subject, relation), ())

    def by_relation(self, relation: str) -> tuple:
        return self._by_relation.get(relation, ())

    def one_hop_steps(self, entity: str) -> tuple:
        """Outgoing then incoming triples of an entity, as path steps."""
        steps = [PathStep(t.relation, OUT, t.object) for t in self.outgoing(entity)]
        steps += [PathStep(t.relation, IN, t.subject) for t in self.incoming(entity)]
        return tuple(steps)

    def expand_paths(self, entity: str, max_hops: int) -> tuple:
        """All directed paths of length <= max_hops starting at entity.

        Each step may follow an edge forward (out) or backward (in);
        literal endpoints cannot be extended. max_hops must be 1 or 2.
        """
        if max_hops not in (1, 2):
            raise KGError(f"max_hops must be 1 or 2, got {max_hops}")
        one = [(s,) for s in self.one_hop_steps(entity)]
        if max_hops == 1:
            return tuple(one)
        two = []
        for (first,) in one:
            if isinstance(first.endpoint, Literal):
                continue
            for second in self.one_hop_steps(first.endpoint):
                two.append((first, second))
        return tuple(one + two)

    def relations_for_type(self, type_id: str) -> tuple:
        """Relations used (file-level, reserved rows included) by subjects
        of the given type, sorted."""
        rels = set()
        has_instance = False
        labeled = False
        for e, types in self._type_map.items():
            if type_id not in types:
                continue
            has_instance = True
            for t in self.outgoing(e):
                rels.add(t.relation)
            if e in self._label_map:
                labeled = True
        if has_instance:
            rels.add(TYPE_RELATION)
        if labeled:
            rels.add(LABEL_RELATION)
        return tuple(sorted(rels))

    def literal_valued_relations(self, type_id: str) -> tuple:
        """Relations of the type whose objects include literals, sorted."""
        rels = set()
        for e, types in self._type_map.items():
            if type_id not in types:
                continue
            for t in self.outgoing(e):
                if isinstance(t.object, Literal):
                    rels.add(t.relation)
        return tuple(sorted(rels))

    def entity_types(self, entity: str) -> frozenset:
        return self._type_map.get(entity, frozenset())

    def labels(self, entity: str) -> frozenset:
        return self._label_map.get(entity, frozenset())

    def type_ids(self) -> tuple:
        """All identifiers used as a type, sorted."""
        return tuple(sorted({ty for _, ty in self._type_rows}))

    def relation_inventory(self, entity: str) -> tuple:
        """(relation, direction) pairs touching the entity, sorted."""
        pairs = {(t.relation, OUT) for t in self.outgoing(entity)}
        pairs |= {(t.relation, IN) for t in self.incoming(entity)}
        return tuple(sorted(pairs))

    def serialize_lines(self) -> tuple:
        """Every stored fact (data + reserved rows) as sorted file lines."""
        lines = [t.line() for t in self._triples]
        lines += [f"{e}\t{TYPE_RELATION}\t{ty}" for e, ty in self._type_rows]
        lines += [f'{e}\t{LABEL_RELATION}\t"{lab}"' for e, lab in self._label_rows]
        return tuple(sorted(lines))


def load_kg(path) -> KnowledgeGraph:
    """Load and index a KG file. Raises KGError citing the line number."""
    triples = []
    type_rows = []
    label_rows = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise KGError(f"{path}:{lineno}: expected 3 tab-separated fields")
        subject, relation, obj_text = (p.strip() for p in parts)
        if not subject or not relation:
            raise KGError(f"{path}:{lineno}: empty subject or relation")
        try:
            obj = parse_object(obj_text)
        except KGError as exc:
            raise KGError(f"{path}:{lineno}: {exc}") from None
        if relation == TYPE_RELATION:
            if not isinstance(obj, str):
                raise KGError(f"{path}:{lineno}: type object must be an entity id")
            type_rows.append((subject, obj))
        elif relation == LABEL_RELATION:
            if isinstance(obj, Literal) and obj.kind == "text":
                label_rows.append((subject, obj.value))
            elif isinstance(obj, str):
                label_rows.append((subject, obj))
            else:
                raise KGError(f"{path}:{lineno}: label object must be text")
        else:
            triples.append(Triple(subject, relation, obj))
    return KnowledgeGraph(triples, type_rows, label_rows)
