"""Hierarchy-bearing slice of a generic knowledge graph.

Only instance-of (P31) and subclass-of (P279) edges are indexed; every other
predicate contributes to degree counts only. The store is immutable after
ingestion and safe for concurrent readers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .ids import EntityId, sorted_entities

INSTANCE_OF = "P31"
SUBCLASS_OF = "P279"


class TripleFormatError(ValueError):
    """Raised for malformed lines in a triple or sidecar file."""


class Direction(enum.Enum):
    UPWARD = "upward"
    DOWNWARD = "downward"


@dataclass
class KGStore:
    """Adjacency indexes over the P31/P279 slice of an ingested triple set.

    ``reverse_subclass`` is maintained as the exact transpose of
    ``forward_subclass``. Degrees count distinct (subject, predicate, object)
    incidences over all ingested predicates, unless overridden by a sidecar.
    """

    forward_subclass: dict[EntityId, list[EntityId]] = field(default_factory=dict)
    reverse_subclass: dict[EntityId, list[EntityId]] = field(default_factory=dict)
    instance_of: dict[EntityId, list[EntityId]] = field(default_factory=dict)
    reverse_instance_of: dict[EntityId, list[EntityId]] = field(default_factory=dict)
    degree: dict[EntityId, int] = field(default_factory=dict)

    def subclasses(self, e: EntityId) -> list[EntityId]:
        """Direct subclasses of ``e`` (one hop along reversed P279)."""
        return list(self.reverse_subclass.get(e, ()))

    def superclasses(self, e: EntityId) -> list[EntityId]:
        """Direct superclasses of ``e`` (one hop along P279)."""
        return list(self.forward_subclass.get(e, ()))

    def instances_of_targets(self, e: EntityId) -> list[EntityId]:
        """Classes that ``e`` directly instantiates (P31 targets)."""
        return list(self.instance_of.get(e, ()))

    def instances(self, e: EntityId) -> list[EntityId]:
        """Entities that are direct P31 instances of class ``e``."""
        return list(self.reverse_instance_of.get(e, ()))

    def node_degree(self, e: EntityId) -> int:
        return self.degree.get(e, 0)

    def first_level_classes(self, e: EntityId, direction: Direction) -> list[EntityId]:
        """Level-1 neighbors of ``e`` for an expansion in ``direction``.

        Upward: P31 and P279 targets. Downward: additionally the entities
        that ``e`` directly subsumes (reversed P279). ``e`` itself is
        excluded even in the presence of self-loops.
        """
        out: set[EntityId] = set(self.instance_of.get(e, ()))
        out.update(self.forward_subclass.get(e, ()))
        if direction is Direction.DOWNWARD:
            out.update(self.reverse_subclass.get(e, ()))
        out.discard(e)
        return sorted_entities(out)

    def entities(self) -> list[EntityId]:
        seen: set[EntityId] = set()
        for index in (self.forward_subclass, self.reverse_subclass, self.instance_of):
            seen.update(index.keys())
            for targets in index.values():
                seen.update(targets)
        seen.update(self.degree.keys())
        return sorted_entities(seen)


def _iter_fields(reader: Iterable[str], n_fields: int) -> Iterator[tuple[int, list[str]]]:
    for lineno, raw in enumerate(reader, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != n_fields:
            raise TripleFormatError(
                f"line {lineno}: expected {n_fields} TAB-separated fields, got {len(fields)}"
            )
        yield lineno, fields


def ingest_triples(reader: Iterable[str]) -> KGStore:
    """Build a :class:`KGStore` from a stream of TAB-separated triple lines.

    Duplicate triples are collapsed (set semantics); degrees count distinct
    incidences. Blank lines and ``#`` comments are skipped. Empty input
    yields an empty store.
    """
    forward: dict[EntityId, set[EntityId]] = {}
    inst: dict[EntityId, set[EntityId]] = {}
    seen_triples: set[tuple[EntityId, str, EntityId]] = set()
    degree: dict[EntityId, int] = {}

    for lineno, (s, p, o) in ((ln, f) for ln, f in _iter_fields(reader, 3)):
        if not s or not o:
            raise TripleFormatError(f"line {lineno}: empty subject or object")
        triple = (s, p, o)
        if triple in seen_triples:
            continue
        seen_triples.add(triple)
        degree[s] = degree.get(s, 0) + 1
        degree[o] = degree.get(o, 0) + 1
        if p == SUBCLASS_OF:
            forward.setdefault(s, set()).add(o)
        elif p == INSTANCE_OF:
            inst.setdefault(s, set()).add(o)

    return _assemble(forward, inst, degree)


def _assemble(
    forward: dict[EntityId, set[EntityId]],
    inst: dict[EntityId, set[EntityId]],
    degree: dict[EntityId, int],
) -> KGStore:
    reverse: dict[EntityId, set[EntityId]] = {}
    for s, targets in forward.items():
        for o in targets:
            reverse.setdefault(o, set()).add(s)
    rev_inst: dict[EntityId, set[EntityId]] = {}
    for s, targets in inst.items():
        for o in targets:
            rev_inst.setdefault(o, set()).add(s)

    def _freeze(index: dict[EntityId, set[EntityId]]) -> dict[EntityId, list[EntityId]]:
        return {e: sorted_entities(v) for e, v in index.items()}

    return KGStore(
        forward_subclass=_freeze(forward),
        reverse_subclass=_freeze(reverse),
        instance_of=_freeze(inst),
        reverse_instance_of=_freeze(rev_inst),
        degree=degree,
    )


def load_degree_sidecar(store: KGStore, reader: Iterable[str]) -> None:
    """Override computed degrees from `entity TAB degree` lines.

    Threshold pruning was tuned against true Wikidata degrees, which a
    hierarchy-only ingestion cannot reproduce; the sidecar restores them.
    """
    for lineno, (e, value) in _iter_fields(reader, 2):
        if not e:
            raise TripleFormatError(f"line {lineno}: empty entity")
        try:
            d = int(value)
        except ValueError:
            raise TripleFormatError(f"line {lineno}: degree {value!r} is not an integer") from None
        if d < 0:
            raise TripleFormatError(f"line {lineno}: negative degree {d}")
        store.degree[e] = d


def write_store_snapshot(store: KGStore, fp: IO[str]) -> None:
    """Serialize a store to a canonical, reloadable text snapshot.

    The snapshot is deterministic (sorted) so identical stores produce
    byte-identical files.
    """
    fp.write("# kgprune store snapshot v1\n")
    for s in sorted_entities(store.forward_subclass):
        for o in store.forward_subclass[s]:
            fp.write(f"E\t{s}\t{SUBCLASS_OF}\t{o}\n")
    for s in sorted_entities(store.instance_of):
        for o in store.instance_of[s]:
            fp.write(f"E\t{s}\t{INSTANCE_OF}\t{o}\n")
    for e in sorted_entities(store.degree):
        fp.write(f"D\t{e}\t{store.degree[e]}\n")


def read_store_snapshot(fp: Iterable[str]) -> KGStore:
    forward: dict[EntityId, set[EntityId]] = {}
    inst: dict[EntityId, set[EntityId]] = {}
    degree: dict[EntityId, int] = {}
    for lineno, raw in enumerate(fp, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "E" and len(fields) == 4:
            _, s, p, o = fields
            target = forward if p == SUBCLASS_OF else inst
            target.setdefault(s, set()).add(o)
        elif fields[0] == "D" and len(fields) == 3:
            degree[fields[1]] = int(fields[2])
        else:
            raise TripleFormatError(f"line {lineno}: unrecognized snapshot record")
    return _assemble(forward, inst, degree)
