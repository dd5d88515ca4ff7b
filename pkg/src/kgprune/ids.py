"""Entity identifiers and their total order.

Identifiers are plain strings. Wikidata-style QIDs ("Q42") are ordered by
their numeric value so that Q9 < Q10; anything else falls back to
lexicographic order. QIDs sort before non-QID tokens, giving a single total
order usable for deterministic tie-breaking everywhere.
"""

from __future__ import annotations

EntityId = str

_QID_PREFIX = "Q"


def validate_entity_id(e: EntityId) -> EntityId:
    if not e:
        raise ValueError("entity id must be a non-empty string")
    return e


def entity_sort_key(e: EntityId) -> tuple[int, int, str]:
    """Sort key implementing the entity total order.

    QIDs compare numerically among themselves and precede non-QID ids.
    """
    if e.startswith(_QID_PREFIX) and e[1:].isdigit():
        return (0, int(e[1:]), e)
    return (1, 0, e)


def sorted_entities(entities) -> list[EntityId]:
    return sorted(entities, key=entity_sort_key)
