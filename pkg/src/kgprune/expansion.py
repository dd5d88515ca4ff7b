"""Breadth-first expansion along the ontology hierarchy.

Upward expansion climbs from a seed's first-level classes to the root via
subclass-of edges. Downward expansion descends via reversed subclass-of
edges and consults a decider for every newly discovered node: pruned nodes
do not have their children explored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Optional

from .ids import EntityId, entity_sort_key, sorted_entities
from .pairs import Decision, ExpansionPath
from .store import Direction, KGStore

Decider = Callable[[EntityId, EntityId, ExpansionPath], "object"]


class NodeFate(enum.Enum):
    KEPT = "kept"
    PRUNED = "pruned"
    UNEXPLORED = "unexplored"


class DeciderError(RuntimeError):
    def __init__(self, seed: EntityId, entity: EntityId, cause: BaseException):
        super().__init__(f"decider failed on ({seed}, {entity}): {cause}")
        self.seed = seed
        self.entity = entity
        self.__cause__ = cause


@dataclass(frozen=True)
class VisitRecord:
    fate: NodeFate
    depth: int
    path: ExpansionPath


@dataclass
class ExpansionResult:
    """Outcome of a downward expansion: one fate per visited node.

    Nodes reachable only through pruned ancestors never appear here; the
    evaluation harness resolves them to unexplored against gold labels.
    """

    seed: EntityId
    fates: dict[EntityId, VisitRecord] = field(default_factory=dict)
    visit_order: list[EntityId] = field(default_factory=list)

    def fate_of(self, e: EntityId) -> NodeFate:
        record = self.fates.get(e)
        return NodeFate.UNEXPLORED if record is None else record.fate

    def kept(self) -> list[EntityId]:
        return [e for e in self.visit_order if self.fates[e].fate is NodeFate.KEPT]

    def pruned(self) -> list[EntityId]:
        return [e for e in self.visit_order if self.fates[e].fate is NodeFate.PRUNED]


def expand_upward(store: KGStore, seed: EntityId) -> dict[EntityId, int]:
    """Map every upward-reachable class to its first-discovery depth.

    Level 1 is the seed's first-level classes; deeper levels follow
    subclass-of edges only. Cycle-safe via the visited set; the seed itself
    is excluded.
    """
    depths: dict[EntityId, int] = {}
    frontier = [e for e in store.first_level_classes(seed, Direction.UPWARD)]
    depth = 1
    visited = {seed}
    while frontier:
        next_frontier: set[EntityId] = set()
        for e in frontier:
            if e in visited:
                continue
            visited.add(e)
            depths[e] = depth
            next_frontier.update(store.superclasses(e))
        frontier = sorted_entities(f for f in next_frontier if f not in visited)
        depth += 1
    return depths


def expand_downward(
    store: KGStore,
    seed: EntityId,
    decider: Decider,
    max_depth: Optional[int] = None,
) -> ExpansionResult:
    """Downward BFS from ``seed`` with decider-driven pruning.

    Every node gets exactly one decider call, at first discovery; its
    recorded path is the BFS-first route, tie-broken by entity order among
    same-depth parents. Kept nodes enqueue their direct subclasses; pruned
    nodes enqueue nothing. Nodes within a level are decided in entity order.
    """
    result = ExpansionResult(seed=seed)
    visited = {seed}
    level = [
        (e, ExpansionPath((seed, e)))
        for e in store.first_level_classes(seed, Direction.DOWNWARD)
    ]
    depth = 1
    while level and (max_depth is None or depth <= max_depth):
        kept_this_level: list[tuple[EntityId, ExpansionPath]] = []
        for entity, path in level:
            visited.add(entity)
            try:
                verdict = decider(seed, entity, path)
            except Exception as exc:
                raise DeciderError(seed, entity, exc) from exc
            fate = NodeFate.KEPT if _is_keep(verdict) else NodeFate.PRUNED
            result.fates[entity] = VisitRecord(fate=fate, depth=depth, path=path)
            result.visit_order.append(entity)
            if fate is NodeFate.KEPT:
                kept_this_level.append((entity, path))
        # Discover the next level: children of kept nodes, parents in entity
        # order so a multi-parent child records the smallest parent's path.
        discovered: dict[EntityId, ExpansionPath] = {}
        for entity, path in kept_this_level:
            for child in store.subclasses(entity):
                if child in visited or child in discovered:
                    continue
                discovered[child] = ExpansionPath(path.nodes + (child,))
        level = [
            (e, discovered[e])
            for e in sorted(discovered, key=entity_sort_key)
        ]
        depth += 1
    return result


def _is_keep(verdict: object) -> bool:
    # Deciders may return a Decision, the literal strings "keep"/"prune",
    # or a plain truthy keep flag.
    if isinstance(verdict, Decision):
        return verdict is Decision.KEEP
    if isinstance(verdict, str):
        if verdict not in ("keep", "prune"):
            raise ValueError(f"unrecognized decider verdict {verdict!r}")
        return verdict == "keep"
    return bool(verdict)


def attach_paths(store: KGStore, pairs, max_extra_depth: int = 0):
    """Fill in missing discovery paths on labeled pairs via keep-all expansions.

    Runs one unpruned expansion per seed, capped at the deepest labeled
    depth for that seed (plus ``max_extra_depth``), and copies the BFS-first
    path onto each pair lacking one. Pairs whose reached entity is not found
    keep their path unset.
    """
    from dataclasses import replace as _replace

    by_seed: dict[EntityId, list] = {}
    for pair in pairs:
        by_seed.setdefault(pair.seed, []).append(pair)
    keep_all = lambda seed, entity, path: Decision.KEEP  # noqa: E731
    attached = []
    for seed, seed_pairs in by_seed.items():
        needs = [p for p in seed_pairs if p.path is None]
        if not needs:
            attached.extend(seed_pairs)
            continue
        cap = max(p.depth for p in needs) + max_extra_depth
        result = expand_downward(store, seed, keep_all, max_depth=cap)
        for pair in seed_pairs:
            if pair.path is None and pair.reached in result.fates:
                record = result.fates[pair.reached]
                pair = _replace(pair, path=record.path, depth=record.depth)
            attached.append(pair)
    return attached


def discovery_path(result: ExpansionResult, e: EntityId) -> ExpansionPath:
    record = result.fates.get(e)
    if record is None:
        raise KeyError(f"entity {e} was not visited in the expansion from {result.seed}")
    return record.path


def write_expansion_result(result: ExpansionResult, fp: IO[str]) -> None:
    """Serialize as `seed TAB entity TAB fate TAB depth TAB path` lines."""
    for e in result.visit_order:
        record = result.fates[e]
        fp.write(
            "\t".join(
                (
                    result.seed,
                    e,
                    record.fate.value,
                    str(record.depth),
                    ",".join(record.path.nodes),
                )
            )
            + "\n"
        )


def read_expansion_result(reader: Iterable[str]) -> ExpansionResult:
    result: Optional[ExpansionResult] = None
    for lineno, raw in enumerate(reader, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(fields)}")
        seed, entity, fate_text, depth_text, path_text = fields
        if result is None:
            result = ExpansionResult(seed=seed)
        elif result.seed != seed:
            raise ValueError(f"line {lineno}: mixed seeds {result.seed} and {seed}")
        result.fates[entity] = VisitRecord(
            fate=NodeFate(fate_text),
            depth=int(depth_text),
            path=ExpansionPath(tuple(path_text.split(","))),
        )
        result.visit_order.append(entity)
    if result is None:
        raise ValueError("empty expansion result file")
    return result
