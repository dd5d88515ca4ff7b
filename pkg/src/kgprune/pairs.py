"""Core supervision types: expansion paths, decisions, labeled pairs."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Iterable, Optional

from .ids import EntityId


class Decision(enum.Enum):
    KEEP = "keep"
    PRUNE = "prune"

    @classmethod
    def parse(cls, text: str) -> "Decision":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown decision {text!r} (expected keep or prune)") from None


@dataclass(frozen=True)
class ExpansionPath:
    """Node sequence from a seed (inclusive) to a reached entity (inclusive)."""

    nodes: tuple[EntityId, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) < 2:
            raise ValueError("an expansion path needs at least a seed and a reached entity")

    @property
    def seed(self) -> EntityId:
        return self.nodes[0]

    @property
    def reached(self) -> EntityId:
        return self.nodes[-1]

    @property
    def depth(self) -> int:
        return len(self.nodes) - 1


@dataclass(frozen=True)
class LabeledPair:
    """A (seed, reached) pair with its keep/prune annotation.

    ``path`` optionally records the expansion path that discovered the
    reached entity; ``depth`` is kept even when the path is absent because
    the released annotations carry depths but not paths.
    """

    seed: EntityId
    reached: EntityId
    decision: Decision
    depth: int = 1
    path: Optional[ExpansionPath] = None

    def __post_init__(self) -> None:
        if self.seed == self.reached:
            raise ValueError(f"seed and reached entity coincide: {self.seed}")
        if self.path is not None:
            if self.path.seed != self.seed or self.path.reached != self.reached:
                raise ValueError("path endpoints do not match the pair")


def read_labeled_pairs(reader: Iterable[str]) -> list[LabeledPair]:
    """Parse `seed TAB reached TAB keep|prune TAB depth [TAB path]` lines.

    The optional fifth column is a comma-joined node sequence including both
    endpoints.
    """
    pairs = []
    for lineno, raw in enumerate(reader, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 5):
            raise ValueError(f"line {lineno}: expected 4 or 5 fields, got {len(fields)}")
        seed, reached, decision_text, depth_text = fields[:4]
        path = None
        if len(fields) == 5 and fields[4]:
            path = ExpansionPath(tuple(fields[4].split(",")))
        try:
            pairs.append(
                LabeledPair(
                    seed=seed,
                    reached=reached,
                    decision=Decision.parse(decision_text),
                    depth=int(depth_text),
                    path=path,
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return pairs


def write_labeled_pairs(pairs: Iterable[LabeledPair], fp: IO[str]) -> None:
    for pair in pairs:
        fields = [pair.seed, pair.reached, pair.decision.value, str(pair.depth)]
        if pair.path is not None:
            fields.append(",".join(pair.path.nodes))
        fp.write("\t".join(fields) + "\n")
