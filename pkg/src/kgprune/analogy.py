"""Analogical quadruples: construction, validity labeling, model inputs, votes.

A quadruple puts a labeled (seed, reached) pair on the left and a second
pair on the right. At training time the right pair is another labeled pair
and the quadruple carries a valid/invalid label determined by the chosen
configuration; at inference the right pair is the one to decide on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Callable, Optional, Sequence, Union

import numpy as np

from .ids import EntityId
from .embeddings import (
    EmbeddingTable,
    MissingEmbeddingError,
    ProximityMetric,
    nearest_labeled_pairs,
)
from .pairs import Decision, ExpansionPath, LabeledPair


class AnalogyConfiguration(enum.Enum):
    """Which decision combinations form valid / invalid analogies.

    C1: valid k::k, invalid k::p (prune-left pairs unused).
    C2: valid k::k, invalid k::p and p::p (p-left keep-right unused).
    C3: valid k::k and p::p, invalid k::p and p::k.
    """

    C1 = "C1"
    C2 = "C2"
    C3 = "C3"


class Validity(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    EXCLUDED = "excluded"


class PathMode(enum.Enum):
    NO_PATH = "no_path"
    PATH = "path"


class Padding(enum.Enum):
    BEFORE = "before"
    BETWEEN = "between"
    AFTER = "after"


_K, _P = Decision.KEEP, Decision.PRUNE

_VALIDITY_TABLE: dict[AnalogyConfiguration, dict[tuple[Decision, Decision], Validity]] = {
    AnalogyConfiguration.C1: {
        (_K, _K): Validity.VALID,
        (_K, _P): Validity.INVALID,
        (_P, _K): Validity.EXCLUDED,
        (_P, _P): Validity.EXCLUDED,
    },
    AnalogyConfiguration.C2: {
        (_K, _K): Validity.VALID,
        (_K, _P): Validity.INVALID,
        (_P, _P): Validity.INVALID,
        (_P, _K): Validity.EXCLUDED,
    },
    AnalogyConfiguration.C3: {
        (_K, _K): Validity.VALID,
        (_P, _P): Validity.VALID,
        (_K, _P): Validity.INVALID,
        (_P, _K): Validity.INVALID,
    },
}


def quadruple_validity(
    cfg: AnalogyConfiguration, left: Decision, right: Decision
) -> Validity:
    return _VALIDITY_TABLE[cfg][(left, right)]


@dataclass(frozen=True)
class PairRef:
    """The right-hand side of a quadruple; decision may be unknown at inference."""

    seed: EntityId
    reached: EntityId
    path: Optional[ExpansionPath] = None
    decision: Optional[Decision] = None

    @classmethod
    def of(cls, pair: LabeledPair) -> "PairRef":
        return cls(seed=pair.seed, reached=pair.reached, path=pair.path, decision=pair.decision)


@dataclass(frozen=True)
class AnalogyQuadruple:
    left: LabeledPair
    right: PairRef
    validity: Optional[Validity] = None

    @property
    def label(self) -> int:
        if self.validity is Validity.VALID:
            return 1
        if self.validity is Validity.INVALID:
            return 0
        raise ValueError("quadruple has no usable training label")


@dataclass(frozen=True)
class InputLayout:
    """Shape contract for model inputs: L embeddings per side, zero-padded."""

    path_mode: PathMode = PathMode.NO_PATH
    side_length: int = 2
    padding: Padding = Padding.BETWEEN
    dim: int = 200

    def __post_init__(self) -> None:
        if self.path_mode is PathMode.NO_PATH and self.side_length != 2:
            raise ValueError("side length must be 2 without paths")
        if self.side_length < 2:
            raise ValueError("side length must be at least 2")
        if self.dim % 2 != 0:
            raise ValueError("embedding dimension must be even")


Resolver = Callable[[EntityId], Optional[np.ndarray]]


def _as_resolver(table: Union[EmbeddingTable, Resolver]) -> Resolver:
    return table.raw if isinstance(table, EmbeddingTable) else table


def side_sequence(
    seed: EntityId,
    reached: EntityId,
    path: Optional[ExpansionPath],
    layout: InputLayout,
) -> list[EntityId]:
    """Entity sequence for one quadruple side, truncated to the layout's L.

    Truncation keeps the seed and the last L-1 path entities: the immediate
    context of the reached entity carries the decision-relevant signal.
    """
    if layout.path_mode is PathMode.NO_PATH or path is None:
        seq = [seed, reached]
    else:
        seq = list(path.nodes)
    if len(seq) > layout.side_length:
        seq = [seq[0]] + seq[-(layout.side_length - 1) :]
    return seq


def _side_columns(
    seq: Sequence[EntityId], layout: InputLayout, resolve: Resolver
) -> np.ndarray:
    columns = np.zeros((layout.dim, layout.side_length), dtype=np.float64)
    n_zeros = layout.side_length - len(seq)
    if layout.padding is Padding.BEFORE:
        positions = range(n_zeros, layout.side_length)
    elif layout.padding is Padding.AFTER:
        positions = range(len(seq))
    else:  # zeros between the seed and the path entities
        positions = [0] + list(range(1 + n_zeros, layout.side_length))
    for entity, j in zip(seq, positions):
        v = resolve(entity)
        if v is None:
            raise MissingEmbeddingError(entity)
        columns[:, j] = v
    return columns


def assemble_input(
    quadruple: AnalogyQuadruple,
    layout: InputLayout,
    table: Union[EmbeddingTable, Resolver],
) -> np.ndarray:
    """Model input matrix of shape (d, 2L): left side columns then right."""
    resolve = _as_resolver(table)
    left_seq = side_sequence(
        quadruple.left.seed, quadruple.left.reached, quadruple.left.path, layout
    )
    right_seq = side_sequence(
        quadruple.right.seed, quadruple.right.reached, quadruple.right.path, layout
    )
    return np.hstack(
        (
            _side_columns(left_seq, layout, resolve),
            _side_columns(right_seq, layout, resolve),
        )
    )


def build_training_set(
    cfg: AnalogyConfiguration,
    pairs: Sequence[LabeledPair],
    m: int,
    table: EmbeddingTable,
    metric: ProximityMetric = ProximityMetric.COSINE,
) -> list[AnalogyQuadruple]:
    """Labeled quadruples: each annotated pair anchors the left side and is
    joined with up to ``m`` nearest pairs per non-excluded decision combination.

    Shortfalls are accepted as-is (no resampling); excluded combinations
    generate nothing.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    quadruples: list[AnalogyQuadruple] = []
    for anchor in pairs:
        others = [p for p in pairs if p is not anchor]
        for right_decision in (Decision.KEEP, Decision.PRUNE):
            validity = quadruple_validity(cfg, anchor.decision, right_decision)
            if validity is Validity.EXCLUDED:
                continue
            selected = nearest_labeled_pairs(
                table, anchor.seed, others, right_decision, m, metric
            )
            quadruples.extend(
                AnalogyQuadruple(left=anchor, right=PairRef.of(p), validity=validity)
                for p in selected
            )
    return quadruples


class NoKeepPairsError(RuntimeError):
    """No keep-labeled pairs available: every configuration needs them for votes."""


def build_inference_quadruples(
    unknown: PairRef,
    labeled: Sequence[LabeledPair],
    cfg: AnalogyConfiguration,
    n: int,
    table: EmbeddingTable,
    metric: ProximityMetric = ProximityMetric.COSINE,
) -> list[tuple[AnalogyQuadruple, Decision]]:
    """Quadruples voting on an unknown pair: the N nearest keep pairs and,
    except under C1, the N nearest prune pairs go on the left."""
    if n < 1:
        raise ValueError("n must be at least 1")
    keep_pairs = nearest_labeled_pairs(table, unknown.seed, labeled, Decision.KEEP, n, metric)
    if not keep_pairs:
        raise NoKeepPairsError(
            f"no keep-labeled pairs available to vote on ({unknown.seed}, {unknown.reached})"
        )
    selected = list(keep_pairs)
    if cfg is not AnalogyConfiguration.C1:
        selected += nearest_labeled_pairs(
            table, unknown.seed, labeled, Decision.PRUNE, n, metric
        )
    return [
        (AnalogyQuadruple(left=pair, right=unknown, validity=None), pair.decision)
        for pair in selected
    ]


def aggregate_votes(
    cfg: AnalogyConfiguration,
    votes: Sequence[tuple[float, Decision]],
    threshold: float = 0.5,
) -> tuple[Decision, float]:
    """Average per-quadruple scores into a keeping score and a decision.

    Under C1/C2 every score is a vote for keeping. Under C3 a score from a
    prune-left quadruple supports the prune decision, so 1 - score is its
    vote for keeping. Keep iff the average strictly exceeds the threshold.
    """
    if not votes:
        raise ValueError("cannot aggregate an empty vote list")
    total = 0.0
    for score, left_decision in votes:
        if cfg is AnalogyConfiguration.C3 and left_decision is Decision.PRUNE:
            score = 1.0 - score
        total += score
    keep_score = total / len(votes)
    decision = Decision.KEEP if keep_score > threshold else Decision.PRUNE
    return decision, keep_score


def write_quadruples(quadruples: Sequence[AnalogyQuadruple], fp: IO[str]) -> None:
    """Debug dump, one line per quadruple."""
    for q in quadruples:
        fp.write(
            "\t".join(
                (
                    q.left.seed,
                    q.left.reached,
                    q.left.decision.value,
                    q.right.seed,
                    q.right.reached,
                    q.right.decision.value if q.right.decision else "?",
                    q.validity.value if q.validity else "?",
                )
            )
            + "\n"
        )
