"""Entity embedding storage, centroid lookups, and proximity queries.

Vectors are stored as float32 (matching published pre-trained embeddings);
all arithmetic is carried out in float64.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from .ids import EntityId, entity_sort_key
from .pairs import Decision, LabeledPair
from .store import KGStore

_MAGIC = b"EMB1"


class EmbeddingFormatError(ValueError):
    pass


class MissingEmbeddingError(KeyError):
    def __init__(self, entity: EntityId):
        super().__init__(entity)
        self.entity = entity

    def __str__(self) -> str:
        return f"no embedding vector for entity {self.entity}"


class EmbeddingKind(enum.Enum):
    """Raw pre-trained vector (E1) or centroid of an entity's instances (E2)."""

    E1 = "E1"
    E2 = "E2"


class ProximityMetric(enum.Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[EntityId, np.ndarray] = field(default_factory=dict)

    def __contains__(self, e: EntityId) -> bool:
        return e in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def raw(self, e: EntityId) -> Optional[np.ndarray]:
        v = self.vectors.get(e)
        return None if v is None else v.astype(np.float64)

    def add(self, e: EntityId, vector: Sequence[float]) -> None:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise EmbeddingFormatError(
                f"entity {e}: expected {self.dim} components, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise EmbeddingFormatError(f"entity {e}: non-finite component")
        self.vectors[e] = v


def load_embeddings_text(reader: Iterable[str]) -> EmbeddingTable:
    """Load `entity v1 v2 ... vd` lines; dimension inferred from the first record."""
    table: Optional[EmbeddingTable] = None
    for lineno, raw in enumerate(reader, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise EmbeddingFormatError(f"line {lineno}: expected an entity and components")
        entity, components = parts[0], parts[1:]
        try:
            values = [float(c) for c in components]
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: non-numeric component") from None
        if table is None:
            table = EmbeddingTable(dim=len(values))
        if len(values) != table.dim:
            raise EmbeddingFormatError(
                f"line {lineno}: entity {entity} has {len(values)} components, expected {table.dim}"
            )
        table.add(entity, values)
    return table if table is not None else EmbeddingTable(dim=0)


def write_embeddings_binary(table: EmbeddingTable, fp: IO[bytes]) -> None:
    """Little-endian binary: magic, u32 dim, u64 count, then per record a
    u16 id length, the UTF-8 id, and dim float32 components."""
    fp.write(_MAGIC)
    fp.write(struct.pack("<IQ", table.dim, len(table.vectors)))
    for e in sorted(table.vectors, key=entity_sort_key):
        encoded = e.encode("utf-8")
        fp.write(struct.pack("<H", len(encoded)))
        fp.write(encoded)
        fp.write(table.vectors[e].astype("<f4").tobytes())


def load_embeddings_binary(fp: IO[bytes]) -> EmbeddingTable:
    magic = fp.read(4)
    if magic != _MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}")
    dim, count = struct.unpack("<IQ", fp.read(12))
    table = EmbeddingTable(dim=dim)
    for _ in range(count):
        (id_len,) = struct.unpack("<H", fp.read(2))
        entity = fp.read(id_len).decode("utf-8")
        data = fp.read(4 * dim)
        if len(data) != 4 * dim:
            raise EmbeddingFormatError(f"truncated record for entity {entity}")
        table.add(entity, np.frombuffer(data, dtype="<f4"))
    return table


def entity_vector(
    table: EmbeddingTable,
    store: KGStore,
    e: EntityId,
    kind: EmbeddingKind = EmbeddingKind.E1,
) -> Optional[np.ndarray]:
    """Resolve an entity's vector under the requested embedding variant.

    E1 is the raw vector. E2 is the centroid of the raw vectors of the
    entity's embedded instances, falling back to E1 when it has none.
    Returns None when no vector is obtainable; absence is a value (datasets
    are filtered on it), not an error.
    """
    if kind is EmbeddingKind.E1:
        return table.raw(e)
    instance_vectors = [table.raw(f) for f in store.instances(e) if f in table]
    if not instance_vectors:
        return table.raw(e)
    return np.mean(np.stack(instance_vectors), axis=0)


def make_resolver(
    table: EmbeddingTable,
    store: Optional[KGStore] = None,
    kind: EmbeddingKind = EmbeddingKind.E1,
):
    """Entity -> vector-or-None lookup under a fixed embedding variant.

    E2 centroids are cached per entity; E2 without a store degrades to E1.
    """
    if kind is EmbeddingKind.E1 or store is None:
        return table.raw
    cache: dict[EntityId, Optional[np.ndarray]] = {}

    def resolve(e: EntityId) -> Optional[np.ndarray]:
        if e not in cache:
            cache[e] = entity_vector(table, store, e, kind)
        return cache[e]

    return resolve


def proximity(
    table: EmbeddingTable,
    a: EntityId,
    b: EntityId,
    metric: ProximityMetric = ProximityMetric.COSINE,
) -> float:
    va, vb = table.raw(a), table.raw(b)
    if va is None:
        raise MissingEmbeddingError(a)
    if vb is None:
        raise MissingEmbeddingError(b)
    return vector_proximity(va, vb, metric)


def vector_proximity(va: np.ndarray, vb: np.ndarray, metric: ProximityMetric) -> float:
    va = np.asarray(va, dtype=np.float64)
    vb = np.asarray(vb, dtype=np.float64)
    if metric is ProximityMetric.EUCLIDEAN:
        return float(np.linalg.norm(va - vb))
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        # Cosine distance to a zero vector is undefined; pin it to 1.
        return 1.0
    return float(1.0 - np.dot(va, vb) / (na * nb))


def nearest_labeled_pairs(
    table: EmbeddingTable,
    query_seed: EntityId,
    pool: Sequence[LabeledPair],
    wanted_decision: Decision,
    n: int,
    metric: ProximityMetric = ProximityMetric.COSINE,
) -> list[LabeledPair]:
    """The up-to-``n`` pairs with the wanted decision whose seeds are closest
    to ``query_seed`` in the embedding space.

    Ordering is (proximity, seed id, reached id) for reproducibility. The
    function does not filter out pairs sharing the query seed; training-time
    exclusions are the caller's concern.
    """
    qv = table.raw(query_seed)
    if qv is None:
        raise MissingEmbeddingError(query_seed)
    candidates = [p for p in pool if p.decision is wanted_decision]
    distance_cache: dict[EntityId, float] = {}
    for p in candidates:
        if p.seed not in distance_cache:
            sv = table.raw(p.seed)
            if sv is None:
                raise MissingEmbeddingError(p.seed)
            distance_cache[p.seed] = vector_proximity(qv, sv, metric)
    candidates.sort(
        key=lambda p: (
            distance_cache[p.seed],
            entity_sort_key(p.seed),
            entity_sort_key(p.reached),
        )
    )
    return candidates[: max(n, 0)]
