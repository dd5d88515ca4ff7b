import io

import numpy as np
import pytest

from kgprune.embeddings import EmbeddingTable
from kgprune.store import ingest_triples


def make_store(lines):
    return ingest_triples(io.StringIO("\n".join(lines) + "\n"))


def random_table(rng, entities, dim):
    table = EmbeddingTable(dim=dim)
    for e in entities:
        table.add(e, rng.normal(size=dim).astype(np.float32))
    return table


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
