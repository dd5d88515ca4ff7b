"""Walk through ingesting a triple slice and exploring the hierarchy.

Builds a small music-flavored class hierarchy in memory, indexes it, and
shows upward and downward traversal from a seed entity.
"""

import io

from kgprune import Direction, NodeFate, expand_downward, expand_upward, ingest_triples
from kgprune.pairs import Decision

TRIPLES = """\
# instance-of (P31) and subclass-of (P279) statements, tab separated
guitar\tP31\tinstrument_model
guitar\tP279\tstring_instrument
string_instrument\tP279\tinstrument
instrument\tP279\tartificial_object
electric_guitar\tP279\tguitar
bass_guitar\tP279\tguitar
air_guitar\tP279\tguitar
toy_guitar\tP279\ttoy
toy_guitar\tP279\tguitar
"""


def main():
    store = ingest_triples(io.StringIO(TRIPLES))
    print(f"indexed {len(store.entities())} entities")
    print(f"degree of 'guitar': {store.node_degree('guitar')}")

    print("\nupward expansion from 'guitar' (generalizations):")
    for entity, depth in sorted(expand_upward(store, "guitar").items()):
        print(f"  depth {depth}: {entity}")

    print("\nfirst downward level from 'guitar':")
    print(" ", store.first_level_classes("guitar", Direction.DOWNWARD))

    # A decider is any callable (seed, reached, path) -> Decision. This one
    # prunes toys; everything behind a pruned node stays unexplored.
    def no_toys(seed, reached, path):
        return Decision.PRUNE if "toy" in reached else Decision.KEEP

    print("\ndownward expansion from 'guitar' with a toy-pruning decider:")
    result = expand_downward(store, "guitar", no_toys)
    for entity in result.visit_order:
        record = result.fates[entity]
        marker = "+" if record.fate is NodeFate.KEPT else "-"
        print(f"  {marker} {entity} (depth {record.depth}, via {'>'.join(record.path.nodes)})")


if __name__ == "__main__":
    main()
