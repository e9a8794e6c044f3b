import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from labbook.graph import EdgeLabel, NodeKind, OpmGraph
from labbook.provstore import AssertionBatch, EdgeSpec, NodeSpec

# Canonical biological-study example: a scientist's thinking yields a
# discovery; experimenting consumes the discovery and specimen samples
# and yields the results a research paper is based on. 7 nodes, 7 edges.
STUDY_EXAMPLE_NODES = [
    (NodeKind.AGENT, "scientistX"),
    (NodeKind.PROCESS, "thinking"),
    (NodeKind.ARTIFACT, "discovery"),
    (NodeKind.PROCESS, "experimenting"),
    (NodeKind.ARTIFACT, "specimen samples"),
    (NodeKind.ARTIFACT, "results"),
    (NodeKind.ARTIFACT, "research paper"),
]

STUDY_EXAMPLE_EDGES = [
    (EdgeLabel.WAS_UNDERTAKEN_BY, "thinking", "scientistX"),
    (EdgeLabel.WAS_GENERATED_BY, "discovery", "thinking"),
    (EdgeLabel.USED, "experimenting", "discovery"),
    (EdgeLabel.USED, "experimenting", "specimen samples"),
    (EdgeLabel.WAS_UNDERTAKEN_BY, "experimenting", "scientistX"),
    (EdgeLabel.WAS_GENERATED_BY, "results", "experimenting"),
    (EdgeLabel.IS_BASED_ON, "research paper", "results"),
]

DISCOVERY_QUERY = "$d := g:key($_g,'identifier','thinking')/inE/outV[@identifier]"


def build_study_example() -> tuple[OpmGraph, dict[str, int]]:
    graph = OpmGraph()
    ids: dict[str, int] = {}
    for kind, identifier in STUDY_EXAMPLE_NODES:
        ids[identifier] = graph.add_node(kind, identifier)
    for label, source, target in STUDY_EXAMPLE_EDGES:
        graph.add_edge(label, ids[source], ids[target])
    return graph, ids


def study_example_batch(batch_id: str = "biology-study") -> AssertionBatch:
    kind_of = dict((ident, kind) for kind, ident in STUDY_EXAMPLE_NODES)
    return AssertionBatch(
        batch_id,
        [NodeSpec(kind, ident) for kind, ident in STUDY_EXAMPLE_NODES],
        [
            EdgeSpec(label, (kind_of[src], src), (kind_of[dst], dst))
            for label, src, dst in STUDY_EXAMPLE_EDGES
        ],
    )


@pytest.fixture
def study_example():
    return build_study_example()
