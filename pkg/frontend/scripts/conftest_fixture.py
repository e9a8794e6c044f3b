"""Wire form of the biological-study example batch used by the fixture
generator (mirrors the test suite's canonical encoding)."""


def study_example_wire_batch() -> dict:
    nodes = [
        ("agent", "scientistX"),
        ("process", "thinking"),
        ("artifact", "discovery"),
        ("process", "experimenting"),
        ("artifact", "specimen samples"),
        ("artifact", "results"),
        ("artifact", "research paper"),
    ]
    kind_of = {identifier: kind for kind, identifier in nodes}
    edges = [
        ("wasUndertakenBy", "thinking", "scientistX"),
        ("wasGeneratedBy", "discovery", "thinking"),
        ("used", "experimenting", "discovery"),
        ("used", "experimenting", "specimen samples"),
        ("wasUndertakenBy", "experimenting", "scientistX"),
        ("wasGeneratedBy", "results", "experimenting"),
        ("isBasedOn", "research paper", "results"),
    ]
    return {
        "batch_id": "biology-study",
        "nodes": [
            {"kind": kind, "identifier": identifier, "annotations": {}}
            for kind, identifier in nodes
        ],
        "edges": [
            {
                "label": label,
                "source": {"kind": kind_of[src], "identifier": src},
                "target": {"kind": kind_of[dst], "identifier": dst},
                "annotations": {},
            }
            for label, src, dst in edges
        ],
    }
