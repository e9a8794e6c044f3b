"""labbook: a provenance-enabled electronic laboratory notebook.

An embedded OPM property graph records every import, derivation and
signature; an XPath-flavoured traversal language and six canned lineage
questions query it; a replicated, content-addressed data fabric holds
payloads and metadata; a declarative GLP data model polices the
hierarchy; and a notebook layer ties the pieces together behind a CLI
and an HTTP/JSON service.
"""

from .fabric import ItemKind, ItemRecord, Repository, RevisionStamp
from .glp import DataModelSpec, default_glp_spec, validate_metadata, validate_placement
from .graph import Direction, EdgeLabel, NodeKind, OpmEdge, OpmGraph, OpmNode
from .questions import LineageDirection, Question, answer, lineage
from .notebook import ImportRequest, Notebook
from .provstore import AssertionBatch, EdgeSpec, NodeSpec, ProvenanceStore
from .traversal import ResultSet, evaluate, format_query, parse

__version__ = "0.1.0"

__all__ = [
    "AssertionBatch",
    "DataModelSpec",
    "Direction",
    "EdgeLabel",
    "EdgeSpec",
    "ImportRequest",
    "ItemKind",
    "ItemRecord",
    "LineageDirection",
    "NodeKind",
    "NodeSpec",
    "Notebook",
    "OpmEdge",
    "OpmGraph",
    "OpmNode",
    "ProvenanceStore",
    "Question",
    "Repository",
    "ResultSet",
    "RevisionStamp",
    "answer",
    "default_glp_spec",
    "evaluate",
    "format_query",
    "lineage",
    "parse",
    "validate_metadata",
    "validate_placement",
    "__version__",
]
