"""Declarative data model for the laboratory notebook hierarchy.

A DataModelSpec says which collection types may appear where, which item
types each collection accepts, and which metadata keys are mandatory or
typed. The shipped default models a study/experiment containing the five
stage collections (preparation, execution, evaluation, interpretation,
archiving). Specs are immutable after load; validation is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Optional, Union

SPEC_SCHEMA = "glp-spec/1"

VALUE_TYPES = ("string", "number", "date", "enum")


class SpecInvalid(Exception):
    pass


class UnknownCollectionType(Exception):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"collection type {name!r} is not declared")


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str


@dataclass(frozen=True)
class MetadataRule:
    key: str
    value_type: str  # string | number | date | enum
    mandatory: bool
    choices: tuple[str, ...] = ()

    def check(self, value) -> Optional[Violation]:
        if self.value_type == "string":
            if not isinstance(value, str):
                return self._bad(value, "a string")
        elif self.value_type == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return self._bad(value, "a number")
        elif self.value_type == "date":
            if not isinstance(value, str):
                return self._bad(value, "an ISO-8601 date")
            try:
                date.fromisoformat(value)
            except ValueError:
                return self._bad(value, "an ISO-8601 date")
        elif self.value_type == "enum":
            if value not in self.choices:
                return self._bad(value, f"one of {sorted(self.choices)}")
        return None

    def _bad(self, value, want: str) -> Violation:
        return Violation(
            "value-type", f"metadata {self.key!r} must be {want}, got {value!r}"
        )


@dataclass(frozen=True)
class CollectionType:
    name: str
    allowed_child_collections: frozenset[str] = frozenset()
    allowed_item_types: frozenset[str] = frozenset()
    metadata_rules: tuple[MetadataRule, ...] = ()


@dataclass(frozen=True)
class DataModelSpec:
    collection_types: Mapping[str, CollectionType] = field(default_factory=dict)
    roots: frozenset[str] = frozenset()

    def check(self) -> None:
        """Raise SpecInvalid unless the spec is internally consistent."""
        if not self.roots:
            raise SpecInvalid("roots must be non-empty")
        for name in self.roots:
            if name not in self.collection_types:
                raise SpecInvalid(f"root {name!r} is not declared")
        for name, ct in self.collection_types.items():
            for child in ct.allowed_child_collections:
                if child not in self.collection_types:
                    raise SpecInvalid(f"{name!r} references undeclared child {child!r}")
            keys = [r.key for r in ct.metadata_rules]
            if len(keys) != len(set(keys)):
                raise SpecInvalid(f"{name!r} has duplicate metadata rule keys")
            for rule in ct.metadata_rules:
                if rule.value_type not in VALUE_TYPES:
                    raise SpecInvalid(f"unknown value type {rule.value_type!r}")

    def to_json_dict(self) -> dict:
        return {
            "schema": SPEC_SCHEMA,
            "roots": sorted(self.roots),
            "collection_types": {
                name: {
                    "allowed_child_collections": sorted(ct.allowed_child_collections),
                    "allowed_item_types": sorted(ct.allowed_item_types),
                    "metadata_rules": [
                        {
                            "key": r.key,
                            "value_type": r.value_type,
                            "mandatory": r.mandatory,
                            **({"choices": list(r.choices)} if r.choices else {}),
                        }
                        for r in sorted(ct.metadata_rules, key=lambda r: r.key)
                    ],
                }
                for name, ct in sorted(self.collection_types.items())
            },
        }

    def to_json_bytes(self) -> bytes:
        return (
            json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"
        ).encode()

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DataModelSpec":
        if obj.get("schema") != SPEC_SCHEMA:
            raise SpecInvalid(f"unsupported spec schema {obj.get('schema')!r}")
        types = {}
        for name, raw in obj.get("collection_types", {}).items():
            rules = tuple(
                MetadataRule(
                    r["key"],
                    r["value_type"],
                    bool(r["mandatory"]),
                    tuple(r.get("choices", ())),
                )
                for r in raw.get("metadata_rules", [])
            )
            types[name] = CollectionType(
                name,
                frozenset(raw.get("allowed_child_collections", [])),
                frozenset(raw.get("allowed_item_types", [])),
                rules,
            )
        spec = cls(types, frozenset(obj.get("roots", [])))
        spec.check()
        return spec


BASE_ITEM_RULES = (
    MetadataRule("creator", "string", True),
    MetadataRule("created", "date", True),
    MetadataRule("type", "string", True),
)

STAGE_ITEM_TYPES = {
    "preparation": ("study-plan", "manual"),
    "execution": ("raw-data", "instrument-reading", "physical-sample"),
    "evaluation": ("processed-data",),
    "interpretation": ("report", "publication-draft"),
    "archiving": ("archive-package",),
}


def default_glp_spec() -> DataModelSpec:
    """The shipped five-stage study/experiment hierarchy."""
    stages = frozenset(STAGE_ITEM_TYPES)
    types = {
        "study": CollectionType("study", allowed_child_collections=stages),
        "experiment": CollectionType("experiment", allowed_child_collections=stages),
    }
    for stage, item_types in STAGE_ITEM_TYPES.items():
        types[stage] = CollectionType(
            stage,
            allowed_item_types=frozenset(item_types),
            metadata_rules=BASE_ITEM_RULES,
        )
    spec = DataModelSpec(types, frozenset({"study", "experiment"}))
    spec.check()
    return spec


def validate_placement(
    spec: DataModelSpec, parent_type: Optional[str], child: str
) -> Optional[Violation]:
    """None when child (a collection type or item type) may live under
    parent_type; parent_type None means the repository root."""
    if parent_type is None:
        if child in spec.roots:
            return None
        return Violation(
            "placement", f"only root collection types {sorted(spec.roots)} may sit at /"
        )
    ct = spec.collection_types.get(parent_type)
    if ct is None:
        raise UnknownCollectionType(parent_type)
    if child in ct.allowed_child_collections or child in ct.allowed_item_types:
        return None
    return Violation(
        "placement", f"{child!r} is not allowed inside a {parent_type!r} collection"
    )


def validate_metadata(
    spec: DataModelSpec,
    collection_type: str,
    item_type: str,
    metadata: Mapping[str, object],
) -> list[Violation]:
    """One violation per missing mandatory key or mistyped value."""
    ct = spec.collection_types.get(collection_type)
    if ct is None:
        raise UnknownCollectionType(collection_type)
    violations: list[Violation] = []
    for rule in ct.metadata_rules:
        if rule.key not in metadata:
            if rule.mandatory:
                violations.append(
                    Violation(
                        "mandatory", f"metadata key {rule.key!r} is mandatory for items"
                    )
                )
            continue
        bad = rule.check(metadata[rule.key])
        if bad is not None:
            violations.append(bad)
    return violations


def load_spec(path: Union[str, Path]) -> DataModelSpec:
    with open(str(path), "r", encoding="utf-8") as fh:
        return DataModelSpec.from_json_dict(json.load(fh))


def save_spec(spec: DataModelSpec, path: Union[str, Path]) -> None:
    Path(path).write_bytes(spec.to_json_bytes())
