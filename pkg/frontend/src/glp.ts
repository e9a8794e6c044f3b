// Client-side mirror of the served data model, used to surface placement
// and metadata violations inside the import wizard before submission.
// The server remains the authority; this only pre-validates.

import { GlpSpecJson, MetadataRuleJson, MetadataValue } from "./types.js";

export interface Violation {
  rule: string;
  message: string;
}

export function validatePlacement(
  spec: GlpSpecJson,
  parentType: string | null,
  child: string,
): Violation | null {
  if (parentType === null) {
    if (spec.roots.includes(child)) return null;
    return {
      rule: "placement",
      message: `only root collection types [${spec.roots.join(", ")}] may sit at /`,
    };
  }
  const ct = spec.collection_types[parentType];
  if (!ct) {
    return { rule: "placement", message: `unknown collection type '${parentType}'` };
  }
  if (ct.allowed_child_collections.includes(child) || ct.allowed_item_types.includes(child)) {
    return null;
  }
  return {
    rule: "placement",
    message: `'${child}' is not allowed inside a '${parentType}' collection`,
  };
}

function isCalendarDate(value: string): boolean {
  const m = /^(\d{4})-(\d{2})-(\d{2})$/.exec(value);
  if (!m) return false;
  const [year, month, day] = [Number(m[1]), Number(m[2]), Number(m[3])];
  if (month < 1 || month > 12 || day < 1) return false;
  const daysInMonth = new Date(Date.UTC(year, month, 0)).getUTCDate();
  return day <= daysInMonth;
}

function checkValue(rule: MetadataRuleJson, value: MetadataValue): Violation | null {
  const bad = (want: string): Violation => ({
    rule: "value-type",
    message: `metadata '${rule.key}' must be ${want}`,
  });
  switch (rule.value_type) {
    case "string":
      return typeof value === "string" ? null : bad("a string");
    case "number":
      return typeof value === "number" && Number.isFinite(value) ? null : bad("a number");
    case "date":
      return typeof value === "string" && isCalendarDate(value)
        ? null
        : bad("an ISO-8601 date");
    case "enum":
      return typeof value === "string" && (rule.choices ?? []).includes(value)
        ? null
        : bad(`one of [${(rule.choices ?? []).join(", ")}]`);
  }
}

export function validateMetadata(
  spec: GlpSpecJson,
  collectionType: string,
  metadata: Record<string, MetadataValue>,
): Violation[] {
  const ct = spec.collection_types[collectionType];
  if (!ct) {
    return [{ rule: "placement", message: `unknown collection type '${collectionType}'` }];
  }
  const violations: Violation[] = [];
  for (const rule of ct.metadata_rules) {
    if (!(rule.key in metadata)) {
      if (rule.mandatory) {
        violations.push({
          rule: "mandatory",
          message: `metadata key '${rule.key}' is mandatory`,
        });
      }
      continue;
    }
    const bad = checkValue(rule, metadata[rule.key]);
    if (bad) violations.push(bad);
  }
  return violations;
}

export function mandatoryKeys(spec: GlpSpecJson, collectionType: string): MetadataRuleJson[] {
  return (spec.collection_types[collectionType]?.metadata_rules ?? []).filter(
    (rule) => rule.mandatory,
  );
}

export function stageCollections(spec: GlpSpecJson): string[] {
  return Object.keys(spec.collection_types)
    .filter((name) => spec.collection_types[name].allowed_item_types.length > 0)
    .sort();
}
