// Import wizard model: collects a target collection, item type, metadata,
// influences and a payload, surfaces violations from the served data
// model, and builds exactly one import request body. Pure and DOM-free,
// so the request shape is testable against golden JSON.

import { validateMetadata, validatePlacement, Violation } from "./glp.js";
import { GlpSpecJson, ImportBody, ItemRecord, MetadataValue } from "./types.js";
import { bytesToB64 } from "./signing.js";

export interface WizardState {
  targetPath: string;
  itemType: string;
  metadata: Record<string, MetadataValue>;
  influences: string[];
  payload: Uint8Array | null;
  physicalLocation: string | null;
}

export function emptyWizard(): WizardState {
  return {
    targetPath: "",
    itemType: "",
    metadata: {},
    influences: [],
    payload: null,
    physicalLocation: null,
  };
}

export function collectionTypeOf(
  items: ItemRecord[],
  path: string,
): string | null {
  const record = items.find((item) => item.path === path && !item.tombstone);
  if (!record || record.kind !== "collection") return null;
  const ct = record.metadata["collection_type"];
  return typeof ct === "string" ? ct : null;
}

export function wizardViolations(
  spec: GlpSpecJson,
  items: ItemRecord[],
  state: WizardState,
): Violation[] {
  const violations: Violation[] = [];
  const collectionType = collectionTypeOf(items, state.targetPath);
  if (!state.targetPath || collectionType === null) {
    violations.push({
      rule: "placement",
      message: "choose a target collection",
    });
    return violations;
  }
  if (!state.itemType) {
    violations.push({ rule: "placement", message: "choose an item type" });
    return violations;
  }
  const placement = validatePlacement(spec, collectionType, state.itemType);
  if (placement) violations.push(placement);
  const effective: Record<string, MetadataValue> = {
    type: state.itemType,
    ...state.metadata,
  };
  violations.push(...validateMetadata(spec, collectionType, effective));
  if (state.payload === null && state.physicalLocation === null) {
    violations.push({
      rule: "payload",
      message: "attach a file or give a physical archival location",
    });
  }
  if (state.payload !== null && state.physicalLocation !== null) {
    violations.push({
      rule: "payload",
      message: "an import is either a file or a physical item, not both",
    });
  }
  return violations;
}

export function canSubmit(
  spec: GlpSpecJson,
  items: ItemRecord[],
  state: WizardState,
): boolean {
  return wizardViolations(spec, items, state).length === 0;
}

// The one request the wizard ever posts; influences pass through verbatim.
export function buildImportBody(state: WizardState): ImportBody {
  const body: ImportBody = {
    path: state.targetPath,
    item_type: state.itemType,
    metadata: { type: state.itemType, ...state.metadata },
    influences: [...state.influences],
  };
  if (state.payload !== null) {
    body.content_b64 = bytesToB64(state.payload);
  } else if (state.physicalLocation !== null) {
    body.physical_location = state.physicalLocation;
  }
  return body;
}
