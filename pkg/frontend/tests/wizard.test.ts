// The wizard posts exactly one request whose body matches the golden
// JSON the server accepted, and it cannot submit anything the served
// data model rejects.

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

import {
  buildImportBody,
  canSubmit,
  emptyWizard,
  wizardViolations,
} from "../src/wizard.js";
import { GlpSpecJson, ImportBody, ItemRecord } from "../src/types.js";

function load<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf-8")) as T;
}

const spec = load<GlpSpecJson>("spec.json");
const corpus = load<{ items: ItemRecord[] }>("items.json");
const golden = load<{
  accepted_body: ImportBody;
  influences: string[];
}>("wizard.json");

function wizardFor(body: ImportBody) {
  const state = emptyWizard();
  state.targetPath = body.path;
  state.itemType = body.item_type;
  state.metadata = Object.fromEntries(
    Object.entries(body.metadata).filter(([k]) => k !== "type"),
  );
  state.influences = [...body.influences];
  if (body.content_b64 !== undefined) {
    state.payload = new Uint8Array(Buffer.from(body.content_b64, "base64"));
  }
  if (body.physical_location !== undefined) {
    state.physicalLocation = body.physical_location;
  }
  return state;
}

describe("import wizard", () => {
  it("reproduces the golden request body the server accepted", () => {
    const state = wizardFor(golden.accepted_body);
    expect(canSubmit(spec, corpus.items, state)).toBe(true);
    expect(buildImportBody(state)).toEqual(golden.accepted_body);
  });

  it("passes both selected influences through verbatim", () => {
    const state = wizardFor(golden.accepted_body);
    expect(golden.influences.length).toBe(2);
    expect(buildImportBody(state).influences).toEqual(golden.influences);
  });

  it("disables submit while a mandatory metadata field is empty", () => {
    const state = wizardFor(golden.accepted_body);
    delete state.metadata["creator"];
    expect(canSubmit(spec, corpus.items, state)).toBe(false);
    const violations = wizardViolations(spec, corpus.items, state);
    expect(violations.some((v) => v.rule === "mandatory")).toBe(true);
  });

  it("flags a forbidden target collection before submission", () => {
    const state = wizardFor(golden.accepted_body);
    state.targetPath = "/study1/preparation"; // raw-data may not go here
    const violations = wizardViolations(spec, corpus.items, state);
    expect(violations.some((v) => v.rule === "placement")).toBe(true);
    expect(canSubmit(spec, corpus.items, state)).toBe(false);
  });

  it("rejects a bad date before submission", () => {
    const state = wizardFor(golden.accepted_body);
    state.metadata["created"] = "14.07.2011";
    const violations = wizardViolations(spec, corpus.items, state);
    expect(violations.some((v) => v.rule === "value-type")).toBe(true);
  });

  it("requires a payload or a physical location, not both", () => {
    const state = wizardFor(golden.accepted_body);
    state.payload = null;
    expect(
      wizardViolations(spec, corpus.items, state).some((v) => v.rule === "payload"),
    ).toBe(true);
    state.payload = new Uint8Array([1]);
    state.physicalLocation = "shelf 9";
    expect(
      wizardViolations(spec, corpus.items, state).some((v) => v.rule === "payload"),
    ).toBe(true);
  });

  it("physical imports carry the location instead of content", () => {
    const state = wizardFor(golden.accepted_body);
    state.itemType = "physical-sample";
    state.payload = null;
    state.physicalLocation = "freezer 2";
    expect(canSubmit(spec, corpus.items, state)).toBe(true);
    const body = buildImportBody(state);
    expect(body.physical_location).toBe("freezer 2");
    expect(body.content_b64).toBeUndefined();
  });
});
