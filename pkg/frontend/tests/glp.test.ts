// Client-side validation must agree with the served data model for the
// cases the wizard exercises.

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

import { stageCollections, validateMetadata, validatePlacement } from "../src/glp.js";
import { GlpSpecJson } from "../src/types.js";

const spec = JSON.parse(
  readFileSync(join(here, "fixtures", "spec.json"), "utf-8"),
) as GlpSpecJson;

const GOOD = { creator: "alice", created: "2011-07-14", type: "raw-data" };

describe("placement", () => {
  it("study accepts the five stage collections", () => {
    for (const stage of stageCollections(spec)) {
      expect(validatePlacement(spec, "study", stage)).toBeNull();
    }
  });

  it("preparation rejects raw data", () => {
    expect(validatePlacement(spec, "preparation", "raw-data")).not.toBeNull();
  });

  it("execution accepts raw data", () => {
    expect(validatePlacement(spec, "execution", "raw-data")).toBeNull();
  });

  it("only declared roots may sit at /", () => {
    expect(validatePlacement(spec, null, "study")).toBeNull();
    expect(validatePlacement(spec, null, "execution")).not.toBeNull();
  });
});

describe("metadata", () => {
  it("complete metadata is clean", () => {
    expect(validateMetadata(spec, "execution", GOOD)).toEqual([]);
  });

  it("one violation per missing mandatory key", () => {
    const { creator: _creator, ...rest } = GOOD;
    const violations = validateMetadata(spec, "execution", rest);
    expect(violations.length).toBe(1);
    expect(violations[0].rule).toBe("mandatory");
  });

  it("dates must be real ISO calendar dates", () => {
    expect(
      validateMetadata(spec, "execution", { ...GOOD, created: "2011-02-30" }).length,
    ).toBe(1);
    expect(
      validateMetadata(spec, "execution", { ...GOOD, created: "2012-02-29" }).length,
    ).toBe(0); // leap day
  });

  it("extra keys never violate", () => {
    expect(
      validateMetadata(spec, "execution", { ...GOOD, anything: "goes", n: 3 }),
    ).toEqual([]);
  });
});
