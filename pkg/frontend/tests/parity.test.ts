// UI-parity acceptance checks: rendered graph counts equal the API
// subgraph counts on the golden fixtures, edge labels pass through
// verbatim, and the search box reproduces the CLI's result list.

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

import { renderGraph } from "../src/graphview.js";
import { itemMatches } from "../src/api.js";
import { ItemRecord, SubgraphResponse } from "../src/types.js";

function load<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf-8")) as T;
}

interface GraphFixture {
  subject: { kind: string; identifier: string };
  direction: string;
  response: SubgraphResponse;
  node_count: number;
  edge_count: number;
}

describe("graph view parity", () => {
  const fixtures = load<GraphFixture[]>("graphs.json");

  it("covers ten fixtures", () => {
    expect(fixtures.length).toBe(10);
  });

  it("renders exactly the API's node and edge counts", () => {
    for (const fixture of fixtures) {
      const rendered = renderGraph(fixture.response);
      expect(rendered.nodeCount).toBe(fixture.node_count);
      expect(rendered.edgeCount).toBe(fixture.edge_count);
      // the SVG contains one group per element
      expect(rendered.svg.match(/<g class="node/g)?.length ?? 0).toBe(fixture.node_count);
      expect(rendered.svg.match(/<g class="edge/g)?.length ?? 0).toBe(fixture.edge_count);
    }
  });

  it("keeps edge labels verbatim", () => {
    for (const fixture of fixtures) {
      const rendered = renderGraph(fixture.response);
      for (const edge of fixture.response.edges) {
        expect(rendered.svg).toContain(`data-label="${edge.label}"`);
      }
    }
  });

  it("uses kind-distinct glyphs", () => {
    const withAllKinds = fixtures.find(
      (f) =>
        f.response.nodes.some((n) => n.kind === "artifact") &&
        f.response.nodes.some((n) => n.kind === "process") &&
        f.response.nodes.some((n) => n.kind === "agent"),
    )!;
    const rendered = renderGraph(withAllKinds.response);
    expect(rendered.svg).toContain('class="glyph artifact"');
    expect(rendered.svg).toContain('class="glyph process"');
    expect(rendered.svg).toContain('class="glyph agent"');
  });

  it("renders a lone node for an empty lineage", () => {
    const single: SubgraphResponse = {
      nodes: [{ kind: "artifact", identifier: "root", annotations: {} }],
      edges: [],
    };
    const rendered = renderGraph(single);
    expect(rendered.nodeCount).toBe(1);
    expect(rendered.edgeCount).toBe(0);
  });
});

describe("search parity with the CLI", () => {
  const fixture = load<{
    needle: string;
    cli: ItemRecord[];
    api_items_query: ItemRecord[];
  }>("search.json");
  const corpus = load<{ items: ItemRecord[] }>("items.json");

  it("filters the item listing exactly like the CLI search", () => {
    const mine = corpus.items.filter((item) =>
      itemMatches(item, fixture.needle.toLowerCase()),
    );
    expect(mine.map((i) => i.item_id)).toEqual(fixture.cli.map((i) => i.item_id));
    expect(mine).toEqual(fixture.cli);
  });

  it("empty needle matches every live item", () => {
    const mine = corpus.items.filter((item) => itemMatches(item, ""));
    expect(mine.length).toBe(corpus.items.length);
  });
});
