// SVG rendering of a laid-out provenance subgraph: kind-distinct glyphs
// (artifact circle, process rectangle, agent octagon), directed labeled
// edges, one clickable group per node. Pure string construction; the
// parity tests count what gets rendered.

import { GraphLayout, PlacedNode, layoutGraph } from "./layout.js";
import { SubgraphResponse } from "./types.js";

export interface RenderedGraph {
  svg: string;
  nodeCount: number;
  edgeCount: number;
}

export function escapeXml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&apos;");
}

function glyph(node: PlacedNode): string {
  const { x, y } = node;
  switch (node.node.kind) {
    case "artifact":
      return `<circle cx="${x}" cy="${y}" r="18" class="glyph artifact"/>`;
    case "process":
      return `<rect x="${x - 22}" y="${y - 15}" width="44" height="30" class="glyph process"/>`;
    case "agent": {
      const points = octagon(x, y, 20);
      return `<polygon points="${points}" class="glyph agent"/>`;
    }
  }
}

function octagon(cx: number, cy: number, r: number): string {
  const points: string[] = [];
  for (let i = 0; i < 8; i++) {
    const angle = (Math.PI / 8) * (2 * i + 1);
    points.push(
      `${(cx + r * Math.cos(angle)).toFixed(1)},${(cy + r * Math.sin(angle)).toFixed(1)}`,
    );
  }
  return points.join(" ");
}

function shorten(text: string, max = 22): string {
  return text.length <= max ? text : text.slice(0, max - 1) + "…";
}

export function renderGraph(graph: SubgraphResponse): RenderedGraph {
  const layout: GraphLayout = layoutGraph(graph);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layout.width} ${layout.height}" ` +
      `width="${layout.width}" height="${layout.height}" class="provenance-graph">`,
  );
  parts.push(
    `<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" ` +
      `markerWidth="7" markerHeight="7" orient="auto-start-reverse">` +
      `<path d="M 0 0 L 10 5 L 0 10 z"/></marker></defs>`,
  );
  for (const placed of layout.edges) {
    const { from, to, edge } = placed;
    const midX = (from.x + to.x) / 2;
    const midY = (from.y + to.y) / 2 - 6;
    parts.push(
      `<g class="edge" data-label="${escapeXml(edge.label)}">` +
        `<line x1="${from.x}" y1="${from.y}" x2="${to.x}" y2="${to.y}" marker-end="url(#arrow)"/>` +
        `<text x="${midX}" y="${midY}" text-anchor="middle" class="edge-label">` +
        `${escapeXml(edge.label)}</text></g>`,
    );
  }
  for (const placed of layout.nodes) {
    const { node } = placed;
    parts.push(
      `<g class="node kind-${node.kind}" data-kind="${escapeXml(node.kind)}" ` +
        `data-identifier="${escapeXml(node.identifier)}" tabindex="0">` +
        glyph(placed) +
        `<text x="${placed.x}" y="${placed.y + 34}" text-anchor="middle" class="node-label">` +
        `${escapeXml(shorten(node.identifier))}</text></g>`,
    );
  }
  parts.push("</svg>");
  return {
    svg: parts.join(""),
    nodeCount: layout.nodes.length,
    edgeCount: layout.edges.length,
  };
}
