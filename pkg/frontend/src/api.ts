// Thin typed client over the notebook service. The UI never synthesizes
// graph elements or verdicts; everything rendered comes from one of
// these calls.

import { Identity, signatureHeaders } from "./signing.js";
import {
  ApiError,
  GlpSpecJson,
  ImportBody,
  ImportResponse,
  ItemRecord,
  NodeDescriptor,
  StatsResponse,
  SubgraphResponse,
  VerifyVerdict,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    public error: ApiError,
  ) {
    super(`${status} ${error.code}: ${error.message}`);
  }
}

const encoder = new TextEncoder();

export class ApiClient {
  constructor(
    public baseUrl: string,
    public identity: Identity,
  ) {}

  private async call<T>(method: string, pathWithQuery: string, body?: unknown): Promise<T> {
    const payload =
      body === undefined ? new Uint8Array(0) : encoder.encode(JSON.stringify(body));
    // normalize through the URL parser first: the signature must cover the
    // exact path+query bytes that go on the wire (e.g. ' becomes %27)
    const base =
      this.baseUrl || (typeof location !== "undefined" ? location.origin : "http://localhost");
    const url = new URL(pathWithQuery, base);
    const wirePath = url.pathname + url.search;
    const headers = await signatureHeaders(this.identity, method, wirePath, payload);
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await fetch(url, {
      method,
      headers,
      body: body === undefined ? undefined : (payload as BodyInit),
    });
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!response.ok) {
      const error: ApiError = parsed?.error ?? { code: "http_error", message: text };
      throw new ServiceError(response.status, error);
    }
    return parsed as T;
  }

  health(): Promise<{ status: string; site_id: string }> {
    return this.call("GET", "/health");
  }

  stats(): Promise<StatsResponse> {
    return this.call("GET", "/stats");
  }

  spec(): Promise<GlpSpecJson> {
    return this.call("GET", "/spec");
  }

  items(): Promise<ItemRecord[]> {
    return this.call("GET", "/items");
  }

  item(itemId: string): Promise<ItemRecord> {
    return this.call("GET", `/items/${encodeURIComponent(itemId)}`);
  }

  verify(itemId: string): Promise<VerifyVerdict[]> {
    return this.call("GET", `/items/${encodeURIComponent(itemId)}/verify`);
  }

  signingDigest(itemId: string): Promise<{ signed_digest: string }> {
    return this.call("GET", `/items/${encodeURIComponent(itemId)}/signing_digest`);
  }

  attachSignature(itemId: string, record: Record<string, unknown>): Promise<unknown> {
    return this.call("POST", `/items/${encodeURIComponent(itemId)}/signatures`, record);
  }

  createCollection(path: string, collectionType: string): Promise<ItemRecord> {
    return this.call("POST", "/items", {
      path,
      kind: "collection",
      metadata: { collection_type: collectionType },
    });
  }

  importItem(body: ImportBody): Promise<ImportResponse> {
    return this.call("POST", "/import", body);
  }

  subgraph(
    kind: string,
    identifier: string,
    direction: "ancestors" | "descendants",
  ): Promise<SubgraphResponse> {
    const path =
      `/lineage/${encodeURIComponent(kind)}/${encodeURIComponent(identifier)}` +
      `?format=graph&direction=${direction}`;
    return this.call("GET", path);
  }

  question(kind: string, identifier: string, question: string): Promise<unknown> {
    const path =
      `/lineage/${encodeURIComponent(kind)}/${encodeURIComponent(identifier)}` +
      `?question=${encodeURIComponent(question)}`;
    return this.call("GET", path);
  }

  query(expr: string): Promise<unknown[] | NodeDescriptor[] | string[]> {
    return this.call("GET", `/query?expr=${encodeURIComponent(expr)}`);
  }

  search(needle: string): Promise<ItemRecord[]> {
    // server-side metadata query cannot express substring-over-everything,
    // so the search box filters the item listing exactly like the CLI does
    return this.items().then((items) =>
      items.filter((item) => itemMatches(item, needle.toLowerCase())),
    );
  }
}

export function itemMatches(item: ItemRecord, needle: string): boolean {
  if (item.path.toLowerCase().includes(needle)) return true;
  for (const value of Object.values(item.metadata)) {
    if (typeof value === "string" && value.toLowerCase().includes(needle)) return true;
    if (
      Array.isArray(value) &&
      value.some((v) => typeof v === "string" && v.toLowerCase().includes(needle))
    ) {
      return true;
    }
  }
  return false;
}
