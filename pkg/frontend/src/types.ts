// Wire types of the notebook service (JSON, lowercase snake_case keys).

export type NodeKind = "artifact" | "process" | "agent";

export interface NodeDescriptor {
  kind: NodeKind;
  identifier: string;
  annotations: Record<string, string>;
}

export interface EdgeDescriptor {
  label: string;
  source: { kind: NodeKind; identifier: string };
  target: { kind: NodeKind; identifier: string };
  annotations: Record<string, string>;
}

export interface SubgraphResponse {
  nodes: NodeDescriptor[];
  edges: EdgeDescriptor[];
}

export type MetadataValue = string | number | boolean | string[];

export interface ItemRecord {
  item_id: string;
  path: string;
  kind: "file" | "collection" | "physical_item";
  content_digest: string | null;
  size_bytes: number | null;
  metadata: Record<string, MetadataValue>;
  revision: { counter: number; wall_time_ms: number; site_id: string };
  tombstone: boolean;
}

export interface MetadataRuleJson {
  key: string;
  value_type: "string" | "number" | "date" | "enum";
  mandatory: boolean;
  choices?: string[];
}

export interface CollectionTypeJson {
  allowed_child_collections: string[];
  allowed_item_types: string[];
  metadata_rules: MetadataRuleJson[];
}

export interface GlpSpecJson {
  schema: string;
  roots: string[];
  collection_types: Record<string, CollectionTypeJson>;
}

export interface ImportBody {
  path: string;
  item_type: string;
  metadata: Record<string, MetadataValue>;
  content_b64?: string;
  physical_location?: string;
  influences: string[];
}

export interface ImportResponse {
  item: ItemRecord;
  batch: { node_ids: number[]; edge_ids: number[]; replayed: boolean };
}

export interface VerifyVerdict {
  signer_dn: string;
  valid: boolean;
}

export interface StatsResponse {
  nodes: number;
  edges: number;
  batches: number;
}

export interface ApiError {
  code: string;
  message: string;
  line?: number;
  column?: number;
  expected?: string;
  violations?: string[];
}
