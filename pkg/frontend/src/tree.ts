// Collection tree assembled from the flat item listing.

import { ItemRecord } from "./types.js";

export interface TreeNode {
  name: string;
  path: string;
  record: ItemRecord | null;
  children: TreeNode[];
}

export function buildTree(items: ItemRecord[]): TreeNode {
  const root: TreeNode = { name: "/", path: "/", record: null, children: [] };
  const byPath = new Map<string, TreeNode>([["/", root]]);
  const live = items.filter((item) => !item.tombstone);
  live.sort((a, b) => a.path.localeCompare(b.path));
  for (const item of live) {
    const segments = item.path.split("/").filter(Boolean);
    let parent = root;
    let path = "";
    for (const segment of segments) {
      path += "/" + segment;
      let node = byPath.get(path);
      if (!node) {
        node = { name: segment, path, record: null, children: [] };
        byPath.set(path, node);
        parent.children.push(node);
      }
      parent = node;
    }
    parent.record = item;
  }
  return root;
}

export function collectionPaths(items: ItemRecord[]): string[] {
  return items
    .filter((item) => item.kind === "collection" && !item.tombstone)
    .map((item) => item.path)
    .sort();
}
