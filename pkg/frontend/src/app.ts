// Single-page notebook frontend: collection browser, import wizard,
// provenance graph view, sign/verify panel, search and query console.
// Hash-routed; every displayed fact comes from one API response.

import { ApiClient, ServiceError } from "./api.js";
import { renderGraph, escapeXml } from "./graphview.js";
import { mandatoryKeys } from "./glp.js";
import { Identity, signDetachedDigest } from "./signing.js";
import { buildTree, collectionPaths, TreeNode } from "./tree.js";
import {
  buildImportBody,
  collectionTypeOf,
  emptyWizard,
  WizardState,
  wizardViolations,
} from "./wizard.js";
import { GlpSpecJson, ItemRecord, MetadataValue } from "./types.js";

const esc = escapeXml;

interface AppState {
  client: ApiClient | null;
  spec: GlpSpecJson | null;
  items: ItemRecord[];
  wizard: WizardState;
  banner: string | null;
  lastGraph: { kind: string; identifier: string; direction: "ancestors" | "descendants" } | null;
}

const state: AppState = {
  client: null,
  spec: null,
  items: [],
  wizard: emptyWizard(),
  banner: null,
  lastGraph: null,
};

function app(): HTMLElement {
  return document.getElementById("app")!;
}

function setBanner(message: string | null): void {
  state.banner = message;
  const el = document.getElementById("banner")!;
  el.textContent = message ?? "";
  el.hidden = message === null;
}

async function refreshItems(): Promise<void> {
  if (!state.client) return;
  state.items = await state.client.items();
}

function describeError(error: unknown): string {
  if (error instanceof ServiceError) {
    const e = error.error;
    let hint = "";
    if (e.code === "bad_identity") hint = " (check your DN and key, then retry)";
    if (e.code === "placement_violation") hint = " (pick a collection that allows this type)";
    if (e.code === "metadata_violation") hint = " (fill the mandatory fields)";
    const detail = e.violations ? `: ${e.violations.join("; ")}` : "";
    return `${error.status} ${e.code}: ${e.message}${detail}${hint}`;
  }
  return String(error);
}

// -- login -------------------------------------------------------------------

function renderLogin(): void {
  app().innerHTML = `
    <section class="panel">
      <h2>Connect</h2>
      <p>Your distinguished name and Ed25519 private key (base64) stay in this
         browser tab; requests are signed locally.</p>
      <label>DN <input id="login-dn" placeholder="CN=alice"></label>
      <label>Private key <input id="login-key" type="password" placeholder="base64 seed"></label>
      <button id="login-go">Connect</button>
      <p id="login-status" class="error"></p>
    </section>`;
  document.getElementById("login-go")!.addEventListener("click", async () => {
    const dn = (document.getElementById("login-dn") as HTMLInputElement).value.trim();
    const key = (document.getElementById("login-key") as HTMLInputElement).value.trim();
    const identity: Identity = { dn, privateKeyB64: key };
    const client = new ApiClient("", identity);
    const status = document.getElementById("login-status")!;
    try {
      await client.stats(); // authenticated probe
      state.client = client;
      state.spec = await client.spec();
      await refreshItems();
      location.hash = "#/browse";
      route();
    } catch (error) {
      status.textContent = describeError(error);
    }
  });
}

// -- browse -------------------------------------------------------------------

function renderTreeNode(node: TreeNode): string {
  const label = node.record
    ? `<a href="#/item/${encodeURIComponent(node.record.item_id)}" class="kind-${node.record.kind}">${esc(node.name)}</a>`
    : esc(node.name);
  const children = node.children.map(renderTreeNode).join("");
  return `<li>${label}${children ? `<ul>${children}</ul>` : ""}</li>`;
}

async function viewBrowse(): Promise<void> {
  await refreshItems();
  const tree = buildTree(state.items);
  app().innerHTML = `
    <section class="panel">
      <h2>Repository</h2>
      <ul class="tree">${tree.children.map(renderTreeNode).join("") || "<li>(empty)</li>"}</ul>
      <h3>New collection</h3>
      <label>Path <input id="col-path" placeholder="/study1/execution"></label>
      <label>Type <select id="col-type">${
        state.spec
          ? Object.keys(state.spec.collection_types)
              .sort()
              .map((t) => `<option>${esc(t)}</option>`)
              .join("")
          : ""
      }</select></label>
      <button id="col-create">Create</button>
      <p id="col-status" class="error"></p>
    </section>`;
  document.getElementById("col-create")!.addEventListener("click", async () => {
    const path = (document.getElementById("col-path") as HTMLInputElement).value.trim();
    const ctype = (document.getElementById("col-type") as HTMLSelectElement).value;
    const status = document.getElementById("col-status")!;
    try {
      await state.client!.createCollection(path, ctype);
      await viewBrowse();
    } catch (error) {
      status.textContent = describeError(error);
    }
  });
}

// -- item detail ----------------------------------------------------------------

function metadataRows(metadata: Record<string, MetadataValue>): string {
  return Object.entries(metadata)
    .filter(([key]) => key !== "signatures")
    .map(
      ([key, value]) =>
        `<tr><th>${esc(key)}</th><td>${esc(Array.isArray(value) ? value.join(", ") : String(value))}</td></tr>`,
    )
    .join("");
}

async function viewItem(itemId: string): Promise<void> {
  const client = state.client!;
  const item = await client.item(itemId);
  let verdicts: { signer_dn: string; valid: boolean }[] = [];
  let stage = "";
  try {
    verdicts = await client.verify(itemId);
  } catch {
    /* collections have no signatures */
  }
  if (item.kind !== "collection") {
    try {
      const progress = (await client.question("artifact", itemId, "progress")) as {
        stage: string;
        finalized: boolean;
      };
      stage = `${progress.stage}${progress.finalized ? " (finalized)" : ""}`;
    } catch {
      stage = "(untracked)";
    }
  }
  const badges = verdicts
    .map(
      (v) =>
        `<span class="badge ${v.valid ? "ok" : "bad"}">${esc(v.signer_dn)}: ${
          v.valid ? "valid" : "INVALID"
        }</span>`,
    )
    .join(" ");
  app().innerHTML = `
    <section class="panel">
      <h2>${esc(item.path)}</h2>
      <p>kind: <b>${esc(item.kind)}</b>${stage ? ` &middot; stage: <b>${esc(stage)}</b>` : ""}
         ${item.tombstone ? ' &middot; <span class="badge bad">deleted</span>' : ""}</p>
      ${item.content_digest ? `<p>digest: <code>${esc(item.content_digest)}</code> (${item.size_bytes} bytes)</p>` : ""}
      <table class="meta">${metadataRows(item.metadata)}</table>
      <h3>Signatures</h3>
      <p>${badges || "(none)"} </p>
      <button id="sign-item">Sign with my key</button>
      <span id="sign-status" class="error"></span>
      <h3>Provenance</h3>
      <p>
        <a href="#/graph/artifact/${encodeURIComponent(itemId)}?direction=ancestors">ancestor graph</a> &middot;
        <a href="#/graph/artifact/${encodeURIComponent(itemId)}?direction=descendants">descendant graph</a>
      </p>
    </section>`;
  document.getElementById("sign-item")!.addEventListener("click", async () => {
    const status = document.getElementById("sign-status")!;
    try {
      const { signed_digest } = await client.signingDigest(itemId);
      const signature = await signDetachedDigest(client.identity, signed_digest);
      await client.attachSignature(itemId, {
        signer_dn: client.identity.dn,
        algorithm: "ed25519-sha256",
        signature,
        signed_digest,
        timestamp_ms: Date.now(),
      });
      await viewItem(itemId);
    } catch (error) {
      status.textContent = describeError(error);
    }
  });
}

// -- provenance graph --------------------------------------------------------------

async function viewGraph(
  kind: string,
  identifier: string,
  direction: "ancestors" | "descendants",
): Promise<void> {
  const client = state.client!;
  let rendered;
  try {
    const subgraph = await client.subgraph(kind, identifier, direction);
    rendered = renderGraph(subgraph);
    state.lastGraph = { kind, identifier, direction };
    setBanner(null);
  } catch (error) {
    // keep the cached view; surface a non-blocking banner
    setBanner(`provenance service unreachable: ${describeError(error)}`);
    return;
  }
  app().innerHTML = `
    <section class="panel">
      <h2>Provenance of ${esc(kind)} <code>${esc(identifier)}</code></h2>
      <p>${rendered.nodeCount} nodes, ${rendered.edgeCount} edges &middot;
         direction:
         <a href="#/graph/${encodeURIComponent(kind)}/${encodeURIComponent(identifier)}?direction=ancestors">ancestors</a> |
         <a href="#/graph/${encodeURIComponent(kind)}/${encodeURIComponent(identifier)}?direction=descendants">descendants</a>
      </p>
      <div class="graph-host">${rendered.svg}</div>
    </section>`;
  // clicking a node re-roots the view
  app()
    .querySelectorAll("g.node")
    .forEach((el) => {
      el.addEventListener("click", () => {
        const k = el.getAttribute("data-kind")!;
        const id = el.getAttribute("data-identifier")!;
        location.hash = `#/graph/${encodeURIComponent(k)}/${encodeURIComponent(id)}?direction=${direction}`;
      });
    });
}

// -- import wizard ------------------------------------------------------------------

async function viewImport(): Promise<void> {
  await refreshItems();
  const spec = state.spec!;
  const wizard = state.wizard;
  const collections = collectionPaths(state.items);
  const targetType = collectionTypeOf(state.items, wizard.targetPath);
  const itemTypes = targetType
    ? (spec.collection_types[targetType]?.allowed_item_types ?? [])
    : [];
  const violations = wizardViolations(spec, state.items, wizard);
  const disabled = violations.length > 0 ? "disabled" : "";
  const mandatory = targetType ? mandatoryKeys(spec, targetType) : [];
  const influencable = state.items.filter(
    (item) => item.kind !== "collection" && !item.tombstone,
  );
  app().innerHTML = `
    <section class="panel">
      <h2>Import</h2>
      <label>Target collection
        <select id="wz-path">
          <option value="">choose…</option>
          ${collections
            .map(
              (p) =>
                `<option ${p === wizard.targetPath ? "selected" : ""}>${esc(p)}</option>`,
            )
            .join("")}
        </select>
      </label>
      <label>Item type
        <select id="wz-type" ${itemTypes.length ? "" : "disabled"}>
          <option value="">choose…</option>
          ${itemTypes
            .map(
              (t) => `<option ${t === wizard.itemType ? "selected" : ""}>${esc(t)}</option>`,
            )
            .join("")}
        </select>
      </label>
      <fieldset><legend>Metadata</legend>
        ${mandatory
          .map(
            (rule) => `
          <label>${esc(rule.key)} (${esc(rule.value_type)}${rule.mandatory ? ", mandatory" : ""})
            <input data-meta="${esc(rule.key)}" value="${esc(String(wizard.metadata[rule.key] ?? ""))}">
          </label>`,
          )
          .join("")}
        <label>extra key <input id="wz-extra-key"></label>
        <label>extra value <input id="wz-extra-value"></label>
      </fieldset>
      <fieldset><legend>Payload</legend>
        <label>File <input id="wz-file" type="file"></label>
        <label>or physical location
          <input id="wz-location" value="${esc(wizard.physicalLocation ?? "")}">
        </label>
      </fieldset>
      <fieldset><legend>Influenced by (the observer dialog)</legend>
        ${influencable
          .map(
            (item) => `
          <label class="influence">
            <input type="checkbox" data-influence="${esc(item.item_id)}"
              ${wizard.influences.includes(item.item_id) ? "checked" : ""}>
            ${esc(item.path)}
          </label>`,
          )
          .join("") || "(no importable items yet)"}
      </fieldset>
      <ul class="violations">${violations
        .map((v) => `<li>${esc(v.rule)}: ${esc(v.message)}</li>`)
        .join("")}</ul>
      <button id="wz-submit" ${disabled}>Import</button>
      <p id="wz-status" class="error"></p>
    </section>`;

  const rerender = () => viewImport();
  document.getElementById("wz-path")!.addEventListener("change", (e) => {
    wizard.targetPath = (e.target as HTMLSelectElement).value;
    wizard.itemType = "";
    rerender();
  });
  document.getElementById("wz-type")!.addEventListener("change", (e) => {
    wizard.itemType = (e.target as HTMLSelectElement).value;
    rerender();
  });
  app()
    .querySelectorAll("input[data-meta]")
    .forEach((el) =>
      el.addEventListener("change", (e) => {
        const input = e.target as HTMLInputElement;
        const key = input.getAttribute("data-meta")!;
        if (input.value === "") delete wizard.metadata[key];
        else wizard.metadata[key] = input.value;
        rerender();
      }),
    );
  document.getElementById("wz-extra-value")!.addEventListener("change", () => {
    const key = (document.getElementById("wz-extra-key") as HTMLInputElement).value.trim();
    const value = (document.getElementById("wz-extra-value") as HTMLInputElement).value;
    if (key) {
      wizard.metadata[key] = value;
      rerender();
    }
  });
  document.getElementById("wz-file")!.addEventListener("change", async (e) => {
    const input = e.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file) {
      wizard.payload = new Uint8Array(await file.arrayBuffer());
      if (!("name" in wizard.metadata)) wizard.metadata["name"] = file.name;
      wizard.physicalLocation = null;
      rerender();
    }
  });
  document.getElementById("wz-location")!.addEventListener("change", (e) => {
    const value = (e.target as HTMLInputElement).value.trim();
    wizard.physicalLocation = value || null;
    if (value) wizard.payload = null;
    rerender();
  });
  app()
    .querySelectorAll("input[data-influence]")
    .forEach((el) =>
      el.addEventListener("change", (e) => {
        const input = e.target as HTMLInputElement;
        const id = input.getAttribute("data-influence")!;
        wizard.influences = wizard.influences.filter((x) => x !== id);
        if (input.checked) wizard.influences.push(id);
        rerender();
      }),
    );
  document.getElementById("wz-submit")!.addEventListener("click", async () => {
    const status = document.getElementById("wz-status")!;
    try {
      const response = await state.client!.importItem(buildImportBody(wizard));
      state.wizard = emptyWizard();
      location.hash = `#/item/${encodeURIComponent(response.item.item_id)}`;
      route();
    } catch (error) {
      status.textContent = describeError(error);
    }
  });
}

// -- search -----------------------------------------------------------------------

async function viewSearch(initial: string): Promise<void> {
  app().innerHTML = `
    <section class="panel">
      <h2>Search</h2>
      <input id="search-box" value="${esc(initial)}" placeholder="substring over paths and metadata">
      <button id="search-go">Search</button>
      <ul id="search-results" class="results"></ul>
    </section>`;
  const run = async () => {
    const needle = (document.getElementById("search-box") as HTMLInputElement).value;
    const hits = await state.client!.search(needle);
    document.getElementById("search-results")!.innerHTML = hits
      .map(
        (item) =>
          `<li><a href="#/item/${encodeURIComponent(item.item_id)}">${esc(item.path)}</a>
           <small>${esc(String(item.metadata["type"] ?? item.kind))}</small></li>`,
      )
      .join("");
  };
  document.getElementById("search-go")!.addEventListener("click", run);
  document.getElementById("search-box")!.addEventListener("keydown", (e) => {
    if ((e as KeyboardEvent).key === "Enter") void run();
  });
  if (initial) await run();
}

// -- query console ------------------------------------------------------------------

async function viewConsole(): Promise<void> {
  app().innerHTML = `
    <section class="panel">
      <h2>Traversal console</h2>
      <textarea id="q-input" rows="4" spellcheck="false">$x := g:key($_g, 'type', 'agent')[@identifier]</textarea>
      <button id="q-run">Run</button>
      <pre id="q-caret" class="caret"></pre>
      <pre id="q-output"></pre>
    </section>`;
  document.getElementById("q-run")!.addEventListener("click", async () => {
    const text = (document.getElementById("q-input") as HTMLTextAreaElement).value;
    const output = document.getElementById("q-output")!;
    const caret = document.getElementById("q-caret")!;
    caret.textContent = "";
    try {
      const result = await state.client!.query(text);
      output.textContent = JSON.stringify(result, null, 2);
    } catch (error) {
      if (error instanceof ServiceError && error.error.line !== undefined) {
        const { line, column, expected, message } = error.error;
        const source = text.split("\n")[line! - 1] ?? "";
        caret.textContent = `${source}\n${" ".repeat(Math.max(0, column! - 1))}^ expected ${expected ?? ""}`;
        output.textContent = message;
      } else {
        output.textContent = describeError(error);
      }
    }
  });
}

// -- router -----------------------------------------------------------------------

export function route(): void {
  if (!state.client) {
    renderLogin();
    return;
  }
  const hash = location.hash || "#/browse";
  const [path, queryString] = hash.slice(1).split("?");
  const params = new URLSearchParams(queryString ?? "");
  const segments = path.split("/").filter(Boolean);
  const go = async () => {
    if (segments[0] === "item" && segments[1]) {
      await viewItem(decodeURIComponent(segments[1]));
    } else if (segments[0] === "graph" && segments[2]) {
      const direction = params.get("direction") === "descendants" ? "descendants" : "ancestors";
      await viewGraph(
        decodeURIComponent(segments[1]),
        decodeURIComponent(segments[2]),
        direction,
      );
    } else if (segments[0] === "import") {
      await viewImport();
    } else if (segments[0] === "search") {
      await viewSearch(params.get("q") ?? "");
    } else if (segments[0] === "console") {
      await viewConsole();
    } else {
      await viewBrowse();
    }
  };
  go().catch((error) => setBanner(describeError(error)));
}

export function boot(): void {
  window.addEventListener("hashchange", route);
  route();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
