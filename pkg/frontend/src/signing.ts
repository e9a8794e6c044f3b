// Signed request headers: Ed25519 over (dn, timestamp, request digest),
// byte-compatible with the service's verifier. Uses WebCrypto, which is
// available in browsers (secure contexts) and in Node.

const PKCS8_ED25519_PREFIX = "302e020100300506032b657004220420";

export interface Identity {
  dn: string;
  privateKeyB64: string; // raw 32-byte seed, base64
}

function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(i * 2, i * 2 + 2), 16);
  }
  return out;
}

function bytesToHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function b64ToBytes(b64: string): Uint8Array {
  if (typeof Buffer !== "undefined") return new Uint8Array(Buffer.from(b64, "base64"));
  const bin = atob(b64);
  return Uint8Array.from(bin, (c) => c.charCodeAt(0));
}

export function bytesToB64(bytes: Uint8Array): string {
  if (typeof Buffer !== "undefined") return Buffer.from(bytes).toString("base64");
  let bin = "";
  for (const b of bytes) bin += String.fromCharCode(b);
  return btoa(bin);
}

function concat(...parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

const encoder = new TextEncoder();

export async function requestDigestHex(
  method: string,
  pathWithQuery: string,
  body: Uint8Array,
): Promise<string> {
  const payload = concat(
    encoder.encode(method.toUpperCase()),
    encoder.encode("\n"),
    encoder.encode(pathWithQuery),
    encoder.encode("\n"),
    body,
  );
  const digest = await crypto.subtle.digest("SHA-256", payload as BufferSource);
  return bytesToHex(new Uint8Array(digest));
}

async function importPrivateKey(privateKeyB64: string): Promise<CryptoKey> {
  const seed = b64ToBytes(privateKeyB64);
  const pkcs8 = concat(hexToBytes(PKCS8_ED25519_PREFIX), seed);
  return crypto.subtle.importKey("pkcs8", pkcs8 as BufferSource, { name: "Ed25519" }, false, [
    "sign",
  ]);
}

export async function signatureHeaders(
  identity: Identity,
  method: string,
  pathWithQuery: string,
  body: Uint8Array = new Uint8Array(0),
  ts?: number,
): Promise<Record<string, string>> {
  const timestamp = ts ?? Math.floor(Date.now() / 1000);
  const digestHex = await requestDigestHex(method, pathWithQuery, body);
  const message = encoder.encode(`${identity.dn}\n${timestamp}\n${digestHex}`);
  const key = await importPrivateKey(identity.privateKeyB64);
  const signature = await crypto.subtle.sign("Ed25519", key, message as BufferSource);
  return {
    "X-Identity-DN": identity.dn,
    "X-Identity-TS": String(timestamp),
    "X-Identity-Sig": bytesToB64(new Uint8Array(signature)),
  };
}

// Detached item signatures: the server hands out the current signing
// digest; the private key never leaves the client.
export async function signDetachedDigest(
  identity: Identity,
  signedDigestHex: string,
): Promise<string> {
  const key = await importPrivateKey(identity.privateKeyB64);
  const signature = await crypto.subtle.sign(
    "Ed25519",
    key,
    hexToBytes(signedDigestHex) as BufferSource,
  );
  return bytesToB64(new Uint8Array(signature));
}
