/** Binary PGM (P5, maxval 255) decoding for field payloads. */

import type { Field } from "./types";

export function b64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function bytesToB64(bytes: Uint8Array): string {
  let bin = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    bin += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(bin);
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d || b === 0x0b || b === 0x0c;
}

/** Parse P5 bytes: magic, three header ints with optional # comments, one
 * whitespace byte, then width*height raster bytes. */
export function decodePgm(data: Uint8Array): Field {
  if (data.length < 2 || data[0] !== 0x50 || data[1] !== 0x35) {
    throw new Error("not a binary PGM (missing P5 magic)");
  }
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (pos < data.length && isSpace(data[pos]!)) pos++;
    if (pos < data.length && data[pos] === 0x23) {
      while (pos < data.length && data[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < data.length && !isSpace(data[pos]!)) pos++;
    const tok = data.subarray(start, pos);
    if (tok.length === 0 || !Array.from(tok).every((b) => b >= 0x30 && b <= 0x39)) {
      throw new Error("bad PGM header token");
    }
    tokens.push(Number(new TextDecoder().decode(tok)));
  }
  pos += 1;
  const [width, height, maxval] = tokens as [number, number, number];
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}, expected 255`);
  const raster = data.subarray(pos, pos + width * height);
  if (raster.length !== width * height) {
    throw new Error(`raster truncated: expected ${width * height} bytes, got ${raster.length}`);
  }
  const values = new Float64Array(width * height);
  for (let i = 0; i < raster.length; i++) values[i] = raster[i]! / 255;
  return { width, height, values };
}

export function decodeFieldB64(b64: string): Field {
  return decodePgm(b64ToBytes(b64));
}

// half-to-even, because the server quantizes with that rounding mode
function roundHalfEven(x: number): number {
  const f = Math.floor(x);
  const diff = x - f;
  if (diff > 0.5) return f + 1;
  if (diff < 0.5) return f;
  return f % 2 === 0 ? f : f + 1;
}

/** Quantize to 1/255 steps, matching the server's writer. */
export function encodePgm(field: Field): Uint8Array {
  const header = new TextEncoder().encode(`P5\n${field.width} ${field.height}\n255\n`);
  const out = new Uint8Array(header.length + field.values.length);
  out.set(header);
  for (let i = 0; i < field.values.length; i++) {
    out[header.length + i] = roundHalfEven(field.values[i]! * 255);
  }
  return out;
}

export function encodeFieldB64(field: Field): string {
  return bytesToB64(encodePgm(field));
}
