/**
 * APT1 binary tensor format: the wire format the probe engine reads.
 *
 * Layout: ASCII magic "APT1", a little-endian u32 header length, a UTF-8
 * JSON header with exactly the keys {dtype, shape, rate_hz, channels},
 * then the row-major little-endian payload (f32 or f64).
 */

import * as fs from "fs";
import * as path from "path";

export const MAGIC = "APT1";
export type DtypeTag = "f32" | "f64";

const ITEM_SIZE: Record<DtypeTag, number> = { f32: 4, f64: 8 };
const HEADER_KEYS = ["channels", "dtype", "rate_hz", "shape"];

export interface Tensor {
  /** Row-major frame data, length nFrames * nChannels. */
  data: Float32Array | Float64Array;
  rateHz: number;
  channels: string[];
  nFrames: number;
  nChannels: number;
  dtype: DtypeTag;
}

export class Apt1Error extends Error {}

function validateTensor(t: Tensor): void {
  if (t.nFrames < 1 || t.nChannels < 1) {
    throw new Apt1Error(`empty tensor: shape [${t.nFrames}, ${t.nChannels}]`);
  }
  if (t.data.length !== t.nFrames * t.nChannels) {
    throw new Apt1Error(
      `data length ${t.data.length} does not match shape [${t.nFrames}, ${t.nChannels}]`
    );
  }
  if (t.channels.length !== t.nChannels) {
    throw new Apt1Error(
      `${t.channels.length} channel names for ${t.nChannels} data columns`
    );
  }
  if (new Set(t.channels).size !== t.channels.length) {
    throw new Apt1Error("duplicate channel names");
  }
  if (!Number.isFinite(t.rateHz) || t.rateHz <= 0) {
    throw new Apt1Error(`rate must be a positive finite value, got ${t.rateHz}`);
  }
}

/** Serialize a tensor to APT1 bytes (header keys emitted in sorted order). */
export function encodeApt1(t: Tensor): Buffer {
  validateTensor(t);
  // Keys sorted alphabetically to match the engine's canonical writer.
  const header = JSON.stringify({
    channels: t.channels,
    dtype: t.dtype,
    rate_hz: t.rateHz,
    shape: [t.nFrames, t.nChannels],
  });
  const headerBytes = Buffer.from(header, "utf-8");
  const itemSize = ITEM_SIZE[t.dtype];
  const payload = Buffer.allocUnsafe(t.data.length * itemSize);
  if (t.dtype === "f32") {
    for (let i = 0; i < t.data.length; i++) {
      payload.writeFloatLE(Math.fround(t.data[i]), i * 4);
    }
  } else {
    for (let i = 0; i < t.data.length; i++) {
      payload.writeDoubleLE(t.data[i], i * 8);
    }
  }
  const head = Buffer.allocUnsafe(8);
  head.write(MAGIC, 0, "ascii");
  head.writeUInt32LE(headerBytes.length, 4);
  return Buffer.concat([head, headerBytes, payload]);
}

/** Parse APT1 bytes, enforcing the same validation rules as the engine. */
export function decodeApt1(blob: Buffer): Tensor {
  if (blob.length < 4 || blob.toString("ascii", 0, 4) !== MAGIC) {
    throw new Apt1Error("not an APT1 file (bad magic)");
  }
  if (blob.length < 8) {
    throw new Apt1Error("truncated tensor: missing header length");
  }
  const headerLen = blob.readUInt32LE(4);
  if (blob.length < 8 + headerLen) {
    throw new Apt1Error("truncated tensor: header shorter than declared");
  }
  let header: unknown;
  try {
    header = JSON.parse(blob.toString("utf-8", 8, 8 + headerLen));
  } catch (exc) {
    throw new Apt1Error(`bad header encoding: ${exc}`);
  }
  if (typeof header !== "object" || header === null || Array.isArray(header)) {
    throw new Apt1Error("header must be a JSON object");
  }
  const keys = Object.keys(header).sort();
  if (keys.length !== HEADER_KEYS.length || !keys.every((k, i) => k === HEADER_KEYS[i])) {
    throw new Apt1Error(`header keys must be exactly [${HEADER_KEYS.join(", ")}]`);
  }
  const h = header as Record<string, unknown>;
  const dtype = h["dtype"];
  if (dtype !== "f32" && dtype !== "f64") {
    throw new Apt1Error(`unsupported dtype ${JSON.stringify(dtype)}`);
  }
  const shape = h["shape"];
  if (
    !Array.isArray(shape) ||
    shape.length !== 2 ||
    !shape.every((v) => Number.isInteger(v) && v >= 1)
  ) {
    throw new Apt1Error(`bad shape ${JSON.stringify(shape)}`);
  }
  const rate = h["rate_hz"];
  if (typeof rate !== "number" || !Number.isFinite(rate) || rate <= 0) {
    throw new Apt1Error(`non-finite or non-positive rate ${JSON.stringify(rate)}`);
  }
  const channels = h["channels"];
  if (!Array.isArray(channels) || !channels.every((c) => typeof c === "string")) {
    throw new Apt1Error("channels must be a list of strings");
  }
  const [nFrames, nChannels] = shape as [number, number];
  const itemSize = ITEM_SIZE[dtype];
  const expected = nFrames * nChannels * itemSize;
  const payload = blob.subarray(8 + headerLen);
  if (payload.length !== expected) {
    throw new Apt1Error(
      `truncated tensor: expected ${expected} payload bytes, got ${payload.length}`
    );
  }
  const n = nFrames * nChannels;
  const data = dtype === "f32" ? new Float32Array(n) : new Float64Array(n);
  for (let i = 0; i < n; i++) {
    data[i] =
      dtype === "f32" ? payload.readFloatLE(i * 4) : payload.readDoubleLE(i * 8);
  }
  const tensor: Tensor = {
    data,
    rateHz: rate,
    channels: channels as string[],
    nFrames,
    nChannels,
    dtype,
  };
  validateTensor(tensor);
  return tensor;
}

/** Write a tensor to disk atomically (temp file then rename). */
export function writeApt1(filePath: string, t: Tensor): number {
  const bytes = encodeApt1(t);
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const tmp = filePath + ".tmp";
  fs.writeFileSync(tmp, bytes);
  fs.renameSync(tmp, filePath);
  return bytes.length;
}

export function readApt1(filePath: string): Tensor {
  let blob: Buffer;
  try {
    blob = fs.readFileSync(filePath);
  } catch (exc) {
    throw new Apt1Error(`cannot read tensor ${filePath}: ${exc}`);
  }
  return decodeApt1(blob);
}
