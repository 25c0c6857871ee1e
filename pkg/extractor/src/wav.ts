/**
 * Minimal RIFF/WAVE reader for the extraction path.
 *
 * Scope is deliberately narrow: uncompressed PCM, mono, 16-bit samples.
 * That is what the EMA corpora ship and what the mock models expect;
 * anything else is rejected with a clear message rather than guessed at.
 */

import * as fs from "fs";

export class WavError extends Error {}

export interface WavAudio {
  sampleRate: number;
  /** Samples normalized to roughly [-1, 1]. */
  samples: Float32Array;
}

export function decodeWav(buf: Buffer): WavAudio {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF") {
    throw new WavError("not a RIFF file");
  }
  if (buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new WavError("RIFF file is not WAVE");
  }

  let fmt: { audioFormat: number; channels: number; sampleRate: number; bits: number } | null =
    null;
  let dataStart = -1;
  let dataLen = -1;

  // Walk the chunk list; chunks are word-aligned.
  let pos = 12;
  while (pos + 8 <= buf.length) {
    const id = buf.toString("ascii", pos, pos + 4);
    const size = buf.readUInt32LE(pos + 4);
    const body = pos + 8;
    if (id === "fmt ") {
      if (size < 16 || body + 16 > buf.length) {
        throw new WavError("malformed fmt chunk");
      }
      fmt = {
        audioFormat: buf.readUInt16LE(body),
        channels: buf.readUInt16LE(body + 2),
        sampleRate: buf.readUInt32LE(body + 4),
        bits: buf.readUInt16LE(body + 14),
      };
    } else if (id === "data") {
      dataStart = body;
      dataLen = Math.min(size, buf.length - body);
    }
    pos = body + size + (size % 2);
  }

  if (fmt === null) {
    throw new WavError("missing fmt chunk");
  }
  if (dataStart < 0) {
    throw new WavError("missing data chunk");
  }
  if (fmt.audioFormat !== 1) {
    throw new WavError(`unsupported audio format ${fmt.audioFormat} (only PCM)`);
  }
  if (fmt.channels !== 1) {
    throw new WavError(`expected mono audio, got ${fmt.channels} channels`);
  }
  if (fmt.bits !== 16) {
    throw new WavError(`expected 16-bit samples, got ${fmt.bits}-bit`);
  }
  if (fmt.sampleRate <= 0) {
    throw new WavError(`bad sample rate ${fmt.sampleRate}`);
  }

  const n = Math.floor(dataLen / 2);
  const samples = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    samples[i] = buf.readInt16LE(dataStart + i * 2) / 32768;
  }
  return { sampleRate: fmt.sampleRate, samples };
}

export function readWav(filePath: string): WavAudio {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(filePath);
  } catch (exc) {
    throw new WavError(`cannot read audio ${filePath}: ${exc}`);
  }
  return decodeWav(buf);
}

/** Duration in seconds straight from the header, without decoding samples. */
export function wavDuration(filePath: string): number {
  const audio = readWav(filePath);
  return audio.samples.length / audio.sampleRate;
}

/** Sample-index linear interpolation to a new rate (good enough for speech here). */
export function resampleLinear(audio: WavAudio, targetRate: number): WavAudio {
  if (!Number.isFinite(targetRate) || targetRate <= 0) {
    throw new WavError(`bad target rate ${targetRate}`);
  }
  if (audio.sampleRate === targetRate || audio.samples.length === 0) {
    return { sampleRate: targetRate, samples: audio.samples };
  }
  const ratio = targetRate / audio.sampleRate;
  const outLen = Math.max(1, Math.round(audio.samples.length * ratio));
  const out = new Float32Array(outLen);
  const src = audio.samples;
  const scale = src.length > 1 ? (src.length - 1) / Math.max(outLen - 1, 1) : 0;
  for (let i = 0; i < outLen; i++) {
    const p = i * scale;
    const lo = Math.floor(p);
    const hi = Math.min(lo + 1, src.length - 1);
    const frac = p - lo;
    out[i] = src[lo] * (1 - frac) + src[hi] * frac;
  }
  return { sampleRate: targetRate, samples: out };
}

/** Encode mono PCM16 WAV bytes; handy for tests and fixtures. */
export function encodeWav(samples: Float32Array, sampleRate: number): Buffer {
  const n = samples.length;
  const dataLen = n * 2;
  const buf = Buffer.allocUnsafe(44 + dataLen);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + dataLen, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(1, 22); // mono
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28); // byte rate
  buf.writeUInt16LE(2, 32); // block align
  buf.writeUInt16LE(16, 34); // bits
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(dataLen, 40);
  for (let i = 0; i < n; i++) {
    const v = Math.max(-1, Math.min(1, samples[i]));
    buf.writeInt16LE(Math.round(v * 32767), 44 + i * 2);
  }
  return buf;
}
