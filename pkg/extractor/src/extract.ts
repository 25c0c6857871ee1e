/**
 * Feature extraction: audio file -> one APT1 tensor per model layer at a
 * uniform target rate (50 Hz by default).
 *
 * Rate conversion happens here, by frame-index linear interpolation, so the
 * probe engine downstream always sees uniform 50 Hz inputs and never needs
 * to know any model's stride.
 */

import * as fs from "fs";
import * as path from "path";

import { Tensor, writeApt1 } from "./apt1";
import { modelSpec, runModel, ModelError } from "./model";
import { readWav, resampleLinear } from "./wav";

export class ExtractError extends Error {}

export interface ExtractOptions {
  audioPath: string;
  modelId: string;
  outDir: string;
  /** Layer indices to emit; defaults to every layer the model has. */
  layers?: number[];
  targetHz?: number;
  /** Resample off-rate audio instead of rejecting it. */
  resample?: boolean;
}

export interface ExtractResult {
  files: string[];
  nFrames: number;
  dim: number;
  layers: number[];
  targetHz: number;
  durationS: number;
}

export function layerFileName(layer: number): string {
  return `L${String(layer).padStart(2, "0")}.apt`;
}

/** Parse a layer list like "0-12", "0,4,8", or "0-2,9" into sorted indices. */
export function parseLayers(text: string): number[] {
  const layers: number[] = [];
  for (const part of text.split(",")) {
    const piece = part.trim();
    if (piece === "") continue;
    const m = piece.match(/^(\d+)-(\d+)$/);
    if (m) {
      const lo = parseInt(m[1], 10);
      const hi = parseInt(m[2], 10);
      if (hi < lo) {
        throw new ExtractError(`bad layer range ${JSON.stringify(piece)}`);
      }
      for (let L = lo; L <= hi; L++) layers.push(L);
    } else if (/^\d+$/.test(piece)) {
      layers.push(parseInt(piece, 10));
    } else {
      throw new ExtractError(`bad layer spec ${JSON.stringify(piece)}`);
    }
  }
  if (layers.length === 0) {
    throw new ExtractError(`no layers in ${JSON.stringify(text)}`);
  }
  return [...new Set(layers)].sort((a, b) => a - b);
}

function channelNames(dim: number): string[] {
  const width = String(dim - 1).length;
  const names: string[] = [];
  for (let d = 0; d < dim; d++) {
    names.push(`h${String(d).padStart(width, "0")}`);
  }
  return names;
}

/** Endpoint-aligned linear interpolation over frame indices. */
export function interpolateFrames(
  data: Float32Array,
  nFrames: number,
  dim: number,
  targetFrames: number
): Float32Array {
  if (targetFrames === nFrames) {
    return data;
  }
  const out = new Float32Array(targetFrames * dim);
  const scale = nFrames > 1 && targetFrames > 1 ? (nFrames - 1) / (targetFrames - 1) : 0;
  for (let t = 0; t < targetFrames; t++) {
    const p = t * scale;
    const lo = Math.floor(p);
    const hi = Math.min(lo + 1, nFrames - 1);
    const frac = p - lo;
    for (let d = 0; d < dim; d++) {
      out[t * dim + d] = data[lo * dim + d] * (1 - frac) + data[hi * dim + d] * frac;
    }
  }
  return out;
}

export function extractFeatures(opts: ExtractOptions): ExtractResult {
  const spec = modelSpec(opts.modelId);
  const targetHz = opts.targetHz ?? 50;
  if (!Number.isFinite(targetHz) || targetHz <= 0) {
    throw new ExtractError(`bad target rate ${targetHz}`);
  }

  const layers = opts.layers ?? Array.from({ length: spec.layers + 1 }, (_, i) => i);
  if (layers.length === 0) {
    throw new ExtractError("no layers requested");
  }
  for (const L of layers) {
    if (!Number.isInteger(L) || L < 0 || L > spec.layers) {
      throw new ExtractError(
        `model ${opts.modelId} has layers 0..${spec.layers}, got ${L}`
      );
    }
  }

  let audio = readWav(opts.audioPath);
  if (audio.samples.length === 0) {
    throw new ExtractError(`empty audio: ${opts.audioPath} has no samples`);
  }
  if (audio.sampleRate !== spec.expectedSampleRate) {
    if (!opts.resample) {
      throw new ExtractError(
        `${opts.audioPath} is ${audio.sampleRate} Hz but model ${opts.modelId} expects ` +
          `${spec.expectedSampleRate} Hz; pass --resample to convert`
      );
    }
    audio = resampleLinear(audio, spec.expectedSampleRate);
  }
  const durationS = audio.samples.length / audio.sampleRate;
  const targetFrames = Math.floor(durationS * targetHz);
  if (targetFrames < 1) {
    throw new ExtractError(
      `audio too short: ${durationS.toFixed(3)} s yields no frames at ${targetHz} Hz`
    );
  }

  let hidden;
  try {
    hidden = runModel(opts.modelId, audio.samples, audio.sampleRate);
  } catch (exc) {
    if (exc instanceof ModelError) {
      throw new ExtractError(exc.message);
    }
    throw exc;
  }

  const names = channelNames(hidden.dim);
  fs.mkdirSync(opts.outDir, { recursive: true });
  const files: string[] = [];
  for (const L of layers) {
    const resampled = interpolateFrames(hidden.layers[L], hidden.nFrames, hidden.dim, targetFrames);
    const tensor: Tensor = {
      data: resampled,
      rateHz: targetHz,
      channels: names,
      nFrames: targetFrames,
      nChannels: hidden.dim,
      dtype: "f32",
    };
    const filePath = path.join(opts.outDir, layerFileName(L));
    writeApt1(filePath, tensor);
    files.push(filePath);
  }

  // Record how these tensors were produced; the model id is opaque to the
  // engine, so this sidecar is the only place it is written down.
  const provenance = {
    model: opts.modelId,
    audio: path.resolve(opts.audioPath),
    target_hz: targetHz,
    layers,
    n_frames: targetFrames,
    dim: hidden.dim,
    files: files.map((f) => path.basename(f)),
  };
  const provPath = path.join(opts.outDir, "provenance.json");
  const tmp = provPath + ".tmp";
  fs.writeFileSync(tmp, JSON.stringify(provenance, null, 2) + "\n");
  fs.renameSync(tmp, provPath);

  return { files, nFrames: targetFrames, dim: hidden.dim, layers, targetHz, durationS };
}
