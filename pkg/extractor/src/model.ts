/**
 * Mock pretrained speech models.
 *
 * These stand in for real SSL checkpoints during development and testing:
 * same output contract (a stack of frame-level hidden states, layer 0 being
 * the waveform-encoder output), deterministic given (model id, audio), and
 * cheap enough to run in unit tests. Model ids are opaque strings; callers
 * should not assume anything beyond the registry entry.
 */

export class ModelError extends Error {}

export interface ModelSpec {
  /** Transformer depth; the model emits layers 0..layers inclusive. */
  layers: number;
  dim: number;
  strideMs: number;
  windowMs: number;
  expectedSampleRate: number;
}

export const MODELS: Record<string, ModelSpec> = {
  "mock-base": { layers: 12, dim: 768, strideMs: 20, windowMs: 25, expectedSampleRate: 16000 },
  "mock-tiny": { layers: 4, dim: 64, strideMs: 20, windowMs: 25, expectedSampleRate: 16000 },
};

export function modelSpec(modelId: string): ModelSpec {
  const spec = MODELS[modelId];
  if (!spec) {
    throw new ModelError(
      `unsupported model ${JSON.stringify(modelId)}; known: ${Object.keys(MODELS).join(", ")}`
    );
  }
  return spec;
}

/** FNV-1a, for turning (model id, role) strings into PRNG seeds. */
function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function seededArray(modelId: string, role: string, n: number, scale: number): Float32Array {
  const rng = mulberry32(fnv1a(`${modelId}:${role}`));
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = (rng() * 2 - 1) * scale;
  }
  return out;
}

function seededPermutation(modelId: string, role: string, n: number): Int32Array {
  const rng = mulberry32(fnv1a(`${modelId}:${role}`));
  const perm = new Int32Array(n);
  for (let i = 0; i < n; i++) perm[i] = i;
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    const tmp = perm[i];
    perm[i] = perm[j];
    perm[j] = tmp;
  }
  return perm;
}

const DESCRIPTOR_DIM = 14; // log energy + zero-crossing rate + 12 band magnitudes
const BAND_HZ = [100, 200, 350, 550, 800, 1200, 1700, 2400, 3300, 4500, 6000, 7400];

/** Goertzel magnitude of one frequency over a sample window. */
function goertzel(samples: Float32Array, start: number, len: number, freq: number, rate: number): number {
  const w = (2 * Math.PI * freq) / rate;
  const coeff = 2 * Math.cos(w);
  let s0 = 0;
  let s1 = 0;
  let s2 = 0;
  for (let i = 0; i < len; i++) {
    s0 = samples[start + i] + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
  return Math.sqrt(Math.max(power, 0)) / Math.max(len, 1);
}

function frameDescriptor(
  samples: Float32Array,
  start: number,
  len: number,
  rate: number,
  out: Float64Array
): void {
  let energy = 0;
  let crossings = 0;
  for (let i = 0; i < len; i++) {
    const v = samples[start + i];
    energy += v * v;
    if (i > 0 && samples[start + i - 1] * v < 0) crossings++;
  }
  out[0] = Math.log10(energy / Math.max(len, 1) + 1e-10);
  out[1] = crossings / Math.max(len - 1, 1);
  for (let b = 0; b < BAND_HZ.length; b++) {
    out[2 + b] = goertzel(samples, start, len, BAND_HZ[b], rate);
  }
}

export interface HiddenStates {
  /** layers[k] is the layer-k activations, row-major [nFrames x dim]. */
  layers: Float32Array[];
  nFrames: number;
  dim: number;
  /** Native frame rate implied by the model stride. */
  frameRateHz: number;
}

/**
 * Run the mock forward pass: frame the waveform at the model stride, build a
 * small acoustic descriptor per frame, project it to the model width (layer
 * 0), then apply per-layer seeded channel mixing for the remaining layers.
 */
export function runModel(modelId: string, samples: Float32Array, sampleRate: number): HiddenStates {
  const spec = modelSpec(modelId);
  if (sampleRate !== spec.expectedSampleRate) {
    throw new ModelError(
      `model ${modelId} expects ${spec.expectedSampleRate} Hz audio, got ${sampleRate} Hz`
    );
  }
  if (samples.length === 0) {
    throw new ModelError("empty audio: no samples to extract from");
  }
  const hop = Math.round((sampleRate * spec.strideMs) / 1000);
  const win = Math.round((sampleRate * spec.windowMs) / 1000);
  const nFrames = Math.floor(samples.length / hop);
  if (nFrames < 1) {
    throw new ModelError(
      `audio too short: ${samples.length} samples is less than one ${spec.strideMs} ms frame`
    );
  }

  const D = spec.dim;
  const proj = seededArray(modelId, "proj", DESCRIPTOR_DIM * D, 1.2);
  const projBias = seededArray(modelId, "proj-bias", D, 0.1);

  const layer0 = new Float32Array(nFrames * D);
  const desc = new Float64Array(DESCRIPTOR_DIM);
  for (let t = 0; t < nFrames; t++) {
    const start = t * hop;
    const len = Math.min(win, samples.length - start);
    frameDescriptor(samples, start, len, sampleRate, desc);
    for (let d = 0; d < D; d++) {
      let acc = projBias[d];
      for (let k = 0; k < DESCRIPTOR_DIM; k++) {
        acc += desc[k] * proj[k * D + d];
      }
      layer0[t * D + d] = Math.tanh(acc);
    }
  }

  const layers: Float32Array[] = [layer0];
  let prev = layer0;
  for (let L = 1; L <= spec.layers; L++) {
    const g1 = seededArray(modelId, `L${L}:g1`, D, 1.0);
    const g2 = seededArray(modelId, `L${L}:g2`, D, 0.8);
    const g3 = seededArray(modelId, `L${L}:g3`, D, 0.6);
    const bias = seededArray(modelId, `L${L}:bias`, D, 0.2);
    const p1 = seededPermutation(modelId, `L${L}:perm1`, D);
    const p2 = seededPermutation(modelId, `L${L}:perm2`, D);
    const cur = new Float32Array(nFrames * D);
    for (let t = 0; t < nFrames; t++) {
      const row = t * D;
      for (let d = 0; d < D; d++) {
        const mixed =
          g1[d] * prev[row + d] + g2[d] * prev[row + p1[d]] + g3[d] * prev[row + p2[d]] + bias[d];
        cur[row + d] = Math.tanh(mixed);
      }
    }
    layers.push(cur);
    prev = cur;
  }

  return { layers, nFrames, dim: D, frameRateHz: 1000 / spec.strideMs };
}
