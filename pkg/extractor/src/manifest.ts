/**
 * Dataset manifest builder: walk a corpus tree, pair audio with EMA tracks,
 * and emit the manifest JSON the probe engine loads.
 *
 * Two layouts are understood, mirroring the engine's ingest conventions:
 *   mngu0: a flat directory of utterances, one speaker (named S1)
 *   mocha: one subdirectory per speaker (named S2, S3, ... in sorted order)
 *
 * The tail split holds out the last N utterances per subject (100 for
 * mngu0, 50 for mocha), matching the engine's make_splits convention.
 * Audio without a matching EMA track is reported as a warning and excluded.
 */

import * as fs from "fs";
import * as path from "path";

import { readWav } from "./wav";

export class ManifestError extends Error {}

const EMA_SUFFIXES = [".ema", ".est", ".track"];
const TEST_SIZES: Record<string, number> = { mngu0: 100, mocha: 50 };
const MANIFEST_VERSION = 1;

interface UtteranceJson {
  id: string;
  duration_s: number;
  ema: string | null;
  audio: string | null;
  features: Record<string, { layer: number; path: string }[]>;
  split: string | null;
  rejected: boolean;
  reject_reason: string | null;
}

interface SubjectJson {
  id: string;
  corpus: string;
  test_size: number | null;
  utterances: UtteranceJson[];
}

export interface ManifestJson {
  version: number;
  subjects: SubjectJson[];
}

export interface BuildResult {
  manifest: ManifestJson;
  warnings: string[];
  outPath: string;
}

function listWavs(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.toLowerCase().endsWith(".wav"))
    .sort()
    .map((f) => path.join(dir, f));
}

function findEma(dir: string, stem: string): string | null {
  for (const suffix of EMA_SUFFIXES) {
    const candidate = path.join(dir, stem + suffix);
    if (fs.existsSync(candidate)) {
      return candidate;
    }
  }
  return null;
}

function relPosix(from: string, to: string): string {
  return path.relative(from, to).split(path.sep).join("/");
}

function discover(root: string, corpus: string): [string, string][] {
  if (corpus === "mngu0") {
    return [["S1", root]];
  }
  if (corpus === "mocha") {
    const dirs = fs
      .readdirSync(root)
      .map((d) => path.join(root, d))
      .filter((d) => fs.statSync(d).isDirectory())
      .sort();
    const groups: [string, string][] = [];
    let index = 2;
    for (const d of dirs) {
      if (listWavs(d).length > 0) {
        groups.push([`S${index}`, d]);
      }
      index++;
    }
    if (groups.length === 0) {
      throw new ManifestError(`no speaker directories with audio under ${root}`);
    }
    return groups;
  }
  throw new ManifestError(`unknown corpus layout ${JSON.stringify(corpus)}`);
}

export function buildManifest(root: string, corpus: string, outPath?: string): BuildResult {
  if (!fs.existsSync(root) || !fs.statSync(root).isDirectory()) {
    throw new ManifestError(`dataset root ${root} is not a directory`);
  }
  const testSize = TEST_SIZES[corpus];
  if (testSize === undefined) {
    throw new ManifestError(`unknown corpus layout ${JSON.stringify(corpus)}`);
  }
  const manifestPath = outPath ?? path.join(root, "manifest.json");
  const baseDir = path.dirname(path.resolve(manifestPath));

  const warnings: string[] = [];
  const subjects: SubjectJson[] = [];
  for (const [subjectId, dir] of discover(root, corpus)) {
    const wavs = listWavs(dir);
    if (wavs.length === 0) {
      throw new ManifestError(`no audio files under ${dir}`);
    }
    const utterances: UtteranceJson[] = [];
    const seenStems = new Set<string>();
    for (const wav of wavs) {
      const stem = path.basename(wav, path.extname(wav));
      seenStems.add(stem);
      const ema = findEma(dir, stem);
      if (ema === null) {
        warnings.push(`orphan audio without EMA, excluded: ${relPosix(baseDir, wav)}`);
        continue;
      }
      const audio = readWav(wav);
      utterances.push({
        id: stem,
        duration_s: audio.samples.length / audio.sampleRate,
        ema: relPosix(baseDir, ema),
        audio: relPosix(baseDir, wav),
        features: {},
        split: null,
        rejected: false,
        reject_reason: null,
      });
    }
    // EMA tracks with no audio cannot carry a duration, so they are skipped
    // too, but flagged so nobody wonders where they went.
    for (const f of fs.readdirSync(dir).sort()) {
      const suffix = path.extname(f).toLowerCase();
      if (EMA_SUFFIXES.includes(suffix) && !seenStems.has(path.basename(f, suffix))) {
        warnings.push(`EMA track without audio, excluded: ${relPosix(baseDir, path.join(dir, f))}`);
      }
    }
    if (utterances.length === 0) {
      throw new ManifestError(`no paired utterances under ${dir}`);
    }
    if (utterances.length <= testSize) {
      throw new ManifestError(
        `subject ${subjectId}: ${utterances.length} usable utterances cannot hold out ` +
          `${testSize} for test`
      );
    }
    for (let i = 0; i < utterances.length; i++) {
      utterances[i].split = i >= utterances.length - testSize ? "test" : "train";
    }
    subjects.push({ id: subjectId, corpus, test_size: null, utterances });
  }

  const manifest: ManifestJson = { version: MANIFEST_VERSION, subjects };
  fs.mkdirSync(path.dirname(path.resolve(manifestPath)), { recursive: true });
  const tmp = manifestPath + ".tmp";
  fs.writeFileSync(tmp, JSON.stringify(manifest, null, 2) + "\n");
  fs.renameSync(tmp, manifestPath);

  return { manifest, warnings, outPath: manifestPath };
}
