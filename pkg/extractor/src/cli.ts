/**
 * Command-line front end: `extract` dumps per-layer features for one audio
 * file, `manifest` builds a dataset manifest from a corpus tree.
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { extractFeatures, parseLayers } from "./extract";
import { buildManifest } from "./manifest";
import { modelSpec } from "./model";

const main = async () => {
  await yargs(hideBin(process.argv))
    .scriptName("ema-extractor")
    .command(
      "extract",
      "dump per-layer features for one audio file as APT1 tensors",
      (y) =>
        y
          .option("audio", { type: "string", demandOption: true, describe: "input WAV file" })
          .option("model", { type: "string", demandOption: true, describe: "model id, e.g. mock-base" })
          .option("out", { type: "string", demandOption: true, describe: "output directory" })
          .option("layers", { type: "string", describe: 'layer list, e.g. "0-12" or "0,4,8" (default: all)' })
          .option("target-hz", { type: "number", default: 50, describe: "output frame rate" })
          .option("resample", { type: "boolean", default: false, describe: "resample off-rate audio instead of failing" }),
      (argv) => {
        const spec = modelSpec(argv.model);
        const layers = argv.layers === undefined ? undefined : parseLayers(argv.layers);
        const result = extractFeatures({
          audioPath: argv.audio,
          modelId: argv.model,
          outDir: argv.out,
          layers,
          targetHz: argv["target-hz"],
          resample: argv.resample,
        });
        for (const f of result.files) {
          console.log(`wrote ${f} (${result.nFrames} x ${result.dim} @ ${result.targetHz} Hz)`);
        }
        console.log(
          `extracted ${result.files.length}/${spec.layers + 1} layers from ` +
            `${result.durationS.toFixed(2)} s of audio`
        );
      }
    )
    .command(
      "manifest",
      "build a dataset manifest from a corpus tree",
      (y) =>
        y
          .option("root", { type: "string", demandOption: true, describe: "dataset root directory" })
          .option("corpus", {
            type: "string",
            demandOption: true,
            choices: ["mngu0", "mocha"] as const,
            describe: "corpus layout",
          })
          .option("out", { type: "string", describe: "manifest path (default: <root>/manifest.json)" }),
      (argv) => {
        const result = buildManifest(argv.root, argv.corpus, argv.out);
        for (const warning of result.warnings) {
          console.warn(`warning: ${warning}`);
        }
        const nUtts = result.manifest.subjects.reduce((n, s) => n + s.utterances.length, 0);
        console.log(
          `wrote ${result.outPath}: ${result.manifest.subjects.length} subject(s), ${nUtts} utterances`
        );
      }
    )
    .demandCommand(1, "pick a command: extract or manifest")
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${err ? err.message : msg}`);
      process.exit(1);
    })
    .parseAsync();
};

if (require.main === module) {
  main().catch((err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  });
}
