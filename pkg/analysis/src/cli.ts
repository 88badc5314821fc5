#!/usr/bin/env node
/**
 * analyze: turn benchmark run artifacts into result documents.
 *
 *   analyze plot --in DIR [--in DIR ...] --out DIR
 *   analyze compare --in DIR --in DIR [...] --out report.md
 */

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { ArtifactError, loadArtifacts } from './artifact.js';
import { plotLatency } from './plot.js';
import { writeComparison } from './compare.js';

export async function main(argv: string[]): Promise<number> {
  let status = 0;
  await yargs(argv)
    .command(
      'plot',
      'latency CDFs and percentile tables',
      (y) => y
        .option('in', { type: 'string', array: true, demandOption: true,
                        describe: 'artifact directory (repeatable)' })
        .option('out', { type: 'string', demandOption: true,
                         describe: 'output directory' }),
      (args) => {
        try {
          const artifacts = loadArtifacts(args.in as string[]);
          const out = plotLatency(artifacts, args.out as string);
          for (const p of out.svgPaths) console.log(p);
          console.log(out.tablePath);
        } catch (err) {
          if (err instanceof ArtifactError) {
            console.error(`error: ${err.message}`);
            status = 2;
          } else {
            throw err;
          }
        }
      })
    .command(
      'compare',
      'side-by-side metric comparison across runs',
      (y) => y
        .option('in', { type: 'string', array: true, demandOption: true,
                        describe: 'artifact directory (repeatable, >= 2)' })
        .option('out', { type: 'string', demandOption: true,
                         describe: 'output markdown file' }),
      (args) => {
        try {
          const artifacts = loadArtifacts(args.in as string[]);
          writeComparison(artifacts, args.out as string);
          console.log(args.out);
        } catch (err) {
          if (err instanceof ArtifactError) {
            console.error(`error: ${err.message}`);
            status = 2;
          } else {
            throw err;
          }
        }
      })
    .demandCommand(1)
    .strict()
    .parseAsync();
  return status;
}

const entry = process.argv[1];
if (entry && (entry.endsWith('cli.js') || entry.endsWith('analyze'))) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
