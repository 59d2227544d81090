#!/usr/bin/env node
/**
 * Render the standard figures from coulomb-lab CSV outputs.
 *
 *   node dist/cli.js --regime out/c05_regimes/collisions.csv \
 *                    --convergence out/c09_meanfield/convergence.csv \
 *                    --out out/figures
 *
 * Scripts never recompute science: they read CSVs only.  Output files are
 * named by the config hash found in the CSV header.
 */

import { mkdirSync, writeFileSync } from "fs";
import { join } from "path";
import { configHash, readCsv } from "./csv";
import { convergenceSvg } from "./convergence";
import { regimeDiagramSvg } from "./regimeDiagram";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}; expected --flag value pairs`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

export function main(argv: string[]): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const outDir = args.get("out") ?? "out/figures";
  mkdirSync(outDir, { recursive: true });

  const jobs: [string, string | undefined, (t: ReturnType<typeof readCsv>, f: string) => string][] = [
    ["regime", args.get("regime"), regimeDiagramSvg],
    ["convergence", args.get("convergence"), convergenceSvg],
  ];
  let rendered = 0;
  for (const [kind, path, render] of jobs) {
    if (!path) continue;
    try {
      const table = readCsv(path);
      const hash = configHash(table);
      const name = hash ? `${kind}_${hash}.svg` : `${kind}.svg`;
      writeFileSync(join(outDir, name), render(table, path));
      console.log(`wrote ${join(outDir, name)}`);
      rendered += 1;
    } catch (err) {
      console.error(String(err));
      return 1;
    }
  }
  if (rendered === 0) {
    console.error("nothing to do: pass --regime and/or --convergence CSV paths");
    return 2;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
