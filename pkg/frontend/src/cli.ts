/** specplot <kind> --in data.csv [--in more.csv] --out figure.svg
 *                  [--fits fits.csv] [--kappa 1e-4] [--window lo,hi]
 *
 * Renders batchlab CSVs to deterministic SVG figures.  Fitted quantities are
 * printed to stdout at full precision and optionally written to a side CSV;
 * on any error no output file is written.
 */

import { writeFileSync } from "node:fs";
import { CsvError } from "./csv.js";
import { FigureOptions, RENDERERS } from "./figures.js";

export interface CliArgs {
  kind: string;
  inputs: string[];
  out?: string;
  fitsOut?: string;
  kappa?: number;
  window?: [number, number];
  title?: string;
}

export function parseArgs(argv: string[]): CliArgs {
  if (argv.length === 0) {
    throw new CsvError(`usage: specplot <${Object.keys(RENDERERS).join("|")}> --in data.csv --out fig.svg`);
  }
  const kind = argv[0];
  if (!(kind in RENDERERS)) {
    throw new CsvError(`unknown figure kind '${kind}' (have: ${Object.keys(RENDERERS).join(", ")})`);
  }
  const args: CliArgs = { kind, inputs: [] };
  for (let i = 1; i < argv.length; i++) {
    const a = argv[i];
    const need = () => {
      if (i + 1 >= argv.length) throw new CsvError(`${a} needs a value`);
      return argv[++i];
    };
    switch (a) {
      case "--in": args.inputs.push(need()); break;
      case "--out": args.out = need(); break;
      case "--fits": args.fitsOut = need(); break;
      case "--kappa": args.kappa = Number(need()); break;
      case "--title": args.title = need(); break;
      case "--window": {
        const parts = need().split(",").map(Number);
        if (parts.length !== 2 || parts.some((p) => !isFinite(p))) {
          throw new CsvError("--window expects lo,hi");
        }
        args.window = [parts[0], parts[1]];
        break;
      }
      default:
        throw new CsvError(`unknown flag ${a}`);
    }
  }
  if (args.inputs.length === 0) throw new CsvError("at least one --in CSV is required");
  return args;
}

export function run(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (e) {
    process.stderr.write(`specplot: ${(e as Error).message}\n`);
    return 2;
  }
  const opts: FigureOptions = {
    inputs: args.inputs,
    kappa: args.kappa,
    window: args.window,
    title: args.title,
  };
  try {
    const { svg, fits } = RENDERERS[args.kind](opts);
    const lines = Object.entries(fits).map(([k, v]) => `${k},${String(v)}`);
    process.stdout.write(lines.map((l) => l + "\n").join(""));
    if (args.fitsOut) {
      writeFileSync(args.fitsOut, "quantity,value\n" + lines.join("\n") + "\n");
    }
    if (args.out) {
      writeFileSync(args.out, svg);
      process.stderr.write(`wrote ${args.out}\n`);
    }
    return 0;
  } catch (e) {
    process.stderr.write(`specplot: ${(e as Error).message}\n`);
    return 1;
  }
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "@@");
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
