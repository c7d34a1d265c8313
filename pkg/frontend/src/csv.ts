/** Minimal CSV reading for the batchlab output schemas (plain numeric
 * columns, no quoting). Errors name the offending column or file. */

import { readFileSync } from "node:fs";

export class CsvError extends Error {}

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string, path = "<string>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${path}: empty CSV`);
  }
  const columns = lines[0].split(",").map((s) => s.trim());
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new CsvError(`${path}: row ${i + 1} has ${parts.length} fields, expected ${columns.length}`);
    }
    rows.push(parts.map(Number));
  }
  if (rows.length === 0) {
    throw new CsvError(`${path}: no data rows`);
  }
  return { columns, rows };
}

export function readCsv(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (e) {
    throw new CsvError(`${path}: ${(e as Error).message}`);
  }
  return parseCsv(text, path);
}

export function column(table: Table, name: string, path = "csv"): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new CsvError(`${path}: missing column '${name}' (have: ${table.columns.join(", ")})`);
  }
  return table.rows.map((r) => r[idx]);
}

/** Group rows by the value in one column, preserving first-seen order. */
export function groupBy(table: Table, name: string, path = "csv"): Map<number, number[][]> {
  const key = column(table, name, path);
  const out = new Map<number, number[][]>();
  table.rows.forEach((row, i) => {
    const k = key[i];
    if (!out.has(k)) out.set(k, []);
    out.get(k)!.push(row);
  });
  return out;
}

/** Average column `value` over rows sharing `key` (e.g. time-average per N). */
export function averageBy(table: Table, key: string, value: string, path = "csv"):
    { keys: number[]; means: number[] } {
  const ks = column(table, key, path);
  const vs = column(table, value, path);
  const sums = new Map<number, { s: number; n: number }>();
  for (let i = 0; i < ks.length; i++) {
    const cur = sums.get(ks[i]) ?? { s: 0, n: 0 };
    cur.s += vs[i];
    cur.n += 1;
    sums.set(ks[i], cur);
  }
  const keys = [...sums.keys()].sort((a, b) => a - b);
  return { keys, means: keys.map((k) => sums.get(k)!.s / sums.get(k)!.n) };
}
