import { readFileSync } from "fs";
import Papa from "papaparse";

export class MissingColumnError extends Error {
  constructor(public readonly column: string, file: string) {
    super(`missing column "${column}" in ${file}`);
  }
}

export interface CsvTable {
  /** key=value pairs from leading "# ..." comment lines */
  meta: Record<string, string>;
  header: string[];
  rows: Record<string, string>[];
}

/** Read a coulomb-lab CSV: leading "# key=value" comments, then header+rows. */
export function readCsv(path: string): CsvTable {
  const text = readFileSync(path, "utf8");
  const meta: Record<string, string> = {};
  const dataLines: string[] = [];
  for (const line of text.split(/\r?\n/)) {
    if (line.startsWith("#")) {
      const body = line.slice(1).trim();
      const eq = body.indexOf("=");
      if (eq > 0) meta[body.slice(0, eq)] = body.slice(eq + 1);
    } else if (line.trim().length > 0) {
      dataLines.push(line);
    }
  }
  if (dataLines.length === 0) return { meta, header: [], rows: [] };
  const parsed = Papa.parse<Record<string, string>>(dataLines.join("\n"), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new Error(`CSV parse error in ${path}: ${parsed.errors[0].message}`);
  }
  return {
    meta,
    header: parsed.meta.fields ?? [],
    rows: parsed.data,
  };
}

/** Pull numeric columns, throwing MissingColumnError for absent names. */
export function numericColumns(
  table: CsvTable,
  columns: string[],
  file: string
): Record<string, number[]> {
  // header-only files are valid (empty figures); column checks apply when a
  // header exists
  if (table.header.length > 0) {
    for (const c of columns) {
      if (!table.header.includes(c)) throw new MissingColumnError(c, file);
    }
  }
  const out: Record<string, number[]> = {};
  for (const c of columns) out[c] = table.rows.map((r) => Number(r[c]));
  return out;
}

export function configHash(table: CsvTable): string | undefined {
  return table.meta["config_hash"];
}
