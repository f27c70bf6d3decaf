/**
 * Loaders for omjump data products.
 *
 * Every CSV the simulator emits starts with comment lines of the form
 *   # omjump <version>
 *   # config: {...json...}
 * and every JSON product embeds the same config under the "config" key.
 * Files without that provenance are refused: a figure must know exactly which
 * run produced its numbers.
 */

import { readFileSync } from "node:fs";

export interface Provenance {
  version: string;
  config: Record<string, unknown>;
}

export interface Table {
  provenance: Provenance;
  columns: Map<string, number[]>;
  rows: number;
}

export class ProvenanceError extends Error {}
export class ColumnError extends Error {
  constructor(file: string, column: string) {
    super(`${file}: missing column '${column}'`);
  }
}

function parseProvenance(comments: string[], file: string): Provenance {
  let version: string | null = null;
  let config: Record<string, unknown> | null = null;
  for (const line of comments) {
    const body = line.replace(/^#\s?/, "");
    if (body.startsWith("omjump")) {
      version = body.split(/\s+/)[1] ?? "";
    } else if (body.startsWith("config:")) {
      config = JSON.parse(body.slice("config:".length).trim());
    }
  }
  if (version === null || config === null) {
    throw new ProvenanceError(
      `${file}: no embedded run config; refusing input without provenance`,
    );
  }
  return { version, config };
}

/** Parse a numeric CSV with '#' provenance headers and one title row. */
export function readTable(file: string): Table {
  const text = readFileSync(file, "utf8");
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  const comments = lines.filter((l) => l.startsWith("#"));
  const body = lines.filter((l) => !l.startsWith("#"));
  const provenance = parseProvenance(comments, file);
  if (body.length === 0) {
    throw new Error(`${file}: no header row`);
  }
  const names = body[0].split(",").map((s) => s.trim());
  const columns = new Map<string, number[]>(names.map((n) => [n, []]));
  for (const line of body.slice(1)) {
    const parts = line.split(",");
    names.forEach((name, i) => {
      columns.get(name)!.push(Number(parts[i]));
    });
  }
  return { provenance, columns, rows: body.length - 1 };
}

export function column(table: Table, name: string, file = "<table>"): number[] {
  const col = table.columns.get(name);
  if (col === undefined) {
    throw new ColumnError(file, name);
  }
  return col;
}

export interface JsonProduct {
  provenance: Provenance;
  results: Record<string, unknown>;
}

/** Load a JSON summary, requiring the embedded config. */
export function readJsonProduct(file: string): JsonProduct {
  const payload = JSON.parse(readFileSync(file, "utf8"));
  if (typeof payload !== "object" || payload === null ||
      typeof payload.config !== "object" || payload.config === null) {
    throw new ProvenanceError(
      `${file}: no embedded run config; refusing input without provenance`,
    );
  }
  return {
    provenance: { version: String(payload.omjump ?? ""), config: payload.config },
    results: payload.results ?? {},
  };
}

/** Pull a numeric physics parameter out of an embedded config. */
export function configNumber(p: Provenance, key: string): number {
  const v = p.config[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new Error(`config key '${key}' is not a finite number`);
  }
  return v;
}
