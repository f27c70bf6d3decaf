/**
 * Figure specs: a small JSON format naming the figure type, the input data
 * files, overlays, and the output path.  Rendering is a pure function of
 * (spec, input files); no physics is recomputed here.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { dirname, resolve } from "node:path";

import { readTable, Table } from "./data.js";
import {
  fanoCurveFigure,
  OverlayName,
  regimeMapFigure,
  sweepFigure,
  trajectoryFigure,
} from "./figures.js";

export type FigureType = "fano-curve" | "sweep" | "trajectory" | "regime-map";

export interface FigureSpec {
  type: FigureType;
  inputs: string[];
  out: string;
  title?: string;
  /** Overlay names; omit for the type's defaults, [] for a plain data plot. */
  overlays?: OverlayName[];
  /** fano-curve: window length separating the short/long panels. */
  split?: number;
  /** sweep: mechanics-free baseline CSV drawn on the same axes. */
  kerr?: string;
}

const DEFAULT_OVERLAYS: Record<FigureType, OverlayName[]> = {
  "fano-curve": ["poisson"],
  sweep: ["poisson", "naive"],
  trajectory: ["resonance"],
  "regime-map": [],
};

const KNOWN_OVERLAYS = new Set(["poisson", "naive", "resonance"]);

export function parseSpec(raw: unknown, baseDir: string): FigureSpec {
  if (typeof raw !== "object" || raw === null) {
    throw new Error("figure spec must be a JSON object");
  }
  const spec = raw as Record<string, unknown>;
  const type = spec.type as FigureType;
  if (!(type in DEFAULT_OVERLAYS)) {
    throw new Error(`unknown figure type '${String(spec.type)}'`);
  }
  if (!Array.isArray(spec.inputs) || spec.inputs.length === 0) {
    throw new Error("figure spec needs a non-empty 'inputs' list");
  }
  if (typeof spec.out !== "string") {
    throw new Error("figure spec needs an 'out' path");
  }
  const overlays = spec.overlays === undefined
    ? DEFAULT_OVERLAYS[type]
    : (spec.overlays as OverlayName[]);
  for (const name of overlays) {
    if (!KNOWN_OVERLAYS.has(name)) {
      throw new Error(`unknown overlay '${name}'`);
    }
  }
  return {
    type,
    inputs: spec.inputs.map((p) => resolve(baseDir, String(p))),
    out: resolve(baseDir, spec.out),
    title: spec.title as string | undefined,
    overlays,
    split: spec.split as number | undefined,
    kerr: spec.kerr === undefined ? undefined : resolve(baseDir, String(spec.kerr)),
  };
}

export function renderSpec(spec: FigureSpec): string {
  const tables: Table[] = spec.inputs.map((f) => {
    try {
      return readTable(f);
    } catch (err) {
      throw new Error(`${f}: ${(err as Error).message}`);
    }
  });
  const overlays = spec.overlays ?? [];
  switch (spec.type) {
    case "fano-curve":
      return fanoCurveFigure(tables[0], overlays, spec.split, spec.title);
    case "sweep": {
      const kerr = spec.kerr ? readTable(spec.kerr) : undefined;
      return sweepFigure(tables[0], overlays, kerr, spec.title);
    }
    case "trajectory":
      return trajectoryFigure(tables, overlays, spec.title);
    case "regime-map":
      return regimeMapFigure(tables[0], spec.title);
  }
}

export function renderSpecFile(path: string): string {
  const spec = parseSpec(JSON.parse(readFileSync(path, "utf8")), dirname(resolve(path)));
  const svg = renderSpec(spec);
  writeFileSync(spec.out, svg);
  return spec.out;
}
