/**
 * Figure builders for the four standard panel layouts:
 *
 *  fano-curve  — F_c(T_S) split into short- and long-window panels, with the
 *                Poissonian reference F = 1
 *  sweep       — F_c(inf) against the swept drive/damping/temperature, with
 *                the naive cascade expectation (n+1)/2 and an optional
 *                mechanics-free (Kerr) overlay
 *  trajectory  — stacked photon number / phonon number / displacement traces
 *                with detection ticks and the resonance-displacement line
 *  regime-map  — cascade regions on the (alpha_L, g0) grid
 *
 * Overlays are requested by name; an empty list gives a plain data plot.
 * Rendering never recomputes physics: everything is read from the emitted
 * files, including the parameters used for overlay positions.
 */

import { Table, column, configNumber } from "./data.js";
import { linearScale, logScale, Panel, svgDocument } from "./svg.js";

export type OverlayName = "poisson" | "naive" | "resonance";

const PANEL_W = 300;
const PANEL_H = 200;
const MARGIN = { left: 64, top: 36, gap: 56, bottom: 52 };

function finitePairs(xs: number[], ys: number[]): [number[], number[]] {
  const fx: number[] = [];
  const fy: number[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (Number.isFinite(xs[i]) && Number.isFinite(ys[i])) {
      fx.push(xs[i]);
      fy.push(ys[i]);
    }
  }
  return [fx, fy];
}

function expand(lo: number, hi: number, frac = 0.08): [number, number] {
  const pad = (hi - lo || Math.abs(lo) || 1) * frac;
  return [lo - pad, hi + pad];
}

function caption(table: Table): string {
  const cfg = table.provenance.config;
  const keys = ["detuning", "g0", "alpha_L", "kappa_in", "kappa_out",
                "gamma_m", "n_th", "eta", "seed"];
  const parts = keys.filter((k) => k in cfg).map((k) => `${k}=${cfg[k]}`);
  return `omjump ${table.provenance.version} | ${parts.join(" ")}`;
}

/** Fano factor vs sampling window, short and long windows side by side. */
export function fanoCurveFigure(table: Table, overlays: OverlayName[],
                                split?: number, title?: string): string {
  const ts = column(table, "t_s");
  const fano = column(table, "fano");
  const err = column(table, "err");
  const ok = column(table, "ok");
  const keep = ts.map((_, i) => ok[i] > 0);
  const t = ts.filter((_, i) => keep[i]);
  const f = fano.filter((_, i) => keep[i]);
  const e = err.filter((_, i) => keep[i]);
  if (t.length === 0) {
    throw new Error("fano curve has no usable points");
  }
  const cut = split ?? Math.sqrt(t[0] * t[t.length - 1]);

  const panels: Panel[] = [];
  const halves: Array<[string, number[], number[], number[]]> = [
    ["short windows", t.filter((v) => v <= cut),
     f.filter((_, i) => t[i] <= cut), e.filter((_, i) => t[i] <= cut)],
    ["long windows", t.filter((v) => v > cut),
     f.filter((_, i) => t[i] > cut), e.filter((_, i) => t[i] > cut)],
  ];
  halves.forEach(([label, tt, ff, ee], k) => {
    if (tt.length === 0) return;
    const lo = Math.min(...ff.map((v, i) => v - ee[i]));
    const hi = Math.max(...ff.map((v, i) => v + ee[i]));
    const [yLo, yHi] = expand(Math.min(lo, 1), Math.max(hi, 1));
    const panel = new Panel(`fano-${k}`,
      MARGIN.left + k * (PANEL_W + MARGIN.gap), MARGIN.top, PANEL_W, PANEL_H, {
        x: logScale([tt[0], tt[tt.length - 1]], [0, PANEL_W]),
        y: linearScale([yHi, yLo], [0, PANEL_H]),
        xLabel: "sampling window T_S (1/Omega)",
        yLabel: "Fano factor F_c",
        title: k === 0 ? title ?? "photon counting Fano factor" : label,
      });
    if (overlays.includes("poisson")) {
      panel.refLineY(1.0, "#888", "Poisson");
    }
    panel.polyline(tt, ff, "#1a56a0", { cls: "data" });
    panel.errorBars(tt, ff, ee, "#1a56a0");
    panel.markers(tt, ff, "#1a56a0");
    panels.push(panel);
  });
  const width = MARGIN.left + 2 * PANEL_W + MARGIN.gap + 24;
  return svgDocument(width, MARGIN.top + PANEL_H + MARGIN.bottom + 12, panels,
                     caption(table));
}

/** Long-time Fano factor against the swept parameter, plus optional Kerr overlay. */
export function sweepFigure(table: Table, overlays: OverlayName[],
                            kerr?: Table, title?: string): string {
  const names = [...table.columns.keys()];
  const sweepName = names[0];
  const x = column(table, sweepName);
  const f = column(table, "fano_inf");
  const e = column(table, "fano_err");
  const [xs, fs] = finitePairs(x, f);
  if (xs.length === 0) {
    throw new Error("sweep has no usable points");
  }
  const series: Array<[Table, string]> = [[table, "#1a56a0"]];
  if (kerr) series.push([kerr, "#c02020"]);

  let yHi = 1.0;
  let yLo = 1.0;
  for (const [tab] of series) {
    const ff = column(tab, "fano_inf");
    const ee = column(tab, "fano_err");
    ff.forEach((v, i) => {
      if (Number.isFinite(v)) {
        yHi = Math.max(yHi, v + (ee[i] || 0));
        yLo = Math.min(yLo, v - (ee[i] || 0));
      }
    });
  }
  const n = "cascade_n" in table.provenance.config
    ? configNumber(table.provenance, "cascade_n") : 2;
  const naive = (n + 1) / 2;
  if (overlays.includes("naive")) yHi = Math.max(yHi, naive);
  const [lo, hi] = expand(yLo, yHi);

  const panel = new Panel("sweep", MARGIN.left, MARGIN.top, PANEL_W + 120, PANEL_H, {
    x: logScale([Math.min(...xs), Math.max(...xs)], [0, PANEL_W + 120]),
    y: linearScale([hi, lo], [0, PANEL_H]),
    xLabel: `${sweepName} (units of Omega)`,
    yLabel: "F_c(inf)",
    title: title ?? `long-time Fano factor vs ${sweepName}`,
  });
  if (overlays.includes("poisson")) {
    panel.refLineY(1.0, "#888", "Poisson");
  }
  if (overlays.includes("naive")) {
    panel.refLineY(naive, "#c02020", `naive (n+1)/2 = ${naive}`);
  }
  for (const [tab, color] of series) {
    const xx = column(tab, sweepName);
    const ff = column(tab, "fano_inf");
    const ee = column(tab, "fano_err");
    const [gx, gf] = finitePairs(xx, ff);
    panel.polyline(gx, gf, color, { cls: tab === table ? "data" : "kerr" });
    panel.errorBars(xx, ff, ee, color);
    panel.markers(gx, gf, color);
  }
  return svgDocument(MARGIN.left + PANEL_W + 160, MARGIN.top + PANEL_H + MARGIN.bottom,
                     [panel], caption(table));
}

/** Stacked conditional-trajectory panels: photon number, phonon number, displacement. */
export function trajectoryFigure(tables: Table[], overlays: OverlayName[],
                                 title?: string): string {
  if (tables.length === 0) {
    throw new Error("trajectory figure needs at least one input");
  }
  const colors = ["#1a56a0", "#2e8b57", "#b8860b", "#8b008b"];
  const rows: Array<[string, string]> = [
    ["n_photon", "photon number"],
    ["n_phonon", "phonon number"],
    ["x", "displacement <b+b'>"],
  ];
  const h = 120;
  const panels: Panel[] = [];
  const t0 = column(tables[0], "t");
  const tMax = Math.max(...tables.map((tab) => Math.max(...column(tab, "t"))));

  rows.forEach(([name, label], k) => {
    let lo = Infinity;
    let hi = -Infinity;
    for (const tab of tables) {
      for (const v of column(tab, name)) {
        if (Number.isFinite(v)) {
          lo = Math.min(lo, v);
          hi = Math.max(hi, v);
        }
      }
    }
    if (name === "x" && overlays.includes("resonance")) {
      const cfg = tables[0].provenance;
      const xRes = -configNumber(cfg, "detuning") / configNumber(cfg, "g0");
      lo = Math.min(lo, xRes);
      hi = Math.max(hi, xRes);
    }
    const [yLo, yHi] = expand(lo, hi);
    const panel = new Panel(`traj-${name}`, MARGIN.left, MARGIN.top + k * (h + 34),
      2 * PANEL_W, h, {
        x: linearScale([t0[0], tMax], [0, 2 * PANEL_W]),
        y: linearScale([yHi, yLo], [0, h]),
        xLabel: k === rows.length - 1 ? "time (1/Omega)" : "",
        yLabel: label,
        title: k === 0 ? title ?? "conditional quantum-jump trajectory" : undefined,
      });
    tables.forEach((tab, i) => {
      panel.polyline(column(tab, "t"), column(tab, name),
                     colors[i % colors.length], { cls: "data" });
    });
    if (k === 0) {
      tables.forEach((tab) => {
        const flags = column(tab, "jump_flag");
        const times = column(tab, "t");
        panel.jumpTicks(times.filter((_, i) => flags[i] > 0), "#c02020");
      });
    }
    if (name === "x" && overlays.includes("resonance")) {
      const cfg = tables[0].provenance;
      const xRes = -configNumber(cfg, "detuning") / configNumber(cfg, "g0");
      panel.refLineY(xRes, "#c02020", "cavity resonant");
    }
    panels.push(panel);
  });
  return svgDocument(MARGIN.left + 2 * PANEL_W + 24,
                     MARGIN.top + rows.length * (h + 34) + MARGIN.bottom - 10,
                     panels, caption(tables[0]));
}

const REGION_COLORS: Record<number, string> = {
  0: "#14326e",   // cascade regime
  1: "#9ecae1",   // n-photon rate loses to single-photon rate
  2: "#fdd0a2",   // kappa not small against |Delta|
  3: "#c7e9c0",   // n-photon rate not slow against kappa
};

/** Cascade-regime map over the (alpha_L, g0) grid. */
export function regimeMapFigure(table: Table, title?: string): string {
  const alpha = column(table, "alpha_L");
  const g0 = column(table, "g0");
  const region = column(table, "region");
  const alphas = [...new Set(alpha)].sort((a, b) => a - b);
  const g0s = [...new Set(g0)].sort((a, b) => a - b);

  const panel = new Panel("map", MARGIN.left, MARGIN.top, PANEL_W + 120, PANEL_H + 60, {
    x: logScale([alphas[0], alphas[alphas.length - 1]], [0, PANEL_W + 120]),
    y: linearScale([g0s[g0s.length - 1], g0s[0]], [0, PANEL_H + 60]),
    xLabel: "drive alpha_L (units of Omega)",
    yLabel: "coupling g0 (units of Omega)",
    title: title ?? "cascade regime map",
  });
  const edges = (vals: number[], log: boolean) => {
    const e: Array<[number, number]> = [];
    for (let i = 0; i < vals.length; i++) {
      const loNb = vals[i - 1];
      const hiNb = vals[i + 1];
      const lo = loNb === undefined ? vals[i]
        : log ? Math.sqrt(loNb * vals[i]) : (loNb + vals[i]) / 2;
      const hi = hiNb === undefined ? vals[i]
        : log ? Math.sqrt(hiNb * vals[i]) : (hiNb + vals[i]) / 2;
      e.push([lo, hi]);
    }
    return e;
  };
  const aEdges = new Map(alphas.map((v, i) => [v, edges(alphas, true)[i]]));
  const gEdges = new Map(g0s.map((v, i) => [v, edges(g0s, false)[i]]));
  for (let i = 0; i < region.length; i++) {
    const [x0, x1] = aEdges.get(alpha[i])!;
    const [y0, y1] = gEdges.get(g0[i])!;
    panel.cell(x0, x1, y0, y1, REGION_COLORS[region[i]] ?? "#eeeeee");
  }
  return svgDocument(MARGIN.left + PANEL_W + 170,
                     MARGIN.top + PANEL_H + 60 + MARGIN.bottom, [panel],
                     caption(table));
}
