/**
 * Minimal SVG scene builder: linear/log scales with sensible ticks, panels
 * with framed axes, polylines, error bars, reference lines, and heatmap
 * cells.  Rendering is a pure string assembly, so identical inputs always
 * produce identical files.
 */

export interface Scale {
  (v: number): number;
  ticks(): number[];
  domain: [number, number];
  kind: "linear" | "log";
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.kind = "linear";
  f.ticks = () => {
    const step = niceStep(span / 5);
    const first = Math.ceil(d0 / step) * step;
    const out: number[] = [];
    for (let v = first; v <= d1 + 1e-12 * Math.abs(span); v += step) {
      out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
    }
    return out;
  };
  return f;
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  if (d0 <= 0 || d1 <= 0) {
    throw new Error("log scale needs a positive domain");
  }
  const [r0, r1] = range;
  const l0 = Math.log10(d0);
  const span = Math.log10(d1) - l0 || 1;
  const f = ((v: number) => r0 + ((Math.log10(v) - l0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.kind = "log";
  f.ticks = () => {
    const out: number[] = [];
    for (let e = Math.ceil(l0 - 1e-9); e <= Math.log10(d1) + 1e-9; e += 1) {
      out.push(10 ** e);
    }
    if (out.length >= 2) {
      return out;
    }
    // sub-decade domain: a few geometrically spaced ticks instead
    const n = 4;
    return Array.from({ length: n + 1 },
                      (_, i) => 10 ** (l0 + (span * i) / n));
  };
  return f;
}

function niceStep(raw: number): number {
  const mag = 10 ** Math.floor(Math.log10(Math.abs(raw) || 1));
  const unit = raw / mag;
  const nice = unit < 1.5 ? 1 : unit < 3.5 ? 2 : unit < 7.5 ? 5 : 10;
  return nice * mag;
}

export function formatTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const e = Math.floor(Math.log10(a));
    const m = v / 10 ** e;
    const mantissa = Math.abs(m - 1) < 1e-9 ? "" : `${trim(m)}x`;
    return `${mantissa}1e${e}`;
  }
  return trim(v);
}

function trim(v: number): string {
  return parseFloat(v.toPrecision(4)).toString();
}

const esc = (s: string) => s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
const fx = (v: number) => (Math.round(v * 100) / 100).toString();

export interface PanelOptions {
  x: Scale;
  y: Scale;
  xLabel: string;
  yLabel: string;
  title?: string;
}

/** One framed plotting panel; elements are clipped to the frame. */
export class Panel {
  private body: string[] = [];
  constructor(
    readonly id: string,
    readonly left: number,
    readonly top: number,
    readonly width: number,
    readonly height: number,
    readonly opts: PanelOptions,
  ) {}

  private px(v: number): number {
    return this.left + this.opts.x(v);
  }

  private py(v: number): number {
    return this.top + this.opts.y(v);
  }

  polyline(xs: number[], ys: number[], stroke: string, opts: {
    width?: number; dash?: string; cls?: string } = {}): void {
    const pts: string[] = [];
    for (let i = 0; i < xs.length; i++) {
      if (!Number.isFinite(xs[i]) || !Number.isFinite(ys[i])) continue;
      pts.push(`${fx(this.px(xs[i]))},${fx(this.py(ys[i]))}`);
    }
    const dash = opts.dash ? ` stroke-dasharray="${opts.dash}"` : "";
    const cls = opts.cls ? ` class="${opts.cls}"` : "";
    this.body.push(`<polyline${cls} fill="none" stroke="${stroke}" ` +
      `stroke-width="${opts.width ?? 1.5}"${dash} points="${pts.join(" ")}"/>`);
  }

  markers(xs: number[], ys: number[], fill: string, r = 2.4, cls = "pt"): void {
    for (let i = 0; i < xs.length; i++) {
      if (!Number.isFinite(xs[i]) || !Number.isFinite(ys[i])) continue;
      this.body.push(`<circle class="${cls}" cx="${fx(this.px(xs[i]))}" ` +
        `cy="${fx(this.py(ys[i]))}" r="${r}" fill="${fill}"/>`);
    }
  }

  errorBars(xs: number[], ys: number[], errs: number[], stroke: string): void {
    for (let i = 0; i < xs.length; i++) {
      if (!Number.isFinite(ys[i]) || !Number.isFinite(errs[i])) continue;
      const x = fx(this.px(xs[i]));
      const yLo = fx(this.py(ys[i] - errs[i]));
      const yHi = fx(this.py(ys[i] + errs[i]));
      this.body.push(`<line class="err" x1="${x}" x2="${x}" y1="${yLo}" ` +
        `y2="${yHi}" stroke="${stroke}" stroke-width="1"/>`);
    }
  }

  refLineY(value: number, stroke: string, label?: string): void {
    const y = fx(this.py(value));
    const x0 = fx(this.left + this.opts.x(this.opts.x.domain[0]));
    const x1 = fx(this.left + this.opts.x(this.opts.x.domain[1]));
    this.body.push(`<line class="ref" x1="${x0}" x2="${x1}" y1="${y}" y2="${y}" ` +
      `stroke="${stroke}" stroke-width="1" stroke-dasharray="5,3"/>`);
    if (label) {
      this.body.push(`<text class="ref-label" x="${x1}" y="${fx(this.py(value) - 3)}" ` +
        `text-anchor="end" font-size="9" fill="${stroke}">${esc(label)}</text>`);
    }
  }

  cell(x0: number, x1: number, y0: number, y1: number, fill: string): void {
    const px0 = this.px(x0);
    const py1 = this.py(y1);
    this.body.push(`<rect class="cell" x="${fx(px0)}" y="${fx(py1)}" ` +
      `width="${fx(this.px(x1) - px0)}" height="${fx(this.py(y0) - py1)}" fill="${fill}"/>`);
  }

  jumpTicks(xs: number[], stroke: string): void {
    const y0 = this.top;
    const y1 = this.top + 8;
    for (const x of xs) {
      this.body.push(`<line class="jump" x1="${fx(this.px(x))}" x2="${fx(this.px(x))}" ` +
        `y1="${fx(y0)}" y2="${fx(y1)}" stroke="${stroke}" stroke-width="1"/>`);
    }
  }

  render(): string {
    const out: string[] = [`<g id="${this.id}">`];
    const { x, y, xLabel, yLabel, title } = this.opts;
    out.push(`<rect x="${fx(this.left)}" y="${fx(this.top)}" width="${fx(this.width)}" ` +
      `height="${fx(this.height)}" fill="white" stroke="black" stroke-width="1"/>`);
    for (const t of x.ticks()) {
      const pxv = this.px(t);
      out.push(`<line x1="${fx(pxv)}" x2="${fx(pxv)}" y1="${fx(this.top + this.height)}" ` +
        `y2="${fx(this.top + this.height + 4)}" stroke="black"/>`);
      out.push(`<text x="${fx(pxv)}" y="${fx(this.top + this.height + 14)}" ` +
        `text-anchor="middle" font-size="9">${esc(formatTick(t))}</text>`);
    }
    for (const t of y.ticks()) {
      const pyv = this.py(t);
      out.push(`<line x1="${fx(this.left - 4)}" x2="${fx(this.left)}" y1="${fx(pyv)}" ` +
        `y2="${fx(pyv)}" stroke="black"/>`);
      out.push(`<text x="${fx(this.left - 6)}" y="${fx(pyv + 3)}" text-anchor="end" ` +
        `font-size="9">${esc(formatTick(t))}</text>`);
    }
    out.push(`<text x="${fx(this.left + this.width / 2)}" ` +
      `y="${fx(this.top + this.height + 28)}" text-anchor="middle" ` +
      `font-size="11">${esc(xLabel)}</text>`);
    out.push(`<text transform="translate(${fx(this.left - 38)},` +
      `${fx(this.top + this.height / 2)}) rotate(-90)" text-anchor="middle" ` +
      `font-size="11">${esc(yLabel)}</text>`);
    if (title) {
      out.push(`<text x="${fx(this.left + 4)}" y="${fx(this.top - 6)}" ` +
        `font-size="11" font-weight="bold">${esc(title)}</text>`);
    }
    out.push(...this.body);
    out.push("</g>");
    return out.join("\n");
  }
}

export function svgDocument(width: number, height: number, panels: Panel[],
                            caption?: string): string {
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
  ];
  for (const p of panels) {
    parts.push(p.render());
  }
  if (caption) {
    parts.push(`<text x="8" y="${height - 6}" font-size="8" fill="#555">` +
      `${esc(caption)}</text>`);
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
