/** Deterministic SVG scene building: fixed size, fixed styles, no
 * environment-dependent state, so identical inputs give identical bytes. */

export type Scale = (v: number) => number;

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const k = (r1 - r0) / (d1 - d0);
  return (v: number) => r0 + (v - d0) * k;
}

export function logScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const l0 = Math.log10(d0);
  const k = (r1 - r0) / (Math.log10(d1) - l0);
  return (v: number) => r0 + (Math.log10(v) - l0) * k;
}

function f(v: number): string {
  // fixed 2-decimal pixel coordinates keep output stable and compact
  return v.toFixed(2);
}

export const PALETTE = ["#1f5fa8", "#c44e52", "#2e8b57", "#8172b2", "#b8860b", "#4f9da6"];

export class Figure {
  readonly width: number;
  readonly height: number;
  readonly margin = { left: 64, right: 16, top: 34, bottom: 46 };
  private parts: string[] = [];

  constructor(width = 640, height = 440) {
    this.width = width;
    this.height = height;
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
      `<rect width="${width}" height="${height}" fill="white"/>`,
    );
  }

  get plotBox() {
    return {
      x0: this.margin.left,
      x1: this.width - this.margin.right,
      y0: this.height - this.margin.bottom,   // y grows downward in SVG
      y1: this.margin.top,
    };
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash = "") {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(`<line x1="${f(x1)}" y1="${f(y1)}" x2="${f(x2)}" y2="${f(y2)}" stroke="${stroke}" stroke-width="${width}"${d}/>`);
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.5) {
    const s = pts.map(([x, y]) => `${f(x)},${f(y)}`).join(" ");
    this.parts.push(`<polyline points="${s}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`);
  }

  circle(x: number, y: number, r: number, fill: string) {
    this.parts.push(`<circle cx="${f(x)}" cy="${f(y)}" r="${r}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1) {
    this.parts.push(`<rect x="${f(x)}" y="${f(y)}" width="${f(w)}" height="${f(h)}" fill="${fill}" fill-opacity="${opacity}"/>`);
  }

  text(x: number, y: number, s: string, opts: { anchor?: string; size?: number; fill?: string; rotate?: boolean } = {}) {
    const anchor = opts.anchor ?? "start";
    const size = opts.size ?? 12;
    const fill = opts.fill ?? "#222";
    const esc = s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
    const tr = opts.rotate ? ` transform="rotate(-90 ${f(x)} ${f(y)})"` : "";
    this.parts.push(`<text x="${f(x)}" y="${f(y)}" font-family="sans-serif" font-size="${size}" fill="${fill}" text-anchor="${anchor}"${tr}>${esc}</text>`);
  }

  axes(title: string, xlabel: string, ylabel: string) {
    const b = this.plotBox;
    this.line(b.x0, b.y0, b.x1, b.y0, "#222");
    this.line(b.x0, b.y0, b.x0, b.y1, "#222");
    this.text((b.x0 + b.x1) / 2, this.height - 10, xlabel, { anchor: "middle" });
    this.text(16, (b.y0 + b.y1) / 2, ylabel, { anchor: "middle", rotate: true });
    this.text((b.x0 + b.x1) / 2, 20, title, { anchor: "middle", size: 14 });
  }

  logTicksX(scale: Scale, lo: number, hi: number) {
    const b = this.plotBox;
    for (let e = Math.ceil(Math.log10(lo)); e <= Math.floor(Math.log10(hi)); e++) {
      const v = Math.pow(10, e);
      const x = scale(v);
      this.line(x, b.y0, x, b.y0 + 4, "#222");
      this.text(x, b.y0 + 17, `1e${e}`, { anchor: "middle", size: 10 });
    }
  }

  logTicksY(scale: Scale, lo: number, hi: number) {
    const b = this.plotBox;
    for (let e = Math.ceil(Math.log10(lo)); e <= Math.floor(Math.log10(hi)); e++) {
      const v = Math.pow(10, e);
      const y = scale(v);
      this.line(b.x0 - 4, y, b.x0, y, "#222");
      this.text(b.x0 - 6, y + 3, `1e${e}`, { anchor: "end", size: 10 });
    }
  }

  linTicksX(scale: Scale, ticks: number[], fmt: (v: number) => string = (v) => String(v)) {
    const b = this.plotBox;
    for (const v of ticks) {
      const x = scale(v);
      this.line(x, b.y0, x, b.y0 + 4, "#222");
      this.text(x, b.y0 + 17, fmt(v), { anchor: "middle", size: 10 });
    }
  }

  linTicksY(scale: Scale, ticks: number[], fmt: (v: number) => string = (v) => String(v)) {
    const b = this.plotBox;
    for (const v of ticks) {
      const y = scale(v);
      this.line(b.x0 - 4, y, b.x0, y, "#222");
      this.text(b.x0 - 6, y + 3, fmt(v), { anchor: "end", size: 10 });
    }
  }

  legend(entries: Array<{ label: string; color: string }>) {
    const b = this.plotBox;
    let y = b.y1 + 14;
    for (const e of entries) {
      this.line(b.x1 - 180, y - 4, b.x1 - 160, y - 4, e.color, 2);
      this.text(b.x1 - 154, y, e.label, { size: 11 });
      y += 15;
    }
  }

  note(s: string) {
    const b = this.plotBox;
    this.text(b.x0 + 6, b.y1 + 14, s, { size: 11, fill: "#a33" });
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export function niceTicks(lo: number, hi: number, count = 5): number[] {
  const span = hi - lo;
  if (span <= 0) return [lo];
  const step0 = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (step0 <= m * mag) { step = m * mag; break; }
  }
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += step) {
    out.push(Math.abs(v) < 1e-12 * span ? 0 : Number(v.toPrecision(12)));
  }
  return out;
}
