/** The figure kinds: spectrum, cumulative, mixing, halflife, yaglom, toy.
 *
 * Inputs are the CSV schemas published by the simulation harness; every
 * renderer returns the SVG text plus the fitted quantities it annotated,
 * so callers can persist the numbers alongside the image.
 */

import { averageBy, column, CsvError, groupBy, readCsv, Table } from "./csv.js";
import { fitLine, fitWindow, LineFit } from "./fit.js";
import { Figure, linearScale, logScale, niceTicks, PALETTE } from "./svg.js";

export interface RenderResult {
  svg: string;
  fits: Record<string, number>;
}

export interface FigureOptions {
  inputs: string[];
  kappa?: number;          // draws the kappa^(-1/2) dissipative marker
  window?: [number, number];
  title?: string;
}

function dissipativeMarker(fig: Figure, scale: (v: number) => number, kappa: number,
                           lo: number, hi: number) {
  const kd = 1 / Math.sqrt(kappa);
  if (kd <= lo || kd >= hi) return;
  const b = fig.plotBox;
  const x = scale(kd);
  fig.line(x, b.y0, x, b.y1, "#888", 1, "4 3");
  fig.text(x + 3, b.y1 + 12, "kappa^-1/2", { size: 10, fill: "#888" });
}

/** Shared log-log spectral-density plot: points (n, density), a reference
 * -1 slope anchored in the fit window, and the fitted slope annotation. */
function densityFigure(ns: number[], dens: number[], window: [number, number],
                       title: string, kappa?: number,
                       extra?: Array<{ ns: number[]; dens: number[]; label: string }>):
    RenderResult {
  const keep = ns.map((n, i) => [n, dens[i]] as [number, number])
    .filter(([n, d]) => n > 0 && d > 0);
  if (keep.length < 2) throw new CsvError("no positive spectral densities to plot");
  const kn = keep.map(([n]) => n);
  const kd = keep.map(([, d]) => d);
  const fit = fitWindow(kn.map(Math.log), kd.map(Math.log),
                        Math.log(window[0]), Math.log(window[1]));

  const fig = new Figure();
  const b = fig.plotBox;
  const xlo = Math.min(...kn), xhi = Math.max(...kn);
  const ylo = Math.min(...kd), yhi = Math.max(...kd);
  const sx = logScale(xlo, xhi, b.x0, b.x1);
  const sy = logScale(ylo, yhi, b.y0, b.y1);
  fig.axes(title, "frequency n", "spectral density");
  fig.logTicksX(sx, xlo, xhi);
  fig.logTicksY(sy, ylo, yhi);

  // inertial window shading
  const wx0 = sx(Math.max(window[0], xlo));
  const wx1 = sx(Math.min(window[1], xhi));
  if (wx1 > wx0) fig.rect(wx0, b.y1, wx1 - wx0, b.y0 - b.y1, "#dce8f5", 0.45);

  fig.polyline(keep.map(([n, d]) => [sx(n), sy(d)] as [number, number]), PALETTE[0]);
  keep.forEach(([n, d]) => fig.circle(sx(n), sy(d), 2.2, PALETTE[0]));

  if (extra) {
    extra.forEach((e, j) => {
      const pts = e.ns.map((n, i) => [n, e.dens[i]] as [number, number])
        .filter(([n, d]) => n > 0 && d > 0);
      fig.polyline(pts.map(([n, d]) => [sx(n), sy(d)] as [number, number]), PALETTE[(j + 2) % PALETTE.length]);
    });
  }

  // reference slope -1 anchored at the window centre
  const mid = Math.sqrt(window[0] * window[1]);
  const anchor = Math.exp(fit.intercept + fit.slope * Math.log(mid));
  const r0 = Math.max(window[0], xlo), r1 = Math.min(window[1], xhi);
  fig.polyline([
    [sx(r0), sy(anchor * (mid / r0))],
    [sx(r1), sy(anchor * (mid / r1))],
  ], "#444", 1);
  fig.text(sx(r1), sy(anchor * (mid / r1)) - 5, "slope -1", { size: 10, fill: "#444", anchor: "end" });

  if (kappa !== undefined) dissipativeMarker(fig, sx, kappa, xlo, xhi);
  const label = `fitted slope ${fit.slope.toFixed(2)} +- ${(isNaN(fit.slopeStderr) ? 0 : fit.slopeStderr).toFixed(2)}`;
  fig.legend([{ label, color: PALETTE[0] }]);
  return {
    svg: fig.render(),
    fits: { slope: fit.slope, slope_stderr: fit.slopeStderr, r2: fit.r2,
            window_lo: window[0], window_hi: window[1] },
  };
}

export function renderToy(opts: FigureOptions): RenderResult {
  const t = readCsv(opts.inputs[0]);
  const ns = column(t, "n", opts.inputs[0]);
  const gam = column(t, "Gamma", opts.inputs[0]);
  const ref = column(t, "reference", opts.inputs[0]);
  const window = opts.window ?? [1e2, 1e3];
  const res = densityFigure(ns, gam, window, opts.title ?? "pure-strain power spectral density",
                            opts.kappa, [{ ns, dens: ref, label: "chi/(gamma n)" }]);
  return res;
}

export function renderSpectrum(opts: FigureOptions): RenderResult {
  // time-averaged dyadic shells -> density estimate shell(N) / (N - N/2)
  const path = opts.inputs[0];
  const t = readCsv(path);
  const { keys, means } = averageBy(t, "N", "shell", path);
  const dens: number[] = [];
  const ns: number[] = [];
  for (let i = 0; i < keys.length; i++) {
    const width = keys[i] / 2 > 0 ? keys[i] - keys[i] / 2 : 1;
    if (means[i] > 0) {
      ns.push(keys[i]);
      dens.push(means[i] / width);
    }
  }
  if (ns.length === 0) throw new CsvError(`${path}: all shell averages are zero`);
  const kd = opts.kappa !== undefined ? 1 / Math.sqrt(opts.kappa) : Math.max(...ns);
  const window = opts.window ?? [4, 0.8 * kd];
  // overlay additional kappa curves when several inputs are given
  const extra = opts.inputs.slice(1).map((p) => {
    const tt = readCsv(p);
    const a = averageBy(tt, "N", "shell", p);
    return {
      ns: a.keys,
      dens: a.keys.map((k, i) => a.means[i] / (k / 2 > 0 ? k / 2 : 1)),
      label: p,
    };
  });
  return densityFigure(ns, dens, window,
                       opts.title ?? "scalar power spectral density", opts.kappa, extra);
}

export function renderCumulative(opts: FigureOptions): RenderResult {
  const path = opts.inputs[0];
  const t = readCsv(path);
  const { keys, means } = averageBy(t, "N", "cumulative", path);
  const kd = opts.kappa !== undefined ? 1 / Math.sqrt(opts.kappa) : Math.max(...keys);
  const window = opts.window ?? [4, 0.8 * kd];
  const fit = fitWindow(keys.map(Math.log), means, Math.log(window[0]), Math.log(window[1]));

  const fig = new Figure();
  const b = fig.plotBox;
  const sx = logScale(Math.min(...keys), Math.max(...keys), b.x0, b.x1);
  const ylo = 0, yhi = Math.max(...means) * 1.05;
  const sy = linearScale(ylo, yhi, b.y0, b.y1);
  fig.axes(opts.title ?? "cumulative spectrum vs log N", "N", "||P_N g||^2");
  fig.logTicksX(sx, Math.min(...keys), Math.max(...keys));
  fig.linTicksY(sy, niceTicks(ylo, yhi), (v) => v.toPrecision(3));
  const wx0 = sx(Math.max(window[0], Math.min(...keys)));
  const wx1 = sx(Math.min(window[1], Math.max(...keys)));
  if (wx1 > wx0) fig.rect(wx0, b.y1, wx1 - wx0, b.y0 - b.y1, "#dce8f5", 0.45);
  fig.polyline(keys.map((k, i) => [sx(k), sy(means[i])] as [number, number]), PALETTE[0]);
  keys.forEach((k, i) => fig.circle(sx(k), sy(means[i]), 2.5, PALETTE[0]));
  // fitted log law across the window
  const r0 = Math.max(window[0], Math.min(...keys));
  const r1 = Math.min(window[1], Math.max(...keys));
  fig.polyline([
    [sx(r0), sy(fit.intercept + fit.slope * Math.log(r0))],
    [sx(r1), sy(fit.intercept + fit.slope * Math.log(r1))],
  ], "#444", 1);
  if (opts.kappa !== undefined) {
    dissipativeMarker(fig, sx, opts.kappa, Math.min(...keys), Math.max(...keys));
  }
  fig.legend([{
    label: `slope ${fit.slope.toFixed(3)} per log N (R2 ${fit.r2.toFixed(3)})`,
    color: PALETTE[0],
  }]);
  return { svg: fig.render(), fits: { slope: fit.slope, r2: fit.r2 } };
}

export function renderMixing(opts: FigureOptions): RenderResult {
  const path = opts.inputs[0];
  const t = readCsv(path);
  const byKappa = groupBy(t, "kappa", path);
  const it = column(t, "t", path);
  const ihm = column(t, "Hm1", path);
  const ipath = column(t, "path", path);
  void it; void ihm; void ipath;
  const tIdx = t.columns.indexOf("t");
  const hmIdx = t.columns.indexOf("Hm1");
  const pIdx = t.columns.indexOf("path");

  const fig = new Figure();
  const b = fig.plotBox;
  let tmax = 0, hlo = Infinity, hhi = 0;
  for (const rows of byKappa.values()) {
    for (const r of rows) {
      tmax = Math.max(tmax, r[tIdx]);
      if (r[hmIdx] > 0) {
        hlo = Math.min(hlo, r[hmIdx]);
        hhi = Math.max(hhi, r[hmIdx]);
      }
    }
  }
  const sx = linearScale(0, tmax, b.x0, b.x1);
  const sy = logScale(hlo, hhi, b.y0, b.y1);
  fig.axes(opts.title ?? "mixing decay", "t", "||g||_H-1");
  fig.linTicksX(sx, niceTicks(0, tmax));
  fig.logTicksY(sy, hlo, hhi);

  const fits: Record<string, number> = {};
  const legend: Array<{ label: string; color: string }> = [];
  let ci = 0;
  for (const [kappa, rows] of byKappa) {
    const color = PALETTE[ci % PALETTE.length];
    const paths = new Map<number, number[][]>();
    rows.forEach((r) => {
      if (!paths.has(r[pIdx])) paths.set(r[pIdx], []);
      paths.get(r[pIdx])!.push(r);
    });
    const rates: number[] = [];
    for (const prows of paths.values()) {
      const pts = prows.filter((r) => r[hmIdx] > 0)
        .map((r) => [sx(r[tIdx]), sy(r[hmIdx])] as [number, number]);
      fig.polyline(pts, color, 1.0);
      const h0 = prows[0][hmIdx];
      const sel = prows.filter((r) => r[hmIdx] > 1e-4 * h0 && r[hmIdx] < 0.7 * h0);
      if (sel.length >= 3) {
        const f = fitLine(sel.map((r) => r[tIdx]), sel.map((r) => Math.log(r[hmIdx])));
        rates.push(-f.slope);
      }
    }
    const med = rates.length
      ? rates.sort((a, b) => a - b)[Math.floor(rates.length / 2)] : NaN;
    fits[`rate_kappa_${kappa}`] = med;
    legend.push({ label: `kappa=${kappa}: rate ${med.toFixed(3)}`, color });
    ci += 1;
  }
  fig.legend(legend);
  return { svg: fig.render(), fits };
}

export function renderHalflife(opts: FigureOptions): RenderResult {
  const path = opts.inputs[0];
  const t = readCsv(path);
  const kappas = column(t, "kappa", path);
  const taus = column(t, "tau_median", path);
  const pts = kappas.map((k, i) => [Math.abs(Math.log(k)), taus[i]] as [number, number])
    .filter(([, tau]) => isFinite(tau));
  if (pts.length < 2) throw new CsvError(`${path}: need >= 2 finite tau values`);
  const fit = fitLine(pts.map((p) => p[0]), pts.map((p) => p[1]));

  const fig = new Figure();
  const b = fig.plotBox;
  const xlo = Math.min(...pts.map((p) => p[0])) * 0.9;
  const xhi = Math.max(...pts.map((p) => p[0])) * 1.05;
  const yhi = Math.max(...pts.map((p) => p[1])) * 1.15;
  const sx = linearScale(xlo, xhi, b.x0, b.x1);
  const sy = linearScale(0, yhi, b.y0, b.y1);
  fig.axes(opts.title ?? "half-life vs |log kappa|", "|log kappa|", "tau*");
  fig.linTicksX(sx, niceTicks(xlo, xhi), (v) => v.toPrecision(3));
  fig.linTicksY(sy, niceTicks(0, yhi), (v) => v.toPrecision(3));
  pts.forEach(([x, y]) => fig.circle(sx(x), sy(y), 3.5, PALETTE[0]));
  fig.polyline([
    [sx(xlo), sy(fit.intercept + fit.slope * xlo)],
    [sx(xhi), sy(fit.intercept + fit.slope * xhi)],
  ], "#444", 1);
  fig.legend([{
    label: `slope ${fit.slope.toFixed(3)} (R2 ${fit.r2.toFixed(3)})`,
    color: PALETTE[0],
  }]);
  return { svg: fig.render(), fits: { slope: fit.slope, r2: fit.r2 } };
}

export function renderYaglom(opts: FigureOptions): RenderResult {
  const path = opts.inputs[0];
  const t = readCsv(path);
  const { keys: ells, means: fluxes } = averageBy(t, "ell", "flux", path);
  const target = column(t, "target", path)[0];
  const ratios = fluxes.map((f) => f / target);

  const fig = new Figure();
  const b = fig.plotBox;
  const xlo = Math.min(...ells), xhi = Math.max(...ells);
  const ylo = Math.min(0, ...ratios) - 0.1;
  const yhi = Math.max(1.6, ...ratios) + 0.1;
  const sx = logScale(xlo, xhi, b.x0, b.x1);
  const sy = linearScale(ylo, yhi, b.y0, b.y1);
  fig.axes(opts.title ?? "structure-function flux plateau", "ell", "flux / target");
  fig.logTicksX(sx, xlo, xhi);
  fig.linTicksY(sy, niceTicks(ylo, yhi), (v) => v.toPrecision(2));
  // the acceptance band [0.6, 1.4] around the plateau
  fig.rect(b.x0, sy(1.4), b.x1 - b.x0, sy(0.6) - sy(1.4), "#e4f0e4", 0.6);
  fig.line(b.x0, sy(1.0), b.x1, sy(1.0), "#444", 1, "4 3");
  fig.polyline(ells.map((e, i) => [sx(e), sy(ratios[i])] as [number, number]), PALETTE[0]);
  ells.forEach((e, i) => fig.circle(sx(e), sy(ratios[i]), 2.5, PALETTE[0]));

  // widest contiguous run of ells inside the band, in decades
  let best = 0, cur0 = -1;
  let bestLo = NaN, bestHi = NaN;
  for (let i = 0; i <= ells.length; i++) {
    const ok = i < ells.length && ratios[i] >= 0.6 && ratios[i] <= 1.4;
    if (ok && cur0 < 0) cur0 = i;
    if (!ok && cur0 >= 0) {
      const span = Math.log10(ells[i - 1] / ells[cur0]);
      if (span > best) { best = span; bestLo = ells[cur0]; bestHi = ells[i - 1]; }
      cur0 = -1;
    }
  }
  if (best > 0) {
    fig.rect(sx(bestLo), b.y1, sx(bestHi) - sx(bestLo), b.y0 - b.y1, "#dce8f5", 0.35);
  } else {
    fig.note("no plateau inside the band");
  }
  fig.legend([{ label: `plateau ${best.toFixed(2)} decades`, color: PALETTE[0] }]);
  return { svg: fig.render(), fits: { plateau_decades: best, plateau_lo: bestLo, plateau_hi: bestHi } };
}

export const RENDERERS: Record<string, (o: FigureOptions) => RenderResult> = {
  toy: renderToy,
  spectrum: renderSpectrum,
  cumulative: renderCumulative,
  mixing: renderMixing,
  halflife: renderHalflife,
  yaglom: renderYaglom,
};
