/** Least-squares line fits with R^2 and slope standard error. */

export interface LineFit {
  slope: number;
  intercept: number;
  r2: number;
  slopeStderr: number;
  n: number;
}

export function fitLine(xs: number[], ys: number[]): LineFit {
  const n = xs.length;
  if (n < 2 || ys.length !== n) {
    throw new Error(`line fit needs >= 2 matched points, got ${n}/${ys.length}`);
  }
  const mx = xs.reduce((a, b) => a + b, 0) / n;
  const my = ys.reduce((a, b) => a + b, 0) / n;
  let sxx = 0, sxy = 0, syy = 0;
  for (let i = 0; i < n; i++) {
    const dx = xs[i] - mx;
    const dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx === 0) throw new Error("line fit with degenerate x values");
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  let ssRes = 0;
  for (let i = 0; i < n; i++) {
    const r = ys[i] - (intercept + slope * xs[i]);
    ssRes += r * r;
  }
  const r2 = syy === 0 ? 1 : 1 - ssRes / syy;
  const slopeStderr = n > 2 ? Math.sqrt(ssRes / (n - 2) / sxx) : NaN;
  return { slope, intercept, r2, slopeStderr, n };
}

/** Fit restricted to points with lo <= x <= hi (in the original scale). */
export function fitWindow(xs: number[], ys: number[], lo: number, hi: number): LineFit {
  const fx: number[] = [];
  const fy: number[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (xs[i] >= lo && xs[i] <= hi && isFinite(ys[i])) {
      fx.push(xs[i]);
      fy.push(ys[i]);
    }
  }
  return fitLine(fx, fy);
}
