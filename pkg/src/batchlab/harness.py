"""Run orchestration: stationary-statistics runs (burn-in plus long time
averages standing in for stationary expectations), mixing and half-life
experiments over a kappa sweep, Lyapunov-exponent runs, persistence and
replay.

Everything a run emits is attributable: CSV rows carry the run time, the
manifest carries the config hash, seed and canonical config text, and a run
re-executed from its manifest reproduces every CSV byte for byte.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, parse_config_text
from .diagnostics import (
    BesovMultiplier, band_mass, besov_norm, cumulative_spectrum, dyadic_levels,
    flux_budget, l2_balance, yaglom_flux,
)
from .fluid import FluidModel, FluidStepper, fluid_observables, lyapunov_function
from .forcing import ForcingSpec, NoiseStream, ScalarSourceSpec
from .lagrangian import (
    ParticleEnsemble, SpectralVelocity, advect, estimate_lyapunov,
    estimate_moment_lyapunov, qr_renormalize,
)
from .scalar import ScalarStepper, scalar_preset
from .snapshot import save_field
from .spectral import (
    Grid, SpectralField, l2_norm, sobolev_norm, transform_backward, zeros,
)


class RunAborted(RuntimeError):
    pass


def fmt(x) -> str:
    """Shortest round-trip decimal; CSV and manifest values go through here
    so replays are byte-identical."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("BSPC_THREADS", "1")))
    except ValueError:
        return 1


def _pool_map(fn, jobs):
    """Order-deterministic map, parallel across a process pool when allowed."""
    w = min(_workers(), len(jobs))
    if w <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, jobs, chunksize=1))


class SeriesStore:
    """Named time series with batch-means error bars and a split-half
    burn-in drift flag."""

    def __init__(self, n_batches: int = 20):
        self.n_batches = n_batches
        self.data: dict = {}

    def add(self, name: str, value: float):
        self.data.setdefault(name, []).append(float(value))

    def summary(self, name: str) -> dict:
        vals = np.asarray(self.data[name])
        n = len(vals)
        mean = float(np.mean(vals))
        b = min(self.n_batches, max(1, n // 2))
        if b >= 2:
            usable = (n // b) * b
            batches = vals[:usable].reshape(b, -1).mean(axis=1)
            stderr = float(np.std(batches, ddof=1) / math.sqrt(b))
        else:
            stderr = float("nan")
        # split-half drift: difference of half means against combined error
        h = n // 2
        drift = False
        if h >= 2:
            m1, m2 = np.mean(vals[:h]), np.mean(vals[h:2 * h])
            s1 = np.std(vals[:h], ddof=1) / math.sqrt(h)
            s2 = np.std(vals[h:2 * h], ddof=1) / math.sqrt(h)
            denom = math.hypot(s1, s2)
            drift = bool(denom > 0 and abs(m1 - m2) > 2.0 * denom)
        return {"mean": mean, "stderr": stderr, "batches": b, "count": n,
                "drift": drift}

    def names(self):
        return sorted(self.data)


class CsvWriter:
    def __init__(self, path, header):
        self.fh = open(path, "w")
        self.fh.write(",".join(header) + "\n")

    def row(self, *values):
        self.fh.write(",".join(fmt(v) if not isinstance(v, str) else v
                               for v in values) + "\n")

    def close(self):
        self.fh.close()


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    kind: str
    config: RunConfig
    observables: dict = field(default_factory=dict)   # label -> summary dict
    outputs: list = field(default_factory=list)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("batchlab-manifest v1\n")
            fh.write(f"kind = {self.kind}\n")
            fh.write(f"config_hash = {self.config.config_hash()}\n")
            fh.write(f"seed = {self.config.seed}\n")
            for w in self.config.warnings:
                fh.write(f"warning = {w}\n")
            fh.write("begin-config\n")
            fh.write(self.config.canonical_text())
            fh.write("end-config\n")
            fh.write("begin-observables\n")
            fh.write("label,mean,stderr,batches,count,drift\n")
            for label in sorted(self.observables):
                s = self.observables[label]
                fh.write(",".join([label, fmt(s["mean"]), fmt(s["stderr"]),
                                   str(s["batches"]), str(s["count"]),
                                   "1" if s["drift"] else "0"]) + "\n")
            fh.write("end-observables\n")
            for out in self.outputs:
                fh.write(f"output = {out}\n")


def load_manifest(path, with_observables: bool = False):
    """Returns (kind, RunConfig) parsed back from a manifest file, or
    (kind, RunConfig, observables) when with_observables is set."""
    kind = None
    config_lines = []
    observables = {}
    in_config = in_obs = False
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line == "begin-config":
                in_config = True
                continue
            if line == "end-config":
                in_config = False
                continue
            if line == "begin-observables":
                in_obs = True
                continue
            if line == "end-observables":
                in_obs = False
                continue
            if in_config:
                config_lines.append(line)
            elif in_obs:
                if line.startswith("label,"):
                    continue
                parts = line.split(",")
                label = ",".join(parts[:-5])
                mean, stderr, batches, count, drift = parts[-5:]
                observables[label] = {
                    "mean": float(mean), "stderr": float(stderr),
                    "batches": int(batches), "count": int(count),
                    "drift": drift == "1"}
            elif line.startswith("kind = "):
                kind = line.split("=", 1)[1].strip()
    if kind is None:
        raise RunAborted(f"{path}: not a batchlab manifest")
    cfg = parse_config_text("\n".join(config_lines))
    if with_observables:
        return kind, cfg, observables
    return kind, cfg


def ensure_run(kind: str, cfg: RunConfig):
    """Run, or reuse an existing completed run with the identical config.

    Determinism makes a cached run byte-equivalent to a fresh one; the config
    hash embedded in the manifest is the cache key.
    """
    manifest_path = os.path.join(cfg["run.output_dir"], "manifest.txt")
    if os.path.exists(manifest_path):
        old_kind, old_cfg, obs = load_manifest(manifest_path, with_observables=True)
        if old_kind == kind and old_cfg.config_hash() == cfg.config_hash():
            manifest = RunManifest(kind=kind, config=cfg, observables=obs)
            return manifest
    return _RUNNERS[kind](cfg)


# ---------------------------------------------------------------------------
# shared assembly

def build_grid(cfg: RunConfig) -> Grid:
    return Grid(cfg["grid.dim"], cfg["grid.n"])


def build_forcing(cfg: RunConfig, grid: Grid) -> ForcingSpec | None:
    amp = cfg["forcing.amplitude"]
    alpha = cfg["forcing.alpha"]
    if amp == 0.0:
        return None
    if cfg["fluid.model"] == "ou_tower":
        M = cfg["ou_tower.M"] or cfg["galerkin.N"]
        return ForcingSpec.low_modes(grid, int(M), alpha, amp)
    if cfg["forcing.mode_set"] == "low":
        return ForcingSpec.low_modes(grid, cfg["forcing.kmax_inf"], alpha, amp)
    return ForcingSpec.full_spectrum(grid, alpha, amp)


def build_model(cfg: RunConfig) -> FluidModel:
    is_truncated = cfg["fluid.model"] in ("galerkin", "ou_tower")
    return FluidModel(tag=cfg["fluid.model"], nu=cfg["fluid.nu"],
                      nu_prime=cfg["fluid.nu_prime"],
                      galerkin_N=cfg["galerkin.N"] if is_truncated else None,
                      tower_M=int(cfg["ou_tower.M"]) if cfg["ou_tower.M"] else None,
                      tower_depth=cfg["ou_tower.depth"],
                      tower_amplitude=cfg["ou_tower.amplitude"])


def build_source(cfg: RunConfig, grid: Grid) -> ScalarSourceSpec:
    if cfg["source.b"] == "band":
        return ScalarSourceSpec.preset_band(grid, cfg["source.k_b"],
                                            seed=cfg.seed, chi=cfg["source.chi"])
    return ScalarSourceSpec.preset_cos_sin(grid, chi=cfg["source.chi"],
                                           k_b=cfg["source.k_b"])


# stream roles: per ensemble member, fluid noise / scalar source / initial data
_ROLE_FLUID, _ROLE_SCALAR, _ROLE_INIT, _ROLE_PARTICLES = 0, 1, 2, 3


def member_stream(cfg: RunConfig, member: int, role: int) -> NoiseStream:
    return NoiseStream(cfg.seed, 16 * member + role)


# ---------------------------------------------------------------------------
# stationary runs

def _fit_levels(grid: Grid, k_b: int) -> list:
    """Half-dyadic cumulative levels from the source scale to the dealiased
    edge, for the log-law fit."""
    lo = 2 * k_b
    out = []
    x = float(lo)
    while x <= grid.k_max_dealiased:
        out.append(int(round(x)))
        x *= math.sqrt(2.0)
    return sorted(set(out))


def _stationary_single(args):
    cfg, kappa, member, out_dir = args
    grid = build_grid(cfg)
    model = build_model(cfg)
    forcing = build_forcing(cfg, grid)
    source = build_source(cfg, grid)
    chi = cfg["source.chi"]
    dt = cfg["fluid.dt"]
    fluid = FluidStepper(model, forcing, grid, dt, cfg["fluid.cfl"])
    scal = ScalarStepper(grid, kappa, dt,
                         source=source if cfg["scalar.source_on"] else None,
                         cfl=cfg["fluid.cfl"], warn_resolution=False)
    f_stream = member_stream(cfg, member, _ROLE_FLUID)
    s_stream = member_stream(cfg, member, _ROLE_SCALAR)

    fstate = fluid.initial_state()
    sstate = scal.initial_state()

    diag_steps = max(1, int(round(cfg["run.diag_interval"] / dt)))
    # align the burn-in boundary with the diagnostic grid so every averaging
    # window has the same length
    n_burn = int(round(cfg["run.t_burn"] / dt))
    n_burn = ((n_burn + diag_steps - 1) // diag_steps) * diag_steps
    n_avg = int(round(cfg["run.t_average"] / dt))
    yag_every = max(1, cfg["run.yaglom_every"])
    flux_levels = cfg.flux_levels()
    fit_levels = _fit_levels(grid, cfg["source.k_b"])
    ells = cfg.yaglom_ells(grid)
    multiplier = BesovMultiplier.log_default()
    dy_levels = dyadic_levels(grid)

    store = SeriesStore()
    writers = {}
    if member == 0:
        os.makedirs(out_dir, exist_ok=True)
        os.makedirs(os.path.join(out_dir, "snapshots"), exist_ok=True)
        writers = {
            "spectrum": CsvWriter(os.path.join(out_dir, "spectrum.csv"),
                                  ["t", "N", "cumulative", "shell"]),
            "flux": CsvWriter(os.path.join(out_dir, "flux.csv"),
                              ["t", "N", "flux", "kappa_gradN", "half_bN"]),
            "balance": CsvWriter(os.path.join(out_dir, "balance.csv"),
                                 ["t", "ratio"]),
            "yaglom": CsvWriter(os.path.join(out_dir, "yaglom.csv"),
                                ["t", "ell", "flux", "target"]),
            "besov": CsvWriter(os.path.join(out_dir, "besov.csv"),
                               ["t", "norm"]),
            "scalar_series": CsvWriter(os.path.join(out_dir, "scalar_series.csv"),
                                       ["t", "L2", "H1", "Hm1", "mean"]),
            "fluid_series": CsvWriter(os.path.join(out_dir, "fluid_series.csv"),
                                      ["t", "energy", "enstrophy", "h_sigma", "V"]),
        }
    # run-health V function at half the drift threshold eta*
    from .fluid import eta_star
    eta_v = 0.5 * eta_star(model, forcing, grid.dim) if forcing is not None else 0.01
    snap_every = cfg["run.snapshot_every"]
    snap_steps = int(round(snap_every / dt)) if snap_every > 0 else 0

    target_yaglom = -(2.0 / grid.dim) * chi
    diag_count = 0
    mart_window = 0.0       # accumulated source cross term 2 <g, b> xi sqrt(dt)
    h_diag = diag_steps * dt
    last_good = (fstate.u.copy(), sstate.g.copy(), 0.0)
    try:
        for i in range(n_burn + n_avg):
            u_prev = fstate.u
            u_real = transform_backward(u_prev)
            sstate = scal.step(sstate, u_prev, s_stream, i, u_real=u_real)
            fstate = fluid.step(fstate, f_stream, i, u_real=u_real)
            if i >= n_burn:
                mart_window += scal.last_source_mart
            if (i + 1) % diag_steps != 0:
                continue
            t = sstate.t
            g, u = sstate.g, fstate.u
            gl2 = l2_norm(g)
            if member == 0:
                writers["scalar_series"].row(t, gl2, sobolev_norm(g, 1.0),
                                             sobolev_norm(g, -1.0),
                                             float(g.coeffs[(0,) * grid.dim].real))
                obs = fluid_observables(u)
                v_val, _ = lyapunov_function(u, beta=0.0, eta=eta_v)
                writers["fluid_series"].row(t, obs["energy"], obs["enstrophy"],
                                            obs["h_sigma_norm"], v_val)
                if snap_steps and (i + 1) % snap_steps == 0:
                    save_field(u, os.path.join(out_dir, "snapshots",
                                               f"u_t{t:.3f}.bspc"))
                    save_field(g, os.path.join(out_dir, "snapshots",
                                               f"g_t{t:.3f}.bspc"))
            if i < n_burn:
                continue
            diag_count += 1
            last_good = (u.copy(), g.copy(), t)

            ratio = l2_balance(g, kappa, chi)
            store.add("balance", ratio)
            # control-variate version: subtract the realized source noise
            # cross term (mean exactly zero), which carries most of the
            # estimator variance on mixing timescales
            store.add("balance_cv", ratio - mart_window / (chi * h_diag))
            store.add("l2_total", gl2 ** 2)
            spec = cumulative_spectrum(g, dy_levels, t=t)
            for N, cum, sh in zip(spec.Ns, spec.cumulative, spec.shell):
                store.add(f"shell@{N}", sh)
                if member == 0:
                    writers["spectrum"].row(t, int(N), cum, sh)
            for N in fit_levels:
                store.add(f"cumulative@{N}", band_mass(g, N))
            from .scalar import advection_term
            adv = advection_term(u, g)
            for N in flux_levels:
                fl, dis, hb = flux_budget(u, g, source.b, kappa, N, adv=adv)
                store.add(f"flux@{N}", fl)
                # N >= k_b, so Pi_N b = b and the same cross term applies
                store.add(f"flux_cv@{N}", fl - mart_window / (2.0 * h_diag))
                store.add(f"flux_diss@{N}", dis)
                store.add(f"flux_halfb@{N}", hb)
                if member == 0:
                    writers["flux"].row(t, N, fl, dis, hb)
            mart_window = 0.0
            bn = besov_norm(g, multiplier)
            store.add("besov", bn)
            if member == 0:
                writers["balance"].row(t, ratio)
                writers["besov"].row(t, bn)
            if diag_count % yag_every == 0:
                for ell in ells:
                    yf = yaglom_flux(u, g, ell)
                    store.add(f"yaglom@{ell:.6g}", yf)
                    if member == 0:
                        writers["yaglom"].row(t, ell, yf, target_yaglom)
    except (RuntimeError, ValueError) as exc:
        if last_good is not None and member == 0:
            save_field(last_good[0], os.path.join(out_dir, "snapshots",
                                                  "last_good_u.bspc"))
            save_field(last_good[1], os.path.join(out_dir, "snapshots",
                                                  "last_good_g.bspc"))
        raise RunAborted(f"kappa = {kappa:g}, member {member}: {exc}") from exc
    finally:
        for w in writers.values():
            w.close()

    if member == 0:
        save_field(fstate.u, os.path.join(out_dir, "snapshots", "final_u.bspc"))
        save_field(sstate.g, os.path.join(out_dir, "snapshots", "final_g.bspc"))
    return {name: store.summary(name) for name in store.names()}


def run_stationary(cfg: RunConfig) -> RunManifest:
    out_root = cfg["run.output_dir"]
    os.makedirs(out_root, exist_ok=True)
    manifest = RunManifest(kind="stationary", config=cfg)
    jobs = []
    for kappa in cfg.kappa_sweep():
        for member in range(cfg["run.ensemble_size"]):
            jobs.append((cfg, kappa, member,
                         os.path.join(out_root, f"kappa_{kappa:g}")))
    results = _pool_map(_stationary_single, jobs)
    # pool per kappa: ensemble members average together
    by_kappa: dict = {}
    for (_cfg, kappa, member, _dir), res in zip(jobs, results):
        by_kappa.setdefault(kappa, []).append(res)
    for kappa, members in by_kappa.items():
        names = members[0].keys()
        for name in names:
            if len(members) == 1:
                summ = members[0][name]
            else:
                means = [m[name]["mean"] for m in members]
                summ = {"mean": float(np.mean(means)),
                        "stderr": float(np.std(means, ddof=1) / math.sqrt(len(means))),
                        "batches": len(means), "count": sum(m[name]["count"]
                                                            for m in members),
                        "drift": any(m[name]["drift"] for m in members)}
            manifest.observables[f"kappa={kappa:g}/{name}"] = summ
        manifest.outputs.append(os.path.join(out_root, f"kappa_{kappa:g}"))
    manifest.save(os.path.join(out_root, "manifest.txt"))
    # averages.csv per kappa directory for downstream plotting
    for kappa in by_kappa:
        kdir = os.path.join(out_root, f"kappa_{kappa:g}")
        w = CsvWriter(os.path.join(kdir, "averages.csv"),
                      ["observable", "mean", "stderr", "batches", "count", "drift"])
        prefix = f"kappa={kappa:g}/"
        for label in sorted(manifest.observables):
            if label.startswith(prefix):
                s = manifest.observables[label]
                w.row(label[len(prefix):], s["mean"], s["stderr"],
                      s["batches"], s["count"], 1 if s["drift"] else 0)
        w.close()
    return manifest


# ---------------------------------------------------------------------------
# mixing runs

def _fit_exponential_rate(ts, values, start_frac=0.7, floor_frac=1e-4):
    """Least-squares decay rate of log(values) between the first drop below
    start_frac of the initial value and the noise floor."""
    v0 = values[0]
    mask = (values > floor_frac * v0) & (values < start_frac * v0)
    if np.count_nonzero(mask) < 3:
        return float("nan"), (float("nan"), float("nan"))
    tt, vv = ts[mask], np.log(values[mask])
    slope, _ = np.polyfit(tt, vv, 1)
    return float(-slope), (float(tt[0]), float(tt[-1]))


def _mixing_path(args):
    """One fluid realization; every kappa in the sweep rides the same path
    (the uniform-in-kappa statements compare rates at fixed realization)."""
    cfg, path_id = args
    grid = build_grid(cfg)
    model = build_model(cfg)
    forcing = build_forcing(cfg, grid)
    dt = cfg["fluid.dt"]
    f_stream = member_stream(cfg, path_id, _ROLE_FLUID)
    fluid = FluidStepper(model, forcing, grid, dt, cfg["fluid.cfl"])
    fstate = fluid.initial_state()
    n_spin = int(round(cfg["mix.t_burn_fluid"] / dt))
    for i in range(n_spin):
        fstate = fluid.step(fstate, f_stream, i)

    g0 = scalar_preset(grid, cfg["scalar.g0"], seed=cfg.seed + path_id)
    kappas = cfg.kappa_sweep()
    steppers = [ScalarStepper(grid, kappa, dt, source=None,
                              cfl=cfg["fluid.cfl"], warn_resolution=False)
                for kappa in kappas]
    sstates = [s.initial_state(g0) for s in steppers]
    diag_steps = max(1, int(round(cfg["run.diag_interval"] / dt)))
    horizon_steps = int(round(cfg["mix.horizon"] / dt))
    v0 = l2_norm(g0)
    recs = [{"kappa": kappa, "path": path_id, "t": [0.0], "L2": [v0],
             "H1": [sobolev_norm(g0, 1.0)], "Hm1": [sobolev_norm(g0, -1.0)],
             "tau_star": None, "reached": False,
             "_prev": (0.0, v0)} for kappa in kappas]
    for i in range(horizon_steps):
        u_prev = fstate.u
        u_real = transform_backward(u_prev)
        for j, scal in enumerate(steppers):
            sstates[j] = scal.step(sstates[j], u_prev, None, i, u_real=u_real)
        fstate = fluid.step(fstate, f_stream, n_spin + i, u_real=u_real)
        if (i + 1) % diag_steps == 0:
            for j, rec in enumerate(recs):
                g = sstates[j].g
                v = l2_norm(g)
                prev_t, prev_v = rec["_prev"]
                if not rec["reached"] and v < 0.5 * v0:
                    frac = (prev_v - 0.5 * v0) / max(prev_v - v, 1e-300)
                    rec["tau_star"] = prev_t + frac * (sstates[j].t - prev_t)
                    rec["reached"] = True
                rec["_prev"] = (sstates[j].t, v)
                rec["t"].append(sstates[j].t)
                rec["L2"].append(v)
                rec["H1"].append(sobolev_norm(g, 1.0))
                rec["Hm1"].append(sobolev_norm(g, -1.0))
    for rec in recs:
        rate, window = _fit_exponential_rate(np.array(rec["t"]),
                                             np.array(rec["Hm1"]))
        rec["rate_hm1"] = rate
        rec["fit_window"] = window
        rec["final_ratio"] = rec["L2"][-1] / v0
        del rec["_prev"]
    return recs


def run_mixing(cfg: RunConfig) -> RunManifest:
    out_root = cfg["run.output_dir"]
    os.makedirs(out_root, exist_ok=True)
    jobs = [(cfg, p) for p in range(cfg["mix.n_paths"])]
    results = [rec for recs in _pool_map(_mixing_path, jobs) for rec in recs]
    curves = CsvWriter(os.path.join(out_root, "mixing_curves.csv"),
                       ["kappa", "path", "t", "L2", "H1", "Hm1"])
    fits = CsvWriter(os.path.join(out_root, "mixing_fits.csv"),
                     ["kappa", "path", "rate_hm1", "fit_t0", "fit_t1",
                      "tau_star", "reached", "final_ratio"])
    manifest = RunManifest(kind="mixing", config=cfg)
    by_kappa: dict = {}
    for res in results:
        for t, a, b, c in zip(res["t"], res["L2"], res["H1"], res["Hm1"]):
            curves.row(res["kappa"], res["path"], t, a, b, c)
        fits.row(res["kappa"], res["path"], res["rate_hm1"],
                 res["fit_window"][0], res["fit_window"][1],
                 res["tau_star"] if res["tau_star"] is not None else float("nan"),
                 1 if res["reached"] else 0, res["final_ratio"])
        by_kappa.setdefault(res["kappa"], []).append(res)
    curves.close()
    fits.close()
    summary = CsvWriter(os.path.join(out_root, "mixing_summary.csv"),
                        ["kappa", "rate_median", "rate_lo", "rate_hi",
                         "tau_median", "n_reached", "n_paths"])
    for kappa in sorted(by_kappa):
        rs = [r["rate_hm1"] for r in by_kappa[kappa]
              if np.isfinite(r["rate_hm1"])]
        taus = [r["tau_star"] for r in by_kappa[kappa] if r["reached"]]
        rate_med = float(np.median(rs)) if rs else float("nan")
        lo = float(np.min(rs)) if rs else float("nan")
        hi = float(np.max(rs)) if rs else float("nan")
        tau_med = float(np.median(taus)) if taus else float("nan")
        summary.row(kappa, rate_med, lo, hi, tau_med, len(taus),
                    len(by_kappa[kappa]))
        manifest.observables[f"kappa={kappa:g}/rate_hm1"] = {
            "mean": rate_med, "stderr": (hi - lo) / 2 if rs else float("nan"),
            "batches": len(rs), "count": len(rs), "drift": False}
        manifest.observables[f"kappa={kappa:g}/tau_star"] = {
            "mean": tau_med, "stderr": float("nan"), "batches": len(taus),
            "count": len(taus), "drift": False}
    summary.close()
    manifest.outputs.append(out_root)
    manifest.save(os.path.join(out_root, "manifest.txt"))
    return manifest


# ---------------------------------------------------------------------------
# Lyapunov runs

def run_lyapunov(cfg: RunConfig) -> RunManifest:
    out_root = cfg["run.output_dir"]
    os.makedirs(out_root, exist_ok=True)
    grid = build_grid(cfg)
    model = build_model(cfg)
    forcing = build_forcing(cfg, grid)
    dt = cfg["fluid.dt"]
    fluid = FluidStepper(model, forcing, grid, dt, cfg["fluid.cfl"])
    f_stream = member_stream(cfg, 0, _ROLE_FLUID)
    fstate = fluid.initial_state()
    n_spin = int(round(cfg["mix.t_burn_fluid"] / dt))
    for i in range(n_spin):
        fstate = fluid.step(fstate, f_stream, i)

    ens = ParticleEnsemble.uniform(grid, cfg["particles.count"],
                                   seed=cfg["particles.seed"])
    t_qr = cfg["particles.t_qr"]
    qr_steps = max(1, int(round(t_qr / dt)))
    # checkpoints must land on QR boundaries
    check_steps = qr_steps * max(1, int(round(cfg["particles.checkpoint_every"] / t_qr)))
    horizon_steps = int(round(cfg["particles.horizon"] / dt))
    cutoff = cfg["particles.mode_cutoff"]
    d = grid.dim

    csv = CsvWriter(os.path.join(out_root, "lyapunov.csv"),
                    ["t"] + [f"lambda_{i + 1}" for i in range(d)]
                    + [f"lambda_{i + 1}_lo" for i in range(d)]
                    + [f"lambda_{i + 1}_hi" for i in range(d)]
                    + ["sum", "sum_lo", "sum_hi", "det_drift"])
    checkpoint_ts, top_logs = [], []
    est = None
    for i in range(horizon_steps):
        u_prev = fstate.u
        u_real = transform_backward(u_prev)
        sampler = SpectralVelocity(u_prev, amp_cutoff=cutoff)
        ens = advect(ens, sampler, dt)
        fstate = fluid.step(fstate, f_stream, n_spin + i, u_real=u_real)
        if (i + 1) % qr_steps == 0:
            drift = ens.det_drift()
            ens = qr_renormalize(ens)
            if (i + 1) % check_steps == 0:
                checkpoint_ts.append(ens.t)
                top_logs.append(np.asarray(ens.qr_log_sums[:, 0], dtype=float))
                if ens.t >= 10.0 * t_qr:
                    est = estimate_lyapunov(ens, t_qr, seed=cfg.seed)
                    csv.row(ens.t, *est.exponents, *est.ci_low, *est.ci_high,
                            est.sum_exponents, est.sum_ci[0], est.sum_ci[1],
                            drift)
    csv.close()

    manifest = RunManifest(kind="lyapunov", config=cfg)
    if est is not None:
        for i in range(d):
            manifest.observables[f"lambda_{i + 1}"] = {
                "mean": float(est.exponents[i]), "stderr":
                    float(est.ci_high[i] - est.ci_low[i]) / 4.0,
                "batches": est.count, "count": est.count, "drift": False}
        manifest.observables["sum_lambda"] = {
            "mean": est.sum_exponents,
            "stderr": (est.sum_ci[1] - est.sum_ci[0]) / 4.0,
            "batches": est.count, "count": est.count, "drift": False}
    # moment exponents from the checkpoint history
    if len(checkpoint_ts) >= 3:
        import warnings as _w
        with _w.catch_warnings():
            _w.simplefilter("ignore")
            table = estimate_moment_lyapunov(checkpoint_ts, top_logs,
                                             [0.1, 0.25, 0.5, 1.0])
        w = CsvWriter(os.path.join(out_root, "moment_exponents.csv"),
                      ["p", "Lambda", "fit_t0", "fit_t1"])
        for p, lam in zip(table.p_values, table.estimates):
            w.row(p, lam, table.fit_window[0], table.fit_window[1])
        w.close()
    manifest.outputs.append(out_root)
    manifest.save(os.path.join(out_root, "manifest.txt"))
    return manifest


# ---------------------------------------------------------------------------
# replay

_RUNNERS = {"stationary": run_stationary, "mixing": run_mixing,
            "lyapunov": run_lyapunov}


def replay(manifest_path: str, out_dir: str) -> RunManifest:
    """Re-execute a run from its manifest into a fresh directory; outputs are
    bit-identical to the original by the determinism contract."""
    kind, cfg = load_manifest(manifest_path)
    cfg.values["run.output_dir"] = out_dir
    runner = _RUNNERS.get(kind)
    if runner is None:
        raise RunAborted(f"cannot replay manifest of kind {kind!r}")
    return runner(cfg)
