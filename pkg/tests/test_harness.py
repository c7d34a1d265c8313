"""Tests for config parsing, snapshots, the run harness, replay, and CLI."""

import math
import os

import numpy as np
import pytest

from batchlab.config import ConfigError, parse_config_text
from batchlab.harness import (
    RunAborted, SeriesStore, load_manifest, replay, run_lyapunov, run_mixing,
    run_stationary,
)
from batchlab.snapshot import SnapshotError, load_field, save_field
from batchlab.spectral import Grid, l2_norm
from conftest import random_divfree_field, random_real_field


def cfg_text(**kw):
    base = {
        "grid.n": 16, "fluid.dt": 0.02, "forcing.amplitude": 0.3,
        "forcing.mode_set": "low", "scalar.kappa": 0.05,
        "run.t_burn": 1.0, "run.t_average": 2.0, "run.diag_interval": 0.2,
    }
    base.update(kw)
    return "\n".join(f"{k} = {v}" for k, v in base.items())


class TestConfig:
    def test_defaults_and_overrides(self):
        cfg = parse_config_text("grid.n = 64\nscalar.kappa = 1e-3\n")
        assert cfg["grid.n"] == 64
        assert cfg["scalar.kappa"] == 1e-3
        assert cfg["fluid.model"] == "nse2d"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("grid.size = 64\n")

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text("# comment\n\ngrid.n = 32  # trailing\n")
        assert cfg["grid.n"] == 32

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            parse_config_text("fluid.nu = -1\n")
        with pytest.raises(ConfigError):
            parse_config_text("forcing.alpha = 3.0\n")   # violates > 5d/2
        with pytest.raises(ConfigError):
            parse_config_text("run.kappa_sweep = 1e-3,-1e-4\n")
        with pytest.raises(Exception):
            parse_config_text("grid.n = 24\n")           # non power of two

    def test_resolution_warning_recorded_not_fatal(self):
        cfg = parse_config_text("grid.n = 16\nscalar.kappa = 1e-4\n")
        assert any("exceeds" in w for w in cfg.warnings)

    def test_hash_stable_and_sensitive(self):
        a = parse_config_text("grid.n = 32\n")
        b = parse_config_text("grid.n = 32\n")
        c = parse_config_text("grid.n = 64\n")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_kappa_sweep_parsing(self):
        cfg = parse_config_text("run.kappa_sweep = 1e-3,3e-4,1e-4\n")
        assert cfg.kappa_sweep() == [1e-3, 3e-4, 1e-4]


class TestSnapshot:
    def test_round_trip_bit_exact(self, tmp_path):
        for rank, seed in (("scalar", 1), ("vector", 2)):
            f = random_real_field(Grid(2, 16), rank, seed=seed)
            p = tmp_path / f"f_{rank}.bspc"
            save_field(f, p)
            g = load_field(p)
            assert np.array_equal(f.coeffs, g.coeffs)
            assert g.grid == f.grid

    def test_3d_round_trip(self, tmp_path):
        f = random_real_field(Grid(3, 8), "vector", seed=3)
        save_field(f, tmp_path / "f.bspc")
        assert np.array_equal(load_field(tmp_path / "f.bspc").coeffs, f.coeffs)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bspc"
        p.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(SnapshotError, match="magic"):
            load_field(p)

    def test_version_mismatch(self, tmp_path):
        import struct
        p = tmp_path / "v9.bspc"
        p.write_bytes(struct.pack("<4sIIII", b"BSPC", 9, 2, 16, 1))
        with pytest.raises(SnapshotError, match="version"):
            load_field(p)

    def test_truncated_payload(self, tmp_path):
        import struct
        p = tmp_path / "short.bspc"
        p.write_bytes(struct.pack("<4sIIII", b"BSPC", 1, 2, 16, 1) + b"\0" * 10)
        with pytest.raises(SnapshotError, match="truncated"):
            load_field(p)


class TestSeriesStore:
    def test_stationary_series_not_flagged(self):
        store = SeriesStore()
        rng = np.random.default_rng(0)
        for v in rng.standard_normal(400):
            store.add("x", 5.0 + v)
        s = store.summary("x")
        assert abs(s["mean"] - 5.0) < 0.2
        assert not s["drift"]
        assert s["batches"] == 20

    def test_trending_series_flagged(self):
        store = SeriesStore()
        for i in range(400):
            store.add("x", i * 0.01)
        assert store.summary("x")["drift"]

    def test_batch_error_bars_shrink_with_window(self):
        # stderr estimates are themselves noisy; average the ratio over seeds
        ratios = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            errs = []
            for n in (400, 1600):
                store = SeriesStore()
                for v in rng.standard_normal(n):
                    store.add("x", v)
                errs.append(store.summary("x")["stderr"])
            ratios.append(errs[1] / errs[0])
        # 4x window: expect ~1/2
        assert 0.35 < np.mean(ratios) < 0.65


class TestStationaryRun:
    def test_diffusive_control_matches_ou_sum(self, tmp_path):
        # u = 0 (no forcing): stationary E ||g||^2 equals the per-mode OU sum
        # sum |b_hat|^2 (2pi)^d / (2 kappa |k|^2) = chi / (2 kappa) for |k|=1
        # sources, within 5%; the balance observable sits at 1 within 10%
        kappa = 0.25
        cfg = parse_config_text(cfg_text(**{
            "grid.n": 8, "fluid.dt": 0.05, "forcing.amplitude": 0.0,
            "scalar.kappa": kappa, "run.t_burn": 20.0, "run.t_average": 200.0,
            "run.diag_interval": 0.25, "run.ensemble_size": 8,
            "run.output_dir": str(tmp_path / "ou"), "run.flux_levels": "2",
        }))
        manifest = run_stationary(cfg)
        target = 1.0 / (2 * kappa)
        got = manifest.observables[f"kappa={kappa:g}/l2_total"]
        assert abs(got["mean"] - target) < 0.05 * target
        bal = manifest.observables[f"kappa={kappa:g}/balance"]
        assert abs(bal["mean"] - 1.0) < 0.1

    def test_outputs_and_schemas(self, tmp_path):
        cfg = parse_config_text(cfg_text(**{
            "run.output_dir": str(tmp_path / "run1")}))
        run_stationary(cfg)
        kdir = tmp_path / "run1" / "kappa_0.05"
        heads = {
            "spectrum.csv": "t,N,cumulative,shell",
            "flux.csv": "t,N,flux,kappa_gradN,half_bN",
            "balance.csv": "t,ratio",
            "yaglom.csv": "t,ell,flux,target",
            "besov.csv": "t,norm",
            "scalar_series.csv": "t,L2,H1,Hm1,mean",
            "fluid_series.csv": "t,energy,enstrophy,h_sigma,V",
            "averages.csv": "observable,mean,stderr,batches,count,drift",
        }
        for name, head in heads.items():
            first = (kdir / name).read_text().splitlines()[0]
            assert first == head, name
        assert (kdir / "snapshots" / "final_u.bspc").exists()
        assert (kdir / "snapshots" / "final_g.bspc").exists()
        assert (tmp_path / "run1" / "manifest.txt").exists()

    def test_replay_bit_identical(self, tmp_path):
        cfg = parse_config_text(cfg_text(**{
            "run.output_dir": str(tmp_path / "orig")}))
        run_stationary(cfg)
        replay(str(tmp_path / "orig" / "manifest.txt"), str(tmp_path / "again"))
        for sub in ("kappa_0.05/spectrum.csv", "kappa_0.05/flux.csv",
                    "kappa_0.05/balance.csv", "kappa_0.05/averages.csv",
                    "kappa_0.05/scalar_series.csv",
                    "kappa_0.05/snapshots/final_g.bspc"):
            a = (tmp_path / "orig" / sub).read_bytes()
            b = (tmp_path / "again" / sub).read_bytes()
            assert a == b, sub

    def test_manifest_round_trip(self, tmp_path):
        cfg = parse_config_text(cfg_text(**{
            "run.output_dir": str(tmp_path / "m")}))
        run_stationary(cfg)
        kind, cfg2 = load_manifest(str(tmp_path / "m" / "manifest.txt"))
        assert kind == "stationary"
        assert cfg2.config_hash() == cfg.config_hash()

    def test_abort_saves_last_good(self, tmp_path):
        # violent forcing at a huge dt trips the CFL guard; the run aborts
        # with the last good snapshot on disk
        cfg = parse_config_text(cfg_text(**{
            "forcing.amplitude": 80.0, "fluid.dt": 0.1,
            "run.t_burn": 0.1, "run.t_average": 50.0,
            "run.diag_interval": 0.1,
            "run.output_dir": str(tmp_path / "boom")}))
        with pytest.raises(RunAborted):
            run_stationary(cfg)
        assert (tmp_path / "boom" / "kappa_0.05" / "snapshots"
                / "last_good_u.bspc").exists()

    def test_error_bars_shrink_on_doubled_window(self, tmp_path):
        # batch lengths must dominate the correlation time 1/(2 kappa) in
        # both windows for the T^(-1/2) law to show cleanly
        def stderr_of(t_avg, out):
            cfg = parse_config_text(cfg_text(**{
                "grid.n": 8, "fluid.dt": 0.05, "forcing.amplitude": 0.0,
                "scalar.kappa": 0.5, "run.t_burn": 10.0,
                "run.t_average": t_avg, "run.diag_interval": 0.25,
                "run.flux_levels": "2",
                "run.output_dir": str(tmp_path / out)}))
            m = run_stationary(cfg)
            return m.observables["kappa=0.5/l2_total"]["stderr"]

        e1 = stderr_of(200.0, "short")
        e2 = stderr_of(800.0, "long")
        # 4x window: expect roughly half the error bar
        assert 0.25 * e1 < e2 < 0.8 * e1


class TestMixingRun:
    def test_zero_velocity_control_rates(self, tmp_path):
        # u = 0: H^-1 rate is the heat rate kappa |k0|^2 for the single-mode
        # preset, and tau* = log 2 / (kappa |k0|^2) (|k0| = 2)
        kappa = 0.05
        cfg = parse_config_text(cfg_text(**{
            "grid.n": 16, "fluid.dt": 0.05, "forcing.amplitude": 0.0,
            "scalar.kappa": kappa, "scalar.g0": "single_mode",
            "mix.horizon": 60.0, "mix.n_paths": 1, "mix.t_burn_fluid": 0.5,
            "run.diag_interval": 0.25,
            "run.output_dir": str(tmp_path / "mix0")}))
        manifest = run_mixing(cfg)
        # the H^-1 norm of e^{kappa Delta t} g0 decays at exactly kappa |k0|^2
        rate = manifest.observables[f"kappa={kappa:g}/rate_hm1"]["mean"]
        assert abs(rate - kappa * 4.0) < 0.05 * (kappa * 4.0)
        tau = manifest.observables[f"kappa={kappa:g}/tau_star"]["mean"]
        expect = math.log(2) / (kappa * 4.0)
        assert abs(tau - expect) < 0.05 * expect

    def test_curves_schema(self, tmp_path):
        cfg = parse_config_text(cfg_text(**{
            "grid.n": 16, "fluid.dt": 0.02, "forcing.amplitude": 0.3,
            "scalar.kappa": 0.05, "mix.horizon": 2.0, "mix.n_paths": 2,
            "mix.t_burn_fluid": 0.5,
            "run.output_dir": str(tmp_path / "mixs")}))
        run_mixing(cfg)
        head = (tmp_path / "mixs" / "mixing_curves.csv").read_text().splitlines()[0]
        assert head == "kappa,path,t,L2,H1,Hm1"
        head = (tmp_path / "mixs" / "mixing_fits.csv").read_text().splitlines()[0]
        assert head == "kappa,path,rate_hm1,fit_t0,fit_t1,tau_star,reached,final_ratio"


class TestLyapunovRun:
    def test_strainless_control_and_csv(self, tmp_path):
        # weak forcing, short run: just exercises the machinery end to end
        cfg = parse_config_text(cfg_text(**{
            "grid.n": 16, "fluid.dt": 0.02, "forcing.amplitude": 0.4,
            "mix.t_burn_fluid": 1.0, "particles.count": 16,
            "particles.t_qr": 0.5, "particles.horizon": 8.0,
            "particles.checkpoint_every": 1.0,
            "run.output_dir": str(tmp_path / "lyap")}))
        manifest = run_lyapunov(cfg)
        lines = (tmp_path / "lyap" / "lyapunov.csv").read_text().splitlines()
        assert lines[0].startswith("t,lambda_1,lambda_2")
        assert len(lines) > 2
        assert "lambda_1" in manifest.observables
        assert (tmp_path / "lyap" / "moment_exponents.csv").exists()


class TestCli:
    def test_unknown_subcommand_usage_error(self, capsys):
        from batchlab.cli import main
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_toy_csv(self, tmp_path, capsys):
        from batchlab.cli import main
        out = tmp_path / "toy.csv"
        assert main(["toy", "--gamma", "1", "--kappa", "1e-8",
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n,Gamma,cumulative,reference"
        n, gamma_val, cum, ref = (float(x) for x in lines[40].split(","))
        assert abs(gamma_val * n - ref * n) < 0.06 * ref * n

    def test_snapshot_diagnostics_commands(self, tmp_path, capsys):
        from batchlab.cli import main
        g = random_real_field(Grid(2, 16), seed=5)
        u = random_divfree_field(Grid(2, 16), seed=6)
        save_field(g, tmp_path / "g.bspc")
        save_field(u, tmp_path / "u.bspc")
        assert main(["spectrum", "--snapshot", str(tmp_path / "g.bspc"),
                     "--out", str(tmp_path / "spec.csv")]) == 0
        assert (tmp_path / "spec.csv").read_text().splitlines()[0] == \
            "t,N,cumulative,shell"
        assert main(["flux", "--velocity", str(tmp_path / "u.bspc"),
                     "--scalar", str(tmp_path / "g.bspc"), "--levels", "4"]) == 0
        assert main(["yaglom", "--velocity", str(tmp_path / "u.bspc"),
                     "--scalar", str(tmp_path / "g.bspc"), "--ells", "0.3"]) == 0
        out = capsys.readouterr().out
        assert "0.3" in out

    def test_simulate_and_replay_cli(self, tmp_path):
        from batchlab.cli import main
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text(cfg_text(**{"run.output_dir": str(tmp_path / "c1")}))
        assert main(["simulate", "--config", str(cfgfile)]) == 0
        assert main(["replay", "--manifest",
                     str(tmp_path / "c1" / "manifest.txt"),
                     "--out", str(tmp_path / "c2")]) == 0
        a = (tmp_path / "c1" / "kappa_0.05" / "balance.csv").read_bytes()
        b = (tmp_path / "c2" / "kappa_0.05" / "balance.csv").read_bytes()
        assert a == b


class TestCheckpointsAndTower:
    def test_snapshot_cadence(self, tmp_path):
        cfg = parse_config_text(cfg_text(**{
            "run.output_dir": str(tmp_path / "snap"),
        }) + "\nrun.snapshot_every = 1.0\n")
        run_stationary(cfg)
        snaps = sorted((tmp_path / "snap" / "kappa_0.05" / "snapshots").iterdir())
        names = [s.name for s in snaps]
        assert any(n.startswith("u_t") for n in names)
        assert any(n.startswith("g_t") for n in names)
        # checkpoints are loadable fields
        from batchlab.snapshot import load_field
        f = load_field([s for s in snaps if s.name.startswith("g_t")][0])
        assert f.grid.n == 16

    def test_ou_tower_band_split(self, tmp_path):
        # Z chains extend to |m|_inf <= M but Q only drives |m|_inf <= N
        cfg = parse_config_text(cfg_text(**{
            "fluid.model": "ou_tower", "forcing.amplitude": 1.0,
            "run.output_dir": str(tmp_path / "tower"),
        }) + "\ngalerkin.N = 2\nou_tower.M = 3\n")
        from batchlab.harness import build_forcing, build_grid, build_model
        grid = build_grid(cfg)
        model = build_model(cfg)
        forcing = build_forcing(cfg, grid)
        assert int(np.max(np.abs(forcing.mode_k))) == 3
        from batchlab.fluid import FluidStepper
        stepper = FluidStepper(model, forcing, grid, cfg["fluid.dt"])
        kinf = np.max(np.abs(forcing.mode_k), axis=1)
        assert np.all(stepper._tower_q[kinf > 2] == 0)
        assert np.all(stepper._tower_q[kinf <= 2] > 0)
        run_stationary(cfg)   # runs clean end to end
