"""Tests for tracer advection, tangent maps, and Lyapunov estimators."""

import math

import numpy as np
import pytest

from batchlab.lagrangian import (
    BilinearVelocity, LagrangianError, ParticleEnsemble, SpectralVelocity,
    advect, advect_field, estimate_lyapunov, estimate_moment_lyapunov,
    qr_renormalize,
)
from batchlab.spectral import Grid, transform_forward, zeros
from conftest import random_divfree_field

TAU = 2 * math.pi


def taylor_green_strain(grid, gamma=1.0):
    """u = gamma (sin x cos y, -cos x sin y): stagnation point at the origin
    with velocity gradient exactly gamma diag(1, -1)."""
    x, y = grid.mesh()
    return transform_forward(
        np.stack([gamma * np.sin(x) * np.cos(y),
                  -gamma * np.cos(x) * np.sin(y)]), grid)


class TestVelocitySampling:
    def test_matches_grid_values(self):
        grid = Grid(2, 32)
        u = random_divfree_field(grid, seed=1)
        from batchlab.spectral import transform_backward
        u_real = transform_backward(u)
        sampler = SpectralVelocity(u)
        pts = np.array([[0.0, 0.0], [TAU / 32 * 5, TAU / 32 * 11]])
        vals = sampler.velocity(pts)
        assert abs(vals[0, 0] - u_real[0, 0, 0]) < 1e-12
        assert abs(vals[1, 1] - u_real[1, 5, 11]) < 1e-12

    def test_gradient_matches_finite_difference(self):
        grid = Grid(2, 32)
        u = random_divfree_field(grid, seed=2)
        sampler = SpectralVelocity(u)
        p = np.array([[1.234, 2.345]])
        _, G = sampler.velocity_and_gradient(p)
        h = 1e-6
        for a in range(2):
            dp = np.zeros((1, 2))
            dp[0, a] = h
            fd = (sampler.velocity(p + dp) - sampler.velocity(p - dp)) / (2 * h)
            assert np.max(np.abs(G[0, :, a] - fd[0])) < 1e-6

    def test_amp_cutoff_drops_modes(self):
        grid = Grid(2, 32)
        u = random_divfree_field(grid, seed=3)
        full = SpectralVelocity(u, amp_cutoff=0.0)
        trimmed = SpectralVelocity(u, amp_cutoff=0.5)
        assert trimmed.K.shape[0] < full.K.shape[0]

    def test_bilinear_close_to_exact(self):
        # accuracy claim is O(h^2) for resolved fields: compare on a
        # low-frequency velocity
        from batchlab.spectral import SpectralField, sharp_projection
        grid = Grid(2, 64)
        u = random_divfree_field(grid, seed=4)
        u = sharp_projection(u, 4)
        pts = np.random.default_rng(0).uniform(0, TAU, (50, 2))
        exact = SpectralVelocity(u).velocity(pts)
        approx = BilinearVelocity(u).velocity(pts)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(exact - approx)) < 0.05 * scale


class TestAdvection:
    def test_zero_velocity_fixes_everything(self):
        grid = Grid(2, 16)
        ens = ParticleEnsemble.uniform(grid, 10, seed=1)
        out = advect_field(ens, zeros(grid, "vector"), 0.1)
        assert np.array_equal(out.positions, ens.positions)
        assert np.allclose(out.tangents, np.eye(2), atol=1e-15)

    def test_uniform_translation(self):
        grid = Grid(2, 16)
        x, y = grid.mesh()
        c = 0.7
        u = transform_forward(np.stack([np.full_like(x, c), np.zeros_like(x)]), grid)
        ens = ParticleEnsemble.uniform(grid, 8, seed=2)
        out = advect_field(ens, u, 0.25)
        expect = (ens.positions + np.array([c * 0.25, 0.0])) % TAU
        assert np.max(np.abs(out.positions - expect)) < 1e-12
        assert np.allclose(out.tangents, np.eye(2), atol=1e-12)

    def test_pure_strain_finite_time_exponents(self):
        # particle pinned at the hyperbolic stagnation point of the frozen
        # strain field: tangent evolves by diag(e^{gamma t}, e^{-gamma t})
        grid = Grid(2, 32)
        gamma = 0.8
        u = taylor_green_strain(grid, gamma)
        ens = ParticleEnsemble(
            positions=np.zeros((1, 2)),
            tangents=np.eye(2)[None, :, :].copy(),
            qr_log_sums=np.zeros((1, 2), dtype=np.longdouble))
        dt, T = 0.01, 2.0
        sampler = SpectralVelocity(u)
        for _ in range(int(T / dt)):
            ens = advect(ens, sampler, dt)
        assert np.max(np.abs(ens.positions)) < 1e-12
        D = ens.tangents[0]
        assert abs(D[0, 0] - math.exp(gamma * T)) < 1e-6 * math.exp(gamma * T)
        assert abs(D[1, 1] - math.exp(-gamma * T)) < 1e-6
        # finite-time exponents converge to +-gamma
        lam = np.log(np.abs(np.diag(D))) / T
        assert abs(lam[0] - gamma) < 1e-8
        assert abs(lam[1] + gamma) < 1e-8

    def test_position_update_fourth_order(self):
        # frozen field: halving dt five times vs a dt/16 reference shows
        # fourth-order convergence of positions
        grid = Grid(2, 32)
        u = random_divfree_field(grid, seed=5)
        start = np.array([[1.0, 2.0], [3.0, 0.5]])

        def run(dt, nsteps):
            ens = ParticleEnsemble(
                positions=start.copy(),
                tangents=np.broadcast_to(np.eye(2), (2, 2, 2)).copy(),
                qr_log_sums=np.zeros((2, 2), dtype=np.longdouble))
            sampler = SpectralVelocity(u)
            for _ in range(nsteps):
                ens = advect(ens, sampler, dt)
            return ens.positions

    # reference at dt/16
        errs = []
        dts = [0.2, 0.1, 0.05]
        for dt in dts:
            ref = run(dt / 16, int(round(1.0 / dt)) * 16)
            got = run(dt, int(round(1.0 / dt)))
            errs.append(np.max(np.abs(got - ref)))
        order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert order > 3.7, (order, errs)

    def test_determinant_drift_small_and_improving(self):
        # O(1)-strain smooth velocity at production-scale dt: drift below
        # 1e-6 per unit time, tightening at the integrator's order
        from batchlab.spectral import sharp_projection
        u = sharp_projection(random_divfree_field(Grid(2, 32), seed=6), 4)
        samp = SpectralVelocity(u)
        gmax = np.max(np.abs(samp.velocity_and_gradient(
            np.random.default_rng(2).uniform(0, TAU, (100, 2)))[1]))
        u = u * (1.0 / gmax)

        def drift(dt):
            ens = ParticleEnsemble.uniform(u.grid, 64, seed=3)
            sampler = SpectralVelocity(u)
            for _ in range(int(round(1.0 / dt))):
                ens = advect(ens, sampler, dt)
            return ens.det_drift()

        d1 = drift(0.01)
        d2 = drift(0.005)
        assert d1 < 1e-6
        assert d2 < d1


class TestQR:
    def test_qr_preserves_product_information(self):
        grid = Grid(2, 32)
        gamma = 1.2
        u = taylor_green_strain(grid, gamma)
        ens = ParticleEnsemble(
            positions=np.zeros((1, 2)),
            tangents=np.eye(2)[None].copy(),
            qr_log_sums=np.zeros((1, 2), dtype=np.longdouble))
        sampler = SpectralVelocity(u)
        dt = 0.01
        for s in range(500):
            ens = advect(ens, sampler, dt)
            if (s + 1) % 100 == 0:
                ens = qr_renormalize(ens)
        ens = qr_renormalize(ens)
        lam = np.asarray(ens.qr_log_sums[0], dtype=float) / ens.t
        assert abs(lam[0] - gamma) < 1e-6
        assert abs(lam[1] + gamma) < 1e-6

    def test_tangent_reset_to_orthonormal(self):
        rng = np.random.default_rng(1)
        ens = ParticleEnsemble(
            positions=rng.uniform(0, TAU, (5, 2)),
            tangents=rng.standard_normal((5, 2, 2)) + np.eye(2) * 3,
            qr_log_sums=np.zeros((5, 2), dtype=np.longdouble))
        out = qr_renormalize(ens)
        eye = out.tangents @ np.swapaxes(out.tangents, 1, 2)
        assert np.max(np.abs(eye - np.eye(2))) < 1e-12


class TestEstimators:
    def _strained_ensemble(self, gamma, T, P=4, t_qr=0.5):
        grid = Grid(2, 32)
        u = taylor_green_strain(grid, gamma)
        ens = ParticleEnsemble(
            positions=np.zeros((P, 2)),
            tangents=np.broadcast_to(np.eye(2), (P, 2, 2)).copy(),
            qr_log_sums=np.zeros((P, 2), dtype=np.longdouble))
        sampler = SpectralVelocity(u)
        dt = 0.01
        steps_per_qr = int(round(t_qr / dt))
        checkpoints, histories = [], []
        for s in range(int(T / dt)):
            ens = advect(ens, sampler, dt)
            if (s + 1) % steps_per_qr == 0:
                ens = qr_renormalize(ens)
                checkpoints.append(ens.t)
                histories.append(np.asarray(ens.qr_log_sums[:, 0], dtype=float))
        return ens, checkpoints, histories

    def test_zero_velocity_gives_zero_exponents(self):
        grid = Grid(2, 16)
        ens = ParticleEnsemble.uniform(grid, 32, seed=4)
        u = zeros(grid, "vector")
        dt, t_qr = 0.1, 0.5
        for s in range(120):
            ens = advect_field(ens, u, dt)
            if (s + 1) % 5 == 0:
                ens = qr_renormalize(ens)
        est = estimate_lyapunov(ens, t_qr)
        assert np.allclose(est.exponents, 0.0, atol=1e-12)
        assert est.ci_low[0] <= 0 <= est.ci_high[0]

    def test_strain_control_pm_gamma(self):
        gamma = 0.9
        ens, _, _ = self._strained_ensemble(gamma, T=8.0)
        est = estimate_lyapunov(ens, t_qr=0.5)
        assert abs(est.exponents[0] - gamma) < 0.01 * gamma
        assert abs(est.exponents[1] + gamma) < 0.01 * gamma
        assert abs(est.sum_exponents) < 1e-8

    def test_refuses_short_horizon(self):
        grid = Grid(2, 16)
        ens = ParticleEnsemble.uniform(grid, 8, seed=5)
        ens.t = 1.0
        with pytest.raises(LagrangianError, match="horizon"):
            estimate_lyapunov(ens, t_qr=0.5)

    def test_relabeling_invariance(self):
        gamma = 0.5
        ens, _, _ = self._strained_ensemble(gamma, T=6.0, P=6)
        est1 = estimate_lyapunov(ens, 0.5)
        perm = np.random.default_rng(0).permutation(6)
        ens2 = ParticleEnsemble(positions=ens.positions[perm],
                                tangents=ens.tangents[perm],
                                qr_log_sums=ens.qr_log_sums[perm], t=ens.t)
        est2 = estimate_lyapunov(ens2, 0.5)
        assert np.allclose(est1.exponents, est2.exponents)

    def test_qr_cadence_insensitivity(self):
        # strain flow: exponents agree across QR cadences to high accuracy
        gamma = 0.7
        outs = []
        for t_qr in (0.5, 1.0, 2.0):
            ens, _, _ = self._strained_ensemble(gamma, T=20.0, t_qr=t_qr)
            outs.append(estimate_lyapunov(ens, t_qr).exponents[0])
        assert np.max(outs) - np.min(outs) < 1e-6

    def test_moment_exponent_strain_closed_form(self):
        # |D phi^t| = e^{gamma t} exactly, so Lambda(p) = p gamma
        gamma = 0.6
        _, ts, hist = self._strained_ensemble(gamma, T=10.0)
        with pytest.warns(UserWarning, match="particles"):
            table = estimate_moment_lyapunov(ts, hist, [0.1, 0.5, 1.0])
        assert np.allclose(table.estimates, gamma * np.array([0.1, 0.5, 1.0]),
                           rtol=1e-6)

    def test_moment_exponent_zero_flow(self):
        ts = [1.0, 2.0, 3.0, 4.0]
        hist = [np.zeros(2000) for _ in ts]
        table = estimate_moment_lyapunov(ts, hist, [0.2, 0.8])
        assert np.allclose(table.estimates, 0.0, atol=1e-12)

    def test_moment_exponent_degenerate_rejected(self):
        with pytest.raises(LagrangianError, match="degenerate"):
            estimate_moment_lyapunov([1.0, 2.0, 3.0],
                                     [np.zeros(1), np.zeros(1), np.zeros(1)],
                                     [0.5])

    def test_small_p_consistency_with_top_exponent(self):
        # Lambda(p)/p -> lambda_1 as p -> 0 (exact for the strain flow)
        gamma = 0.8
        ens, ts, hist = self._strained_ensemble(gamma, T=10.0)
        with pytest.warns(UserWarning):
            table = estimate_moment_lyapunov(ts, hist, [0.01])
        est = estimate_lyapunov(ens, t_qr=0.5)
        assert abs(table.estimates[0] / 0.01 - est.exponents[0]) < 0.01 * gamma
