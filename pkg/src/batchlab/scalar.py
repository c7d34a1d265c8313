"""Passive scalar evolution: advection-diffusion with an optional white-in
time source, the source-free solution operator used by mixing experiments,
and the L2 half-life measurement.

The deterministic part of a step is an integrating-factor RK4: diffusion is
applied exactly through exp(-kappa |k|^2 t) while the dealiased conservative
advection -div(u g) is advanced at fourth order with the velocity frozen at
the step start.  The source, when active, is injected at the end of the step
as b * xi * sqrt(dt), which keeps the Ito L2 budget exact in expectation.

kappa = 0 Eulerian stepping is refused: with no diffusion the truncation
scale would act as a spurious dissipation mechanism and the computed fields
would not approximate anything (the zero-diffusivity stationary states are
not even locally integrable).  The kappa -> 0 regime is reached through the
kappa sweep and the Lagrangian/closed-form modules instead.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .forcing import NoiseStream, ScalarSourceSpec, sample_scalar_increment
from .spectral import (
    Grid, SpectralField, l2_norm, sobolev_norm, transform_backward, zeros,
)


class ScalarError(ValueError):
    pass


class ResolutionWarning(UserWarning):
    pass


@dataclass
class ScalarState:
    g: SpectralField
    kappa: float
    t: float = 0.0
    source_on: bool = False


def check_resolution(grid: Grid, kappa: float) -> list:
    """The dissipative scale kappa^{-1/2} should sit inside the dealiased
    band; returns warning strings (empty when comfortably resolved)."""
    notes = []
    kd = 1.0 / math.sqrt(kappa)
    kmax = grid.k_max_dealiased
    if kd > kmax:
        notes.append(
            f"dissipative scale kappa^-1/2 = {kd:.1f} exceeds k_max = {kmax}; "
            "the top of the spectrum is truncated, stats near k_max may pile up")
    elif 1.5 * kd > kmax:
        notes.append(
            f"dissipative scale kappa^-1/2 = {kd:.1f} within 1.5x of k_max = {kmax}")
    return notes


def advection_term_coeffs(grid: Grid, g_coeffs: np.ndarray,
                          u_real: np.ndarray) -> np.ndarray:
    """div(u g) in coefficients, dealiased; equals u.grad g for
    divergence-free u (the conservative form keeps the mean exactly zero).
    The d flux components go through one batched transform."""
    norm = 1.0 / float(grid.n ** grid.dim)
    kv = grid.wavenumbers_float
    g_real = np.fft.irfftn(g_coeffs * float(grid.n ** grid.dim), s=grid.shape,
                           axes=grid._fft_axes)
    flux = np.fft.rfftn(u_real * g_real, axes=grid._fft_axes)
    out = np.einsum("a...,a...->...", kv, flux)
    out *= (1j * norm) * grid.dealias_mask
    return out


def advection_term(u: SpectralField, g: SpectralField) -> SpectralField:
    """u.grad g as a spectral field (u divergence-free, both dealiased)."""
    return SpectralField(g.grid, advection_term_coeffs(g.grid, g.coeffs,
                                                       transform_backward(u)))


class ScalarStepper:
    """Integrating-factor RK4 advection-diffusion stepper, single trajectory."""

    def __init__(self, grid: Grid, kappa: float, dt: float,
                 source: ScalarSourceSpec | None = None, cfl: float = 0.5,
                 warn_resolution: bool = True):
        if kappa <= 0:
            raise ScalarError(
                "kappa = 0 Eulerian stepping refused: spectral truncation would "
                "masquerade as dissipation; use the kappa-sweep or the "
                "Lagrangian/closed-form routes for the vanishing-diffusivity regime")
        if dt <= 0:
            raise ScalarError("dt must be positive")
        self.grid = grid
        self.kappa = kappa
        self.dt = dt
        self.source = source
        self.cfl = cfl
        lam = kappa * grid.kmag2.astype(np.float64)
        self.E = np.exp(-lam * dt / 2.0)     # half-step heat factor
        self.E2 = self.E * self.E
        self.kv = grid.wavenumbers_float
        self.mask = grid.dealias_mask
        self.norm_factor = 1.0 / float(grid.n ** grid.dim)
        if warn_resolution:
            for note in check_resolution(grid, kappa):
                warnings.warn(note, ResolutionWarning)
        # sparse view of the source for the per-step injection bookkeeping:
        # last_source_mart holds 2 <g_pre, b> xi sqrt(dt), the discrete Ito
        # cross term, whose conditional mean is exactly zero
        self.last_source_mart = 0.0
        self.last_xi2_dt = 0.0
        self._stage_buf = np.empty(grid.spectral_shape, dtype=np.complex128)
        if source is not None:
            idx = np.nonzero(np.abs(source.b.coeffs) > 0)
            self._b_idx = idx
            self._b_weighted = (grid.volume * grid.reality_weights[idx]
                                * np.conj(source.b.coeffs[idx]))

    def initial_state(self, g: SpectralField | None = None) -> ScalarState:
        if g is None:
            g = zeros(self.grid)
        return ScalarState(g=g, kappa=self.kappa, t=0.0,
                           source_on=self.source is not None)

    def _advection(self, g_coeffs: np.ndarray, u_real: np.ndarray) -> np.ndarray:
        return -advection_term_coeffs(self.grid, g_coeffs, u_real)

    def step(self, state: ScalarState, u: SpectralField,
             stream: NoiseStream | None = None, counter: int = 0,
             u_real: np.ndarray | None = None) -> ScalarState:
        g = state.g.coeffs
        if not np.all(np.isfinite(g.view(np.float64))):
            raise ScalarError(f"non-finite scalar at step {counter} (t = {state.t:g})")
        if u_real is None:
            u_real = transform_backward(u)
        u_inf = float(np.max(np.abs(u_real)))
        if u_inf > 0:
            limit = self.cfl * (2 * math.pi / self.grid.n) / u_inf
            if self.dt > limit:
                from .fluid import CFLViolation
                raise CFLViolation(u_inf, limit, self.dt)

        dt, E, E2 = self.dt, self.E, self.E2
        buf = self._stage_buf
        Eg = E * g
        n1 = self._advection(g, u_real)
        np.multiply(0.5 * dt, n1, out=buf)
        buf += g
        buf *= E
        n2 = self._advection(buf, u_real)
        np.multiply(0.5 * dt, n2, out=buf)
        buf += Eg
        n3 = self._advection(buf, u_real)
        np.multiply(dt, n3, out=buf)
        buf += Eg
        buf *= E
        n4 = self._advection(buf, u_real)
        # out = E2 g + dt/6 (E2 n1 + 2 E (n2 + n3) + n4)
        n2 += n3
        n2 *= E
        n2 *= 2.0
        n1 *= E2
        n1 += n2
        n1 += n4
        n1 *= dt / 6.0
        out = E2 * g
        out += n1

        source_on = False
        if self.source is not None and stream is not None:
            xi = float(stream.normals(counter, 1)[0])
            root_dt = math.sqrt(dt)
            inner = float(np.sum((self._b_weighted * out[self._b_idx]).real))
            self.last_source_mart = 2.0 * inner * xi * root_dt
            self.last_xi2_dt = xi * xi * dt
            out = out + self.source.b.coeffs * (xi * root_dt)
            source_on = True
        return ScalarState(g=SpectralField(self.grid, out), kappa=self.kappa,
                           t=state.t + dt, source_on=source_on)


def step_scalar(state: ScalarState, u: SpectralField, dt: float,
                src: ScalarSourceSpec | None = None,
                stream: NoiseStream | None = None, counter: int = 0,
                cfl: float = 0.5) -> ScalarState:
    """One-shot step; loops should hold a ScalarStepper."""
    stepper = ScalarStepper(state.g.grid, state.kappa, dt, source=src, cfl=cfl,
                            warn_resolution=False)
    return stepper.step(state, u, stream, counter)


# ---------------------------------------------------------------------------
# source-free solution operator and half-life

@dataclass
class DecayRecord:
    t: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    hm1: np.ndarray
    mean: np.ndarray


def apply_solution_operator(g0: SpectralField, u_path, kappa: float, dt: float,
                            n_steps: int, diag_every: int = 1,
                            cfl: float = 0.5) -> tuple:
    """Evolve the source-free scalar along a velocity path.

    u_path is an iterable yielding the velocity field for each step (the
    field frozen over that step).  Records L2 / H1 / H^{-1} norms and the
    mean every diag_every steps.  Returns (final_state, DecayRecord).
    """
    grid = g0.grid
    stepper = ScalarStepper(grid, kappa, dt, source=None, cfl=cfl,
                            warn_resolution=False)
    state = ScalarState(g=g0.copy(), kappa=kappa)
    ts, l2s, h1s, hm1s, means = [0.0], [l2_norm(g0)], [sobolev_norm(g0, 1.0)], \
        [sobolev_norm(g0, -1.0)], [float(g0.coeffs[(0,) * grid.dim].real)]
    for i, u in enumerate(u_path):
        if i >= n_steps:
            break
        state = stepper.step(state, u, None, i)
        if (i + 1) % diag_every == 0:
            ts.append(state.t)
            l2s.append(l2_norm(state.g))
            h1s.append(sobolev_norm(state.g, 1.0))
            hm1s.append(sobolev_norm(state.g, -1.0))
            means.append(float(state.g.coeffs[(0,) * grid.dim].real))
    rec = DecayRecord(np.array(ts), np.array(l2s), np.array(h1s),
                      np.array(hm1s), np.array(means))
    return state, rec


@dataclass
class HalfLife:
    reached: bool
    tau: float | None
    final_ratio: float

    def __repr__(self):
        if self.reached:
            return f"HalfLife(tau={self.tau:.4g})"
        return f"HalfLife(not reached, final ratio {self.final_ratio:.3g})"


def measure_half_life(g0: SpectralField, u_path, kappa: float, dt: float,
                      horizon: float, diag_every: int = 1,
                      cfl: float = 0.5) -> HalfLife:
    """First time ||g_t|| drops below half of ||g_0||, linearly interpolated
    between diagnostic samples; sentinel result when the horizon runs out."""
    grid = g0.grid
    stepper = ScalarStepper(grid, kappa, dt, source=None, cfl=cfl,
                            warn_resolution=False)
    state = ScalarState(g=g0.copy(), kappa=kappa)
    target = 0.5 * l2_norm(g0)
    prev_t, prev_v = 0.0, l2_norm(g0)
    n_steps = int(round(horizon / dt))
    for i, u in enumerate(u_path):
        if i >= n_steps:
            break
        state = stepper.step(state, u, None, i)
        if (i + 1) % diag_every == 0:
            v = l2_norm(state.g)
            if v < target:
                frac = (prev_v - target) / max(prev_v - v, 1e-300)
                return HalfLife(True, prev_t + frac * (state.t - prev_t),
                                v / (2 * target))
            prev_t, prev_v = state.t, v
    return HalfLife(False, None, prev_v / (2 * target))


def frozen_path(u: SpectralField):
    """Endless path holding a frozen velocity field."""
    while True:
        yield u


def zero_path(grid: Grid):
    u = zeros(grid, "vector")
    while True:
        yield u


# ---------------------------------------------------------------------------
# initial scalar presets for mixing experiments

def scalar_preset(grid: Grid, name: str, seed: int = 0) -> SpectralField:
    """Named mean-zero H1-regular initial data: single_mode, random_band,
    checkerboard."""
    from .spectral import dealias, set_coeff, transform_forward
    if name == "single_mode":
        g = zeros(grid)
        set_coeff(g, (2,) + (0,) * (grid.dim - 1), -0.5j)  # sin(2 x1), unit-ish
        return g
    if name == "random_band":
        rng = np.random.default_rng(seed)
        g = zeros(grid)
        kmax = 4
        for k1 in range(-kmax, kmax + 1):
            for k2 in range(0, kmax + 1):
                k = (k1, k2) if grid.dim == 2 else (k1, k2, 0)
                if k2 == 0 and k1 <= 0:
                    continue
                if 0 < sum(x * x for x in k) <= kmax ** 2:
                    set_coeff(g, k, rng.standard_normal() + 1j * rng.standard_normal())
        g.coeffs /= l2_norm(g)
        return g
    if name == "checkerboard":
        x = grid.mesh()
        samples = np.ones(grid.shape)
        for a in range(grid.dim):
            samples = samples * np.sign(np.sin(2 * x[a]) + 1e-12)
        g = dealias(transform_forward(samples, grid))
        g.coeffs[(0,) * grid.dim] = 0.0
        g.coeffs /= l2_norm(g)
        return g
    raise ScalarError(f"unknown scalar preset {name!r}")
