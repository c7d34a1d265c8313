"""Field statistics: cumulative/shell spectra, the L2 dissipation balance,
spectral flux through sharp and smooth cutoffs, the Yaglom structure-function
flux, and generalized Besov norms.

Sign and budget conventions (documented once, used everywhere):

* spectral_flux returns F(N) = <Pi_{<=N} g, Pi_{<=N}(u . grad g)>, so the
  stationary budget with a source reads
      F(N) + kappa ||grad Pi_{<=N} g||^2 = (1/2) ||Pi_{<=N} b||^2.
  F(N) > 0 means L2 mass is leaving the band |k| <= N upward.
* yaglom_flux returns (1/ell) <avg_x avg_n |delta_{ell n} g|^2
  delta_{ell n} u . n>, whose stationary small-ell plateau is -(2/d) chi.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .scalar import advection_term_coeffs
from .spectral import (
    Grid, SpectralField, l2_inner, psi_cutoff, sharp_projection,
    smooth_projection, transform_backward, zeta_cutoff,
)


class DiagnosticsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spectra

@dataclass
class SpectrumSeries:
    """Cumulative and dyadic-shell L2 mass at levels Ns = 2^j."""

    Ns: np.ndarray
    cumulative: np.ndarray
    shell: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        scale = max(float(self.cumulative[-1]), 1e-300)
        if np.any(np.diff(self.cumulative) < -1e-12 * scale):
            raise DiagnosticsError("cumulative spectrum must be nondecreasing")


def dyadic_levels(grid: Grid) -> np.ndarray:
    levels = []
    N = 1
    while N <= grid.k_max_dealiased:
        levels.append(N)
        N *= 2
    return np.array(levels, dtype=np.int64)


def band_mass(g: SpectralField, N: float) -> float:
    """||Pi_{<=N} g||_L2^2 by exact Parseval sums (k = 0 excluded)."""
    grid = g.grid
    mask = (grid.kmag2 <= N * N) & (grid.kmag2 > 0)
    c = g.coeffs[mask]
    w = grid.reality_weights[mask]
    return float(grid.volume * np.sum(w * (c.real ** 2 + c.imag ** 2)))


def cumulative_spectrum(g: SpectralField, N_levels=None, t: float = 0.0) -> SpectrumSeries:
    """Exact cumulative spectrum at the given ascending levels (dyadic by
    default).  Masses are accumulated over disjoint annuli and cumsummed, so
    the cumulative column is nondecreasing by construction and the shell
    column (the increment from the previous level; for dyadic levels, the
    usual dyadic shell) telescopes exactly."""
    grid = g.grid
    if N_levels is None:
        N_levels = dyadic_levels(grid)
    N_levels = np.asarray(N_levels)
    w = grid.reality_weights
    c = g.coeffs
    mass = grid.volume * w * (c.real ** 2 + c.imag ** 2)
    k2 = grid.kmag2
    shells = np.empty(len(N_levels))
    prev = 0.0
    for j, N in enumerate(N_levels):
        shells[j] = float(np.sum(mass[(k2 > prev * prev) & (k2 <= N * N) & (k2 > 0)]))
        prev = float(N)
    cums = np.cumsum(shells)
    return SpectrumSeries(Ns=N_levels, cumulative=cums, shell=shells, t=t)


def l2_balance(g: SpectralField, kappa: float, chi: float) -> float:
    """2 kappa ||grad g||^2 / chi; stationarity drives the average to 1."""
    if chi <= 0:
        raise DiagnosticsError("chi must be positive")
    if kappa < 0:
        raise DiagnosticsError("kappa must be nonnegative")
    from .spectral import grad_sq_l2
    return 2.0 * kappa * grad_sq_l2(g) / chi


# ---------------------------------------------------------------------------
# spectral flux

def spectral_flux(u: SpectralField, g: SpectralField, N: float,
                  cutoff: str = "sharp",
                  adv: SpectralField | None = None) -> float:
    """<Pi_{<=N} g, Pi_{<=N}(u . grad g)> with a sharp or smooth cutoff.

    Pass a precomputed advection field to amortize the product across levels.
    """
    if adv is None:
        from .scalar import advection_term
        adv = advection_term(u, g)
    grid = g.grid
    if cutoff == "sharp":
        mask = (grid.kmag2 <= N * N).astype(np.float64)
    elif cutoff == "smooth":
        mask = zeta_cutoff(np.sqrt(grid.kmag2.astype(np.float64)) / N)
    else:
        raise DiagnosticsError(f"unknown cutoff {cutoff!r}")
    w = grid.reality_weights
    prod = np.conj(g.coeffs * mask) * (adv.coeffs * mask)
    return float(grid.volume * np.sum(w * prod.real))


def flux_budget(u: SpectralField, g: SpectralField, b: SpectralField,
                kappa: float, N: float,
                adv: SpectralField | None = None) -> tuple:
    """(flux, kappa * ||grad Pi_<=N g||^2, half ||Pi_<=N b||^2): the three
    terms of the stationary band budget."""
    from .spectral import grad_sq_l2
    flux = spectral_flux(u, g, N, "sharp", adv=adv)
    gN = sharp_projection(g, N)
    bN = sharp_projection(b, N)
    from .spectral import l2_norm
    return flux, kappa * grad_sq_l2(gN), 0.5 * l2_norm(bN) ** 2


# ---------------------------------------------------------------------------
# Yaglom structure-function flux

def unit_directions(dim: int, n_angles: int) -> np.ndarray:
    """Quadrature directions: uniform on the circle (d = 2); a Fibonacci
    sphere point set (d = 3, near-uniform, documented accuracy)."""
    if n_angles < 8:
        raise DiagnosticsError("n_angles must be >= 8")
    if dim == 2:
        th = 2 * math.pi * np.arange(n_angles) / n_angles
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(n_angles)
    z = 1.0 - (2.0 * i + 1.0) / n_angles
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    th = golden * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


def yaglom_flux(u: SpectralField, g: SpectralField, ell: float,
                n_angles: int = 32) -> float:
    """(1/ell) avg_x avg_n |delta_{ell n} g|^2 (delta_{ell n} u . n).

    Increments are exact torus translations (spectral phase shifts); the
    x-average is the grid mean, the n-average uniform over directions.
    """
    if not (0.0 < ell < math.pi):
        raise DiagnosticsError("ell must lie in (0, pi)")
    grid = g.grid
    dirs = unit_directions(grid.dim, n_angles)
    g_real = transform_backward(g)
    u_real = transform_backward(u)
    kv = grid.wavenumbers_float
    total = 0.0
    for nvec in dirs:
        h = ell * nvec
        phase = np.exp(1j * np.tensordot(h, kv, axes=(0, 0)))
        g_shift = np.fft.irfftn(g.coeffs * phase * float(grid.n ** grid.dim),
                                s=grid.shape, axes=grid._fft_axes)
        u_shift = np.fft.irfftn(u.coeffs * phase[None] * float(grid.n ** grid.dim),
                                s=grid.shape, axes=grid._fft_axes)
        dg = g_shift - g_real
        du_n = np.tensordot(nvec, u_shift - u_real, axes=(0, 0))
        total += float(np.mean(dg * dg * du_n))
    return total / (n_angles * ell)


# ---------------------------------------------------------------------------
# generalized Besov norms

class UnsuitableMultiplierError(ValueError):
    pass


@dataclass
class BesovMultiplier:
    """Tabulated monotone weight M(k) >= 1 with the comparison bound
    |M(k) - M(l)| <= c M(l) |k - l| / sqrt(1 + k^2) on comparable pairs."""

    ks: np.ndarray
    values: np.ndarray
    comparison_constant: float = 4.0
    name: str = "custom"

    def __post_init__(self):
        self.ks = np.asarray(self.ks, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.validate()

    @classmethod
    def from_function(cls, f, k_max: float, name: str = "custom",
                      comparison_constant: float = 4.0) -> "BesovMultiplier":
        ks = np.unique(np.concatenate([
            np.arange(0.0, min(k_max, 64.0) + 1.0),
            np.geomspace(1.0, max(k_max, 2.0), 129)]))
        return cls(ks=ks, values=np.array([f(k) for k in ks]),
                   comparison_constant=comparison_constant, name=name)

    @classmethod
    def log_default(cls, k_max: float = 4096.0) -> "BesovMultiplier":
        return cls.from_function(lambda k: math.log(math.e + k), k_max,
                                 name="log(e+k)")

    def validate(self):
        if self.values[0] < 1.0 or np.min(self.values) < 1.0:
            raise UnsuitableMultiplierError("multiplier must satisfy M(k) >= 1")
        if np.any(np.diff(self.values) < -1e-14):
            raise UnsuitableMultiplierError("multiplier must be monotone nondecreasing")
        if self.values[-1] <= self.values[0]:
            raise UnsuitableMultiplierError(
                "multiplier shows no growth across the table (M(k) -> inf required)")
        # discrete comparison bound over sampled pairs with 1/2 <= k/l <= 2
        ks, vals, c = self.ks, self.values, self.comparison_constant
        for a in range(0, len(ks), max(1, len(ks) // 40)):
            comparable = (ks >= 0.5 * ks[a]) & (ks <= 2.0 * ks[a])
            lhs = np.abs(vals[comparable] - vals[a])
            rhs = c * vals[comparable] * np.abs(ks[comparable] - ks[a]) \
                / math.sqrt(1.0 + ks[a] ** 2)
            if np.any(lhs > rhs + 1e-12):
                raise UnsuitableMultiplierError(
                    "comparison bound |M(k)-M(l)| <= c M(l)|k-l|/sqrt(1+k^2) "
                    f"violated near k = {ks[a]:g}")

    def __call__(self, k):
        return np.interp(np.asarray(k, dtype=np.float64), self.ks, self.values)


def besov_norm(g: SpectralField, M: BesovMultiplier | None = None) -> float:
    """sup over dyadic shells on the grid of M(N) ||Pi_N g||_L2."""
    if M is None:
        M = BesovMultiplier.log_default()
    from .spectral import l2_norm
    best = 0.0
    for N in dyadic_levels(g.grid):
        shell_norm = l2_norm(sharp_projection(g, int(N), "shell"))
        best = max(best, float(M(float(N))) * shell_norm)
    return best
