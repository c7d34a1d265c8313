"""Stochastic inputs: the white-in-time divergence-free velocity forcing,
the low-frequency scalar source, and exact Ornstein-Uhlenbeck tower updates.

All randomness flows through counter-based NoiseStream objects so that a
(seed, stream_id, counter) triple always reproduces the same draw and
ensemble members / restarts never need to serialize generator state.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .spectral import (
    Grid, SpectralField, basis_mode_pair_coeffs, l2_norm, transform_forward,
    zeros,
)


class ForcingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# counter-based noise streams

@dataclass(frozen=True)
class NoiseStream:
    """Counter-based source of iid standard normals (Philox backed).

    Draws with the same (seed, stream_id, counter) are bit-identical;
    distinct stream_ids or counters are statistically independent.  Each
    counter value owns a block of 2^128 raw outputs, far more than any
    single step consumes.
    """

    seed: int
    stream_id: int = 0

    def normals(self, counter: int, size) -> np.ndarray:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                        self.stream_id & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        bg = np.random.Philox(key=key, counter=int(counter) << 128)
        return np.random.Generator(bg).standard_normal(size)

    def child(self, offset: int) -> "NoiseStream":
        return NoiseStream(self.seed, self.stream_id + offset)


# ---------------------------------------------------------------------------
# velocity forcing  Q dW = sum_m q_m e_m dW^m

@dataclass
class ForcingSpec:
    """Active basis modes m = (k, i) with amplitudes q_m = amplitude/|k|^alpha.

    mode_k has shape (M, d) (integer wavevectors, both halves of Z^d_0),
    mode_i the polarization indices.  The scatter plan maps each mode onto
    its stored half-spectrum coefficients so that sampling is one vectorized
    accumulation.
    """

    grid: Grid
    mode_k: np.ndarray
    mode_i: np.ndarray
    alpha: float
    amplitude: float
    q: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.mode_k) == 0:
            raise ForcingError("empty active mode set")
        kmag = np.sqrt(np.sum(self.mode_k.astype(np.float64) ** 2, axis=1))
        if self.q is None:
            self.q = self.amplitude / kmag ** self.alpha
        self.kmag2 = np.sum(self.mode_k.astype(np.int64) ** 2, axis=1)
        self._build_scatter_plan()

    @classmethod
    def full_spectrum(cls, grid: Grid, alpha: float | None = None,
                      amplitude: float = 1.0) -> "ForcingSpec":
        """Every mode inside the dealiased band.  The continuum noise law has
        infinitely many modes; the truncated tail is recorded via sum_q_sq."""
        if alpha is None:
            alpha = 5.5 if grid.dim == 2 else 8.0
        if alpha <= 2.5 * grid.dim:
            raise ForcingError(f"alpha = {alpha} violates alpha > 5d/2")
        return cls._from_band(grid, grid.k_max_dealiased, alpha, amplitude)

    @classmethod
    def low_modes(cls, grid: Grid, kmax_inf: int = 2, alpha: float | None = None,
                  amplitude: float = 1.0) -> "ForcingSpec":
        """Finite-dimensional mode set |k|_inf <= kmax_inf (>= 2 so the
        nondegeneracy floor is active)."""
        if alpha is None:
            alpha = 5.5 if grid.dim == 2 else 8.0
        if kmax_inf < 2:
            raise ForcingError("finite-dimensional specs must force |m|_inf <= 2")
        return cls._from_band(grid, kmax_inf, alpha, amplitude)

    @classmethod
    def _from_band(cls, grid, kmax_inf, alpha, amplitude):
        rng = range(-kmax_inf, kmax_inf + 1)
        ks, iis = [], []
        if grid.dim == 2:
            for k1 in rng:
                for k2 in rng:
                    if (k1, k2) != (0, 0):
                        ks.append((k1, k2))
                        iis.append(0)
        else:
            for k1 in rng:
                for k2 in rng:
                    for k3 in rng:
                        if (k1, k2, k3) != (0, 0, 0):
                            for i in (0, 1):
                                ks.append((k1, k2, k3))
                                iis.append(i)
        return cls(grid, np.array(ks, dtype=np.int64), np.array(iis, dtype=np.int64),
                   alpha, amplitude)

    @property
    def n_modes(self) -> int:
        return len(self.mode_k)

    @property
    def sum_q_squared(self) -> float:
        return float(np.sum(self.q ** 2))

    def _build_scatter_plan(self):
        """Flattened storage indices and complex amplitudes of every stored
        coefficient of every e_m (k_d = 0 modes own two stored entries)."""
        g = self.grid
        n = g.n
        spec_shape = g.spectral_shape
        flat_idx, amps, mode_id, comp_id = [], [], [], []
        strides = np.array([int(np.prod(spec_shape[a + 1:])) for a in range(g.dim)])

        def storage_flat(kvec):
            idx = [ki % n for ki in kvec[:-1]] + [kvec[-1]]
            return int(np.dot(idx, strides))

        for m, (kvec, i) in enumerate(zip(self.mode_k, self.mode_i)):
            kvec = tuple(int(x) for x in kvec)
            gamma, amp = basis_mode_pair_coeffs(g, kvec, int(i))
            # entries at the representative of {k, -k} in the half-spectrum
            if kvec[-1] > 0:
                targets = [(kvec, amp)]
            elif kvec[-1] < 0:
                targets = [(tuple(-x for x in kvec), np.conj(amp))]
            else:
                targets = [(kvec, amp), (tuple(-x for x in kvec), np.conj(amp))]
            for tk, ta in targets:
                for c in range(g.dim):
                    val = ta * gamma[c]
                    if val == 0:
                        continue
                    flat_idx.append(c * int(np.prod(spec_shape)) + storage_flat(tk))
                    amps.append(val)
                    mode_id.append(m)
                    comp_id.append(c)
        self._scatter_idx = np.array(flat_idx, dtype=np.int64)
        self._scatter_amp = np.array(amps, dtype=np.complex128)
        self._scatter_mode = np.array(mode_id, dtype=np.int64)

    def accumulate(self, out_coeffs: np.ndarray, per_mode: np.ndarray):
        """out += sum_m per_mode[m] * e_m, written directly into half-spectrum
        storage (vector field array, shape (d, *spectral_shape))."""
        values = self._scatter_amp * per_mode[self._scatter_mode]
        flat = out_coeffs.reshape(-1)
        np.add.at(flat, self._scatter_idx, values)


def sample_velocity_increment(spec: ForcingSpec, dt: float, stream: NoiseStream,
                              counter: int = 0) -> SpectralField:
    """One forcing increment Q dW = sum_m q_m e_m xi_m sqrt(dt)."""
    if dt <= 0:
        raise ForcingError("dt must be positive")
    xi = stream.normals(counter, spec.n_modes)
    out = zeros(spec.grid, "vector")
    spec.accumulate(out.coeffs, spec.q * math.sqrt(dt) * xi)
    return out


# ---------------------------------------------------------------------------
# scalar source  b dbeta

@dataclass
class ScalarSourceSpec:
    """Smooth low-frequency source profile b with chi = ||b||_L2^2 cached."""

    b: SpectralField
    k_b: int = 2
    chi: float = field(default=None)

    def __post_init__(self):
        from .spectral import mean_value
        if abs(mean_value(self.b)) > 1e-13:
            raise ForcingError("source profile must be mean-zero")
        kmag2 = self.b.grid.kmag2
        scale = np.max(np.abs(self.b.coeffs))
        outside = np.abs(self.b.coeffs[kmag2 > self.k_b ** 2])
        if outside.size and np.max(outside) > 1e-12 * scale:
            raise ForcingError(f"source has support beyond |k| <= {self.k_b}")
        self.b.coeffs[kmag2 > self.k_b ** 2] = 0.0
        if self.chi is None:
            self.chi = l2_norm(self.b) ** 2
        if self.chi <= 0:
            raise ForcingError("source must be nonzero")

    @classmethod
    def preset_cos_sin(cls, grid: Grid, chi: float | None = None,
                       k_b: int = 2) -> "ScalarSourceSpec":
        """b = cos(x1) + sin(x2), rescaled to the requested chi."""
        x = grid.mesh()
        b = transform_forward(np.cos(x[0]) + np.sin(x[1]), grid)
        if chi is not None:
            b.coeffs *= math.sqrt(chi / l2_norm(b) ** 2)
        return cls(b=b, k_b=k_b, chi=chi)

    @classmethod
    def preset_band(cls, grid: Grid, k_b: int = 2, seed: int = 0,
                    chi: float = 1.0) -> "ScalarSourceSpec":
        """Random real profile on 1 <= |k| <= k_b with fixed seed."""
        from .spectral import set_coeff
        b = zeros(grid)
        stream = NoiseStream(seed, stream_id=999)
        kvecs = []
        for k1 in range(-k_b, k_b + 1):
            for k2 in range(0, k_b + 1):
                k = (k1, k2) if grid.dim == 2 else (k1, k2, 0)
                if k2 == 0 and k1 <= 0:
                    continue
                if sum(x * x for x in k) <= k_b ** 2:
                    kvecs.append(k)
        xi = stream.normals(0, 2 * len(kvecs))
        for j, k in enumerate(kvecs):
            set_coeff(b, k, xi[2 * j] + 1j * xi[2 * j + 1])
        b.coeffs *= math.sqrt(chi / l2_norm(b) ** 2)
        return cls(b=b, k_b=k_b, chi=chi)


def sample_scalar_increment(src: ScalarSourceSpec, dt: float, stream: NoiseStream,
                            counter: int = 0) -> SpectralField:
    """b * xi * sqrt(dt): a single Brownian increment drives the whole source."""
    xi = float(stream.normals(counter, 1)[0])
    return SpectralField(src.b.grid, src.b.coeffs * (xi * math.sqrt(dt)))


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck towers  dZ = -A Z dt + Gamma dW

class OUTowerProcess:
    """Exact transition sampling for the linear SDE dZ = -A Z dt + Gamma dW.

    The one-step map is Z' = e^{-A dt} Z + N(0, Sigma_dt) with
    Sigma_dt = Sigma_inf - e^{-A dt} Sigma_inf e^{-A^T dt}, where Sigma_inf
    solves the stationary Lyapunov equation.  Exact for any A whose spectrum
    has positive real part (positivity checked at construction).
    """

    def __init__(self, A: np.ndarray, Gamma: np.ndarray):
        A = np.asarray(A, dtype=np.float64)
        Gamma = np.asarray(Gamma, dtype=np.float64)
        if Gamma.ndim == 1:
            Gamma = np.diag(Gamma)
        eigs = np.linalg.eigvals(A)
        if np.min(eigs.real) <= 0:
            raise ForcingError(
                f"A must have spectrum with positive real part, got eigenvalue "
                f"{eigs[np.argmin(eigs.real)]:.6g}")
        self.A = A
        self.Gamma = Gamma
        self.dim = A.shape[0]
        self._cache = {}

    @classmethod
    def chain(cls, depth: int, noise_amplitude: float = 1.0) -> "OUTowerProcess":
        """The relaxation chain dZ^l = (-Z^l + Z^{l+1}) dt, white noise on the
        top level only; the bottom component is C^(depth-1) in time."""
        A = np.eye(depth) - np.diag(np.ones(depth - 1), 1)
        Gamma = np.zeros((depth, depth))
        Gamma[-1, -1] = noise_amplitude
        return cls(A, Gamma)

    def _factors(self, dt: float):
        key = float(dt)
        if key not in self._cache:
            E = expm(-self.A * dt)
            GG = self.Gamma @ self.Gamma.T
            if np.all(GG == 0):
                root = np.zeros_like(GG)
            else:
                # stationary covariance: A S + S A^T = Gamma Gamma^T
                Sinf = solve_continuous_lyapunov(self.A, GG)
                Sdt = Sinf - E @ Sinf @ E.T
                Sdt = 0.5 * (Sdt + Sdt.T)
                vals, vecs = np.linalg.eigh(Sdt)
                vals = np.clip(vals, 0.0, None)
                root = vecs * np.sqrt(vals)
            self._cache[key] = (E, root)
        return self._cache[key]

    def stationary_covariance(self) -> np.ndarray:
        GG = self.Gamma @ self.Gamma.T
        if np.all(GG == 0):
            return np.zeros_like(GG)
        return solve_continuous_lyapunov(self.A, GG)

    def step(self, Z: np.ndarray, dt: float, stream: NoiseStream | None,
             counter: int = 0) -> np.ndarray:
        """Advance Z (shape (dim,) or batch (..., dim)) by one exact step."""
        E, root = self._factors(dt)
        Znew = Z @ E.T
        if stream is not None and np.any(root):
            xi = stream.normals(counter, Z.shape)
            Znew = Znew + xi @ root.T
        return Znew


def step_ou_tower(Z: np.ndarray, A_matrix: np.ndarray, Gamma: np.ndarray,
                  dt: float, stream: NoiseStream | None,
                  counter: int = 0) -> np.ndarray:
    """One-shot exact OU update (see OUTowerProcess for the heavy-use API)."""
    return OUTowerProcess(A_matrix, Gamma).step(np.asarray(Z, float), dt, stream, counter)
