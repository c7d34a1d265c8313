"""Spectral substrate: grids, transforms, the divergence-free real Fourier
basis, projections, derivatives, dealiasing and Sobolev norms.

Conventions (fixed repo-wide):

* Domain is the torus [0, 2*pi)^d with d = 2 or 3, n grid points per axis
  (n a power of two), uniform spacing 2*pi/n.
* A real field g is represented by coefficients g_hat(k) such that
  g(x) = sum_k g_hat(k) exp(i k.x), stored as the rfftn half-spectrum
  (last axis holds k_d in [0, n/2]); the missing half is implied by the
  reality relation g_hat(-k) = conj(g_hat(k)).
* L2 norms carry the volume factor: ||g||_L2^2 = (2*pi)^d sum_k |g_hat(k)|^2.
* Sobolev weights are inhomogeneous: ||g||_Hs^2 = (2*pi)^d sum_k
  (1+|k|^2)^s |g_hat(k)|^2, on mean-zero fields.
* Dealiasing is the 2/3 rule: coefficients with |k|_inf > n//3 are zeroed.

Vector fields store a leading component axis: coeffs.shape = (d, ...).
All operations here are pure functions; grids cache their wavenumber
arrays but are otherwise immutable.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TAU = 2.0 * math.pi


class SpectralError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, 2*pi)^dim.

    Parameters
    ----------
    dim : 2 or 3
    n : points per axis; must be a power of two, n >= 8.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise SpectralError(f"dim must be 2 or 3, got {self.dim}")
        if not _is_power_of_two(self.n):
            raise SpectralError(f"n must be a power of two, got {self.n}")
        if self.n < 8:
            raise SpectralError(f"n must be >= 8, got {self.n}")
        if self.k_max_dealiased < 2:
            raise SpectralError("grid too coarse: k_max_dealiased < 2")

    @property
    def k_max_dealiased(self) -> int:
        return self.n // 3

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def cell_volume(self) -> float:
        return (TAU / self.n) ** self.dim

    @property
    def volume(self) -> float:
        return TAU ** self.dim

    @cached_property
    def x(self) -> list:
        """Coordinate arrays, one (n,) vector per axis."""
        return [np.arange(self.n) * (TAU / self.n) for _ in range(self.dim)]

    def mesh(self) -> list:
        return np.meshgrid(*self.x, indexing="ij")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumber arrays, shape (dim, *spectral_shape)."""
        axes = [np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
                for _ in range(self.dim - 1)]
        axes.append(np.arange(self.n // 2 + 1, dtype=np.int64))
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids)

    @cached_property
    def wavenumbers_float(self) -> np.ndarray:
        return self.wavenumbers.astype(np.float64)

    @cached_property
    def kmag2(self) -> np.ndarray:
        """|k|^2 as exact integers, shape spectral_shape."""
        return np.sum(self.wavenumbers.astype(np.int64) ** 2, axis=0)

    @cached_property
    def kmag2_float(self) -> np.ndarray:
        return self.kmag2.astype(np.float64)

    @cached_property
    def reality_weights(self) -> np.ndarray:
        """Multiplicity of each stored coefficient in the full spectrum.

        Interior last-axis columns represent a conjugate pair (weight 2);
        the k_d = 0 and k_d = n/2 planes store both halves (weight 1).
        """
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = self.k_max_dealiased
        m = np.ones(self.spectral_shape, dtype=bool)
        for a in range(self.dim):
            m &= np.abs(self.wavenumbers[a]) <= kmax
        return m

    @cached_property
    def _fft_axes(self) -> tuple:
        return tuple(range(-self.dim, 0))


@dataclass
class SpectralField:
    """Fourier coefficients of a real field on the torus.

    rank is implied by the array shape: coeffs.ndim == grid.dim for a
    scalar, grid.dim + 1 (leading component axis of length dim) for a
    vector field.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        expect = self.grid.spectral_shape
        if self.coeffs.shape == expect:
            pass
        elif self.coeffs.shape == (self.grid.dim,) + expect:
            pass
        else:
            raise SpectralError(
                f"coefficient shape {self.coeffs.shape} does not match grid "
                f"{expect} (scalar) or {(self.grid.dim,) + expect} (vector)")
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @property
    def is_vector(self) -> bool:
        return self.coeffs.ndim == self.grid.dim + 1

    @property
    def rank(self) -> str:
        return "vector" if self.is_vector else "scalar"

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralField(self.grid, self.coeffs * a)

    __rmul__ = __mul__


def zeros(grid: Grid, rank: str = "scalar") -> SpectralField:
    shape = grid.spectral_shape if rank == "scalar" else (grid.dim,) + grid.spectral_shape
    return SpectralField(grid, np.zeros(shape, dtype=np.complex128))


# ---------------------------------------------------------------------------
# transforms

def transform_forward(samples: np.ndarray, grid: Grid) -> SpectralField:
    """Real samples -> coefficients (g(x) = sum g_hat(k) e^{ikx})."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape not in (grid.shape, (grid.dim,) + grid.shape):
        raise SpectralError(f"sample shape {samples.shape} does not match grid")
    coeffs = np.fft.rfftn(samples, axes=grid._fft_axes) / float(grid.n ** grid.dim)
    return SpectralField(grid, coeffs)


def transform_backward(f: SpectralField) -> np.ndarray:
    """Coefficients -> real samples on the grid."""
    g = f.grid
    scaled = f.coeffs * float(g.n ** g.dim)
    return np.fft.irfftn(scaled, s=g.shape, axes=g._fft_axes)


# ---------------------------------------------------------------------------
# logical (full-spectrum) coefficient access

def _storage_index(grid: Grid, k) -> tuple:
    # caller guarantees 0 <= k[-1] <= n/2
    return tuple(int(ki) % grid.n for ki in k[:-1]) + (int(k[-1]),)


def get_coeff(f: SpectralField, k, component: int | None = None):
    """Coefficient at logical wavevector k (any sign pattern)."""
    k = tuple(int(ki) for ki in k)
    arr = f.coeffs if component is None else f.coeffs[component]
    if 0 <= k[-1] <= f.grid.n // 2:
        return arr[_storage_index(f.grid, k)]
    return np.conj(arr[_storage_index(f.grid, tuple(-ki for ki in k))])


def set_coeff(f: SpectralField, k, value, component: int | None = None):
    """Set g_hat(k) = value and g_hat(-k) = conj(value)."""
    k = tuple(int(ki) for ki in k)
    n = f.grid.n
    arr = f.coeffs if component is None else f.coeffs[component]
    if k[-1] < 0 or k[-1] > n // 2:
        set_coeff(f, tuple(-ki for ki in k), np.conj(value), component)
        return
    arr[_storage_index(f.grid, k)] = value
    if k[-1] == 0 or k[-1] == n // 2:
        # the conjugate partner lives in the same stored plane
        mk = tuple(-ki for ki in k)
        if _storage_index(f.grid, mk) != _storage_index(f.grid, k):
            arr[_storage_index(f.grid, mk)] = np.conj(value)


def mean_value(f: SpectralField) -> float | np.ndarray:
    idx = (0,) * f.grid.dim
    if f.is_vector:
        return f.coeffs[(slice(None),) + idx].real
    return float(f.coeffs[idx].real)


# ---------------------------------------------------------------------------
# real divergence-free Fourier basis

def in_positive_half(k) -> bool:
    """Membership in the Z^d_+ half used to pick the sin branch.

    d=2: k2 > 0, or (k2 = 0 and k1 > 0).  d=3 extends lexicographically so
    that Z^d_0 = Z^d_+ U (-Z^d_+) is a genuine partition.
    """
    k = tuple(int(ki) for ki in k)
    if all(ki == 0 for ki in k):
        raise SpectralError("k = 0 has no branch")
    if k[-1] != 0:
        return k[-1] > 0
    if k[0] != 0:
        return k[0] > 0
    return k[1] > 0


def polarization_vectors(k) -> np.ndarray:
    """Orthonormal vectors gamma_k^i spanning the plane perpendicular to k,
    odd under k -> -k.  Shape (d-1, d)."""
    k = np.asarray(k, dtype=np.float64)
    d = k.size
    if not np.any(k):
        raise SpectralError("k = 0 rejected")
    if d == 2:
        g = np.array([-k[1], k[0]]) / np.linalg.norm(k)
        return g[None, :]
    # d == 3: pick a deterministic auxiliary axis, even in k, not parallel
    a = np.zeros(3)
    a[int(np.argmin(np.abs(k)))] = 1.0
    g1 = np.cross(k, a)
    g1 /= np.linalg.norm(g1)
    g2 = np.cross(k, g1) / np.linalg.norm(k)
    # restore odd symmetry: cross(k, g1(k)) is even in k
    if not in_positive_half(k.astype(int)):
        g2 = -g2
    return np.stack([g1, g2])


def basis_normalization(dim: int) -> float:
    """c_d making ||c_d gamma sin(k.x)||_L2 = 1 on the torus."""
    return math.sqrt(2.0) / TAU ** (dim / 2.0)


def basis_mode_pair_coeffs(grid: Grid, k, i: int):
    """Coefficient (at +k) of the basis field e_{(k,i)}; the -k coefficient
    is its conjugate.  Returns (gamma, amp) with amp complex scalar."""
    k = tuple(int(ki) for ki in k)
    gamma = polarization_vectors(k)[i]
    c = basis_normalization(grid.dim)
    if in_positive_half(k):
        amp = -0.5j * c     # sin branch: sin(kx) = (e^{ikx} - e^{-ikx})/2i
    else:
        amp = 0.5 * c       # cos branch
    return gamma, amp


def basis_mode(grid: Grid, k, i: int = 0) -> SpectralField:
    """The real divergence-free basis field e_m, m = (k, i), unit L2 norm."""
    k = tuple(int(ki) for ki in k)
    if all(ki == 0 for ki in k):
        raise SpectralError("k = 0 rejected")
    if not (0 <= i <= grid.dim - 2):
        raise SpectralError(f"polarization index {i} out of range for d={grid.dim}")
    gamma, amp = basis_mode_pair_coeffs(grid, k, i)
    out = zeros(grid, "vector")
    for c in range(grid.dim):
        set_coeff(out, k, amp * gamma[c], component=c)
    return out


# ---------------------------------------------------------------------------
# projections

def project_leray(v: SpectralField) -> SpectralField:
    """Remove the gradient part: (Id - k k^T / |k|^2) applied modewise."""
    if not v.is_vector:
        raise SpectralError("project_leray expects a vector field")
    g = v.grid
    kv = g.wavenumbers.astype(np.float64)
    k2 = g.kmag2.astype(np.float64).copy()
    k2[k2 == 0] = 1.0
    dot = np.sum(kv * v.coeffs, axis=0)
    out = v.coeffs - kv * (dot / k2)
    return SpectralField(g, out)


def sharp_projection(f: SpectralField, N: float, band: str = "at_most") -> SpectralField:
    """Sharp Fourier cutoff: keep |k| <= N, or the dyadic shell N/2 < |k| <= N.

    The shell at N = 1 degenerates to |k| <= 1 so that shells tile the
    whole spectrum.  Comparisons use exact integer |k|^2 against N^2.
    """
    if N < 1:
        raise SpectralError("N must be >= 1")
    g = f.grid
    k2 = g.kmag2
    if band == "at_most":
        mask = k2 <= N * N
    elif band == "shell":
        if N <= 1:
            mask = k2 <= 1
        else:
            mask = (k2 > (N / 2.0) ** 2) & (k2 <= N * N)
    else:
        raise SpectralError(f"unknown band {band!r}")
    return SpectralField(g, np.where(mask, f.coeffs, 0.0))


def smoothstep_c2(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep on [0,1]: C2 at both endpoints."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 + t * (-15.0 + 6.0 * t))


def zeta_cutoff(x) -> np.ndarray:
    """Radial low-pass bump: 1 on |x| <= 1, 0 on |x| >= 3/2, C2 monotone
    (quintic smoothstep) in between."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    return 1.0 - smoothstep_c2((x - 1.0) / 0.5)


def psi_cutoff(x) -> np.ndarray:
    """Band bump zeta(x/2) - zeta(x), supported in (1, 3)."""
    x = np.asarray(x, dtype=np.float64)
    return zeta_cutoff(x / 2.0) - zeta_cutoff(x)


def smooth_projection(f: SpectralField, N: float, kind: str = "low") -> SpectralField:
    if N < 1:
        raise SpectralError("N must be >= 1")
    g = f.grid
    kmag = np.sqrt(g.kmag2.astype(np.float64))
    if kind == "low":
        mult = zeta_cutoff(kmag / N)
    elif kind == "band":
        mult = psi_cutoff(kmag / N)
    else:
        raise SpectralError(f"unknown kind {kind!r}")
    return SpectralField(g, f.coeffs * mult)


# ---------------------------------------------------------------------------
# norms and inner products

def _weighted_abs2_sum(f: SpectralField, weight: np.ndarray | float = 1.0) -> float:
    w = f.grid.reality_weights * weight
    c = f.coeffs
    total = np.sum(w * (c.real ** 2 + c.imag ** 2))
    return float(total)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Inhomogeneous H^s norm, ( (2pi)^d sum (1+|k|^2)^s |g_hat|^2 )^(1/2)."""
    g = f.grid
    weight = (1.0 + g.kmag2.astype(np.float64)) ** s
    return math.sqrt(g.volume * _weighted_abs2_sum(f, weight))


def l2_norm(f: SpectralField) -> float:
    return math.sqrt(f.grid.volume * _weighted_abs2_sum(f))


def grad_sq_l2(f: SpectralField) -> float:
    """||grad f||_L2^2 computed spectrally, sum |k|^2 |f_hat|^2 (times volume)."""
    g = f.grid
    return g.volume * _weighted_abs2_sum(f, g.kmag2.astype(np.float64))


def l2_inner(f: SpectralField, h: SpectralField) -> float:
    """Real L2 inner product <f, h> (componentwise sum for vectors)."""
    g = f.grid
    w = g.reality_weights
    prod = np.conj(f.coeffs) * h.coeffs
    if f.is_vector:
        prod = np.sum(prod, axis=0)
    return float(g.volume * np.sum(w * prod.real))


# ---------------------------------------------------------------------------
# derivatives, dealiasing, assorted calculus

def derivative(f: SpectralField, multi_index) -> SpectralField:
    """Apply prod_j (i k_j)^(m_j) modewise."""
    g = f.grid
    multi_index = tuple(int(m) for m in multi_index)
    if len(multi_index) != g.dim:
        raise SpectralError("multi_index length must equal dim")
    factor = np.ones(g.spectral_shape, dtype=np.complex128)
    for a, m in enumerate(multi_index):
        if m:
            factor = factor * (1j * g.wavenumbers[a].astype(np.float64)) ** m
    return SpectralField(g, f.coeffs * factor)


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field as a vector field."""
    if f.is_vector:
        raise SpectralError("gradient expects a scalar field")
    g = f.grid
    kv = g.wavenumbers.astype(np.float64)
    return SpectralField(g, 1j * kv * f.coeffs[None, ...])


def divergence(v: SpectralField) -> SpectralField:
    if not v.is_vector:
        raise SpectralError("divergence expects a vector field")
    g = v.grid
    kv = g.wavenumbers.astype(np.float64)
    return SpectralField(g, np.sum(1j * kv * v.coeffs, axis=0))


def max_divergence(v: SpectralField) -> float:
    return float(np.max(np.abs(divergence(v).coeffs)))


def curl_2d(u: SpectralField) -> SpectralField:
    """Scalar curl d1 u2 - d2 u1 (d = 2 only)."""
    g = u.grid
    if g.dim != 2 or not u.is_vector:
        raise SpectralError("curl_2d expects a 2d vector field")
    kv = g.wavenumbers.astype(np.float64)
    c = 1j * (kv[0] * u.coeffs[1] - kv[1] * u.coeffs[0])
    return SpectralField(g, c)


def dealias(f: SpectralField) -> SpectralField:
    """2/3-rule truncation: zero all |k|_inf > n//3."""
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def translate(f: SpectralField, shift) -> SpectralField:
    """Exact torus translation g(x) -> g(x + h) via phase factors."""
    g = f.grid
    shift = np.asarray(shift, dtype=np.float64)
    phase = np.exp(1j * np.tensordot(shift, g.wavenumbers.astype(np.float64), axes=(0, 0)))
    return SpectralField(g, f.coeffs * phase)
