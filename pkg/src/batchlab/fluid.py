"""Fluid models on the torus and their time steppers.

Five velocity processes share one stochastic exponential integrator:

* nse2d      -- 2D Navier-Stokes, A = -nu Laplacian
* hvnse3d    -- 3D hyperviscous Navier-Stokes, A = -nu' Laplacian + nu Laplacian^2
* stokes     -- no nonlinearity (a product of independent OU modes)
* galerkin   -- nonlinearity and state projected to |k|_inf <= N
* ou_tower   -- galerkin drift, forced by Q Z_t with Z an exact OU chain

One step reads u' = e^{-A dt} (u - dt B(u,u) [+ dt Q Z]) + eta, where eta is
the stochastic convolution increment sampled with its exact per-mode variance
q_m^2 (1 - e^{-2 lambda_k dt}) / (2 lambda_k).  The nonlinearity is evaluated
pseudo-spectrally in conservative form with 2/3 dealiasing, which keeps
<u, B(u,u)> = 0 to round-off.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .forcing import ForcingSpec, NoiseStream, OUTowerProcess
from .spectral import (
    Grid, SpectralField, curl_2d, l2_norm, sobolev_norm, transform_backward,
)


class FluidError(ValueError):
    pass


class CFLViolation(RuntimeError):
    def __init__(self, u_inf, limit, dt):
        self.u_inf = u_inf
        self.limit = limit
        super().__init__(
            f"CFL violated: dt = {dt:g} exceeds {limit:g} at |u|_inf = {u_inf:g}")


class UnstableStep(RuntimeError):
    pass


MODEL_TAGS = ("nse2d", "hvnse3d", "stokes", "galerkin", "ou_tower")


@dataclass(frozen=True)
class FluidModel:
    """Which velocity process runs, and its dissipation parameters."""

    tag: str
    nu: float = 0.1
    nu_prime: float = 0.0      # optional Laplacian coefficient when d = 3
    galerkin_N: int | None = None
    tower_M: int | None = None     # OU-chain band; defaults to galerkin_N
    tower_depth: int = 3
    tower_amplitude: float = 1.0
    tower_nonlinear: bool = True

    def __post_init__(self):
        if self.tag not in MODEL_TAGS:
            raise FluidError(f"unknown fluid model {self.tag!r}")
        if self.nu <= 0:
            raise FluidError("nu must be positive")
        if self.tag in ("galerkin", "ou_tower"):
            if self.galerkin_N is None or self.galerkin_N < 2:
                raise FluidError("galerkin/ou_tower models need N >= 2")
        if self.tag == "ou_tower" and self.tower_M is not None \
                and self.tower_M < self.galerkin_N:
            raise FluidError("ou_tower requires M >= N")

    def symbol(self, grid: Grid) -> np.ndarray:
        """lambda_k, the Fourier symbol of the dissipation operator A."""
        k2 = grid.kmag2.astype(np.float64)
        if grid.dim == 3 and self.tag == "hvnse3d":
            return self.nu_prime * k2 + self.nu * k2 ** 2
        return self.nu * k2

    def expects_dim(self) -> int | None:
        return {"nse2d": 2, "hvnse3d": 3}.get(self.tag)


@dataclass
class FluidState:
    u: SpectralField
    t: float = 0.0
    z: np.ndarray | None = None     # OU-tower auxiliary state, shape (M, depth)


# ---------------------------------------------------------------------------
# nonlinearity

def _nonlinear_from_real(grid: Grid, u_real: np.ndarray) -> np.ndarray:
    """Leray-projected divergence of the tensor product, dealiased.

    Returns raw coefficients of B(u, u).  With dealiased input the grid
    products are exact convolutions, so <u, B(u,u)> vanishes identically.
    The distinct tensor entries go through one batched transform.
    """
    d = grid.dim
    kv = grid.wavenumbers_float
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    prods = np.empty((len(pairs),) + grid.shape)
    for m, (i, j) in enumerate(pairs):
        np.multiply(u_real[i], u_real[j], out=prods[m])
    phat = np.fft.rfftn(prods, axes=grid._fft_axes)
    div = np.zeros((d,) + grid.spectral_shape, dtype=np.complex128)
    for (i, j), pij in zip(pairs, phat):
        div[i] += kv[j] * pij
        if j != i:
            div[j] += kv[i] * pij
    div *= (1j / float(grid.n ** grid.dim)) * grid.dealias_mask
    k2 = grid.kmag2_float.copy()
    k2[k2 == 0] = 1.0
    dot = np.einsum("a...,a...->...", kv, div)
    dot /= k2
    div -= kv * dot
    return div


def nonlinear_term(u: SpectralField) -> SpectralField:
    """B(u,u): Leray projection of div(u (x) u), dealiased and mean-zero."""
    if not u.is_vector:
        raise FluidError("nonlinear_term expects a vector field")
    u_real = transform_backward(u)
    return SpectralField(u.grid, _nonlinear_from_real(u.grid, u_real))


# ---------------------------------------------------------------------------
# stepper

class FluidStepper:
    """Single-writer stepper for one trajectory; precomputes per-dt factors."""

    def __init__(self, model: FluidModel, forcing: ForcingSpec | None,
                 grid: Grid, dt: float, cfl: float = 0.5):
        if dt <= 0:
            raise FluidError("dt must be positive")
        want = model.expects_dim()
        if want is not None and grid.dim != want:
            raise FluidError(f"model {model.tag} requires dim = {want}")
        self.model = model
        self.forcing = forcing
        self.grid = grid
        self.dt = dt
        self.cfl = cfl
        lam = model.symbol(grid)
        self.decay = np.exp(-lam * dt)
        self.support = grid.dealias_mask.copy()
        if model.tag in ("galerkin", "ou_tower"):
            N = model.galerkin_N
            for a in range(grid.dim):
                self.support &= np.abs(grid.wavenumbers[a]) <= N
        # exact stochastic-convolution scale per forced mode
        if forcing is not None and model.tag != "ou_tower":
            lam_m = self._mode_symbol(forcing)
            self.noise_scale = forcing.q * np.sqrt(
                (1.0 - np.exp(-2.0 * lam_m * dt)) / (2.0 * lam_m))
        else:
            self.noise_scale = None
        if model.tag == "ou_tower":
            if forcing is None:
                raise FluidError("ou_tower model needs a forcing spec for Q")
            self.tower = OUTowerProcess.chain(model.tower_depth, 1.0)
            self._tower_E, self._tower_root = self.tower._factors(dt)
            self.tower_gamma = np.full(forcing.n_modes, model.tower_amplitude)
            # Q acts only on |m|_inf <= N even when the Z chains extend to M
            kinf = np.max(np.abs(forcing.mode_k), axis=1)
            self._tower_q = np.where(kinf <= model.galerkin_N, forcing.q, 0.0)
        else:
            self.tower = None

    def _mode_symbol(self, forcing):
        k2 = forcing.kmag2.astype(np.float64)
        if self.grid.dim == 3 and self.model.tag == "hvnse3d":
            return self.model.nu_prime * k2 + self.model.nu * k2 ** 2
        return self.model.nu * k2

    def initial_state(self, u: SpectralField | None = None) -> FluidState:
        from .spectral import zeros
        if u is None:
            u = zeros(self.grid, "vector")
        z = None
        if self.tower is not None:
            z = np.zeros((self.forcing.n_modes, self.model.tower_depth))
        return FluidState(u=u, t=0.0, z=z)

    def step(self, state: FluidState, stream: NoiseStream | None,
             counter: int, u_real: np.ndarray | None = None) -> FluidState:
        u = state.u
        coeffs = u.coeffs
        if not np.all(np.isfinite(coeffs.view(np.float64))):
            raise UnstableStep(f"non-finite velocity at step {counter} (t = {state.t:g})")
        if u_real is None:
            u_real = transform_backward(u)
        u_inf = float(np.max(np.abs(u_real)))
        limit = self.cfl * (2 * math.pi / self.grid.n) / max(u_inf, 1e-300)
        if u_inf > 0 and self.dt > limit:
            raise CFLViolation(u_inf, limit, self.dt)

        if self.model.tag in ("nse2d", "hvnse3d"):
            drift = _nonlinear_from_real(self.grid, u_real)
            drift *= -self.dt
            drift += coeffs
        elif self.model.tag in ("galerkin", "ou_tower") and self.model.tower_nonlinear:
            drift = _nonlinear_from_real(self.grid, u_real)
            drift *= self.support
            drift *= -self.dt
            drift += coeffs
        else:
            drift = coeffs.copy()

        z_new = None
        if self.tower is not None:
            # u is forced by Q Z_t (held over the step), Z updated exactly
            qz = np.zeros_like(coeffs)
            self.forcing.accumulate(qz, self._tower_q * state.z[:, 0])
            drift += self.dt * qz
            xi = stream.normals((counter << 1) | 1, state.z.shape) if stream else 0.0
            z_new = state.z @ self._tower_E.T + \
                (xi @ self._tower_root.T) * self.tower_gamma[:, None]

        drift *= self.decay
        if self.noise_scale is not None and stream is not None:
            xi = stream.normals(counter, self.forcing.n_modes)
            self.forcing.accumulate(drift, self.noise_scale * xi)
        drift *= self.support
        return FluidState(u=SpectralField(self.grid, drift),
                          t=state.t + self.dt, z=z_new)

    def step_with_normals(self, state: FluidState, xi: np.ndarray) -> FluidState:
        """Deterministic-function-of-noise variant used by refinement tests."""
        u_real = transform_backward(state.u)
        drift = state.u.coeffs.copy()
        if self.model.tag in ("nse2d", "hvnse3d", "galerkin"):
            B = _nonlinear_from_real(self.grid, u_real)
            if self.model.tag == "galerkin":
                B *= self.support
            drift -= self.dt * B
        out = self.decay * drift
        if self.noise_scale is not None:
            self.forcing.accumulate(out, self.noise_scale * xi)
        out *= self.support
        return FluidState(u=SpectralField(self.grid, out), t=state.t + self.dt)


def step_fluid(state: FluidState, model: FluidModel, forcing_spec,
               dt: float, stream: NoiseStream | None, counter: int = 0,
               cfl: float = 0.5) -> FluidState:
    """One-shot step (builds a throwaway stepper; loops should hold one)."""
    grid = state.u.grid
    return FluidStepper(model, forcing_spec, grid, dt, cfl).step(state, stream, counter)


# ---------------------------------------------------------------------------
# observables

def energy_norm_w(u: SpectralField) -> float:
    """||u||_W: enstrophy-type norm for d = 2 (||curl u||_L2), L2 for d = 3."""
    if u.grid.dim == 2:
        return l2_norm(curl_2d(u))
    return l2_norm(u)


def q_constant(forcing: ForcingSpec, dim: int) -> float:
    """The drift-condition constant: 64 sup_m |k||q_m| (d=2) or 64 sup|q_m|."""
    if dim == 2:
        kmag = np.sqrt(forcing.kmag2.astype(np.float64))
        return 64.0 * float(np.max(kmag * forcing.q))
    return 64.0 * float(np.max(forcing.q))


def eta_star(model: FluidModel, forcing: ForcingSpec, dim: int) -> float:
    return model.nu / q_constant(forcing, dim)


def lyapunov_function(u: SpectralField, beta: float, eta: float,
                      sigma: float = 4.0, eta_max: float | None = None):
    """V(u) = (1 + ||u||_{H^sigma}^2)^beta * exp(eta ||u||_W^2).

    Returns (value, warned): warned is True when eta sits at or above the
    supplied drift threshold eta_max, in which case moment boundedness of V
    along trajectories is not guaranteed.
    """
    if beta < 0 or eta <= 0:
        raise FluidError("require beta >= 0 and eta > 0")
    warned = eta_max is not None and eta >= eta_max
    h2 = sobolev_norm(u, sigma) ** 2
    w2 = energy_norm_w(u) ** 2
    return (1.0 + h2) ** beta * math.exp(eta * w2), warned


def fluid_observables(u: SpectralField, sigma: float = 4.0) -> dict:
    """Standard run-health monitors."""
    obs = {
        "energy": 0.5 * l2_norm(u) ** 2,
        "h_sigma_norm": sobolev_norm(u, sigma),
    }
    if u.grid.dim == 2:
        obs["enstrophy"] = 0.5 * l2_norm(curl_2d(u)) ** 2
    else:
        from .spectral import grad_sq_l2
        obs["enstrophy"] = 0.5 * sum(
            grad_sq_l2(SpectralField(u.grid, u.coeffs[c])) for c in range(3))
    return obs
