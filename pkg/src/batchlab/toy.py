"""Closed-form pure-strain model: the analytic oracle for the |k|^{-1}
spectrum.

A single Fourier mode advected by the planar strain u(x) = (gamma x1,
-gamma x2) with diffusivity kappa keeps the form C_t sin(xi_t . x) where

    dxi/dt = -A xi   =>  xi_t = (e^{gamma t} xi01, e^{-gamma t} xi02)
    dC/dt  = -kappa |xi_t|^2 C

With a white-in-time source of intensity chi at frequency xi_0, the
stationary spectrum below frequency n carries mass chi * int_0^{t(n)} C_s^2 ds
where t(n) inverts n = |xi_t|; its n-derivative is the power spectral
density Gamma(n) = t'(n) chi C_{t(n)}^2 ~ chi/(gamma n) in the inertial
window 1 << n <~ sqrt(gamma/kappa).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


class ToyError(ValueError):
    pass


@dataclass(frozen=True)
class StrainModel:
    gamma: float = 1.0
    kappa: float = 1e-8
    chi: float = 1.0
    xi0: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.gamma <= 0 or self.kappa < 0 or self.chi <= 0:
            raise ToyError("require gamma > 0, kappa >= 0, chi > 0")
        if abs(abs(self.xi0[0]) - 1.0) > 1e-12:
            raise ToyError("initial frequency must have |<xi0, e1>| = 1")


def frequency_trajectory(model: StrainModel, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    xi1 = model.xi0[0] * np.exp(model.gamma * t)
    xi2 = model.xi0[1] * np.exp(-model.gamma * t)
    return np.stack([xi1, xi2], axis=-1)


def frequency_norm(model: StrainModel, t):
    xi = frequency_trajectory(model, t)
    return np.sqrt(np.sum(xi ** 2, axis=-1))


def _monotone_threshold(model: StrainModel) -> float:
    # |xi_t|^2 = a e^{2gt} + b e^{-2gt} is increasing past its minimum;
    # with |xi01| = 1 the minimum sits at t* <= log|xi02| / (2 gamma)
    b = model.xi0[1] ** 2
    if b <= 1.0:
        return 0.0
    return math.log(b) / (4.0 * model.gamma)


def freq_inverse(model: StrainModel, n: float) -> float:
    """t(n): the unique time with |xi_t| = n in the monotone regime,
    found by bisection to 1e-12."""
    xi0_norm = math.hypot(*model.xi0)
    if n < xi0_norm:
        raise ToyError(f"n = {n:g} below the monotone threshold |xi0| = {xi0_norm:g}")
    t_lo = _monotone_threshold(model)
    if frequency_norm(model, t_lo) > n:
        t_lo = 0.0
        if frequency_norm(model, 0.0) > n:
            raise ToyError(f"n = {n:g} below the monotone threshold")
    t_hi = max(t_lo + 1.0, math.log(max(n, 2.0)) / model.gamma + 2.0)
    while frequency_norm(model, t_hi) < n:
        t_hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (t_lo + t_hi)
        if frequency_norm(model, mid) < n:
            t_lo = mid
        else:
            t_hi = mid
        if t_hi - t_lo < 1e-12 * max(1.0, t_hi):
            break
    return 0.5 * (t_lo + t_hi)


def freq_inverse_derivative(model: StrainModel, n: float) -> float:
    """t'(n) = 1 / (d|xi_t|/dt at t(n)), analytic."""
    t = freq_inverse(model, n)
    g = model.gamma
    a = model.xi0[0] ** 2 * math.exp(2 * g * t)
    b = model.xi0[1] ** 2 * math.exp(-2 * g * t)
    d_norm_dt = g * (a - b) / math.sqrt(a + b)
    if d_norm_dt <= 0:
        raise ToyError("inverse not differentiable at the monotone threshold")
    return 1.0 / d_norm_dt


def amplitude(model: StrainModel, t) -> np.ndarray:
    """C_t = exp(-kappa [xi01^2 (e^{2gt}-1) - xi02^2 (e^{-2gt}-1)] / (2g)),
    the exact quadrature of dC/dt = -kappa |xi_t|^2 C."""
    t = np.asarray(t, dtype=np.float64)
    g = model.gamma
    a = model.xi0[0] ** 2
    b = model.xi0[1] ** 2
    integral = (a * (np.exp(2 * g * t) - 1.0) - b * (np.exp(-2 * g * t) - 1.0)) / (2 * g)
    return np.exp(-model.kappa * integral)


def power_spectral_density(model: StrainModel, n: float) -> float:
    """Gamma(n) = t'(n) * chi * C_{t(n)}^2."""
    t = freq_inverse(model, n)
    return freq_inverse_derivative(model, n) * model.chi * float(amplitude(model, t)) ** 2


def cumulative_mass(model: StrainModel, n: float, rel_tol: float = 1e-9) -> float:
    """chi * int_0^{t(n)} C_s^2 ds by adaptive quadrature."""
    t_n = freq_inverse(model, n)
    val, err = quad(lambda s: float(amplitude(model, s)) ** 2, 0.0, t_n,
                    epsrel=rel_tol, epsabs=0.0, limit=200)
    if not math.isfinite(val) or (val > 0 and err > 50 * rel_tol * val):
        raise ToyError(f"quadrature did not converge (estimate {val:g}, error {err:g})")
    return model.chi * val


def spectrum_table(model: StrainModel, n_values) -> list:
    """Rows (n, Gamma, cumulative, chi/(gamma n)) for the CSV emitter."""
    rows = []
    for n in n_values:
        rows.append((float(n), power_spectral_density(model, n),
                     cumulative_mass(model, n),
                     model.chi / (model.gamma * float(n))))
    return rows
