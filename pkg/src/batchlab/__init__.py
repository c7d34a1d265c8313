"""batchlab: a pseudo-spectral laboratory for passive-scalar turbulence in
the Batchelor regime (stochastically forced fluids on the torus coupled to a
stochastically sourced advection-diffusion scalar, plus the diagnostics that
quantify the cascade: cumulative spectra, flux balances, Yaglom structure
functions, Lyapunov exponents and mixing rates)."""

__version__ = "0.1.0"
