"""Harmonic-bath discretization and thermal Wigner sampling.

Each spin owns a bath of ``n_modes`` oscillators with unit mass. All baths
share the same frequencies and couplings; only the inverse temperature
differs from bath to bath.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COUPLING_FORMS = {"literal": 0, "ohmic": 1}


@dataclass(frozen=True, eq=False)
class BathModes:
    """Discretized modes shared by every bath plus per-bath inverse temperatures.

    Attributes
    ----------
    omega : ndarray, shape (N,)
        Mode frequencies, strictly increasing, ``omega[-1] == omega_max``.
    c : ndarray, shape (N,)
        Position couplings in ``-sum_I c_I R_I sigma_z``.
    xi : float
        Dimensionless coupling strength.
    omega_max : float
        Largest mode frequency.
    omega0 : float
        Spacing parameter ``(1 - exp(-omega_max)) / N``.
    beta : tuple of float
        Inverse temperature of each bath (``inf`` means zero temperature).
    coupling_form : str
        ``"literal"`` for c_I = sqrt(xi omega0 omega_I), ``"ohmic"`` for
        c_I = sqrt(xi omega0) omega_I.
    """

    omega: np.ndarray
    c: np.ndarray
    xi: float
    omega_max: float
    omega0: float
    beta: tuple = ()
    coupling_form: str = "literal"

    @property
    def spectral_power(self) -> int:
        """Exponent p of the continuum spectral density (xi/2) omega**p exp(-omega)."""
        return COUPLING_FORMS[self.coupling_form]

    @property
    def n_modes(self) -> int:
        return self.omega.size

    @property
    def n_baths(self) -> int:
        return len(self.beta)

    @property
    def g(self) -> np.ndarray:
        """Second-quantized couplings g_I = c_I / sqrt(2 omega_I) for -sigma_z sum g (b + b^dag)."""
        return self.c / np.sqrt(2.0 * self.omega)

    def with_beta(self, beta) -> "BathModes":
        return BathModes(self.omega, self.c, self.xi, self.omega_max, self.omega0, _check_beta(beta), self.coupling_form)


def _check_beta(beta) -> tuple:
    beta = tuple(float(b) for b in np.atleast_1d(beta))
    for b in beta:
        if not b > 0:
            raise ValueError(f"inverse temperature must be positive, got {b}")
    return beta


def discretize_bath(n_modes: int, xi: float, omega_max: float, beta=(1.0, 1.0), coupling_form="literal") -> BathModes:
    """Logarithmic mode grid omega_I = -ln(1 - I omega0).

    With the default ``"literal"`` couplings c_I = sqrt(xi omega0 omega_I) the
    continuum limit has spectral density (xi/2) exp(-omega); ``"ohmic"``
    uses c_I = sqrt(xi omega0) omega_I, giving (xi/2) omega exp(-omega).
    """
    if coupling_form not in COUPLING_FORMS:
        raise ValueError(f"coupling_form must be one of {sorted(COUPLING_FORMS)}, got {coupling_form!r}")
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError(f"n_modes must be a positive integer, got {n_modes}")
    if not omega_max > 0:
        raise ValueError(f"omega_max must be positive, got {omega_max}")
    if not xi >= 0:
        raise ValueError(f"xi must be non-negative, got {xi}")
    n_modes = int(n_modes)
    omega0 = -np.expm1(-omega_max) / n_modes
    index = np.arange(1, n_modes + 1)
    omega = -np.log1p(-index * omega0)
    # 1 - N omega0 == exp(-omega_max) analytically; remove the rounding
    omega[-1] = omega_max
    if coupling_form == "literal":
        c = np.sqrt(xi * omega0 * omega)
    else:
        c = np.sqrt(xi * omega0) * omega
    omega.setflags(write=False)
    c.setflags(write=False)
    return BathModes(omega, c, float(xi), float(omega_max), float(omega0), _check_beta(beta), coupling_form)


def _coth_half(beta: float, omega: np.ndarray) -> np.ndarray:
    return 1.0 / np.tanh(0.5 * beta * omega)


def thermal_variances(omega, beta: float):
    """Wigner variances (Var R, Var P) of a thermal unit-mass oscillator."""
    omega = np.asarray(omega, dtype=float)
    coth = _coth_half(beta, omega)
    return coth / (2.0 * omega), 0.5 * omega * coth


def sample_thermal(modes: BathModes, ks: int, rng: np.random.Generator, size=None):
    """Draw (R, P) for every mode of bath ``ks`` from its thermal Wigner density.

    Returns arrays of shape ``size + (N,)`` (or ``(N,)`` when size is None).
    """
    beta = modes.beta[ks]
    var_r, var_p = thermal_variances(modes.omega, beta)
    shape = (modes.n_modes,) if size is None else tuple(np.atleast_1d(size)) + (modes.n_modes,)
    r = rng.standard_normal(shape) * np.sqrt(var_r)
    p = rng.standard_normal(shape) * np.sqrt(var_p)
    return r, p


def log_wigner_density(modes: BathModes, ks: int, R, P) -> np.ndarray:
    """Logarithm of the normalized product Wigner density of bath ``ks``."""
    R = np.asarray(R, dtype=float)
    P = np.asarray(P, dtype=float)
    if R.shape[-1] != modes.n_modes or P.shape != R.shape:
        raise ValueError(f"expected trailing dimension {modes.n_modes}, got {R.shape} and {P.shape}")
    omega = modes.omega
    tanh = np.tanh(0.5 * modes.beta[ks] * omega)
    energy = 0.5 * P**2 + 0.5 * omega**2 * R**2
    return np.sum(np.log(tanh / np.pi) - 2.0 * tanh / omega * energy, axis=-1)


def wigner_density(modes: BathModes, ks: int, R, P) -> np.ndarray:
    return np.exp(log_wigner_density(modes, ks, R, P))
