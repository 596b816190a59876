"""Born-Markov / rotating-wave master equation of the two-spin XXZ chain.

Rate convention: ``markov_rate(xi, beta, +w)`` is the emission rate (the
system gives energy w to the bath, Bose factor n + 1) and ``-w`` the
absorption rate. The lowering eigenoperator |l3><l4| therefore relaxes at
the emission rate, which drives the {l3, l4} block to the Gibbs ratio.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .bath import BathModes


@dataclass(frozen=True)
class EigenSystemHS:
    """Eigenpairs of H_S for j_x = j_y = j; column i of ``vectors`` is |lambda_{i+1}>."""

    j: float
    j_z: float
    lambdas: np.ndarray
    vectors: np.ndarray

    @property
    def omega(self) -> float:
        """Transition frequency lambda_4 - lambda_3 = 4 j."""
        return 4.0 * self.j

    def to_natural(self, f: np.ndarray) -> np.ndarray:
        return self.vectors @ f @ self.vectors.T

    def to_eigen(self, rho: np.ndarray) -> np.ndarray:
        return self.vectors.T @ rho @ self.vectors


def eigensystem_hs(j: float, j_z: float) -> EigenSystemHS:
    if j < 0:
        raise ValueError(f"j must be non-negative, got {j}")
    r = 1.0 / np.sqrt(2.0)
    vectors = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, r, -r],
        [0.0, 0.0, r, r],
        [0.0, 1.0, 0.0, 0.0],
    ])
    lambdas = np.array([-j_z, -j_z, -2.0 * j + j_z, 2.0 * j + j_z])
    return EigenSystemHS(float(j), float(j_z), lambdas, vectors)


def bose(beta: float, omega: float) -> float:
    if np.isinf(beta):
        return 0.0
    return 1.0 / np.expm1(beta * omega)


def markov_rate(xi: float, beta: float, omega: float, spectral_power: int = 0) -> float:
    """Continuum-bath rate gamma(omega) = 2 pi J(|omega|) (n + 1 or n).

    ``spectral_power`` selects J(w) = (xi/2) w**p exp(-w): p = 0 is the continuum
    of the literal coupling formula, p = 1 the Ohmic (Makri) variant.
    """
    if xi < 0:
        raise ValueError("xi must be non-negative")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if omega == 0:
        raise ValueError("gamma(0) diverges for this bath; regularize via dephasing_rate_sum")
    w = abs(omega)
    base = np.pi * xi * w**spectral_power * np.exp(-w)
    n = bose(beta, w)
    return float(base * (n + 1.0) if omega > 0 else base * n)


def dephasing_rate_sum(xi: float, beta: float, omega_reg: float, spectral_power: int = 0) -> float:
    """gamma(0+) + gamma(0-) evaluated at the regularizing frequency ``omega_reg``."""
    return markov_rate(xi, beta, omega_reg, spectral_power) + markov_rate(xi, beta, -omega_reg, spectral_power)


def discrete_bath_rate(modes: BathModes, beta: float, omega: float, broadening: float) -> float:
    """Rate of the discretized bath, each delta line broadened to a unit Gaussian of width ``broadening``.

    Independent of :func:`markov_rate`: it sums the actual modes,
    2 pi sum_I g_I^2 [(n_I + 1) delta(omega - w_I) + n_I delta(omega + w_I)].
    """
    if broadening <= 0:
        raise ValueError("broadening must be positive")
    if abs(omega) > modes.omega[-1] + 3 * broadening:
        warnings.warn(f"omega={omega} lies outside the discretized bath support", RuntimeWarning, stacklevel=2)
    w = modes.omega
    g2 = modes.g**2
    n = np.array([bose(beta, wi) for wi in w])

    def kernel(x):
        return np.exp(-0.5 * (x / broadening) ** 2) / (np.sqrt(2 * np.pi) * broadening)

    return float(2 * np.pi * np.sum(g2 * ((n + 1) * kernel(omega - w) + n * kernel(omega + w))))


@dataclass(frozen=True)
class RateSet:
    """Per-bath rates and the constants of the closed-form solution.

    gamma_plus[i] / gamma_minus[i] are emission / absorption at omega = 4 j;
    dephasing[i] = gamma^(i)(0+) + gamma^(i)(0-).
    """

    gamma_plus: tuple
    gamma_minus: tuple
    dephasing: tuple
    omega_plus: float
    omega_minus: float
    g_c: float

    @property
    def omega_total(self) -> float:
        return self.omega_plus + self.omega_minus


def omega_constants(gamma_plus, gamma_minus, dephasing):
    """(Omega_+, Omega_-, Omega, g_c) averaged over baths."""
    gp = np.asarray(gamma_plus, dtype=float)
    gm = np.asarray(gamma_minus, dtype=float)
    gd = np.asarray(dephasing, dtype=float)
    omega_plus = 0.5 * gp.sum()
    omega_minus = 0.5 * gm.sum()
    g_c = 0.5 * gd.sum()
    return omega_plus, omega_minus, omega_plus + omega_minus, g_c


def rate_set(gamma_plus, gamma_minus, dephasing) -> RateSet:
    op, om, _, gc = omega_constants(gamma_plus, gamma_minus, dephasing)
    return RateSet(
        tuple(map(float, gamma_plus)), tuple(map(float, gamma_minus)), tuple(map(float, dephasing)),
        float(op), float(om), float(gc),
    )


def bath_rates(xi, betas, omega, omega_reg, g_c=None, spectral_power=0) -> RateSet:
    """RateSet of independent baths with inverse temperatures ``betas``.

    ``omega_reg`` regularizes gamma(0+-) (default convention: the lowest
    discretized mode frequency); ``g_c`` overrides the dephasing constant.
    """
    gp = tuple(markov_rate(xi, b, omega, spectral_power) if omega > 0 else 0.0 for b in betas)
    gm = tuple(markov_rate(xi, b, -omega, spectral_power) if omega > 0 else 0.0 for b in betas)
    gd = tuple(dephasing_rate_sum(xi, b, omega_reg, spectral_power) for b in betas)
    if g_c is not None:
        if g_c < 0:
            raise ValueError("g_c must be non-negative")
        gd = (2.0 * g_c / len(betas),) * len(betas)
    return rate_set(gp, gm, gd)


def override_total_rate(rates: RateSet, omega_total: float, betas, omega: float) -> RateSet:
    """Rescale emission and absorption so that Omega_+ + Omega_- equals ``omega_total``.

    The emission / absorption split is kept; when both formula rates vanish
    (xi = 0) it is taken from the bath-averaged Bose factors instead.
    """
    if omega_total < 0:
        raise ValueError("Omega must be non-negative")
    gp = np.array(rates.gamma_plus)
    gm = np.array(rates.gamma_minus)
    total = rates.omega_total
    if total > 0:
        gp *= omega_total / total
        gm *= omega_total / total
    else:
        n = np.array([bose(b, omega) if omega > 0 else 0.0 for b in betas])
        # Omega_+- are bath averages, so the per-bath rates sum to 2 Omega
        weight = 2.0 * omega_total / (2 * n + 1).sum()
        gp = weight * (n + 1)
        gm = weight * n
    return rate_set(gp, gm, rates.dephasing)


def _relax_fraction(rate, t):
    # (1 - exp(-2 Omega t)) / Omega with the Omega -> 0 limit 2 t
    if rate == 0:
        return 2.0 * t
    return -np.expm1(-2.0 * rate * t) / rate


def evolve_closed_form(rho0, t, eig: EigenSystemHS, rates: RateSet) -> np.ndarray:
    """Exact solution of the master equation, rho0 and result in the natural basis.

    In the H_S eigenbasis the populations f11, f22 are constant, f33 / f44
    relax at 2 Omega towards Omega_+ : Omega_-, and the coherences decay as
    f12 ~ exp(-4 g_c t), f13, f23 ~ exp(-(g_c + Omega_-) t),
    f14, f24 ~ exp(-(g_c + Omega_+) t), f34 ~ exp(-Omega t), each also
    rotating at its Bohr frequency.
    """
    f0 = eig.to_eigen(np.asarray(rho0, dtype=complex))
    lam = eig.lambdas
    op, om = rates.omega_plus, rates.omega_minus
    total = op + om
    gc = rates.g_c

    f = np.zeros((4, 4), dtype=complex)
    f[0, 0] = f0[0, 0]
    f[1, 1] = f0[1, 1]
    frac = _relax_fraction(total, t)
    f[2, 2] = f0[2, 2] + frac * (op * f0[3, 3] - om * f0[2, 2])
    f[3, 3] = f0[3, 3] + frac * (om * f0[2, 2] - op * f0[3, 3])
    decay = {
        (0, 1): 4 * gc,
        (0, 2): gc + om,
        (0, 3): gc + op,
        (1, 2): gc + om,
        (1, 3): gc + op,
        (2, 3): total,
    }
    for (i, j), gamma in decay.items():
        f[i, j] = f0[i, j] * np.exp(-gamma * t + 1j * t * (lam[j] - lam[i]))
        f[j, i] = f0[j, i] * np.exp(-gamma * t - 1j * t * (lam[j] - lam[i]))
    return eig.to_natural(f)


def steady_state_ratio(rates: RateSet) -> float:
    """f33(inf) / f44(inf)."""
    return rates.omega_plus / rates.omega_minus


# ---------------------------------------------------------------------------
# independent check: explicit Liouvillian and its matrix exponential


def _dissipator(L):
    # column-stacking vec: vec(A X B) = (B^T kron A) vec(X)
    d = L.shape[0]
    eye = np.eye(d)
    LdL = L.conj().T @ L
    return np.kron(L.conj(), L) - 0.5 * np.kron(eye, LdL) - 0.5 * np.kron(LdL.T, eye)


def liouvillian(h_s, eig: EigenSystemHS, rates: RateSet) -> np.ndarray:
    """16 x 16 superoperator of the master equation (column-stacking convention)."""
    d = 4
    eye = np.eye(d)
    h = np.asarray(h_s, dtype=complex)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    l3 = eig.vectors[:, 2]
    l4 = eig.vectors[:, 3]
    l1 = eig.vectors[:, 0]
    l2 = eig.vectors[:, 1]
    lower = np.outer(l3, l4)
    v0 = np.outer(l1, l1) - np.outer(l2, l2)
    for i, sign in enumerate((-1.0, 1.0)):
        v = sign * lower
        sup = sup + rates.gamma_plus[i] * _dissipator(v) + rates.gamma_minus[i] * _dissipator(v.conj().T)
        sup = sup + rates.dephasing[i] * _dissipator(v0)
    return sup


def evolve_liouvillian(rho0, t, h_s, eig: EigenSystemHS, rates: RateSet) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    vec = rho0.reshape(-1, order="F")
    out = expm(liouvillian(h_s, eig, rates) * t) @ vec
    return out.reshape(rho0.shape, order="F")
