import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinbath.bath import discretize_bath
from spinbath.lindblad import (
    bath_rates,
    bose,
    discrete_bath_rate,
    eigensystem_hs,
    evolve_closed_form,
    evolve_liouvillian,
    markov_rate,
    omega_constants,
    override_total_rate,
    rate_set,
    steady_state_ratio,
)
from spinbath.model import SpinChainParams, spin_hamiltonian

EIG = eigensystem_hs(1.0, 0.5)
H_S = spin_hamiltonian(SpinChainParams(2, 1.0, 1.0, 0.5))
XI = 0.007


def random_density(seed, d=4):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def rates_for(betas, omega_reg=0.05, **kw):
    return bath_rates(XI, betas, EIG.omega, omega_reg, **kw)


def pure(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# eigensystem


def test_eigenvalues_with_chain_parameters():
    np.testing.assert_allclose(EIG.lambdas, [-0.5, -0.5, -1.5, 2.5])
    assert EIG.omega == 4.0
    assert EIG.lambdas[3] - EIG.lambdas[2] == EIG.omega


@given(st.floats(0, 5), st.floats(0, 5))
def test_eigensystem_diagonalizes_spin_hamiltonian(j, jz):
    eig = eigensystem_hs(j, jz)
    h = spin_hamiltonian(SpinChainParams(2, j, j, jz))
    np.testing.assert_allclose(eig.vectors.T @ h @ eig.vectors, np.diag(eig.lambdas), atol=1e-12 * max(1, j + jz))
    np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(4), atol=1e-15)
    assert eig.lambdas[3] - eig.lambdas[2] == pytest.approx(eig.omega)


def test_printed_mixed_eigenvectors():
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(EIG.vectors[:, 2], [0, r, r, 0])
    np.testing.assert_allclose(EIG.vectors[:, 3], [0, -r, r, 0])
    assert EIG.vectors[:, 2] @ EIG.vectors[:, 3] == 0


def test_uncoupled_limit():
    eig = eigensystem_hs(0.0, 0.7)
    assert eig.lambdas[2] == eig.lambdas[3] == 0.7 and eig.omega == 0.0
    with pytest.raises(ValueError):
        eigensystem_hs(-1.0, 0.5)


# ---------------------------------------------------------------------------
# rates


def test_zero_temperature_absorption_vanishes():
    assert markov_rate(XI, np.inf, -4.0) == 0.0
    assert markov_rate(XI, np.inf, 4.0) == pytest.approx(math.pi * XI * math.exp(-4))


def test_emission_rate_value():
    expected = math.pi * 0.007 * math.exp(-4) * (1 + 1 / (math.exp(4) - 1))
    assert markov_rate(0.007, 1.0, 4.0) == pytest.approx(expected, rel=1e-14)
    assert markov_rate(0.007, 1.0, 4.0) == pytest.approx(4.103e-4, abs=5e-8)


@given(st.floats(0.01, 10), st.floats(0.01, 8))
def test_detailed_balance(beta, w):
    ratio = markov_rate(XI, beta, w) / markov_rate(XI, beta, -w)
    assert ratio == pytest.approx(math.exp(beta * w), rel=1e-10)


def test_rate_arguments():
    with pytest.raises(ValueError):
        markov_rate(XI, 1.0, 0.0)
    with pytest.raises(ValueError):
        markov_rate(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        markov_rate(XI, 0.0, 1.0)
    assert bose(np.inf, 2.0) == 0.0


def test_ohmic_spectral_power():
    assert markov_rate(XI, 1.0, 2.0, spectral_power=1) == pytest.approx(2.0 * markov_rate(XI, 1.0, 2.0))


def test_discrete_rate_zero_coupling():
    modes = discretize_bath(100, 0.0, 3.0)
    assert discrete_bath_rate(modes, 1.0, 2.0, 0.05) == 0.0


def test_discrete_rate_matches_continuum():
    modes = discretize_bath(2000, 0.007, 6.0)
    oracle = discrete_bath_rate(modes, 1.0, 2.0, 0.05)
    assert oracle == pytest.approx(markov_rate(0.007, 1.0, 2.0), rel=0.03)
    # absorption side
    assert discrete_bath_rate(modes, 1.0, -2.0, 0.05) == pytest.approx(markov_rate(0.007, 1.0, -2.0), rel=0.03)


def test_discrete_rate_converged_in_modes():
    a = discrete_bath_rate(discretize_bath(2000, 0.007, 6.0), 1.0, 2.0, 0.05)
    b = discrete_bath_rate(discretize_bath(4000, 0.007, 6.0), 1.0, 2.0, 0.05)
    assert a == pytest.approx(b, rel=0.01)
    c = discrete_bath_rate(discretize_bath(4000, 0.007, 6.0), 1.0, 2.0, 0.025)
    assert c == pytest.approx(markov_rate(0.007, 1.0, 2.0), rel=0.03)


def test_discrete_rate_warns_outside_support():
    modes = discretize_bath(200, 0.007, 3.0)
    with pytest.warns(RuntimeWarning, match="outside"):
        discrete_bath_rate(modes, 1.0, 4.0, 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        discrete_bath_rate(modes, 1.0, 2.0, 0.05)
    with pytest.raises(ValueError):
        discrete_bath_rate(modes, 1.0, 2.0, 0.0)


def test_omega_constants_equal_baths():
    r = rates_for((0.7, 0.7))
    assert r.omega_plus == pytest.approx(markov_rate(XI, 0.7, 4.0))
    assert r.omega_minus == pytest.approx(markov_rate(XI, 0.7, -4.0))
    assert r.omega_total == r.omega_plus + r.omega_minus


def test_omega_constants_zero_rates():
    op, om, total, gc = omega_constants((0, 0), (0, 0), (0, 0))
    assert (op, om, total, gc) == (0, 0, 0, 0)


def test_nonequilibrium_omega_regression():
    # Omega at beta = (1, 0.3), xi = 0.007, omega = 4 from the Bose factors directly
    n = [1 / (math.exp(b * 4) - 1) for b in (1.0, 0.3)]
    expected = 0.5 * sum(math.pi * 0.007 * math.exp(-4) * (2 * nk + 1) for nk in n)
    r = rates_for((1.0, 0.3))
    assert r.omega_total == pytest.approx(expected, rel=1e-13)
    assert r.omega_total == pytest.approx(5.839009e-4, rel=1e-6)
    # exchanging the baths changes nothing
    assert rates_for((0.3, 1.0)).omega_total == pytest.approx(r.omega_total, rel=1e-15)


@given(st.floats(0.01, 5), st.floats(0.01, 5))
def test_rate_set_invariants(b1, b2):
    r = rates_for((b1, b2))
    assert all(x >= 0 for x in r.gamma_plus + r.gamma_minus + r.dephasing)
    for gp, gm, b in zip(r.gamma_plus, r.gamma_minus, (b1, b2)):
        assert gp / gm == pytest.approx(math.exp(4 * b), rel=1e-9)
    assert isinstance(r.omega_plus, float) and isinstance(r.gamma_plus[0], float)


def test_dephasing_regularization_and_override():
    r = rates_for((1.0, 1.0), omega_reg=0.01)
    gd = markov_rate(XI, 1.0, 0.01) + markov_rate(XI, 1.0, -0.01)
    assert r.g_c == pytest.approx(gd)
    assert rates_for((1.0, 1.0), g_c=0.02).g_c == pytest.approx(0.02)
    with pytest.raises(ValueError):
        rates_for((1.0, 1.0), g_c=-1.0)


def test_total_rate_override():
    r = override_total_rate(rates_for((1.0, 0.3)), 0.05, (1.0, 0.3), 4.0)
    assert r.omega_total == pytest.approx(0.05)
    base = rates_for((1.0, 0.3))
    assert r.omega_plus / r.omega_minus == pytest.approx(base.omega_plus / base.omega_minus)
    zero = override_total_rate(bath_rates(0.0, (1.0, 1.0), 4.0, 0.05), 0.02, (1.0, 1.0), 4.0)
    assert zero.omega_total == pytest.approx(0.02)
    assert zero.omega_plus / zero.omega_minus == pytest.approx(math.exp(4))


# ---------------------------------------------------------------------------
# closed form


def test_identity_at_time_zero():
    rho0 = random_density(0)
    np.testing.assert_allclose(evolve_closed_form(rho0, 0.0, EIG, rates_for((1.0, 0.3))), rho0, atol=1e-15)


@given(st.integers(0, 10_000), st.floats(0, 50))
def test_diagonal_eigenpopulations_constant(seed, t):
    rho0 = random_density(seed)
    f0 = EIG.to_eigen(rho0)
    f = EIG.to_eigen(evolve_closed_form(rho0, t, EIG, rates_for((1.0, 0.3))))
    assert abs(f[0, 0] - f0[0, 0]) <= 1e-12 and abs(f[1, 1] - f0[1, 1]) <= 1e-12


def test_psi_minus_rho22():
    rates = rates_for((1.0, 0.3))
    rho0 = pure([1, -1, 0, 0])
    for t in (0.0, 0.3, 2.0, 17.0):
        got = evolve_closed_form(rho0, t, EIG, rates)[1, 1].real
        assert got == pytest.approx(0.25 * (1 + math.exp(-rates.omega_total * t) * math.cos(4 * t)), abs=1e-14)


def test_up_down_rho22():
    rates = rates_for((0.005, 0.005))
    for t in (0.0, 0.3, 2.0, 17.0):
        got = evolve_closed_form(pure([0, 1, 0, 0]), t, EIG, rates)[1, 1].real
        assert got == pytest.approx(0.5 * (1 + math.exp(-rates.omega_total * t) * math.cos(4 * t)), abs=1e-14)


@given(st.integers(0, 10_000), st.floats(0, 100), st.floats(0.01, 3), st.floats(0.01, 3))
def test_trace_hermiticity_positivity(seed, t, b1, b2):
    rho = evolve_closed_form(random_density(seed), t, EIG, rates_for((b1, b2)))
    assert abs(np.trace(rho) - 1) <= 1e-12
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() >= -1e-10


def test_steady_state_gibbs_ratio():
    rates = rates_for((1.0, 1.0))
    f = EIG.to_eigen(evolve_closed_form(random_density(3), 1e6, EIG, rates))
    assert (f[2, 2] / f[3, 3]).real == pytest.approx(math.exp(4), rel=1e-10)
    assert steady_state_ratio(rates) == pytest.approx(math.exp(4), rel=1e-12)


def test_coherence_decay_rates():
    rates = rates_for((1.0, 0.3), omega_reg=0.5)
    rho0 = random_density(5)
    f0 = EIG.to_eigen(rho0)
    for t in (0.5, 3.0):
        f = EIG.to_eigen(evolve_closed_form(rho0, t, EIG, rates))
        assert abs(f[0, 1]) == pytest.approx(abs(f0[0, 1]) * math.exp(-4 * rates.g_c * t), rel=1e-12)
        assert abs(f[2, 3]) == pytest.approx(abs(f0[2, 3]) * math.exp(-rates.omega_total * t), rel=1e-12)


def test_population_relaxation_is_twice_omega():
    # rate-equation oracle: dp3/dt = 2 (Omega_+ p4 - Omega_- p3)
    rates = rates_for((0.3, 0.3))
    op, om = rates.omega_plus, rates.omega_minus
    rho0 = np.diag([0, 0, 0, 1.0]).astype(complex)
    f0 = EIG.to_natural(rho0)
    t = 40.0
    p3_inf = op / (op + om)
    expected = p3_inf * (1 - math.exp(-2 * (op + om) * t))
    got = EIG.to_eigen(evolve_closed_form(f0, t, EIG, rates))[2, 2].real
    assert got == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# Liouvillian oracle


def test_oracle_unitary_limit():
    rates = rate_set((0, 0), (0, 0), (0, 0))
    for t in (0.0, 0.7, 3.1):
        rho = evolve_liouvillian(pure([0, 1, 0, 0]), t, H_S, EIG, rates)
        assert rho[1, 1].real == pytest.approx(0.5 * (1 + math.cos(4 * t)), abs=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(0.05, 3), st.floats(0.05, 3))
def test_oracle_preserves_trace(seed, b1, b2):
    for t in (0.5, 20.0):
        rho = evolve_liouvillian(random_density(seed), t, H_S, EIG, rates_for((b1, b2)))
        assert abs(np.trace(rho) - 1) <= 1e-12


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(0.005, 3), st.floats(0.005, 3), st.floats(1e-3, 1.0))
def test_closed_form_equals_oracle(seed, b1, b2, omega_reg):
    rates = rates_for((b1, b2), omega_reg=omega_reg)
    rho0 = random_density(seed)
    for t in (0.5, 1.0, 5.0, 20.0):
        a = evolve_closed_form(rho0, t, EIG, rates)
        b = evolve_liouvillian(rho0, t, H_S, EIG, rates)
        assert np.max(np.abs(a - b)) <= 1e-8


def test_closed_form_equals_oracle_with_large_rates():
    # rates comparable to the Bohr frequencies exercise every decay channel
    rates = rate_set((0.3, 0.1), (0.05, 0.2), (0.4, 0.1))
    rho0 = random_density(9)
    for t in (0.5, 1.0, 5.0):
        np.testing.assert_allclose(
            evolve_closed_form(rho0, t, EIG, rates), evolve_liouvillian(rho0, t, H_S, EIG, rates), atol=1e-10)
