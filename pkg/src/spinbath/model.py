"""Spin-chain operators and the configuration-dependent adiabatic Hamiltonian.

Basis convention: spin-up is index 0, so for two spins the natural basis is
|1,1>, |1,0>, |0,1>, |0,0> in Kronecker order and sigma_z = diag(1, -1).
Units are scaled (hbar = k_B = 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

MAX_SPINS = 6

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class SpinChainParams:
    """Open nearest-neighbour XYZ chain of spin-1/2 particles."""

    n_spins: int = 2
    j_x: float = 1.0
    j_y: float = 1.0
    j_z: float = 0.5

    def __post_init__(self):
        if int(self.n_spins) != self.n_spins or self.n_spins < 2:
            raise ValueError(f"n_spins must be an integer >= 2, got {self.n_spins}")
        if self.n_spins > MAX_SPINS:
            raise ValueError(
                f"n_spins={self.n_spins} exceeds the dense-matrix guard "
                f"(max {MAX_SPINS}, dimension {2**MAX_SPINS})"
            )
        for name in ("j_x", "j_y", "j_z"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    @property
    def is_xxz(self) -> bool:
        return self.j_x == self.j_y


def _embed(op: np.ndarray, site: int, n_spins: int) -> np.ndarray:
    factors = [np.eye(2, dtype=complex)] * n_spins
    factors[site] = op
    return reduce(np.kron, factors)


def spin_hamiltonian(params: SpinChainParams) -> np.ndarray:
    """H_S = -sum over bonds of (j_x sx sx + j_y sy sy + j_z sz sz), real symmetric."""
    n = params.n_spins
    h = np.zeros((params.dim, params.dim), dtype=complex)
    for k in range(n - 1):
        for coupling, pauli in ((params.j_x, SIGMA_X), (params.j_y, SIGMA_Y), (params.j_z, SIGMA_Z)):
            if coupling != 0.0:
                h -= coupling * (_embed(pauli, k, n) @ _embed(pauli, k + 1, n))
    # sy sy is real, so the imaginary part vanishes identically
    return np.ascontiguousarray(h.real)


def spin_z(ks: int, n_spins: int) -> np.ndarray:
    """sigma_z acting on spin ``ks`` (0-based) of an ``n_spins`` chain."""
    if not 0 <= ks < n_spins:
        raise IndexError(f"spin index {ks} out of range for {n_spins} spins")
    return np.ascontiguousarray(_embed(SIGMA_Z, ks, n_spins).real)


def spin_z_diagonals(n_spins: int) -> np.ndarray:
    """Stack of the diagonals of every sigma_z^(ks), shape (n_spins, 2**n_spins)."""
    return np.array([np.diag(spin_z(k, n_spins)) for k in range(n_spins)])


def adiabatic_hamiltonian(h_s: np.ndarray, b, sz_diag: np.ndarray | None = None) -> np.ndarray:
    """H(R) = H_S - sum_ks b_ks sigma_z^(ks).

    ``b[ks] = sum_I c_I R_{I,ks}`` is the only way the bath configuration
    enters, so callers reduce R to these scalars first.
    """
    b = np.asarray(b, dtype=float)
    dim = h_s.shape[0]
    if sz_diag is None:
        n_spins = dim.bit_length() - 1
        if 2**n_spins != dim:
            raise ValueError(f"H_S dimension {dim} is not a power of two")
        sz_diag = spin_z_diagonals(n_spins)
    if b.shape != (sz_diag.shape[0],) or sz_diag.shape[1] != dim:
        raise ValueError(f"expected {sz_diag.shape[0]} coupling sums for dimension {dim}, got {b.shape}")
    h = np.array(h_s, dtype=float, copy=True)
    h[np.diag_indices(dim)] -= b @ sz_diag
    return h
