"""Adiabatic frames, eigenvector ordering, Hellmann-Feynman forces and pair trajectories.

This module is the readable single-trajectory implementation. The Monte-Carlo
estimator runs the compiled batch kernel in :mod:`spinbath._kernels`, which is
checked against :func:`propagate_pair` in the test-suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import BathModes
from .model import adiabatic_hamiltonian, spin_z_diagonals

ORDERINGS = ("tracked", "cartesian")


class FrameError(RuntimeError):
    """Eigensolver failure at a bath configuration."""

    def __init__(self, message, b=None):
        super().__init__(message if b is None else f"{message} (coupling sums b={np.asarray(b).tolist()})")
        self.b = b


class TrajectoryError(RuntimeError):
    """A trajectory produced non-finite coordinates."""

    def __init__(self, step, r_norm):
        super().__init__(f"non-finite phase-space point at step {step} (|R| = {r_norm})")
        self.step = step
        self.r_norm = r_norm


@dataclass(frozen=True)
class AdiabaticFrame:
    """Eigenvalues and ordered, sign-fixed eigenvectors (columns of ``vectors``)."""

    energies: np.ndarray
    vectors: np.ndarray

    def sigma_z_expectations(self, sz_diag: np.ndarray) -> np.ndarray:
        """<alpha| sigma_z^(ks) |alpha>, shape (n_spins, dim)."""
        return sz_diag @ self.vectors**2


def order_eigenvectors(vectors, energies, reference=None):
    """Assign eigenvectors to columns so that U is as close as possible to ``reference``.

    The distance |u^alpha - e^j|^2 over both signs of u^alpha is minimal when
    |u^alpha . e^j| is maximal, so pairs are taken greedily by largest overlap
    magnitude with used rows and columns excluded. Ties go to the lowest
    (alpha, j). Each chosen vector is signed so that its overlap with the
    reference column is non-negative. ``reference`` defaults to the identity
    (the Cartesian basis vectors e^j).
    """
    vectors = np.asarray(vectors, dtype=float)
    energies = np.asarray(energies, dtype=float)
    d = vectors.shape[0]
    ref = np.eye(d) if reference is None else np.asarray(reference, dtype=float)
    overlap = vectors.T @ ref  # overlap[alpha, j] = u^alpha . e^j
    score = np.abs(overlap)
    out_vectors = np.empty_like(vectors)
    out_energies = np.empty_like(energies)
    free_rows = np.ones(d, dtype=bool)
    free_cols = np.ones(d, dtype=bool)
    for _ in range(d):
        masked = np.where(free_rows[:, None] & free_cols[None, :], score, -1.0)
        alpha, j = np.unravel_index(np.argmax(masked), masked.shape)
        sign = -1.0 if overlap[alpha, j] < 0 else 1.0
        out_vectors[:, j] = sign * vectors[:, alpha]
        out_energies[j] = energies[alpha]
        free_rows[alpha] = False
        free_cols[j] = False
    return out_vectors, out_energies


def diagonalize_frame(h, reference=None, b=None) -> AdiabaticFrame:
    """Dense symmetric diagonalization followed by metric ordering."""
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise FrameError("non-finite Hamiltonian", b)
    try:
        energies, vectors = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise FrameError(f"eigensolver failed: {exc}", b) from exc
    vectors, energies = order_eigenvectors(vectors, energies, reference)
    return AdiabaticFrame(energies, vectors)


def coupling_sums(modes: BathModes, R) -> np.ndarray:
    """b_ks = sum_I c_I R_{I,ks} for R of shape (n_baths, N)."""
    return np.asarray(R) @ modes.c


def hellmann_feynman_force(frame: AdiabaticFrame, alpha: int, modes: BathModes, R, sz_diag=None) -> np.ndarray:
    """F_{ks,I} = -omega_I^2 R_{ks,I} + c_I <alpha|sigma_z^(ks)|alpha>, shape (n_baths, N)."""
    R = np.asarray(R, dtype=float)
    if sz_diag is None:
        sz_diag = spin_z_diagonals(R.shape[0])
    s = frame.sigma_z_expectations(sz_diag)[:, alpha]
    return -modes.omega**2 * R + s[:, None] * modes.c


@dataclass
class PairTrajectory:
    """Samples of one (alpha, alpha') trajectory on the output grid."""

    alpha: int
    alpha_prime: int
    t: np.ndarray
    R: np.ndarray  # (T, n_baths, N)
    P: np.ndarray
    phase: np.ndarray  # integral of E_alpha - E_alpha' along the path
    energies: np.ndarray  # (T, dim)
    vectors: np.ndarray  # (T, dim, dim)
    conserved: np.ndarray  # H_B + (E_alpha + E_alpha')/2


def grid_stride(t_grid, dt) -> int:
    """Number of integrator steps between consecutive grid points; the grid must start at 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if t_grid.size == 1:
        return 1
    spacing = np.diff(t_grid)
    if not np.allclose(spacing, spacing[0], rtol=1e-12, atol=0):
        raise ValueError("time grid must be uniform")
    ratio = spacing[0] / dt
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"dt={dt} does not divide the grid spacing {spacing[0]}")
    return stride


def propagate_pair(R0, P0, alpha, alpha_prime, t_grid, dt, h_s, modes: BathModes, ordering="tracked"):
    """Velocity-Verlet propagation under the mean Hellmann-Feynman force of a pair.

    The frame is rebuilt from H(R) at every step; with ``ordering="tracked"``
    the previous frame is the reference for the eigenvector assignment,
    with ``"cartesian"`` the identity is used at every step. The initial
    frame is always ordered against the identity. The quantum phase
    integral of E_alpha - E_alpha' uses the trapezoidal rule on the
    integrator grid.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}")
    R = np.array(R0, dtype=float, copy=True)
    P = np.array(P0, dtype=float, copy=True)
    n_baths = R.shape[0]
    sz_diag = spin_z_diagonals(n_baths)
    stride = grid_stride(t_grid, dt)
    n_out = len(t_grid)
    omega2 = modes.omega**2

    def frame_at(R, reference):
        b = coupling_sums(modes, R)
        return diagonalize_frame(adiabatic_hamiltonian(h_s, b, sz_diag), reference, b)

    def mean_force(frame, R):
        s = frame.sigma_z_expectations(sz_diag)
        s_pair = 0.5 * (s[:, alpha] + s[:, alpha_prime])
        return -omega2 * R + s_pair[:, None] * modes.c

    def conserved(frame, R, P):
        h_b = 0.5 * np.sum(P**2) + 0.5 * np.sum(omega2 * R**2)
        return h_b + 0.5 * (frame.energies[alpha] + frame.energies[alpha_prime])

    dim = h_s.shape[0]
    out = PairTrajectory(
        alpha, alpha_prime, np.asarray(t_grid, dtype=float),
        np.empty((n_out,) + R.shape), np.empty((n_out,) + R.shape), np.empty(n_out),
        np.empty((n_out, dim)), np.empty((n_out, dim, dim)), np.empty(n_out),
    )

    if not np.all(np.isfinite(coupling_sums(modes, R))):
        raise TrajectoryError(0, float(np.linalg.norm(R)))
    frame = frame_at(R, None)
    force = mean_force(frame, R)
    gap = frame.energies[alpha] - frame.energies[alpha_prime]
    phase = 0.0

    def record(k):
        out.R[k] = R
        out.P[k] = P
        out.phase[k] = phase
        out.energies[k] = frame.energies
        out.vectors[k] = frame.vectors
        out.conserved[k] = conserved(frame, R, P)

    record(0)
    n_steps = (n_out - 1) * stride
    for step in range(1, n_steps + 1):
        P += 0.5 * dt * force
        R += dt * P
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(coupling_sums(modes, R)))):
            raise TrajectoryError(step, float(np.linalg.norm(R)))
        frame = frame_at(R, frame.vectors if ordering == "tracked" else None)
        force = mean_force(frame, R)
        P += 0.5 * dt * force
        new_gap = frame.energies[alpha] - frame.energies[alpha_prime]
        phase += 0.5 * dt * (gap + new_gap)
        gap = new_gap
        if step % stride == 0:
            record(step // stride)
    return out
