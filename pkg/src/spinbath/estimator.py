"""Monte-Carlo estimate of the spin reduced density matrix.

Bath initial conditions are drawn from the thermal Wigner density, every
(alpha, alpha') element of the adiabatic density matrix is carried along its
own trajectory, and the result is rotated back to the natural basis at every
output time. Samples are processed in fixed-size chunks; each sample has its
own RNG substream, so results do not depend on the number of workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from .adiabatic import ORDERINGS, AdiabaticFrame, grid_stride
from .bath import BathModes, sample_thermal
from .model import spin_z_diagonals

log = logging.getLogger(__name__)

WEIGHT_CUT = 1e-14
MAX_EXCLUDED_FRACTION = 1e-3


class EstimatorError(RuntimeError):
    pass


@dataclass
class ReducedDensitySeries:
    """Sample mean of the reduced density matrix with per-element standard errors."""

    t: np.ndarray
    rho: np.ndarray  # (T, d, d) complex
    stderr_re: np.ndarray  # (T, d, d)
    stderr_im: np.ndarray
    n_samples: int
    seed: int | None = None
    n_excluded: int = 0
    trace_stderr: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def element(self, mu: int, nu: int) -> np.ndarray:
        return self.rho[:, mu, nu]

    def trace(self) -> np.ndarray:
        return np.trace(self.rho, axis1=1, axis2=2)


def initial_adiabatic_weights(rho_s0, frame0: AdiabaticFrame, tol=1e-10) -> np.ndarray:
    """rho^{alpha alpha'}(0) = (U0^T rho_S0 U0)_{alpha alpha'}."""
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    tr = np.trace(rho_s0)
    if abs(tr - 1.0) > tol:
        raise ValueError(f"initial density matrix has trace {tr}, expected 1")
    u = frame0.vectors
    return u.T @ rho_s0 @ u


# ---------------------------------------------------------------------------
# chunk statistics: (count, mean, M2) combined with Chan's update


def _stats(x):
    n = x.shape[0]
    mean = x.mean(axis=0)
    m2 = ((x - mean) ** 2).sum(axis=0)
    return n, mean, m2


def _merge(a, b):
    na, ma, sa = a
    nb, mb, sb = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta**2 * (na * nb / n)


def _reduce(parts, tree=True):
    parts = list(parts)
    if not tree:
        acc = parts[0]
        for p in parts[1:]:
            acc = _merge(acc, p)
        return acc
    while len(parts) > 1:
        parts = [_merge(parts[i], parts[i + 1]) if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
    return parts[0]


@dataclass(frozen=True)
class _ChunkJob:
    seeds: list
    h_s: np.ndarray
    modes: BathModes
    rho0: np.ndarray
    dt: float
    stride: int
    n_out: int
    two_spin: bool
    tracked: bool


def _draw(modes: BathModes, seeds):
    n_baths = modes.n_baths
    R0 = np.empty((len(seeds), n_baths, modes.n_modes))
    P0 = np.empty_like(R0)
    for s, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        for ks in range(n_baths):
            R0[s, ks], P0[s, ks] = sample_thermal(modes, ks, rng)
    return R0, P0


def _run_chunk(job: _ChunkJob):
    R0, P0 = _draw(job.modes, job.seeds)
    sz = spin_z_diagonals(job.modes.n_baths)
    rho, status, fail_step = _kernels.propagate_chunk(
        R0, P0, job.rho0, job.h_s, sz, job.modes.omega, job.modes.c,
        job.dt, job.stride, job.n_out, job.two_spin, job.tracked, WEIGHT_CUT,
    )
    keep = status == _kernels.OK
    rho = rho[keep]
    failures = [(int(i), int(fail_step[i])) for i in np.flatnonzero(~keep)]
    if rho.shape[0] == 0:
        return None, failures, 0.0, 0.0
    traces = np.trace(rho, axis1=2, axis2=3)
    trace_dev = float(np.max(np.abs(traces - 1.0)))
    herm_dev = float(np.max(np.abs(rho - np.conj(np.swapaxes(rho, 2, 3)))))
    stats = (_stats(rho.real), _stats(rho.imag), _stats(traces.real))
    return stats, failures, trace_dev, herm_dev


def is_two_spin_block_model(h_s) -> bool:
    """True when H(R) is block diagonal in {|1,1>,|0,0>} and {|1,0>,|0,1>}."""
    h_s = np.asarray(h_s)
    if h_s.shape != (4, 4):
        return False
    mask = np.ones((4, 4), dtype=bool)
    for i, j in ((0, 0), (0, 3), (3, 0), (3, 3), (1, 1), (1, 2), (2, 1), (2, 2)):
        mask[i, j] = False
    return not np.any(h_s[mask])


def estimate_reduced_density(
    h_s,
    modes: BathModes,
    rho0,
    *,
    t_max=20.0,
    output_points=200,
    dt=0.01,
    n_samples=5000,
    seed=0,
    ordering="tracked",
    chunk_size=250,
    workers=1,
    tree_reduction=True,
    fast_path=True,
) -> ReducedDensitySeries:
    """Adiabatic-trajectory estimate of rho_S(t) on ``output_points`` intervals of [0, t_max].

    The output grid has ``output_points + 1`` times including t = 0.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    h_s = np.ascontiguousarray(h_s, dtype=float)
    d = h_s.shape[0]
    if modes.n_baths != d.bit_length() - 1:
        raise ValueError(f"{modes.n_baths} baths given for a {d}-dimensional subsystem")
    rho0 = np.ascontiguousarray(rho0, dtype=complex)
    if abs(np.trace(rho0) - 1.0) > 1e-10:
        raise ValueError(f"initial density matrix has trace {np.trace(rho0)}, expected 1")
    if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-12:
        raise ValueError("initial density matrix is not Hermitian")

    t = np.linspace(0.0, t_max, output_points + 1)
    stride = grid_stride(t, dt)
    two_spin = bool(fast_path and is_two_spin_block_model(h_s))

    children = np.random.SeedSequence(seed).spawn(n_samples)
    jobs = [
        _ChunkJob(children[i:i + chunk_size], h_s, modes, rho0, float(dt), stride, t.size, two_spin, ordering == "tracked")
        for i in range(0, n_samples, chunk_size)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(job) for job in jobs]

    failures = [f for r in results for f in r[1]]
    if len(failures) > MAX_EXCLUDED_FRACTION * n_samples:
        raise EstimatorError(
            f"{len(failures)} of {n_samples} samples aborted with non-finite coordinates "
            f"(first at step {failures[0][1]})"
        )
    if failures:
        log.warning("excluded %d aborted samples", len(failures))
    stats = [r[0] for r in results if r[0] is not None]
    re_n, re_mean, re_m2 = _reduce([s[0] for s in stats], tree_reduction)
    _, im_mean, im_m2 = _reduce([s[1] for s in stats], tree_reduction)
    _, _, tr_m2 = _reduce([s[2] for s in stats], tree_reduction)
    n = re_n
    denom = max(n - 1, 1) * n
    return ReducedDensitySeries(
        t=t,
        rho=re_mean + 1j * im_mean,
        stderr_re=np.sqrt(re_m2 / denom),
        stderr_im=np.sqrt(im_m2 / denom),
        n_samples=n,
        seed=seed,
        n_excluded=len(failures),
        trace_stderr=np.sqrt(tr_m2 / denom),
        diagnostics={
            "max_sample_trace_deviation": max(r[2] for r in results),
            "max_sample_hermiticity_deviation": max(r[3] for r in results),
            "ordering": ordering,
            "fast_path": two_spin,
            "dt": dt,
        },
    )


# ---------------------------------------------------------------------------


@dataclass
class DampedCosineFit:
    """Least-squares fit of offset + amplitude * exp(-decay_rate t) cos(frequency t)."""

    amplitude: float
    decay_rate: float
    frequency: float
    offset: float
    residual_norm: float
    converged: bool

    def __call__(self, t):
        return self.offset + self.amplitude * np.exp(-self.decay_rate * t) * np.cos(self.frequency * t)


def _damped_cosine(p, t):
    a, b, g, nu = p
    return a + b * np.exp(-g * t) * np.cos(nu * t)


def fit_damped_cosine(t, y) -> DampedCosineFit:
    """Multi-start fit of a + b exp(-G t) cos(nu t); frequency is kept non-negative.

    Starting frequencies come from the largest peaks of the zero-padded
    spectrum of the detrended series; the lowest-residual solution wins.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 5 or t.shape != y.shape:
        raise ValueError("need matching t and y with at least 5 points")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    span = t[-1] - t[0]
    offset0 = y[t >= t[0] + 0.5 * span].mean()
    dev = y - offset0
    n_fft = 16 * t.size
    spectrum = np.abs(np.fft.rfft(dev * np.hanning(t.size), n_fft))
    freqs = 2 * np.pi * np.fft.rfftfreq(n_fft, d=t[1] - t[0])
    peaks = [i for i in range(1, spectrum.size - 1) if spectrum[i] >= spectrum[i - 1] and spectrum[i] >= spectrum[i + 1]]
    peaks = sorted(peaks, key=lambda i: -spectrum[i])[:3]
    starts_nu = [freqs[i] for i in peaks] or [2 * np.pi / span]

    def resid(p):
        with np.errstate(over="ignore", invalid="ignore"):
            r = _damped_cosine(p, t) - y
        return np.where(np.isfinite(r), r, 1e100)

    best = None
    for nu0 in starts_nu:
        for g0 in (0.01, 0.3):
            p0 = [offset0, dev[0] if dev[0] != 0 else np.ptp(y) / 2, g0, nu0]
            sol = least_squares(
                resid, p0, bounds=([-np.inf, -np.inf, -np.inf, 0.0], np.inf),
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000,
            )
            norm = float(np.linalg.norm(sol.fun))
            if best is None or norm < best[1]:
                best = (sol, norm)
    sol, norm = best
    a, b, g, nu = sol.x
    return DampedCosineFit(float(b), float(g), float(nu), float(a), norm, bool(sol.success))
