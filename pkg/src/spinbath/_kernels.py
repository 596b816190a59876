"""Compiled inner loops for the trajectory ensemble.

One call propagates every (alpha, alpha') pair of every sample in a chunk and
returns the per-sample reduced density matrices on the output grid.
"""
import numpy as np
from numba import njit

# status codes per sample
OK = 0
NONFINITE = 1


@njit(cache=True)
def _jacobi_block(h, p, q, energies, vectors):
    # exact for c == 0: the rotation is then the identity
    a = h[p, p]
    d = h[q, q]
    c = h[p, q]
    if c == 0.0:
        t = 0.0
    else:
        zeta = (d - a) / (2.0 * c)
        sgn = 1.0 if zeta >= 0.0 else -1.0
        t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
    cs = 1.0 / np.sqrt(1.0 + t * t)
    sn = t * cs
    energies[p] = a - t * c
    energies[q] = d + t * c
    vectors[p, p] = cs
    vectors[q, p] = -sn
    vectors[p, q] = sn
    vectors[q, q] = cs


@njit(cache=True)
def raw_frame(h, two_spin, energies, vectors):
    """Unordered eigensystem of the real symmetric ``h``.

    For two spins H(R) splits into the {|1,1>,|0,0>} and {|1,0>,|0,1>}
    blocks and each is diagonalized by one Jacobi rotation.
    """
    if two_spin:
        for i in range(4):
            for j in range(4):
                vectors[i, j] = 0.0
        _jacobi_block(h, 0, 3, energies, vectors)
        _jacobi_block(h, 1, 2, energies, vectors)
    else:
        w, v = np.linalg.eigh(h)
        energies[:] = w
        vectors[:, :] = v


@njit(cache=True)
def order_columns(vectors, energies, reference, out_vectors, out_energies, overlap, free_rows, free_cols):
    """Greedy max-overlap assignment of eigenvectors to reference columns (see order_eigenvectors).

    ``overlap`` (d, d) and the boolean ``free_rows`` / ``free_cols`` (d,) are scratch.
    """
    d = vectors.shape[0]
    for a in range(d):
        for j in range(d):
            s = 0.0
            for m in range(d):
                s += vectors[m, a] * reference[m, j]
            overlap[a, j] = s
    for a in range(d):
        free_rows[a] = True
        free_cols[a] = True
    for _ in range(d):
        best = -1.0
        ba = 0
        bj = 0
        for a in range(d):
            if free_rows[a]:
                for j in range(d):
                    x = abs(overlap[a, j])
                    if x > best and free_cols[j]:
                        best = x
                        ba = a
                        bj = j
        sign = -1.0 if overlap[ba, bj] < 0.0 else 1.0
        for m in range(d):
            out_vectors[m, bj] = sign * vectors[m, ba]
        out_energies[bj] = energies[ba]
        free_rows[ba] = False
        free_cols[bj] = False


@njit(cache=True)
def _overlap2(vectors, reference, r, j, p, q):
    return vectors[p, r] * reference[p, j] + vectors[q, r] * reference[q, j]


@njit(cache=True)
def _order_block(vectors, energies, reference, out_vectors, out_energies, p, q):
    # greedy assignment restricted to one invariant 2x2 block; equals the full
    # greedy because overlaps between different blocks vanish. Raw vectors are
    # ranked by energy, as a dense ascending eigensolver returns them, so that
    # exact ties resolve the same way on both paths.
    if energies[p] <= energies[q]:
        r1, r2 = p, q
    else:
        r1, r2 = q, p
    o1p = _overlap2(vectors, reference, r1, p, p, q)
    o1q = _overlap2(vectors, reference, r1, q, p, q)
    o2p = _overlap2(vectors, reference, r2, p, p, q)
    o2q = _overlap2(vectors, reference, r2, q, p, q)
    best = abs(o1p)
    straight = True  # r1 -> column p, r2 -> column q
    if abs(o1q) > best:
        best = abs(o1q)
        straight = False
    if abs(o2p) > best:
        best = abs(o2p)
        straight = False
    if abs(o2q) > best:
        straight = True
    if straight:
        src_p, src_q, s_p, s_q = r1, r2, o1p, o2q
    else:
        src_p, src_q, s_p, s_q = r2, r1, o2p, o1q
    sign_p = -1.0 if s_p < 0.0 else 1.0
    sign_q = -1.0 if s_q < 0.0 else 1.0
    out_vectors[p, p] = sign_p * vectors[p, src_p]
    out_vectors[q, p] = sign_p * vectors[q, src_p]
    out_vectors[p, q] = sign_q * vectors[p, src_q]
    out_vectors[q, q] = sign_q * vectors[q, src_q]
    out_energies[p] = energies[src_p]
    out_energies[q] = energies[src_q]


@njit(cache=True)
def frame(h_s, b, sz, two_spin, reference, energies, vectors, scratch):
    work_e, work_v, h, overlap, free_rows, free_cols = scratch
    d = h_s.shape[0]
    for i in range(d):
        for j in range(d):
            h[i, j] = h_s[i, j]
    for k in range(b.shape[0]):
        for i in range(d):
            h[i, i] -= b[k] * sz[k, i]
    raw_frame(h, two_spin, work_e, work_v)
    if two_spin:
        for i in range(4):
            for j in range(4):
                vectors[i, j] = 0.0
        _order_block(work_v, work_e, reference, vectors, energies, 0, 3)
        _order_block(work_v, work_e, reference, vectors, energies, 1, 2)
    else:
        order_columns(work_v, work_e, reference, vectors, energies, overlap, free_rows, free_cols)


def make_scratch(d):
    return (np.empty(d), np.empty((d, d)), np.empty((d, d)), np.empty((d, d)),
            np.ones(d, dtype=np.bool_), np.ones(d, dtype=np.bool_))


make_scratch_jit = njit(cache=True)(make_scratch)


@njit(cache=True, fastmath={"reassoc", "nsz", "arcp", "contract"})
def _kick_drift(P, R, c, omega2, sk, kick, dt):
    # one bath: P += kick F(R), R += dt P; returns b = sum c R
    n = R.shape[0]
    for i in range(n):
        P[i] += kick * (c[i] * sk - omega2[i] * R[i])
        R[i] += dt * P[i]
    acc = 0.0
    for i in range(n):
        acc += c[i] * R[i]
    return acc


@njit(cache=True)
def _pair_sz(vectors, sz, a, ap, out):
    for k in range(sz.shape[0]):
        s = 0.0
        for m in range(sz.shape[1]):
            s += (vectors[m, a] * vectors[m, a] + vectors[m, ap] * vectors[m, ap]) * sz[k, m]
        out[k] = 0.5 * s


@njit(cache=True)
def propagate_chunk(R0, P0, rho0, h_s, sz, omega, c, dt, stride, n_out, two_spin, tracked, weight_cut):
    """Propagate all samples of a chunk.

    Parameters
    ----------
    R0, P0 : (S, n_baths, N) initial bath phase points.
    rho0 : (d, d) complex initial subsystem density matrix (natural basis).

    Returns
    -------
    rho : (S, n_out, d, d) complex per-sample estimates in the natural basis.
    status : (S,) int, OK or NONFINITE.
    fail_step : (S,) int, integrator step of the first non-finite point.
    """
    n_samples, n_baths, n_modes = R0.shape
    d = h_s.shape[0]
    rho = np.zeros((n_samples, n_out, d, d), dtype=np.complex128)
    status = np.zeros(n_samples, dtype=np.int64)
    fail_step = np.zeros(n_samples, dtype=np.int64)
    n_steps = (n_out - 1) * stride

    ident = np.eye(d)
    b = np.empty(n_baths)
    s_pair = np.empty(n_baths)
    energies = np.empty(d)
    vectors = np.empty((d, d))
    prev = np.empty((d, d))
    scratch = make_scratch_jit(d)
    u0 = np.empty((d, d))
    e0 = np.empty(d)
    weights = np.empty((d, d), dtype=np.complex128)
    R = np.empty((n_baths, n_modes))
    P = np.empty((n_baths, n_modes))
    omega2 = omega * omega
    half = 0.5 * dt

    for s in range(n_samples):
        for k in range(n_baths):
            acc = 0.0
            for i in range(n_modes):
                acc += c[i] * R0[s, k, i]
            b[k] = acc
        if not np.all(np.isfinite(b)):
            status[s] = NONFINITE
            fail_step[s] = 0
            continue
        frame(h_s, b, sz, two_spin, ident, e0, u0, scratch)
        # w = U0^T rho0 U0 (U0 real orthogonal)
        for a in range(d):
            for ap in range(d):
                w = 0.0j
                for m in range(d):
                    for n in range(d):
                        w += u0[m, a] * rho0[m, n] * u0[n, ap]
                weights[a, ap] = w

        for a in range(d):
            for ap in range(a, d):
                if abs(weights[a, ap]) <= weight_cut:
                    continue
                wgt = weights[a, ap]
                for k in range(n_baths):
                    for i in range(n_modes):
                        R[k, i] = R0[s, k, i]
                        P[k, i] = P0[s, k, i]
                for i in range(d):
                    energies[i] = e0[i]
                    for j in range(d):
                        vectors[i, j] = u0[i, j]
                _pair_sz(vectors, sz, a, ap, s_pair)
                gap = energies[a] - energies[ap]
                phase = 0.0
                failed = False
                for step in range(n_steps + 1):
                    if step > 0:
                        # velocity Verlet with the closing half-kick of one step fused
                        # into the opening half-kick of the next; P lives on half steps
                        kick = half if step == 1 else dt
                        for k in range(n_baths):
                            b[k] = _kick_drift(P[k], R[k], c, omega2, s_pair[k], kick, dt)
                        finite = True
                        for k in range(n_baths):
                            if not np.isfinite(b[k]):
                                finite = False
                        if not finite:
                            failed = True
                            if status[s] == OK:
                                status[s] = NONFINITE
                                fail_step[s] = step
                            break
                        if tracked:
                            for i in range(d):
                                for j in range(d):
                                    prev[i, j] = vectors[i, j]
                            frame(h_s, b, sz, two_spin, prev, energies, vectors, scratch)
                        else:
                            frame(h_s, b, sz, two_spin, ident, energies, vectors, scratch)
                        _pair_sz(vectors, sz, a, ap, s_pair)
                        new_gap = energies[a] - energies[ap]
                        phase += half * (gap + new_gap)
                        gap = new_gap
                    if step % stride == 0:
                        t_idx = step // stride
                        if a == ap:
                            wr = wgt.real
                            for m in range(d):
                                um = vectors[m, a] * wr
                                for n in range(d):
                                    rho[s, t_idx, m, n] += um * vectors[n, a]
                        else:
                            coef = wgt * np.exp(-1j * phase)
                            for m in range(d):
                                um = vectors[m, a] * coef
                                for n in range(d):
                                    term = um * vectors[n, ap]
                                    rho[s, t_idx, m, n] += term
                                    rho[s, t_idx, n, m] += np.conj(term)
                if failed:
                    break
    return rho, status, fail_step
