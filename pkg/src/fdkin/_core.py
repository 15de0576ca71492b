"""Compiled inner loops for the collision-space sums.

Every pass iterates the same structure: for each lattice offset d (half
of the difference lattice -- the pair symmetry (v, v*) <-> (v*, v) leaves
all sphere sums below invariant, since both orderings share the center,
the relative speed and, by evenness of B, the kernel values), the valid
window of grid nodes v is swept with v* = v - d, and the sphere
quadrature runs in index units so the trilinear stencils are the only
per-node work.

Determinism: offsets are dealt to a fixed number of chunks (stride
N_CHUNKS) with per-chunk accumulators reduced in chunk order afterward,
so results are bitwise independent of the number of threads.

Off-grid evaluation is trilinear on a zero-padded copy of the field; a
closed-form field code (> 0) replaces interpolation for identity tests
against analytic profiles.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

N_CHUNKS = 64

SQRT2 = np.sqrt(2.0)

# closed-form field codes
F_GRID = 0
F_GAUSSIAN = 1
F_COUNTEREXAMPLE = 2
F_POLY = 3
F_FERMI_DIRAC = 4


# ----------------------------------------------------------------------
# pointwise helpers


@njit(cache=True, inline="always")
def _kern_b(code, gamma, cap, p1, p2, coeffs, r, t):
    """Kernel value B(r, t); angular blow-up points evaluate to 0 (the
    collision integrand vanishes there, so the limit of the product is 0)."""
    if code == 5:  # reduced bounded kernel
        if p1 == 1.0:
            beta = p2
            phi = (2.0 * r * r / (1.0 + r * r)) ** (2.0 * beta + 2.0)
        else:
            phi = 1.0
        rad = r**gamma * phi
        if rad > 1.0:
            rad = 1.0
        r2 = r * r
        rad = rad / (1.0 + r2 * r2 * r2)
        t2 = t * t
        acc = 0.0
        pw = 1.0
        for i in range(coeffs.shape[0]):
            acc += coeffs[i] * pw
            pw *= t2
        return rad * acc
    if code == 4:  # debye, non-separable
        beta = p1
        r2 = r * r
        lo = (1.0 + r2 * (1.0 - t) * 0.5) ** (-beta)
        hi = (1.0 + r2 * (1.0 + t) * 0.5) ** (-beta)
        d = lo - hi
        return r * d * d
    rad = r**gamma
    if gamma < 0.0 and rad > cap:
        rad = cap
    if code == 0:  # monomial angular part
        t2 = t * t
        acc = 0.0
        pw = 1.0
        for i in range(coeffs.shape[0]):
            acc += coeffs[i] * pw
            pw *= t2
        return rad * acc
    if code == 1:  # inverse power
        beta = p1
        om = 1.0 - t
        op = 1.0 + t
        if om <= 0.0 or op <= 0.0:
            return 0.0
        d = om ** (-beta) - op ** (-beta)
        return rad * p2 * d * d
    # rutherford with weak cutoff; (1-t)(1+t) avoids endpoint cancellation
    s2 = (1.0 - t) * (1.0 + t)
    if s2 <= 0.0:
        return 0.0
    if code == 2:
        return rad * p2 * (1.0 + t * t) * s2 ** (-p1)
    return rad * p2 * (t * t) * s2 ** (-p1)


@njit(cache=True, inline="always", fastmath=True)
def _trilinear(fp, n, x, y, z):
    """Interpolate the padded (n+2)^3 array at index-space point (x, y, z);
    zero outside the interpolant's support."""
    if x <= -1.0 or x >= n or y <= -1.0 or y >= n or z <= -1.0 or z >= n:
        return 0.0
    ix = int(np.floor(x))
    iy = int(np.floor(y))
    iz = int(np.floor(z))
    wx = x - ix
    wy = y - iy
    wz = z - iz
    i0 = ix + 1
    j0 = iy + 1
    k0 = iz + 1
    c00 = fp[i0, j0, k0] * (1.0 - wz) + fp[i0, j0, k0 + 1] * wz
    c01 = fp[i0, j0 + 1, k0] * (1.0 - wz) + fp[i0, j0 + 1, k0 + 1] * wz
    c10 = fp[i0 + 1, j0, k0] * (1.0 - wz) + fp[i0 + 1, j0, k0 + 1] * wz
    c11 = fp[i0 + 1, j0 + 1, k0] * (1.0 - wz) + fp[i0 + 1, j0 + 1, k0 + 1] * wz
    c0 = c00 * (1.0 - wy) + c01 * wy
    c1 = c10 * (1.0 - wy) + c11 * wy
    return c0 * (1.0 - wx) + c1 * wx


@njit(cache=True, inline="always")
def _field_value(fcode, fparams, fp, n, h, vmin, x, y, z):
    """Field value at index-space point (x, y, z): interpolated (fcode 0)
    or a closed form evaluated at the physical coordinates."""
    if fcode == F_GRID:
        return _trilinear(fp, n, x, y, z)
    px = vmin + h * x
    py = vmin + h * y
    pz = vmin + h * z
    if fcode == F_FERMI_DIRAC:
        b = fparams[0]
        ln_a = fparams[1]
        dx = px - fparams[2]
        dy = py - fparams[3]
        dz = pz - fparams[4]
        e = b * (dx * dx + dy * dy + dz * dz) - ln_a
        if e > 700.0:
            return 0.0
        return 1.0 / (1.0 + np.exp(e))
    r2 = px * px + py * py + pz * pz
    lam = fparams[0]
    g = np.exp(-lam * r2)
    if fcode == F_GAUSSIAN:
        return g
    if fcode == F_COUNTEREXAMPLE:
        rn = np.sqrt(r2)
        if rn == 0.0:
            return 0.0
        return g * (1.0 + SQRT2 * np.sin(0.5 * np.pi * (px / rn)))
    # F_POLY: gaussian envelope times a cubic polynomial
    acc = 0.0
    idx = 1
    for a in range(4):
        for b in range(4 - a):
            for c in range(4 - a - b):
                acc += fparams[idx] * px**a * py**b * pz**c
                idx += 1
    return g * acc


@njit(cache=True, inline="always")
def _frame(nx, ny, nz):
    """Orthonormal pair (e1, e2) completing the unit vector n."""
    ax = abs(nx)
    ay = abs(ny)
    az = abs(nz)
    if ax <= ay and ax <= az:
        ex, ey, ez = 1.0, 0.0, 0.0
    elif ay <= az:
        ex, ey, ez = 0.0, 1.0, 0.0
    else:
        ex, ey, ez = 0.0, 0.0, 1.0
    e1x = ny * ez - nz * ey
    e1y = nz * ex - nx * ez
    e1z = nx * ey - ny * ex
    inv = 1.0 / np.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    e1x *= inv
    e1y *= inv
    e1z *= inv
    e2x = ny * e1z - nz * e1y
    e2y = nz * e1x - nx * e1z
    e2z = nx * e1y - ny * e1x
    return e1x, e1y, e1z, e2x, e2y, e2z


@njit(cache=True, inline="always")
def _offset_sphere(d0, d1, d2, h, nodes, w, aligned,
                   kcode, gamma, cap, p1, p2, coeffs,
                   wb, qpx, qpy, qpz, qmx, qmy, qmz):
    """Fill per-offset tables: weighted kernel values wb[m] and the two
    index-space collision displacements q+/- for each sphere node."""
    m_count = nodes.shape[0]
    dn = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    r = h * dn
    nx = d0 / dn
    ny = d1 / dn
    nz = d2 / dn
    half = 0.5 * dn
    if aligned:
        e1x, e1y, e1z, e2x, e2y, e2z = _frame(nx, ny, nz)
    s0 = 0.0
    for m in range(m_count):
        if aligned:
            lx = nodes[m, 0]
            ly = nodes[m, 1]
            t = nodes[m, 2]
            sx = lx * e1x + ly * e2x + t * nx
            sy = lx * e1y + ly * e2y + t * ny
            sz = lx * e1z + ly * e2z + t * nz
        else:
            sx = nodes[m, 0]
            sy = nodes[m, 1]
            sz = nodes[m, 2]
            t = sx * nx + sy * ny + sz * nz
        b = _kern_b(kcode, gamma, cap, p1, p2, coeffs, r, t)
        if not np.isfinite(b):
            b = 0.0
        wbm = w[m] * b
        wb[m] = wbm
        s0 += wbm
        qpx[m] = -0.5 * d0 + half * sx
        qpy[m] = -0.5 * d1 + half * sy
        qpz[m] = -0.5 * d2 + half * sz
        qmx[m] = -0.5 * d0 - half * sx
        qmy[m] = -0.5 * d1 - half * sy
        qmz[m] = -0.5 * d2 - half * sz
    return s0


# ----------------------------------------------------------------------
# main passes


@njit(cache=True, parallel=True, fastmath=True)
def pass_rates(f, fp, n, h, vmin, offsets, nodes, w, aligned,
               kcode, gamma, cap, p1, p2, coeffs, fcode, fparams):
    """Gain/loss decomposition sums and the bounded-loss integrand.

    Returns flattened (G, L, N) with, per node v,
      Q(f)(v) = (1 - f) G - f L,
      N(f)(v) = sum h^3 sum w B (f' f*' + f* (1 - f' - f*')).
    """
    n3 = n * n * n
    n_off = offsets.shape[0]
    m_count = nodes.shape[0]
    acc = np.zeros((N_CHUNKS, 3, n3))
    for chunk in prange(N_CHUNKS):
        wb = np.empty(m_count)
        qpx = np.empty(m_count)
        qpy = np.empty(m_count)
        qpz = np.empty(m_count)
        qmx = np.empty(m_count)
        qmy = np.empty(m_count)
        qmz = np.empty(m_count)
        gain_buf = np.zeros(n3)
        loss_buf = np.zeros(n3)
        g_acc = acc[chunk, 0]
        l_acc = acc[chunk, 1]
        n_acc = acc[chunk, 2]
        for ioff in range(chunk, n_off, N_CHUNKS):
            d0 = offsets[ioff, 0]
            d1 = offsets[ioff, 1]
            d2 = offsets[ioff, 2]
            _offset_sphere(d0, d1, d2, h, nodes, w, aligned,
                           kcode, gamma, cap, p1, p2, coeffs,
                           wb, qpx, qpy, qpz, qmx, qmy, qmz)
            i_lo = max(0, d0)
            i_hi = n + min(0, d0)
            j_lo = max(0, d1)
            j_hi = n + min(0, d1)
            k_lo = max(0, d2)
            k_hi = n + min(0, d2)
            for i in range(i_lo, i_hi):
                for j in range(j_lo, j_hi):
                    row = (i * n + j) * n
                    for k in range(k_lo, k_hi):
                        gain_buf[row + k] = 0.0
                        loss_buf[row + k] = 0.0
            for m in range(m_count):
                wbm = wb[m]
                if wbm == 0.0:
                    continue
                ax = qpx[m]
                ay = qpy[m]
                az = qpz[m]
                bx = qmx[m]
                by = qmy[m]
                bz = qmz[m]
                for i in range(i_lo, i_hi):
                    for j in range(j_lo, j_hi):
                        row = (i * n + j) * n
                        for k in range(k_lo, k_hi):
                            fpv = _field_value(fcode, fparams, fp, n, h, vmin,
                                               i + ax, j + ay, k + az)
                            fmv = _field_value(fcode, fparams, fp, n, h, vmin,
                                               i + bx, j + by, k + bz)
                            gain_buf[row + k] += wbm * fpv * fmv
                            loss_buf[row + k] += wbm * (1.0 - fpv) * (1.0 - fmv)
            for i in range(i_lo, i_hi):
                for j in range(j_lo, j_hi):
                    row = (i * n + j) * n
                    srow = ((i - d0) * n + (j - d1)) * n - d2
                    for k in range(k_lo, k_hi):
                        vidx = row + k
                        sidx = srow + k
                        gain = gain_buf[vidx]
                        loss = loss_buf[vidx]
                        fv = f[vidx]
                        fs = f[sidx]
                        g_acc[vidx] += (1.0 - fs) * gain
                        l_acc[vidx] += fs * loss
                        n_acc[vidx] += gain + fs * (loss - gain)
                        g_acc[sidx] += (1.0 - fv) * gain
                        l_acc[sidx] += fv * loss
                        n_acc[sidx] += gain + fv * (loss - gain)
    h3 = h * h * h
    g_out = np.zeros(n3)
    l_out = np.zeros(n3)
    n_out = np.zeros(n3)
    for chunk in range(N_CHUNKS):
        for idx in range(n3):
            g_out[idx] += acc[chunk, 0, idx]
            l_out[idx] += acc[chunk, 1, idx]
            n_out[idx] += acc[chunk, 2, idx]
    for idx in range(n3):
        g_out[idx] *= h3
        l_out[idx] *= h3
        n_out[idx] *= h3
    return g_out, l_out, n_out


@njit(cache=True, parallel=True)
def pass_gain(fw, pa, pb, n, h, vmin, offsets, nodes, w, aligned,
              kcode, gamma, cap, p1, p2, coeffs, weighted,
              fcode_a, fparams_a, fcode_b, fparams_b):
    """Gain operator: out(v) = h^3 sum_* [Fw(v*)] sum_m w B pa(v') pb(v*').

    The pair-function factors are interpolated grid fields (fcode 0) or
    closed forms evaluated exactly at the collision points."""
    n3 = n * n * n
    n_off = offsets.shape[0]
    m_count = nodes.shape[0]
    acc = np.zeros((N_CHUNKS, n3))
    for chunk in prange(N_CHUNKS):
        wb = np.empty(m_count)
        qpx = np.empty(m_count)
        qpy = np.empty(m_count)
        qpz = np.empty(m_count)
        qmx = np.empty(m_count)
        qmy = np.empty(m_count)
        qmz = np.empty(m_count)
        out = acc[chunk]
        for ioff in range(chunk, n_off, N_CHUNKS):
            d0 = offsets[ioff, 0]
            d1 = offsets[ioff, 1]
            d2 = offsets[ioff, 2]
            _offset_sphere(d0, d1, d2, h, nodes, w, aligned,
                           kcode, gamma, cap, p1, p2, coeffs,
                           wb, qpx, qpy, qpz, qmx, qmy, qmz)
            i_lo = max(0, d0)
            i_hi = n + min(0, d0)
            j_lo = max(0, d1)
            j_hi = n + min(0, d1)
            k_lo = max(0, d2)
            k_hi = n + min(0, d2)
            for m in range(m_count):
                wbm = wb[m]
                if wbm == 0.0:
                    continue
                ax = qpx[m]
                ay = qpy[m]
                az = qpz[m]
                bx = qmx[m]
                by = qmy[m]
                bz = qmz[m]
                for i in range(i_lo, i_hi):
                    for j in range(j_lo, j_hi):
                        row = (i * n + j) * n
                        srow = ((i - d0) * n + (j - d1)) * n - d2
                        for k in range(k_lo, k_hi):
                            av = _field_value(fcode_a, fparams_a, pa, n, h, vmin,
                                              i + ax, j + ay, k + az)
                            bv = _field_value(fcode_b, fparams_b, pb, n, h, vmin,
                                              i + bx, j + by, k + bz)
                            # grouping keeps the sum bitwise invariant
                            # under the antipodal node reflection
                            s = wbm * (av * bv)
                            vidx = row + k
                            sidx = srow + k
                            if weighted:
                                out[vidx] += fw[sidx] * s
                                out[sidx] += fw[vidx] * s
                            else:
                                out[vidx] += s
                                out[sidx] += s
    h3 = h * h * h
    result = np.zeros(n3)
    for chunk in range(N_CHUNKS):
        for idx in range(n3):
            result[idx] += acc[chunk, idx]
    for idx in range(n3):
        result[idx] *= h3
    return result


@njit(cache=True, parallel=True)
def pass_dissipation(f, fp, n, h, vmin, offsets, nodes, w, aligned,
                     kcode, gamma, cap, p1, p2, coeffs, fcode, fparams, floor):
    """Entropy dissipation 1/4 h^6 sum B Gamma(Pi+, Pi-) plus the count of
    skipped one-sided terms (analytically infinite boundary contacts)."""
    n_off = offsets.shape[0]
    m_count = nodes.shape[0]
    partial = np.zeros(N_CHUNKS)
    skipped = np.zeros(N_CHUNKS, dtype=np.int64)
    for chunk in prange(N_CHUNKS):
        wb = np.empty(m_count)
        qpx = np.empty(m_count)
        qpy = np.empty(m_count)
        qpz = np.empty(m_count)
        qmx = np.empty(m_count)
        qmy = np.empty(m_count)
        qmz = np.empty(m_count)
        total = 0.0
        nskip = 0
        for ioff in range(chunk, n_off, N_CHUNKS):
            d0 = offsets[ioff, 0]
            d1 = offsets[ioff, 1]
            d2 = offsets[ioff, 2]
            _offset_sphere(d0, d1, d2, h, nodes, w, aligned,
                           kcode, gamma, cap, p1, p2, coeffs,
                           wb, qpx, qpy, qpz, qmx, qmy, qmz)
            i_lo = max(0, d0)
            i_hi = n + min(0, d0)
            j_lo = max(0, d1)
            j_hi = n + min(0, d1)
            k_lo = max(0, d2)
            k_hi = n + min(0, d2)
            for m in range(m_count):
                wbm = wb[m]
                if wbm == 0.0:
                    continue
                ax = qpx[m]
                ay = qpy[m]
                az = qpz[m]
                bx = qmx[m]
                by = qmy[m]
                bz = qmz[m]
                for i in range(i_lo, i_hi):
                    for j in range(j_lo, j_hi):
                        row = (i * n + j) * n
                        srow = ((i - d0) * n + (j - d1)) * n - d2
                        for k in range(k_lo, k_hi):
                            fv = f[row + k]
                            fs = f[srow + k]
                            lead_p = (1.0 - fv) * (1.0 - fs)
                            lead_m = fv * fs
                            if lead_p == 0.0 and lead_m == 0.0:
                                continue
                            fpv = _field_value(fcode, fparams, fp, n, h, vmin,
                                               i + ax, j + ay, k + az)
                            fmv = _field_value(fcode, fparams, fp, n, h, vmin,
                                               i + bx, j + by, k + bz)
                            pi_p = fpv * fmv * lead_p
                            pi_m = lead_m * (1.0 - fpv) * (1.0 - fmv)
                            if pi_p < floor or pi_m < floor:
                                if pi_p >= floor or pi_m >= floor:
                                    nskip += 1
                                continue
                            # factor 2: both orderings of the pair
                            total += 2.0 * wbm * (pi_p - pi_m) * np.log(pi_p / pi_m)
        partial[chunk] = total
        skipped[chunk] = nskip
    grand = 0.0
    for chunk in range(N_CHUNKS):
        grand += partial[chunk]
    h3 = h * h * h
    return 0.25 * grand * h3 * h3, skipped.sum()


@njit(cache=True, parallel=True, fastmath=True)
def pass_quartic(hnode, hp, n, h, vmin, offsets, nodes, w, aligned,
                 kcode, gamma, cap, p1, p2, coeffs, fcode, fparams):
    """Direct quartic collision sum: h^6 sum_pairs h h_* sum_m w B h' h*'."""
    n_off = offsets.shape[0]
    m_count = nodes.shape[0]
    partial = np.zeros(N_CHUNKS)
    for chunk in prange(N_CHUNKS):
        wb = np.empty(m_count)
        qpx = np.empty(m_count)
        qpy = np.empty(m_count)
        qpz = np.empty(m_count)
        qmx = np.empty(m_count)
        qmy = np.empty(m_count)
        qmz = np.empty(m_count)
        total = 0.0
        for ioff in range(chunk, n_off, N_CHUNKS):
            d0 = offsets[ioff, 0]
            d1 = offsets[ioff, 1]
            d2 = offsets[ioff, 2]
            _offset_sphere(d0, d1, d2, h, nodes, w, aligned,
                           kcode, gamma, cap, p1, p2, coeffs,
                           wb, qpx, qpy, qpz, qmx, qmy, qmz)
            i_lo = max(0, d0)
            i_hi = n + min(0, d0)
            j_lo = max(0, d1)
            j_hi = n + min(0, d1)
            k_lo = max(0, d2)
            k_hi = n + min(0, d2)
            for m in range(m_count):
                wbm = wb[m]
                if wbm == 0.0:
                    continue
                ax = qpx[m]
                ay = qpy[m]
                az = qpz[m]
                bx = qmx[m]
                by = qmy[m]
                bz = qmz[m]
                for i in range(i_lo, i_hi):
                    for j in range(j_lo, j_hi):
                        row = (i * n + j) * n
                        srow = ((i - d0) * n + (j - d1)) * n - d2
                        for k in range(k_lo, k_hi):
                            lead = hnode[row + k] * hnode[srow + k]
                            if lead == 0.0:
                                continue
                            av = _field_value(fcode, fparams, hp, n, h, vmin,
                                              i + ax, j + ay, k + az)
                            bv = _field_value(fcode, fparams, hp, n, h, vmin,
                                              i + bx, j + by, k + bz)
                            total += 2.0 * lead * wbm * av * bv
        partial[chunk] = total
    grand = 0.0
    for chunk in range(N_CHUNKS):
        grand += partial[chunk]
    h3 = h * h * h
    return grand * h3 * h3


# ----------------------------------------------------------------------
# Monte Carlo oracle


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _u01(state):
    state, z = _splitmix64(state)
    return state, (z >> np.uint64(11)) * 1.1102230246251565e-16  # 2^-53


@njit(cache=True)
def mc_estimate(fp, fnode, n, h, vmin, vmax, vx, vy, vz, fv,
                kcode, gamma, cap, p1, p2, coeffs,
                n_samples, seed, use_importance, imp_cdf, imp_pdf,
                sample_nodes):
    """Monte Carlo estimate of the collision integral at one velocity.

    v* is volume-weighted uniform on the grid: over the nodes, each
    carrying its h^3 cell (sample_nodes True, matching the deterministic
    lattice sum), or continuously over the union of the node cells.
    sigma is uniform on the sphere or, with use_importance, cos(theta) is
    drawn from the tabulated piecewise constant density imp_pdf (relative
    to dt on [-1, 1]) built from the kernel's angular factor.
    Returns (mean, standard error).
    """
    state = np.uint64(seed)
    # the grid box is the union of the node cells: half a spacing beyond
    # the outermost nodes on every side
    lo = vmin - 0.5 * h
    side = 2.0 * vmax + h
    vol = side**3
    two_pi = 2.0 * np.pi
    four_pi = 4.0 * np.pi
    n_bins = imp_pdf.shape[0]
    mean = 0.0
    m2 = 0.0
    count = 0
    for s in range(n_samples):
        state, u1 = _u01(state)
        state, u2 = _u01(state)
        state, u3 = _u01(state)
        if sample_nodes:
            i1 = min(int(u1 * n), n - 1)
            i2 = min(int(u2 * n), n - 1)
            i3 = min(int(u3 * n), n - 1)
            sx = vmin + h * i1
            sy = vmin + h * i2
            sz = vmin + h * i3
            vol = n * n * n * h * h * h
        else:
            sx = lo + side * u1
            sy = lo + side * u2
            sz = lo + side * u3
        dx = vx - sx
        dy = vy - sy
        dz = vz - sz
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        state, ut = _u01(state)
        state, up = _u01(state)
        x = 0.0
        if r > 0.0:
            nx = dx / r
            ny = dy / r
            nz = dz / r
            phi = two_pi * up
            if use_importance:
                lo = 0
                hi = n_bins
                while lo < hi:
                    mid = (lo + hi) // 2
                    if imp_cdf[mid] < ut:
                        lo = mid + 1
                    else:
                        hi = mid
                bin_idx = lo
                c_prev = imp_cdf[bin_idx - 1] if bin_idx > 0 else 0.0
                frac = (ut - c_prev) / (imp_cdf[bin_idx] - c_prev)
                bin_w = 2.0 / n_bins
                t = -1.0 + bin_w * (bin_idx + frac)
                pdf_sigma = imp_pdf[bin_idx] / two_pi
            else:
                t = 2.0 * ut - 1.0
                pdf_sigma = 1.0 / four_pi
            st = np.sqrt(max(0.0, 1.0 - t * t))
            e1x, e1y, e1z, e2x, e2y, e2z = _frame(nx, ny, nz)
            cp = np.cos(phi)
            sp = np.sin(phi)
            gx = st * cp * e1x + st * sp * e2x + t * nx
            gy = st * cp * e1y + st * sp * e2y + t * ny
            gz = st * cp * e1z + st * sp * e2z + t * nz
            b = _kern_b(kcode, gamma, cap, p1, p2, coeffs, r, t)
            if np.isfinite(b) and b > 0.0:
                cx = 0.5 * (vx + sx)
                cy = 0.5 * (vy + sy)
                cz = 0.5 * (vz + sz)
                half = 0.5 * r
                inv_h = 1.0 / h
                fpv = _trilinear(fp, n, (cx + half * gx - vmin) * inv_h,
                                 (cy + half * gy - vmin) * inv_h,
                                 (cz + half * gz - vmin) * inv_h)
                fmv = _trilinear(fp, n, (cx - half * gx - vmin) * inv_h,
                                 (cy - half * gy - vmin) * inv_h,
                                 (cz - half * gz - vmin) * inv_h)
                if sample_nodes:
                    fs = fnode[(i1 * n + i2) * n + i3]
                else:
                    fs = _trilinear(fp, n, (sx - vmin) * inv_h,
                                    (sy - vmin) * inv_h,
                                    (sz - vmin) * inv_h)
                pi_f = fpv * fmv * (1.0 - fv) * (1.0 - fs) \
                    - fv * fs * (1.0 - fpv) * (1.0 - fmv)
                x = b * pi_f * vol / pdf_sigma
        count += 1
        delta = x - mean
        mean += delta / count
        m2 += delta * (x - mean)
    if count > 1:
        stderr = np.sqrt(m2 / (count - 1) / count)
    else:
        stderr = 0.0
    return mean, stderr
