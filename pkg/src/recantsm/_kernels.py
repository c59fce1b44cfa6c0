"""Compiled inner loops for pattern interpolation, sampling and channel assembly.

Cell lookup uses a guide table (indexed search): ``guide[b]`` is the last
grid index whose abscissa is <= the left edge of bucket ``b``, so locating a
query is a bucket computation plus a short forward scan.
"""

import numpy as np
from numba import njit


def build_guide(grid: np.ndarray, oversample: int = 2):
    """Guide table for :func:`_locate`; returns ``(guide, scale)``."""
    grid = np.asarray(grid, dtype=float)
    n_buckets = oversample * (grid.size - 1)
    span = grid[-1] - grid[0]
    edges = grid[0] + span * np.arange(n_buckets) / n_buckets
    guide = np.searchsorted(grid, edges, side="right") - 1
    guide = np.clip(guide, 0, grid.size - 2).astype(np.int64)
    return guide, n_buckets / span


@njit(cache=True)
def _locate(grid, guide, scale, x):
    # index i with grid[i] <= x < grid[i+1], clamped to [0, len-2]
    last = grid.shape[0] - 2
    if x <= grid[0]:
        return 0
    b = int((x - grid[0]) * scale)
    if b >= guide.shape[0]:
        return last
    i = guide[b]
    while i < last and grid[i + 1] <= x:
        i += 1
    return i


@njit(cache=True)
def bilinear_gain_phase(theta, phi, tg, tguide, tscale, pg, pguide, pscale, gain, p00, p01, p10, p11):
    """Bilinear gain and per-cell-unwrapped phase.

    ``pg``/``gain`` carry the periodic extension in azimuth; ``phi`` must
    already be shifted into ``[pg[0], pg[0] + 2 pi)``.
    """
    th = theta.ravel()
    ph = phi.ravel()
    n = th.shape[0]
    g = np.empty(n)
    om = np.empty(n)
    for k in range(n):
        i = _locate(tg, tguide, tscale, th[k])
        j = _locate(pg, pguide, pscale, ph[k])
        u = (th[k] - tg[i]) / (tg[i + 1] - tg[i])
        v = (ph[k] - pg[j]) / (pg[j + 1] - pg[j])
        w00 = (1.0 - u) * (1.0 - v)
        w01 = (1.0 - u) * v
        w10 = u * (1.0 - v)
        w11 = u * v
        g[k] = w00 * gain[i, j] + w01 * gain[i, j + 1] + w10 * gain[i + 1, j] + w11 * gain[i + 1, j + 1]
        om[k] = w00 * p00[i, j] + w01 * p01[i, j] + w10 * p10[i, j] + w11 * p11[i, j]
    return g.reshape(theta.shape), om.reshape(theta.shape)


@njit(cache=True)
def quantile_lookup(u, qx):
    """Piecewise-linear quantile function tabulated at equispaced ``u`` nodes."""
    flat = u.ravel()
    out = np.empty(flat.shape[0])
    n = qx.shape[0] - 1
    for k in range(flat.shape[0]):
        t = flat[k] * n
        i = int(t)
        if i >= n:
            out[k] = qx[n]
        else:
            out[k] = qx[i] + (t - i) * (qx[i + 1] - qx[i])
    return out.reshape(u.shape)


# sin/cos by table lookup plus a short Taylor correction.  With 4096 steps
# per turn the residual angle is below 7.7e-4 rad, so the truncated series
# is exact to double precision.
SINCOS_N = 4096
_STEP = 2.0 * np.pi / SINCOS_N
_STEP_HI = np.float64(np.float32(_STEP))
_STEP_LO = _STEP - _STEP_HI
_COS_TAB = np.cos(_STEP * np.arange(SINCOS_N))
_SIN_TAB = np.sin(_STEP * np.arange(SINCOS_N))


@njit(cache=True, inline="always")
def _sincos(x):
    k = np.int64(np.floor(x / _STEP + 0.5))
    d = (x - k * _STEP_HI) - k * _STEP_LO
    d2 = d * d
    cd = 1.0 - d2 * (0.5 - d2 * (1.0 / 24.0 - d2 * (1.0 / 720.0)))
    sd = d * (1.0 - d2 * (1.0 / 6.0 - d2 * (1.0 / 120.0 - d2 * (1.0 / 5040.0))))
    i = k & (SINCOS_N - 1)
    c0 = _COS_TAB[i]
    s0 = _SIN_TAB[i]
    return s0 * cd + c0 * sd, c0 * cd - s0 * sd


@njit(cache=True)
def sincos(x):
    """Vectorised ``(sin(x), cos(x))`` through the table kernel."""
    flat = x.ravel()
    s = np.empty(flat.shape[0])
    c = np.empty(flat.shape[0])
    for k in range(flat.shape[0]):
        s[k], c[k] = _sincos(flat[k])
    return s.reshape(x.shape), c.reshape(x.shape)


@njit(cache=True, inline="always")
def _cell(grid, guide, scale, uniform, x):
    """Cell index and fractional offset of ``x`` in ``grid``."""
    if uniform:
        t = (x - grid[0]) * scale
        i = int(t)
        last = grid.shape[0] - 2
        if i > last:
            i = last
        elif i < 0:
            i = 0
        return i, t - i
    i = _locate(grid, guide, scale, x)
    return i, (x - grid[i]) / (grid[i + 1] - grid[i])


@njit(cache=True, inline="always")
def _cell_gains(cells, i, j, u, v, gr, gi):
    # cells[i, j, p] = (g00, g01, g10, g11, w00, w01, w10, w11), w the unwrapped corner phases
    w00 = (1.0 - u) * (1.0 - v)
    w01 = (1.0 - u) * v
    w10 = u * (1.0 - v)
    w11 = u * v
    for p in range(cells.shape[2]):
        g = w00 * cells[i, j, p, 0] + w01 * cells[i, j, p, 1] + w10 * cells[i, j, p, 2] + w11 * cells[i, j, p, 3]
        om = w00 * cells[i, j, p, 4] + w01 * cells[i, j, p, 5] + w10 * cells[i, j, p, 6] + w11 * cells[i, j, p, 7]
        a = np.sqrt(g)
        s, c = _sincos(om)
        gr[p] = a * c
        gi[p] = a * s


@njit(cache=True)
def cell_complex_multi(theta, phi, tg, tguide, tscale, tuni, pg, pguide, pscale, puni, cells):
    """Complex gains of ``P`` patterns sharing one grid; shape ``(n, P)``.

    ``cells`` packs the four corner gains and unwrapped phases of every grid
    cell and pattern contiguously so a query touches one memory block.
    ``tuni``/``puni`` flag equispaced grids, for which ``scale`` is the
    inverse spacing.
    """
    th = theta.ravel()
    ph = phi.ravel()
    n = th.shape[0]
    n_p = cells.shape[2]
    out = np.empty((n, n_p), dtype=np.complex128)
    gr = np.empty(n_p)
    gi = np.empty(n_p)
    for k in range(n):
        i, u = _cell(tg, tguide, tscale, tuni, th[k])
        j, v = _cell(pg, pguide, pscale, puni, ph[k])
        _cell_gains(cells, i, j, u, v, gr, gi)
        for p in range(n_p):
            out[k, p] = complex(gr[p], gi[p])
    return out


@njit(cache=True)
def ray_channel(beta, theta_t, phi_t, theta_r, phi_r, kd, n_r, eps, tg, tguide, tscale, tuni, pg, pguide, pscale, puni, cells):
    """Channel matrices straight from ray draws, shape ``(T, n_r, P)``.

    Elevations are clipped onto the pattern grid (within ``eps``) and azimuths
    wrapped onto ``[pg[0], pg[0] + 2 pi)``.  Returns ``(H, bad)`` where ``bad``
    is an elevation outside the grid, or NaN if there is none.
    """
    n_t, n_k = beta.shape
    n_p = cells.shape[2]
    Hr = np.zeros((n_t, n_r, n_p))
    Hi = np.zeros((n_t, n_r, n_p))
    gr = np.empty(n_p)
    gi = np.empty(n_p)
    norm = 1.0 / np.sqrt(n_k)
    t_lo = tg[0]
    t_hi = tg[tg.shape[0] - 1]
    p_lo = pg[0]
    two_pi = 2.0 * np.pi
    bad = np.nan
    for t in range(n_t):
        for k in range(n_k):
            th = theta_t[t, k]
            if not (th >= t_lo - eps and th <= t_hi + eps):
                bad = th
            th = min(max(th, t_lo), t_hi)
            ph = phi_t[t, k] - p_lo
            if ph < 0.0 or ph >= two_pi:
                ph -= two_pi * np.floor(ph / two_pi)
            i, u = _cell(tg, tguide, tscale, tuni, th)
            j, v = _cell(pg, pguide, pscale, puni, ph + p_lo)
            _cell_gains(cells, i, j, u, v, gr, gi)
            s1, _ = _sincos(theta_r[t, k])
            s2, _ = _sincos(phi_r[t, k])
            ss, cs = _sincos(kd * s1 * s2)
            br = beta[t, k].real * norm
            bi = beta[t, k].imag * norm
            for n in range(n_r):
                for p in range(n_p):
                    Hr[t, n, p] += br * gr[p] - bi * gi[p]
                    Hi[t, n, p] += br * gi[p] + bi * gr[p]
                br, bi = br * cs - bi * ss, br * ss + bi * cs
    return Hr + 1j * Hi, bad


@njit(cache=True)
def assemble_channel(beta, tx, s, kd, n_r):
    """``H[t, n, p] = K^-1/2 sum_k beta[t,k] exp(j kd n s[t,k]) tx[t,k,p]``."""
    n_t, n_k = beta.shape
    n_p = tx.shape[2]
    H = np.zeros((n_t, n_r, n_p), dtype=np.complex128)
    norm = 1.0 / np.sqrt(n_k)
    for t in range(n_t):
        for k in range(n_k):
            ss, cs = _sincos(kd * s[t, k])
            step = complex(cs, ss)
            a = beta[t, k] * norm
            for n in range(n_r):
                for p in range(n_p):
                    H[t, n, p] += a * tx[t, k, p]
                a *= step
    return H
