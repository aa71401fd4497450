"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names at the bottom of the module are bound to one of the two
according to :mod:`permchain._accel`. Both implementations accumulate in the
same order, so their outputs agree bit for bit; the test-suite checks this.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# propagation: out[s, qcols[j]] += m[s, row(j)] * data[j], entries in storage order


@njit
def _propagate_block_nb(indptr, qcols, data, m_in, m_out):
    nstart, n = m_in.shape
    m_out[:, :] = 0.0
    for s in range(nstart):
        for x in range(n):
            mass = m_in[s, x]
            if mass == 0.0:
                continue
            for j in range(indptr[x], indptr[x + 1]):
                m_out[s, qcols[j]] += mass * data[j]


_NP_CHUNK = 1 << 22


def _propagate_block_np(indptr, qcols, data, m_in, m_out):
    nstart, n = m_in.shape
    rows = np.repeat(np.arange(n), np.diff(indptr))
    nnz = len(data)
    step = max(1, _NP_CHUNK // max(nnz, 1))
    for s0 in range(0, nstart, step):
        s1 = min(nstart, s0 + step)
        # One bincount over (start, column) bins; within a bin the weights
        # arrive in storage order, as in the loop version.
        bins = (np.arange(s1 - s0)[:, None] * n + qcols[None, :]).ravel()
        weights = (m_in[s0:s1, rows] * data[None, :]).ravel()
        m_out[s0:s1] = np.bincount(bins, weights=weights, minlength=(s1 - s0) * n).reshape(s1 - s0, n)


# ---------------------------------------------------------------------------
# inverse-CDF sampling from sparse rows


@njit
def _row_cumsum_nb(indptr, data):
    cum = np.empty_like(data)
    for x in range(len(indptr) - 1):
        acc = 0.0
        for j in range(indptr[x], indptr[x + 1]):
            acc += data[j]
            cum[j] = acc
    return cum


def _padded(indptr, values, fill):
    lengths = np.diff(indptr)
    width = int(lengths.max()) if len(lengths) else 0
    pad = np.full((len(lengths), max(width, 1)), fill, dtype=values.dtype)
    mask = np.arange(width)[None, :] < lengths[:, None]
    pad[:, :width][mask] = values
    return pad, mask


def _row_cumsum_np(indptr, data):
    pad, mask = _padded(indptr, data, 0.0)
    return np.cumsum(pad, axis=1)[:, : mask.shape[1]][mask]


@njit
def _sample_rows_nb(indptr, cum, rows, u):
    out = np.empty(len(rows), dtype=np.int64)
    for i in range(len(rows)):
        lo = indptr[rows[i]]
        hi = indptr[rows[i] + 1]
        j = lo
        while j < hi - 1 and cum[j] <= u[i]:
            j += 1
        out[i] = j
    return out


def _sample_rows_np(indptr, cum, rows, u):
    rows = np.asarray(rows, dtype=np.int64)
    out = np.empty(len(rows), dtype=np.int64)
    lengths = np.diff(indptr)
    width = max(int(lengths.max()), 1)
    step = max(1, _NP_CHUNK // width)
    offs = np.arange(width)
    for i0 in range(0, len(rows), step):
        r = rows[i0 : i0 + step]
        lo = indptr[r]
        ln = lengths[r]
        idx = lo[:, None] + np.minimum(offs[None, :], ln[:, None] - 1)
        valid = offs[None, :] < ln[:, None] - 1
        below = (cum[idx] <= u[i0 : i0 + step, None]) & valid
        # cum is non-decreasing, so the count of entries <= u is the first index above u
        out[i0 : i0 + step] = lo + below.sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# annealed walk with on-the-fly revelation of the permutation
#
# Shared bookkeeping (all arrays length n, restored to their pristine state
# after every run through the ``touched`` log):
#   dom_img[y]  image of y, or -1 while unrevealed
#   ran_flag[v] whether v is already an image
#   unused[:m]  images not yet used; pos[v] is v's slot in ``unused``


def _annealed_runs_impl(indptr, indices, data, cum, n, x0, uni, traj_x, traj_y, out_x, out_logw, out_nrev):
    """Real annealed process for each run; ``uni[r, k] = (u_step, u_reveal)``."""
    nruns, t = uni.shape[0], uni.shape[1]
    record = traj_x.shape[0] == nruns
    dom_img = np.full(n, -1, dtype=np.int64)
    ran_flag = np.zeros(n, dtype=np.bool_)
    unused = np.arange(n, dtype=np.int64)
    pos = np.arange(n, dtype=np.int64)
    touched = np.empty(2 * t + 2, dtype=np.int64)
    dom_log = np.empty(t + 1, dtype=np.int64)
    for r in range(nruns):
        x = x0[r]
        m = n
        nt = 0
        nd = 0
        logw = 0.0
        if record:
            traj_x[r, 0] = x
        for k in range(t):
            lo = indptr[x]
            hi = indptr[x + 1]
            j = lo
            while j < hi - 1 and cum[j] <= uni[r, k, 0]:
                j += 1
            y = indices[j]
            logw += np.log(data[j])
            if dom_img[y] < 0:
                v = unused[int(uni[r, k, 1] * m)]
                i = pos[v]
                last = unused[m - 1]
                unused[i] = last
                pos[last] = i
                unused[m - 1] = v
                pos[v] = m - 1
                touched[nt] = v
                touched[nt + 1] = last
                nt += 2
                m -= 1
                ran_flag[v] = True
                dom_img[y] = v
                dom_log[nd] = y
                nd += 1
            x = dom_img[y]
            if record:
                traj_y[r, k] = y
                traj_x[r, k + 1] = x
        out_x[r] = x
        out_logw[r] = logw
        out_nrev[r] = nd
        for i in range(nt):
            v = touched[i]
            unused[v] = v
            pos[v] = v
            ran_flag[v] = False
        for i in range(nd):
            dom_img[dom_log[i]] = -1


def _coupling_runs_impl(indptr, indices, data, cum, n, x0, uni, traj, out_t, out_logw):
    """Paired real/reference processes driven by shared uniforms.

    ``uni[r, k] = (u_step, u_uniform, u_fallback)`` for k = 0..t; step t only
    samples the reference Y to test the last failure condition. The failure
    time is the first k with Y*_k already in Dom, or with the uniform draw
    X*_k hitting an image revealed before step k-1's reveal. ``out_t`` is -1
    when the coupling survived. ``traj[r]`` rows hold X, Y, X*, Y* when
    recording.
    """
    nruns = uni.shape[0]
    t = uni.shape[1] - 1
    record = traj.shape[0] == nruns
    dom_img = np.full(n, -1, dtype=np.int64)
    ran_flag = np.zeros(n, dtype=np.bool_)
    unused = np.arange(n, dtype=np.int64)
    pos = np.arange(n, dtype=np.int64)
    touched = np.empty(2 * t + 2, dtype=np.int64)
    dom_log = np.empty(t + 1, dtype=np.int64)
    for r in range(nruns):
        x = x0[r]
        xs = x0[r]
        m = n
        nt = 0
        nd = 0
        logw = 0.0
        failed_at = -1
        if record:
            traj[r, 0, 0] = x
            traj[r, 2, 0] = xs
        for k in range(t + 1):
            u = uni[r, k, 0]
            lo = indptr[xs]
            hi = indptr[xs + 1]
            js = lo
            while js < hi - 1 and cum[js] <= u:
                js += 1
            ys = indices[js]
            if failed_at < 0 and dom_img[ys] >= 0:
                failed_at = k
            if k == t:
                break
            lo = indptr[x]
            hi = indptr[x + 1]
            j = lo
            while j < hi - 1 and cum[j] <= u:
                j += 1
            y = indices[j]
            logw += np.log(data[j])
            xs_next = int(uni[r, k, 1] * n)
            collide = ran_flag[xs_next]
            if dom_img[y] < 0:
                if not collide:
                    v = xs_next
                else:
                    v = unused[int(uni[r, k, 2] * m)]
                i = pos[v]
                last = unused[m - 1]
                unused[i] = last
                pos[last] = i
                unused[m - 1] = v
                pos[v] = m - 1
                touched[nt] = v
                touched[nt + 1] = last
                nt += 2
                m -= 1
                ran_flag[v] = True
                dom_img[y] = v
                dom_log[nd] = y
                nd += 1
            if failed_at < 0 and collide:
                failed_at = k + 1
            if record:
                traj[r, 1, k] = y
                traj[r, 3, k] = ys
                traj[r, 0, k + 1] = dom_img[y]
                traj[r, 2, k + 1] = xs_next
            x = dom_img[y]
            xs = xs_next
        out_t[r] = failed_at
        out_logw[r] = logw
        for i in range(nt):
            v = touched[i]
            unused[v] = v
            pos[v] = v
            ran_flag[v] = False
        for i in range(nd):
            dom_img[dom_log[i]] = -1


_annealed_runs_nb = njit(_annealed_runs_impl)
_coupling_runs_nb = njit(_coupling_runs_impl)


# ---------------------------------------------------------------------------
# exact expansion coefficient by Gray-code subset enumeration


@njit
def _alpha_gray_nb(indptr, indices, images, n):
    half = n // 2
    cnt1 = np.zeros(n, dtype=np.int64)
    cnt2 = np.zeros(n, dtype=np.int64)
    size2 = 0
    k = 0
    best_num = -1
    best_den = 1
    best_mask = -1
    g = 0
    for i in range(1, 1 << n):
        b = 0
        while not (i >> b) & 1:
            b += 1
        g ^= 1 << b
        if (g >> b) & 1:
            k += 1
            for jj in range(indptr[b], indptr[b + 1]):
                y = indices[jj]
                cnt1[y] += 1
                if cnt1[y] == 1:
                    z = images[y]
                    for ww in range(indptr[z], indptr[z + 1]):
                        w = indices[ww]
                        cnt2[w] += 1
                        if cnt2[w] == 1:
                            size2 += 1
        else:
            k -= 1
            for jj in range(indptr[b], indptr[b + 1]):
                y = indices[jj]
                cnt1[y] -= 1
                if cnt1[y] == 0:
                    z = images[y]
                    for ww in range(indptr[z], indptr[z + 1]):
                        w = indices[ww]
                        cnt2[w] -= 1
                        if cnt2[w] == 0:
                            size2 -= 1
        if k == 0 or k > half:
            continue
        if best_num < 0:
            best_num, best_den, best_mask = size2, k, g
            continue
        lhs = size2 * best_den
        rhs = best_num * k
        if lhs < rhs or (lhs == rhs and g < best_mask):
            best_num, best_den, best_mask = size2, k, g
    return best_num, best_den, best_mask


def _popcount(a):
    return np.bitwise_count(a).astype(np.int64)


def _alpha_gray_np(indptr, indices, images, n):
    # Same minimum by dynamic programming over all bitmasks at once.
    half = n // 2
    nbr = np.zeros(n, dtype=np.int64)
    for x in range(n):
        for y in indices[indptr[x] : indptr[x + 1]]:
            nbr[x] |= 1 << int(y)
    size = 1 << n
    out = np.zeros(size, dtype=np.int64)
    for b in range(n):
        out[1 << b : 1 << (b + 1)] = out[: 1 << b] | nbr[b]
    pushed = np.zeros(size, dtype=np.int64)
    for y in range(n):
        pushed |= ((out >> y) & 1) << int(images[y])
    num = _popcount(out[pushed])
    den = _popcount(np.arange(size, dtype=np.int64))
    ok = (den >= 1) & (den <= half)
    masks = np.flatnonzero(ok)
    num, den = num[ok], den[ok]
    # Exact ratio comparison: den <= 10 for n <= 20.
    scale = int(np.lcm.reduce(np.arange(1, max(half, 1) + 1)))
    key = num * (scale // den)
    i = int(np.argmin(key))
    return int(num[i]), int(den[i]), int(masks[i])


# ---------------------------------------------------------------------------
# exact phi_star over all sets of size <= n/2, from a dense Q^2


@njit
def _phi_star_nb(q2, n):
    half = n // 2
    best = np.inf
    best_mask = -1
    a = np.empty(n)
    b = np.empty(n)
    for mask in range(1, 1 << n):
        k = 0
        mm = mask
        while mm:
            k += mm & 1
            mm >>= 1
        if k > half:
            continue
        a[:] = 0.0
        b[:] = 0.0
        for x in range(n):
            if (mask >> x) & 1:
                for y in range(n):
                    a[y] += q2[x, y]
            else:
                for y in range(n):
                    b[y] += q2[x, y]
        total = 0.0
        for y in range(n):
            total += min(a[y], b[y])
        phi = total / (2.0 * k)
        if phi < best:
            best = phi
            best_mask = mask
    return best, best_mask


def _phi_star_np(q2, n):
    half = n // 2
    masks = np.arange(1, 1 << n, dtype=np.int64)
    k = _popcount(masks)
    masks, k = masks[k <= half], k[k <= half]
    best, best_mask = np.inf, -1
    step = 1 << 15
    for i0 in range(0, len(masks), step):
        mk = masks[i0 : i0 + step]
        bits = ((mk[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
        a = np.zeros((len(mk), n))
        b = np.zeros((len(mk), n))
        for x in range(n):
            a[bits[:, x]] += q2[x]
            b[~bits[:, x]] += q2[x]
        total = np.zeros(len(mk))
        for y in range(n):
            total += np.minimum(a[:, y], b[:, y])
        phi = total / (2.0 * k[i0 : i0 + step])
        j = int(np.argmin(phi))
        if phi[j] < best:
            best, best_mask = float(phi[j]), int(mk[j])
    return best, best_mask


# ---------------------------------------------------------------------------
# backend selection

if USE_NUMBA:
    propagate_block = _propagate_block_nb
    row_cumsum = _row_cumsum_nb
    sample_rows = _sample_rows_nb
    annealed_runs = _annealed_runs_nb
    coupling_runs = _coupling_runs_nb
    alpha_gray = _alpha_gray_nb
    phi_star_dense = _phi_star_nb
else:
    propagate_block = _propagate_block_np
    row_cumsum = _row_cumsum_np
    sample_rows = _sample_rows_np
    annealed_runs = _annealed_runs_impl
    coupling_runs = _coupling_runs_impl
    alpha_gray = _alpha_gray_np
    phi_star_dense = _phi_star_np
