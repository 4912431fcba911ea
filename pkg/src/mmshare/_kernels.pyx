# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: analog pair gains and local-search candidate scoring.

Signatures and semantics mirror :mod:`mmshare._kernels_py`.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, log, log2, fabs, M_PI, INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline void _steer(int n, double x, double y, double *re, double *im) nogil:
    # a(x)^H a(y) for sine-parametrized ULA responses
    cdef double half = 0.5 * M_PI * (y - x)
    cdef double den = sin(half)
    cdef double ratio, ph
    if fabs(den) < 1e-12:
        ratio = cos(n * half) / cos(half)
    else:
        ratio = sin(n * half) / (n * den)
    ph = (n - 1) * half
    re[0] = ratio * cos(ph)
    im[0] = ratio * sin(ph)


def pair_gain_tensor(const double complex[:, :] gains, const i64[:] offsets,
                     const double[:] aoa_sin, const double[:] aod_sin,
                     const double[:, :] link_scale, const i64[:] pair_bs,
                     const i64[:] pair_ue, const i64[:, :] k_ue, const i64[:, :] k_bs,
                     const double[:] cb_ue_sines, const double[:] cb_bs_sines,
                     int n_ue_ant, int n_bs_ant, const i64[:] bs_op, const i64[:] ue_op,
                     co_channel, double[:, :, :] out):
    """Fill ``out[s, p, q] = |w_ue(p)^H H_{bs(q), ue(p)} w_bs(q)|^2``."""
    cdef Py_ssize_t n_samples = gains.shape[0]
    cdef Py_ssize_t n_ue = link_scale.shape[1]
    cdef Py_ssize_t n_pairs = pair_bs.shape[0]
    cdef Py_ssize_t n_bs = link_scale.shape[0]
    cdef cnp.uint8_t[:, :] cc = np.ascontiguousarray(co_channel, dtype=np.uint8)
    # pairs grouped by BS (CSR)
    order_np = np.argsort(np.asarray(pair_bs), kind="stable").astype(np.int64)
    starts_np = np.zeros(n_bs + 1, dtype=np.int64)
    np.add.at(starts_np, np.asarray(pair_bs) + 1, 1)
    starts_np = np.cumsum(starts_np)
    cdef i64[:] order = order_np
    cdef i64[:] starts = starts_np
    max_paths = int(np.diff(np.asarray(offsets)).max()) if offsets.shape[0] > 1 else 1
    # UE-side factor times path gain per (sample, path) of the current link
    cdef double[:, :] wr = np.empty((n_samples, max_paths))
    cdef double[:, :] wi = np.empty((n_samples, max_paths))
    # BS-side factors per (beam, path) of the current link, filled on demand;
    # stamp[k] records which link row k was computed for
    cdef Py_ssize_t n_beams = cb_bs_sines.shape[0]
    cdef double[:, :] fr = np.empty((n_beams, max_paths))
    cdef double[:, :] fi = np.empty((n_beams, max_paths))
    cdef i64[:] stamp = np.full(n_beams, -1, dtype=np.int64)
    cdef Py_ssize_t s, p, i, j, q, n, lk, start, count
    cdef i64 u, k
    cdef double ur, ui, gr, gi, yr, yi, sc2

    with nogil:
        out[:, :, :] = 0.0
        for p in range(n_pairs):
            u = pair_ue[p]
            for i in range(n_bs):
                if starts[i] == starts[i + 1] or not cc[bs_op[i], ue_op[u]]:
                    continue
                lk = i * n_ue + u
                start = offsets[lk]
                count = offsets[lk + 1] - start
                for s in range(n_samples):
                    for n in range(count):
                        _steer(n_ue_ant, cb_ue_sines[k_ue[s, p]], aoa_sin[start + n], &ur, &ui)
                        gr = gains[s, start + n].real
                        gi = gains[s, start + n].imag
                        wr[s, n] = ur * gr - ui * gi
                        wi[s, n] = ur * gi + ui * gr
                sc2 = link_scale[i, u] * link_scale[i, u]
                for j in range(starts[i], starts[i + 1]):
                    q = order[j]
                    for s in range(n_samples):
                        k = k_bs[s, q]
                        if stamp[k] != lk:
                            for n in range(count):
                                _steer(n_bs_ant, aod_sin[start + n], cb_bs_sines[k],
                                       &fr[k, n], &fi[k, n])
                            stamp[k] = lk
                        yr = 0.0
                        yi = 0.0
                        for n in range(count):
                            yr += wr[s, n] * fr[k, n] - wi[s, n] * fi[k, n]
                            yi += wr[s, n] * fi[k, n] + wi[s, n] * fr[k, n]
                        out[s, p, q] = sc2 * (yr * yr + yi * yi)
    return np.asarray(out)


def evaluate_candidates(const double[:, :, :] C, mask, const i64[:] pair_bs,
                        const i64[:] ue_op, const i64[:] assign, const i64[:] load,
                        const double[:, :, :] agg, const double[:, :] intf,
                        const double[:] lograte, const double[:] noise, const double[:] bw,
                        double p_tx, const i64[:, :] moves_ue, const i64[:, :] moves_pair,
                        int n_ops, double[:, :] out):
    """Operator utilities after each candidate reassignment of up to two UEs."""
    cdef Py_ssize_t n_samples = agg.shape[0]
    cdef Py_ssize_t n_ue = agg.shape[1]
    cdef Py_ssize_t n_bs = agg.shape[2]
    cdef Py_ssize_t n_cand = moves_ue.shape[0]
    cdef Py_ssize_t width = moves_ue.shape[1]
    cdef cnp.uint8_t[:, :] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef i64[:] new_assign = np.array(assign, dtype=np.int64)
    cdef i64[:] new_load = np.array(load, dtype=np.int64)
    cdef cnp.uint8_t[:] aff = np.zeros(n_bs, dtype=np.uint8)
    cdef cnp.uint8_t[:] moved = np.zeros(n_ue, dtype=np.uint8)
    cdef double[:] util = np.empty(n_ops)
    cdef i64[:] mv_u = np.empty(width, dtype=np.int64)
    cdef i64[:] mv_po = np.empty(width, dtype=np.int64)
    cdef i64[:] mv_pn = np.empty(width, dtype=np.int64)
    cdef i64[:] aff_list = np.empty(2 * width, dtype=np.int64)
    cdef Py_ssize_t c, k, j, n_mv, n_aff, s, u, b, v, w
    cdef i64 pn, pu, bu, bo, bn
    cdef double acc, sig, it, old_pw, new_pw, r, delta
    cdef bint touch

    with nogil:
        for c in range(n_cand):
            n_mv = 0
            for k in range(width):
                if moves_ue[c, k] >= 0:
                    v = moves_ue[c, k]
                    mv_u[n_mv] = v
                    mv_po[n_mv] = assign[v]
                    mv_pn[n_mv] = moves_pair[c, k]
                    n_mv += 1
            for k in range(n_mv):
                v = mv_u[k]
                bo = pair_bs[mv_po[k]]
                bn = pair_bs[mv_pn[k]]
                new_assign[v] = mv_pn[k]
                new_load[bo] -= 1
                new_load[bn] += 1
                moved[v] = 1
            n_aff = 0
            for k in range(2 * n_mv):
                b = pair_bs[mv_po[k // 2]] if k % 2 == 0 else pair_bs[mv_pn[k // 2]]
                if not aff[b]:
                    aff[b] = 1
                    aff_list[n_aff] = b
                    n_aff += 1
            for k in range(n_ops):
                util[k] = 0.0

            for u in range(n_ue):
                if moved[u]:
                    continue
                pu = assign[u]
                bu = pair_bs[pu]
                touch = aff[bu]
                if not touch:
                    for k in range(n_mv):
                        if (m[u, pair_bs[mv_po[k]]] or m[u, pair_bs[mv_pn[k]]]):
                            touch = True
                            break
                if not touch:
                    util[ue_op[u]] += lograte[u]
                    continue
                new_pw = p_tx / new_load[bu] if new_load[bu] > 0 else 0.0
                acc = 0.0
                for s in range(n_samples):
                    it = intf[s, u]
                    # swap the affected BSs' old weighted terms for the new ones
                    for j in range(n_aff):
                        b = aff_list[j]
                        if not m[u, b]:
                            continue
                        delta = 0.0
                        for k in range(n_mv):
                            if pair_bs[mv_po[k]] == b:
                                delta -= C[s, pu, mv_po[k]]
                            if pair_bs[mv_pn[k]] == b:
                                delta += C[s, pu, mv_pn[k]]
                        old_pw = p_tx / load[b] if load[b] > 0 else 0.0
                        r = p_tx / new_load[b] if new_load[b] > 0 else 0.0
                        it += r * (agg[s, u, b] + delta) - old_pw * agg[s, u, b]
                    sig = new_pw * C[s, pu, pu]
                    acc += log2(1.0 + sig / (it + noise[u]))
                r = bw[u] * acc / n_samples
                util[ue_op[u]] += log(r) if r > 0 else -INFINITY

            for k in range(n_mv):
                v = mv_u[k]
                pn = mv_pn[k]
                bn = pair_bs[pn]
                acc = 0.0
                for s in range(n_samples):
                    it = 0.0
                    for w in range(n_ue):
                        if w == v:
                            continue
                        b = pair_bs[new_assign[w]]
                        if m[v, b] and new_load[b] > 0:
                            it += p_tx / new_load[b] * C[s, pn, new_assign[w]]
                    sig = (p_tx / new_load[bn]) * C[s, pn, pn]
                    acc += log2(1.0 + sig / (it + noise[v]))
                r = bw[v] * acc / n_samples
                util[ue_op[v]] += log(r) if r > 0 else -INFINITY

            for k in range(n_ops):
                out[c, k] = util[k]
            # restore scratch state
            for k in range(n_mv):
                v = mv_u[k]
                bo = pair_bs[mv_po[k]]
                bn = pair_bs[mv_pn[k]]
                new_assign[v] = assign[v]
                new_load[bo] = load[bo]
                new_load[bn] = load[bn]
                moved[v] = 0
            for j in range(n_aff):
                aff[aff_list[j]] = 0
    return np.asarray(out)
