"""Pure numpy implementations of the hot kernels.

Same signatures and outputs as the compiled ``_kernels`` module; selected
automatically when the extension is not built.
"""

from __future__ import annotations

import numpy as np

from .channel import steering_inner


def pair_gain_tensor(gains, offsets, aoa_sin, aod_sin, link_scale, pair_bs, pair_ue,
                     k_ue, k_bs, cb_ue_sines, cb_bs_sines, n_ue_ant, n_bs_ant,
                     bs_op, ue_op, co_channel, out):
    """Fill ``out[s, p, q] = |w_ue(p)^H H_{bs(q), ue(p)} w_bs(q)|^2``.

    Entries where BS ``bs(q)`` is not co-channel with UE ``ue(p)`` are zero.
    """
    n_samples = gains.shape[0]
    n_ue = link_scale.shape[1]
    n_pairs = len(pair_bs)
    counts = np.diff(offsets)
    out[...] = 0.0
    for p in range(n_pairs):
        u = pair_ue[p]
        q_ok = np.flatnonzero(co_channel[bs_op[pair_bs], ue_op[u]])
        if len(q_ok) == 0:
            continue
        links = pair_bs[q_ok] * n_ue + u
        width = int(counts[links].max())
        idx = offsets[links][:, None] + np.arange(width)[None, :]
        valid = np.arange(width)[None, :] < counts[links][:, None]
        idx = np.where(valid, idx, 0)
        aoa = aoa_sin[idx]
        aod = aod_sin[idx]
        scale2 = link_scale[pair_bs[q_ok], u] ** 2
        for s in range(n_samples):
            ue_f = steering_inner(n_ue_ant, cb_ue_sines[k_ue[s, p]], aoa)
            bs_f = steering_inner(n_bs_ant, aod, cb_bs_sines[k_bs[s, q_ok]][:, None])
            g = np.where(valid, gains[s][idx], 0.0)
            y = np.sum(g * ue_f * bs_f, axis=1)
            out[s, p, q_ok] = scale2 * (y.real ** 2 + y.imag ** 2)
    return out


def evaluate_candidates(C, mask, pair_bs, ue_op, assign, load, agg, intf, lograte,
                        noise, bw, p_tx, moves_ue, moves_pair, n_ops, out):
    """Operator utilities after each candidate reassignment of up to two UEs.

    ``agg[s, u, b]`` is the unweighted interference UE ``u`` receives from the
    beams of BS ``b`` (excluding its own), ``intf`` the power-weighted total.
    """
    n_samples, n_ue, _ = agg.shape
    bs_of = pair_bs[assign]
    samples = np.arange(n_samples)
    for c in range(moves_ue.shape[0]):
        movers = [(int(v), int(pn)) for v, pn in zip(moves_ue[c], moves_pair[c]) if v >= 0]
        new_assign = assign.copy()
        new_load = {}
        leaving = {}
        entering = {}
        for v, pn in movers:
            po = assign[v]
            bo, bn = pair_bs[po], pair_bs[pn]
            new_assign[v] = pn
            new_load[bo] = new_load.get(bo, load[bo]) - 1
            new_load[bn] = new_load.get(bn, load[bn]) + 1
            leaving.setdefault(bo, []).append(po)
            entering.setdefault(bn, []).append(pn)
        affected = sorted(set(leaving) | set(entering))
        moved = np.zeros(n_ue, dtype=bool)
        moved[[v for v, _ in movers]] = True

        def pw(b, ld):
            return p_tx / ld if ld > 0 else 0.0

        new_bs_of = pair_bs[new_assign]
        new_pw = np.where(load > 0, p_tx / np.maximum(load, 1), 0.0)
        for b, ld in new_load.items():
            new_pw[b] = pw(b, ld)

        touched = ~moved & (np.isin(bs_of, affected)
                            | mask[:, affected].any(axis=1))
        new_lr = lograte.copy()
        others = np.flatnonzero(touched)
        if len(others):
            pu = assign[others]
            new_i = intf[:, others].copy()
            for b in affected:
                old = agg[:, others, b]
                new = old.copy()
                m = mask[others, b].astype(float)
                for po in leaving.get(b, []):
                    new -= C[:, pu, po] * m
                for pn in entering.get(b, []):
                    new += C[:, pu, pn] * m
                new_i += pw(b, new_load[b]) * new - pw(b, load[b]) * old
            sig = new_pw[bs_of[others]] * C[:, pu, pu]
            r = bw[others] * np.mean(np.log2(1.0 + sig / (new_i + noise[others])), axis=0)
            with np.errstate(divide="ignore"):
                new_lr[others] = np.log(r)
        for v, pn in movers:
            others_v = np.flatnonzero(np.arange(n_ue) != v)
            w = new_pw[new_bs_of[others_v]] * mask[v, new_bs_of[others_v]]
            new_i = C[:, pn, new_assign[others_v]] @ w
            sig = new_pw[pair_bs[pn]] * C[samples, pn, pn]
            r = bw[v] * np.mean(np.log2(1.0 + sig / (new_i + noise[v])))
            with np.errstate(divide="ignore"):
                new_lr[v] = np.log(r)
        out[c] = np.bincount(ue_op, weights=new_lr, minlength=n_ops)
    return out
