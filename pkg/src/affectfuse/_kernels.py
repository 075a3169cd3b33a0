"""Hot loops: batch window scoring, batch decisions, session generation.

Each kernel exists twice: an explicit loop compiled with numba ``@njit`` and a
vectorised pure-numpy version. Both perform the same IEEE operations in the
same order, so their outputs are bit-identical; the test suite enforces it.

Set ``AFFECTFUSE_DISABLE_NUMBA=1`` to force the numpy path (also used when
numba is not importable).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("AFFECTFUSE_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes", "on")

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
SH30 = np.uint64(30)
SH27 = np.uint64(27)
SH31 = np.uint64(31)
SH11 = np.uint64(11)
INV_2_53 = 2.0 ** -53

# draws per simulated tick: one ground-truth step, then (dropout, accuracy, pick) per cue
N_CUES = 4
DRAWS_PER_TICK = 1 + 3 * N_CUES

MODE_ACCURACY = 0
MODE_CONFUSION = 1


def _jit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# scoring


def _score_loop(labels, cue_w, sub_w, mask, renorm):
    n = labels.shape[0]
    nc = labels.shape[1]
    ne = mask.shape[2]
    scores = np.zeros((n, ne), dtype=np.float64)
    present = np.zeros(n, dtype=np.int64)
    total = 0.0
    for c in range(nc):
        total += cue_w[c]
    for i in range(n):
        factor = 1.0
        if renorm:
            psum = 0.0
            for c in range(nc):
                if labels[i, c] >= 0:
                    psum += cue_w[c]
            if psum > 0.0:
                factor = total / psum
        for c in range(nc):
            j = labels[i, c]
            if j < 0:
                continue
            present[i] += 1
            w = cue_w[c]
            if renorm:
                w = w * factor
            contrib = w * sub_w[c, j]
            for e in range(ne):
                if mask[c, j, e]:
                    scores[i, e] += contrib
    return scores, present


def _score_numpy(labels, cue_w, sub_w, mask, renorm):
    n, nc = labels.shape
    ne = mask.shape[2]
    present_mask = labels >= 0
    safe = np.where(present_mask, labels, 0)
    total = 0.0
    for c in range(nc):
        total += float(cue_w[c])
    factor = np.ones(n, dtype=np.float64)
    if renorm:
        psum = np.zeros(n, dtype=np.float64)
        for c in range(nc):
            psum = psum + np.where(present_mask[:, c], cue_w[c], 0.0)
        pos = psum > 0.0
        # overflow to inf matches the scalar loop, which never warns
        with np.errstate(over="ignore"):
            factor = np.where(pos, total / np.where(pos, psum, 1.0), 1.0)
    scores = np.zeros((n, ne), dtype=np.float64)
    for c in range(nc):
        w = cue_w[c] * factor if renorm else np.full(n, cue_w[c])
        contrib = w * sub_w[c, safe[:, c]]
        hit = mask[c, safe[:, c], :] & present_mask[:, c, None]
        scores = scores + np.where(hit, contrib[:, None], 0.0)
    return scores, present_mask.sum(axis=1).astype(np.int64)


_score_numba = _jit(_score_loop)


def _decide_loop(scores, present, tie_order, min_present):
    n = scores.shape[0]
    ne = scores.shape[1]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        if present[i] == 0 or present[i] < min_present:
            out[i] = -1
            continue
        best = scores[i, 0]
        for e in range(1, ne):
            if scores[i, e] > best:
                best = scores[i, e]
        for k in range(ne):
            e = tie_order[k]
            if scores[i, e] == best:
                out[i] = e
                break
    return out


def _decide_numpy(scores, present, tie_order, min_present):
    best = scores.max(axis=1, initial=-np.inf)
    ordered = scores[:, tie_order] == best[:, None]
    first = np.argmax(ordered, axis=1)
    out = np.asarray(tie_order, dtype=np.int64)[first]
    return np.where((present == 0) | (present < min_present), -1, out).astype(np.int64)


_decide_numba = _jit(_decide_loop)


def score_windows(labels, cue_w, sub_w, mask, renorm, *, use_numba=None):
    """Scores for ``n`` windows given per-cue label indices (``-1`` = cue absent).

    Returns ``(scores[n, 5], n_present[n])``.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    cue_w = np.ascontiguousarray(cue_w, dtype=np.float64)
    sub_w = np.ascontiguousarray(sub_w, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if USE_NUMBA if use_numba is None else use_numba:
        return _score_numba(labels, cue_w, sub_w, mask, bool(renorm))
    return _score_numpy(labels, cue_w, sub_w, mask, bool(renorm))


def decide_windows(scores, present, tie_order, min_present=1, *, use_numba=None):
    """Argmax with tie-break order; ``-1`` marks no-evidence (or too few cues)."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    present = np.ascontiguousarray(present, dtype=np.int64)
    tie_order = np.ascontiguousarray(tie_order, dtype=np.int64)
    if USE_NUMBA if use_numba is None else use_numba:
        return _decide_numba(scores, present, tie_order, int(min_present))
    return _decide_numpy(scores, present, tie_order, int(min_present))


# ---------------------------------------------------------------------------
# session generation


def _mix64_scalar(z):
    z = (z ^ (z >> SH30)) * MIX1
    z = (z ^ (z >> SH27)) * MIX2
    return z ^ (z >> SH31)


_mix64_nb = _jit(_mix64_scalar)


def _sample_cdf(cdf, n, u):
    for k in range(n - 1):
        if u < cdf[k]:
            return k
    return n - 1


_sample_cdf_nb = _jit(_sample_cdf)


def _make_generate_loop(mix, sample):
    def loop(keys, ticks, init_cdf, trans_cdf, cand, cand_n, comp, comp_n,
             nlab, mode, acc, drop, conf_cdf):
        n_students = keys.shape[0]
        ne = init_cdf.shape[0]
        nc = nlab.shape[0]
        truth = np.empty((n_students, ticks), dtype=np.int64)
        obs = np.empty((n_students, ticks, nc), dtype=np.int64)
        for s in range(n_students):
            key = keys[s]
            state = 0
            for t in range(ticks):
                base = t * (1 + 3 * nc)
                z = mix(key + GAMMA * np.uint64(base + 1))
                u = np.float64(z >> SH11) * INV_2_53
                if t == 0:
                    state = sample(init_cdf, ne, u)
                else:
                    state = sample(trans_cdf[state], ne, u)
                truth[s, t] = state
                for c in range(nc):
                    k = base + 1 + 3 * c
                    ud = np.float64(mix(key + GAMMA * np.uint64(k + 1)) >> SH11) * INV_2_53
                    ua = np.float64(mix(key + GAMMA * np.uint64(k + 2)) >> SH11) * INV_2_53
                    up = np.float64(mix(key + GAMMA * np.uint64(k + 3)) >> SH11) * INV_2_53
                    if ud < drop[c]:
                        obs[s, t, c] = -1
                        continue
                    cn = cand_n[c, state]
                    mn = comp_n[c, state]
                    if mode[c] == MODE_CONFUSION:
                        if cn == 0:
                            true_lab = int(ua * nlab[c])
                        else:
                            true_lab = cand[c, state, int(ua * cn)]
                        obs[s, t, c] = sample(conf_cdf[c, true_lab], nlab[c], up)
                    elif cn == 0:
                        obs[s, t, c] = int(up * nlab[c])
                    elif mn == 0 or ua < acc[c]:
                        obs[s, t, c] = cand[c, state, int(up * cn)]
                    else:
                        obs[s, t, c] = comp[c, state, int(up * mn)]
        return truth, obs

    return loop


if HAVE_NUMBA:
    _generate_numba = numba.njit(cache=True, nogil=True)(
        _make_generate_loop(_mix64_nb, _sample_cdf_nb)
    )
else:  # pragma: no cover
    _generate_numba = None


def _uniform_np(keys, k):
    offset = np.uint64(((k + 1) * int(GAMMA)) & 0xFFFFFFFFFFFFFFFF)
    z = _mix64_scalar(keys + offset)
    return (z >> SH11).astype(np.float64) * INV_2_53


def _sample_cdf_np(cdf_rows, n, u):
    if n == 1:
        return np.zeros(u.shape[0], dtype=np.int64)
    return (u[:, None] >= cdf_rows[:, : n - 1]).sum(axis=1).astype(np.int64)


def _generate_numpy(keys, ticks, init_cdf, trans_cdf, cand, cand_n, comp, comp_n,
                    nlab, mode, acc, drop, conf_cdf):
    n_students = keys.shape[0]
    ne = init_cdf.shape[0]
    nc = nlab.shape[0]
    truth = np.empty((n_students, ticks), dtype=np.int64)
    obs = np.empty((n_students, ticks, nc), dtype=np.int64)
    state = np.zeros(n_students, dtype=np.int64)
    for t in range(ticks):
        base = t * (1 + 3 * nc)
        u = _uniform_np(keys, base)
        rows = np.broadcast_to(init_cdf, (n_students, ne)) if t == 0 else trans_cdf[state]
        state = _sample_cdf_np(rows, ne, u)
        truth[:, t] = state
        for c in range(nc):
            k = base + 1 + 3 * c
            ud = _uniform_np(keys, k)
            ua = _uniform_np(keys, k + 1)
            up = _uniform_np(keys, k + 2)
            cn = cand_n[c, state]
            mn = comp_n[c, state]
            if mode[c] == MODE_CONFUSION:
                pos = np.where(cn == 0, 0, (ua * cn).astype(np.int64))
                true_lab = np.where(cn == 0, (ua * nlab[c]).astype(np.int64), cand[c, state, pos])
                out = _sample_cdf_np(conf_cdf[c, true_lab], nlab[c], up)
            else:
                pick_all = (up * nlab[c]).astype(np.int64)
                pick_c = cand[c, state, np.where(cn == 0, 0, (up * cn).astype(np.int64))]
                pick_m = comp[c, state, np.where(mn == 0, 0, (up * mn).astype(np.int64))]
                out = np.where(cn == 0, pick_all,
                               np.where((mn == 0) | (ua < acc[c]), pick_c, pick_m))
            obs[:, t, c] = np.where(ud < drop[c], -1, out)
    return truth, obs


def generate_arrays(keys, ticks, init_cdf, trans_cdf, cand, cand_n, comp, comp_n,
                    nlab, mode, acc, drop, conf_cdf, *, use_numba=None):
    """Ground-truth ``[student, tick]`` and emitted label indices ``[student, tick, cue]``."""
    args = (
        np.ascontiguousarray(keys, dtype=np.uint64),
        int(ticks),
        np.ascontiguousarray(init_cdf, dtype=np.float64),
        np.ascontiguousarray(trans_cdf, dtype=np.float64),
        np.ascontiguousarray(cand, dtype=np.int64),
        np.ascontiguousarray(cand_n, dtype=np.int64),
        np.ascontiguousarray(comp, dtype=np.int64),
        np.ascontiguousarray(comp_n, dtype=np.int64),
        np.ascontiguousarray(nlab, dtype=np.int64),
        np.ascontiguousarray(mode, dtype=np.int64),
        np.ascontiguousarray(acc, dtype=np.float64),
        np.ascontiguousarray(drop, dtype=np.float64),
        np.ascontiguousarray(conf_cdf, dtype=np.float64),
    )
    if USE_NUMBA if use_numba is None else use_numba:
        return _generate_numba(*args)
    return _generate_numpy(*args)
