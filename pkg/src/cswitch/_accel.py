"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``CSWITCH_DISABLE_NUMBA=1`` to force the numpy path (numba is also
skipped silently when it is not importable). Both paths are always defined
so the benchmark and the equivalence tests can call them side by side; the
module-level names ``edit_ops`` and ``resample_sums`` are bound to whichever
backend is active; ``em_fit`` always uses numpy, which measures faster.

Edit op codes: 0 match, 1 substitution, 2 deletion, 3 insertion.
"""

import os

import numpy as np

MATCH, SUB, DEL, INS = 0, 1, 2, 3

_disabled = os.environ.get("CSWITCH_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

HAVE_NUMBA = njit is not None
USE_NUMBA = HAVE_NUMBA and not _disabled
BACKEND = "numba" if USE_NUMBA else "numpy"


# --- Levenshtein alignment -------------------------------------------------


def _dp_matrix_numpy(ref, hyp):
    n, m = len(ref), len(hyp)
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    cols = np.arange(m + 1, dtype=np.int64)
    d[0] = cols
    for i in range(1, n + 1):
        t = np.empty(m + 1, dtype=np.int64)
        t[0] = i
        if m:
            t[1:] = np.minimum(d[i - 1, :-1] + (hyp != ref[i - 1]), d[i - 1, 1:] + 1)
        # left-to-right insertion chain: d[i, j] = min_k<=j t[k] + (j - k)
        d[i] = np.minimum.accumulate(t - cols) + cols
    return d


def _traceback_py(d, ref, hyp):
    i, j = len(ref), len(hyp)
    ops = []
    while i > 0 or j > 0:
        c = d[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i - 1, j - 1] == c:
            ops.append(MATCH)
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and d[i - 1, j - 1] + 1 == c:
            ops.append(SUB)
            i -= 1
            j -= 1
        elif i > 0 and d[i - 1, j] + 1 == c:
            ops.append(DEL)
            i -= 1
        else:
            ops.append(INS)
            j -= 1
    return np.array(ops[::-1], dtype=np.int8)


def edit_ops_numpy(ref, hyp):
    """Minimal-cost edit operations turning integer sequence ``ref`` into ``hyp``."""
    ref = np.asarray(ref, dtype=np.int64)
    hyp = np.asarray(hyp, dtype=np.int64)
    return _traceback_py(_dp_matrix_numpy(ref, hyp), ref, hyp)


def _edit_ops_loops(ref, hyp):
    n, m = ref.shape[0], hyp.shape[0]
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    for j in range(m + 1):
        d[0, j] = j
    for i in range(1, n + 1):
        d[i, 0] = i
        for j in range(1, m + 1):
            best = d[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            if d[i - 1, j] + 1 < best:
                best = d[i - 1, j] + 1
            if d[i, j - 1] + 1 < best:
                best = d[i, j - 1] + 1
            d[i, j] = best
    out = np.empty(n + m, dtype=np.int8)
    k = 0
    i, j = n, m
    while i > 0 or j > 0:
        c = d[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i - 1, j - 1] == c:
            out[k] = MATCH
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and d[i - 1, j - 1] + 1 == c:
            out[k] = SUB
            i -= 1
            j -= 1
        elif i > 0 and d[i - 1, j] + 1 == c:
            out[k] = DEL
            i -= 1
        else:
            out[k] = INS
            j -= 1
        k += 1
    return out[:k][::-1].copy()


# --- bootstrap resampling --------------------------------------------------


def resample_sums_numpy(values, idx):
    """Column sums of ``values[:, idx[r]]`` for every resample row ``r``.

    values: (k, n) int64, idx: (R, n) int64 -> (R, k) int64
    """
    values = np.asarray(values, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    return values[:, idx].sum(axis=2).T.copy()


def _resample_sums_loops(values, idx):
    k = values.shape[0]
    r_count, n = idx.shape
    out = np.zeros((r_count, k), dtype=np.int64)
    for r in range(r_count):
        for t in range(n):
            u = idx[r, t]
            for c in range(k):
                out[r, c] += values[c, u]
    return out


# --- EM for mixture weights ------------------------------------------------


def em_fit_numpy(probs, weights, max_iter, tol):
    """EM over a (components, positions) probability matrix.

    Returns final weights and the per-position mean log-likelihood recorded at
    the initial weights and after every update.
    """
    probs = np.asarray(probs, dtype=np.float64)
    w = np.array(weights, dtype=np.float64)
    n = probs.shape[1]
    mix = w @ probs
    history = [np.log(mix).sum() / n]
    for _ in range(max_iter):
        w = (w[:, None] * probs / mix).sum(axis=1) / n
        w /= w.sum()
        mix = w @ probs
        history.append(np.log(mix).sum() / n)
        if history[-1] - history[-2] < tol:
            break
    return w, np.array(history)


def _mix_loglik(probs, w, mix):
    m_count, n = probs.shape
    for t in range(n):
        mix[t] = 0.0
    for c in range(m_count):
        for t in range(n):
            mix[t] += w[c] * probs[c, t]
    ll = 0.0
    for t in range(n):
        ll += np.log(mix[t])
    return ll / n


def _em_fit_loops(probs, weights, max_iter, tol):
    m_count, n = probs.shape
    w = weights.copy()
    mix = np.empty(n)
    inv = np.empty(n)
    history = np.empty(max_iter + 1)
    history[0] = _mix_loglik(probs, w, mix)
    used = 1
    for _ in range(max_iter):
        for t in range(n):
            inv[t] = 1.0 / mix[t]
        total = 0.0
        for c in range(m_count):
            s = 0.0
            for t in range(n):
                s += probs[c, t] * inv[t]
            w[c] = w[c] * s / n
            total += w[c]
        for c in range(m_count):
            w[c] /= total
        history[used] = _mix_loglik(probs, w, mix)
        used += 1
        if history[used - 1] - history[used - 2] < tol:
            break
    return w, history[:used].copy()


if HAVE_NUMBA:
    _mix_loglik = njit(cache=True, nogil=True)(_mix_loglik)
    _edit_ops_nb = njit(cache=True, nogil=True)(_edit_ops_loops)
    _resample_sums_nb = njit(cache=True, nogil=True)(_resample_sums_loops)
    _em_fit_nb = njit(cache=True, nogil=True)(_em_fit_loops)

    def edit_ops_numba(ref, hyp):
        return _edit_ops_nb(np.asarray(ref, dtype=np.int64), np.asarray(hyp, dtype=np.int64))

    def resample_sums_numba(values, idx):
        return _resample_sums_nb(
            np.ascontiguousarray(values, dtype=np.int64), np.ascontiguousarray(idx, dtype=np.int64)
        )

    def em_fit_numba(probs, weights, max_iter, tol):
        return _em_fit_nb(
            np.ascontiguousarray(probs, dtype=np.float64),
            np.array(weights, dtype=np.float64),
            int(max_iter),
            float(tol),
        )
else:  # pragma: no cover
    edit_ops_numba = resample_sums_numba = em_fit_numba = None


if USE_NUMBA:
    edit_ops = edit_ops_numba
    resample_sums = resample_sums_numba
else:
    edit_ops = edit_ops_numpy
    resample_sums = resample_sums_numpy
# The vectorized numpy EM beats the loop version (scalar log dominates), so it
# is used under both backends; the numba variant stays for benchmarking.
em_fit = em_fit_numpy
