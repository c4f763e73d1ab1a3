"""Array kernels used by the metrics pipeline and batch controller checks.

Every kernel exists twice: a loop form compiled with numba and a vectorised
numpy form. Which one the public names bind to is decided once at import
(see ``_accel``). Both forms must return identical results; the test suite
checks this and ``benchmarks/bench_kernels.py`` times them.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

NS_PER_S_F = 1e9


# -- loop forms (numba) -----------------------------------------------------

def _pie_update_batch_loop(p, est, old, alpha, beta, target, scaling):
    n = p.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        a = alpha[i]
        b = beta[i]
        if scaling:
            if p[i] < 0.01:
                a *= 0.125
                b *= 0.125
            elif p[i] < 0.1:
                a *= 0.5
                b *= 0.5
        err = (est[i] - target[i]) / NS_PER_S_F
        trend = (est[i] - old[i]) / NS_PER_S_F
        v = p[i] + a * err + b * trend
        if v < 0.0:
            v = 0.0
        elif v > 1.0:
            v = 1.0
        out[i] = v
    return out


def _bin_sum_loop(times, values, bin_ns, n_bins):
    out = np.zeros(n_bins, dtype=np.float64)
    for i in range(times.shape[0]):
        b = times[i] // bin_ns
        if 0 <= b < n_bins:
            out[b] += values[i]
    return out


def _max_window_sum_loop(times, values, window):
    best = 0.0
    acc = 0.0
    lo = 0
    for hi in range(times.shape[0]):
        acc += values[hi]
        while times[hi] - times[lo] >= window:
            acc -= values[lo]
            lo += 1
        if acc > best:
            best = acc
    return best


def _nearest_rank_loop(sorted_samples, qs):
    n = sorted_samples.shape[0]
    out = np.empty(qs.shape[0], dtype=sorted_samples.dtype)
    for j in range(qs.shape[0]):
        k = int(math.ceil(qs[j] * n / 100.0))
        if k < 1:
            k = 1
        elif k > n:
            k = n
        out[j] = sorted_samples[k - 1]
    return out


def _ecdf_loop(sorted_samples):
    n = sorted_samples.shape[0]
    m = 0
    for i in range(n):
        if i == n - 1 or sorted_samples[i + 1] != sorted_samples[i]:
            m += 1
    vals = np.empty(m, dtype=sorted_samples.dtype)
    frac = np.empty(m, dtype=np.float64)
    j = 0
    for i in range(n):
        if i == n - 1 or sorted_samples[i + 1] != sorted_samples[i]:
            vals[j] = sorted_samples[i]
            frac[j] = (i + 1) / n
            j += 1
    return vals, frac


def _busy_per_bin_loop(starts, ends, bin_ns, n_bins):
    out = np.zeros(n_bins, dtype=np.float64)
    for i in range(starts.shape[0]):
        s = starts[i]
        e = ends[i]
        b = s // bin_ns
        while s < e and b < n_bins:
            edge = (b + 1) * bin_ns
            stop = e if e < edge else edge
            if b >= 0:
                out[b] += stop - s
            s = stop
            b += 1
    return out


def _max_per_interval_loop(event_times, boundaries):
    # Largest number of events between consecutive boundaries; events that
    # coincide with a boundary count toward the interval it opens.
    best = 0
    cur = 0
    k = 0
    nb = boundaries.shape[0]
    for i in range(event_times.shape[0]):
        t = event_times[i]
        moved = False
        while k < nb and boundaries[k] <= t:
            k += 1
            moved = True
        if moved:
            cur = 0
        cur += 1
        if cur > best:
            best = cur
    return best


# -- numpy forms ------------------------------------------------------------

def _pie_update_batch_np(p, est, old, alpha, beta, target, scaling):
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if scaling:
        scale = np.where(p < 0.01, 0.125, np.where(p < 0.1, 0.5, 1.0))
        alpha = alpha * scale
        beta = beta * scale
    err = (est - target) / NS_PER_S_F
    trend = (est - old) / NS_PER_S_F
    return np.clip(p + alpha * err + beta * trend, 0.0, 1.0)


def _bin_sum_np(times, values, bin_ns, n_bins):
    idx = times // bin_ns
    keep = (idx >= 0) & (idx < n_bins)
    return np.bincount(idx[keep], weights=values[keep], minlength=n_bins)[:n_bins].astype(np.float64)


def _max_window_sum_np(times, values, window):
    if times.shape[0] == 0:
        return 0.0
    csum = np.concatenate(([0.0], np.cumsum(values, dtype=np.float64)))
    lo = np.searchsorted(times, times - window, side="right")
    return float(np.max(csum[1:] - csum[lo]))


def _nearest_rank_np(sorted_samples, qs):
    n = sorted_samples.shape[0]
    k = np.ceil(np.asarray(qs, dtype=np.float64) * n / 100.0).astype(np.int64)
    return sorted_samples[np.clip(k, 1, n) - 1]


def _ecdf_np(sorted_samples):
    n = sorted_samples.shape[0]
    last = np.ones(n, dtype=bool)
    last[:-1] = sorted_samples[1:] != sorted_samples[:-1]
    idx = np.nonzero(last)[0]
    return sorted_samples[idx], (idx + 1) / n


def _busy_per_bin_np(starts, ends, bin_ns, n_bins):
    # Each interval is assumed shorter than one bin, so it straddles at most
    # one bin edge.
    out = np.zeros(n_bins + 1, dtype=np.float64)
    b0 = starts // bin_ns
    edge = (b0 + 1) * bin_ns
    first = np.minimum(ends, edge) - starts
    second = np.maximum(ends - edge, 0)
    ok = (b0 >= 0) & (b0 < n_bins)
    np.add.at(out, b0[ok], first[ok])
    ok2 = ok & (second > 0)
    np.add.at(out, b0[ok2] + 1, second[ok2])
    return out[:n_bins]


def _max_per_interval_np(event_times, boundaries):
    if event_times.shape[0] == 0:
        return 0
    slot = np.searchsorted(boundaries, event_times, side="right")
    return int(np.bincount(slot).max())


LOOP_FORMS = {
    "pie_update_batch": _pie_update_batch_loop,
    "bin_sum": _bin_sum_loop,
    "max_window_sum": _max_window_sum_loop,
    "nearest_rank": _nearest_rank_loop,
    "ecdf": _ecdf_loop,
    "max_per_interval": _max_per_interval_loop,
    "busy_per_bin": _busy_per_bin_loop,
}

NUMPY_FORMS = {
    "pie_update_batch": _pie_update_batch_np,
    "bin_sum": _bin_sum_np,
    "max_window_sum": _max_window_sum_np,
    "nearest_rank": _nearest_rank_np,
    "ecdf": _ecdf_np,
    "max_per_interval": _max_per_interval_np,
    "busy_per_bin": _busy_per_bin_np,
}

if NUMBA_ENABLED:
    JIT_FORMS = {name: njit(cache=True)(fn) for name, fn in LOOP_FORMS.items()}
    _active = JIT_FORMS
    BACKEND = "numba"
else:
    JIT_FORMS = {}
    _active = NUMPY_FORMS
    BACKEND = "numpy"

_pie_update_batch = _active["pie_update_batch"]
_bin_sum = _active["bin_sum"]
_max_window_sum = _active["max_window_sum"]
_nearest_rank = _active["nearest_rank"]
_ecdf = _active["ecdf"]
_max_per_interval = _active["max_per_interval"]
_busy_per_bin = _active["busy_per_bin"]


def _as_f64(x, n):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = np.full(n, float(a))
    return a


def pie_update_batch(p, est, old, alpha, beta, target, scaling=False):
    """Vectorised controller step over many independent cases (delays in ns)."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    return _pie_update_batch(p, _as_f64(est, n), _as_f64(old, n), _as_f64(alpha, n),
                             _as_f64(beta, n), _as_f64(target, n), bool(scaling))


def bin_sum(times_ns, values, bin_ns, n_bins):
    """Sum ``values`` into fixed-width time bins ``[k*bin_ns, (k+1)*bin_ns)``."""
    return _bin_sum(np.asarray(times_ns, dtype=np.int64), np.asarray(values, dtype=np.float64),
                    int(bin_ns), int(n_bins))


def max_window_sum(times_ns, values, window_ns):
    """Largest total of ``values`` over any half-open window of length ``window_ns``.

    ``times_ns`` must be sorted.
    """
    return float(_max_window_sum(np.asarray(times_ns, dtype=np.int64),
                                 np.asarray(values, dtype=np.float64), int(window_ns)))


def nearest_rank(sorted_samples, qs):
    s = np.asarray(sorted_samples)
    if s.shape[0] == 0:
        raise ValueError("empty series")
    return _nearest_rank(s, np.atleast_1d(np.asarray(qs, dtype=np.float64)))


def ecdf(sorted_samples):
    s = np.asarray(sorted_samples)
    if s.shape[0] == 0:
        raise ValueError("empty series")
    return _ecdf(s)


def max_per_interval(event_times, boundaries):
    """Max count of sorted events falling between consecutive sorted boundaries."""
    return int(_max_per_interval(np.asarray(event_times, dtype=np.int64),
                                 np.asarray(boundaries, dtype=np.int64)))


def busy_per_bin(starts_ns, ends_ns, bin_ns, n_bins):
    """Nanoseconds of each bin covered by the intervals ``[start, end)``.

    Intervals must be shorter than ``bin_ns`` (true for packet transmissions).
    """
    return _busy_per_bin(np.asarray(starts_ns, dtype=np.int64), np.asarray(ends_ns, dtype=np.int64),
                         int(bin_ns), int(n_bins))
