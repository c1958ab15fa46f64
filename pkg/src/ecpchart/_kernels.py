"""Run-length and EWMA-path kernels.

Two interchangeable implementations share one random stream: a numba
``@njit`` loop per replicate and a pure-numpy path that advances all
replicates in lockstep. Set ``ECPCHART_NO_NUMBA=1`` (or run without numba
installed) to select the numpy path.

Randomness is counter based. Replicate ``m`` gets the key
``mix64(seed + m * GAMMA)`` and its period-``t`` uniform is the ``t``-th
SplitMix64 output from that key, ``mix64(key + t * GAMMA) >> 11`` scaled to
[0, 1). Any replicate can be regenerated in isolation, independent of how
replicates are scheduled. The count of surrogate-nonconforming items in a
period is the binomial inverse CDF of that single uniform, so changing the
control limit never changes the data (common random numbers).
"""

from __future__ import annotations

import os

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def _want_numba():
    return os.environ.get("ECPCHART_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes", "on")


# --- numpy path -------------------------------------------------------------

_G = np.uint64(GAMMA)
_K1 = np.uint64(_C1)
_K2 = np.uint64(_C2)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def _mix64_np(z):
    z = (z ^ (z >> _S30)) * _K1
    z = (z ^ (z >> _S27)) * _K2
    return z ^ (z >> _S31)


def _keys_np(seed, m):
    with np.errstate(over="ignore"):
        return _mix64_np(np.uint64(seed) + np.asarray(m, dtype=np.uint64) * _G)


def _uniform_np(keys, t):
    with np.errstate(over="ignore"):
        z = _mix64_np(keys + np.asarray(t, dtype=np.uint64) * _G)
    return (z >> _S11).astype(np.float64) * _INV53


def _counts_np(cdf, u):
    n = cdf.shape[0] - 1
    return np.minimum(np.searchsorted(cdf, u, side="left"), n)


def uniforms_numpy(seed, m, t):
    """Uniforms for replicate(s) ``m`` at period(s) ``t`` (broadcast)."""
    m, t = np.broadcast_arrays(np.asarray(m, dtype=np.uint64), np.asarray(t, dtype=np.uint64))
    return _uniform_np(_keys_np(seed, m), t)


def run_lengths_numpy(seed, m_lo, m_hi, cdf, values, center, lam, ucl, budget=-1):
    """Run lengths and censoring flags of replicates ``m_lo..m_hi-1``.

    With ``budget >= 0`` the simulation stops as soon as the summed run
    lengths provably reach ``budget`` and the third return value is False.
    """
    maxrl = ucl.shape[0]
    size = m_hi - m_lo
    keys = _keys_np(seed, np.arange(m_lo, m_hi, dtype=np.uint64))
    ewma = np.full(size, center, dtype=np.float64)
    rl = np.full(size, maxrl, dtype=np.int64)
    censored = np.ones(size, dtype=np.bool_)
    active = np.arange(size)
    finished = 0
    for t in range(1, maxrl + 1):
        if active.size == 0:
            break
        if budget >= 0 and finished + active.size * t >= budget:
            return rl, censored, False
        u = _uniform_np(keys[active], t)
        obs = values[_counts_np(cdf, u)]
        e = lam * obs + (1.0 - lam) * ewma[active]
        ewma[active] = e
        hit = e >= ucl[t - 1]
        if hit.any():
            done = active[hit]
            rl[done] = t
            finished += t * done.size
            censored[done] = False
            active = active[~hit]
    if budget >= 0 and finished + active.size * maxrl >= budget:
        return rl, censored, False
    return rl, censored, True


def ewma_paths_numpy(seed, m_lo, m_hi, cdf, values, center, lam, periods):
    keys = _keys_np(seed, np.arange(m_lo, m_hi, dtype=np.uint64))
    out = np.empty((m_hi - m_lo, periods), dtype=np.float64)
    e = np.full(m_hi - m_lo, center, dtype=np.float64)
    for t in range(1, periods + 1):
        obs = values[_counts_np(cdf, _uniform_np(keys, t))]
        e = lam * obs + (1.0 - lam) * e
        out[:, t - 1] = e
    return out


# --- numba path -------------------------------------------------------------

HAVE_NUMBA = False
if _want_numba():
    try:
        from numba import njit, uint64

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

if HAVE_NUMBA:
    _NG = np.uint64(GAMMA)

    @njit(cache=True, inline="always")
    def _mix64_nb(z):
        z = (z ^ (z >> uint64(30))) * uint64(_C1)
        z = (z ^ (z >> uint64(27))) * uint64(_C2)
        return z ^ (z >> uint64(31))

    @njit(cache=True, inline="always")
    def _count_nb(cdf, u):
        n = cdf.shape[0] - 1
        d = 0
        while d < n and cdf[d] < u:
            d += 1
        return d

    @njit(cache=True, nogil=True)
    def _run_lengths_nb(seed, m_lo, m_hi, cdf, values, center, lam, ucl, budget, rl, censored):
        maxrl = ucl.shape[0]
        g = uint64(_NG)
        total = 0
        for j in range(m_hi - m_lo):
            key = _mix64_nb(uint64(seed) + uint64(m_lo + j) * g)
            e = center
            t = 0
            hit = False
            while t < maxrl:
                t += 1
                u = float(_mix64_nb(key + uint64(t) * g) >> uint64(11)) * _INV53
                e = lam * values[_count_nb(cdf, u)] + (1.0 - lam) * e
                if e >= ucl[t - 1]:
                    hit = True
                    break
                if budget >= 0 and total + t >= budget:
                    return False
            rl[j] = t
            censored[j] = not hit
            total += t
            if budget >= 0 and total >= budget:
                return False
        return True

    @njit(cache=True, nogil=True)
    def _ewma_paths_nb(seed, m_lo, m_hi, cdf, values, center, lam, out):
        periods = out.shape[1]
        g = uint64(_NG)
        for j in range(m_hi - m_lo):
            key = _mix64_nb(uint64(seed) + uint64(m_lo + j) * g)
            e = center
            for t in range(1, periods + 1):
                u = float(_mix64_nb(key + uint64(t) * g) >> uint64(11)) * _INV53
                e = lam * values[_count_nb(cdf, u)] + (1.0 - lam) * e
                out[j, t - 1] = e

    def run_lengths_numba(seed, m_lo, m_hi, cdf, values, center, lam, ucl, budget=-1):
        rl = np.empty(m_hi - m_lo, dtype=np.int64)
        censored = np.empty(m_hi - m_lo, dtype=np.bool_)
        complete = _run_lengths_nb(np.uint64(seed), m_lo, m_hi, cdf, values, float(center), float(lam), ucl,
                                   int(budget), rl, censored)
        return rl, censored, bool(complete)

    def ewma_paths_numba(seed, m_lo, m_hi, cdf, values, center, lam, periods):
        out = np.empty((m_hi - m_lo, periods), dtype=np.float64)
        _ewma_paths_nb(np.uint64(seed), m_lo, m_hi, cdf, values, float(center), float(lam), out)
        return out

    run_lengths = run_lengths_numba
    ewma_paths = ewma_paths_numba
    BACKEND = "numba"
else:
    run_lengths = run_lengths_numpy
    ewma_paths = ewma_paths_numpy
    BACKEND = "numpy"
