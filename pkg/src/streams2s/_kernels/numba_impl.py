"""Numba-compiled versions of the hot loops. Same contracts as numpy_impl."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def nearest_code(x, book):
    n, d = x.shape
    v = book.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(v):
            acc = 0.0
            for c in range(d):
                diff = x[i, c] - book[j, c]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = j
        out[i] = arg
    return out


@njit(cache=True)
def centroid_sums(x, ids, k):
    n, d = x.shape
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        j = ids[i]
        counts[j] += 1
        for c in range(d):
            sums[j, c] += x[i, c]
    return sums, counts


@njit(cache=True)
def oscillator_bank(amps, prev_amp, phases, incs, hop, ramp):
    n_rows, n_bands = amps.shape
    out = np.empty(n_rows * hop)
    ph = phases.copy()
    last = prev_amp.copy()
    two_pi = 2.0 * math.pi
    for i in range(n_rows):
        for k in range(hop):
            g = min((k + 1.0) / ramp, 1.0)
            acc = 0.0
            for b in range(n_bands):
                a = last[b] + (amps[i, b] - last[b]) * g
                acc += a * math.sin(ph[b] + k * incs[b])
            out[i * hop + k] = acc
        for b in range(n_bands):
            ph[b] = (ph[b] + hop * incs[b]) % two_pi
            last[b] = amps[i, b]
    return out, last, ph
