"""Pure-numpy versions of the hot loops."""

import numpy as np

_BLOCK = 2048


def nearest_code(x, book):
    """Index of the nearest row of ``book`` for every row of ``x``.

    Squared Euclidean distance, ties to the lowest index.
    """
    n = x.shape[0]
    out = np.empty(n, dtype=np.int64)
    for a in range(0, n, _BLOCK):
        diff = x[a:a + _BLOCK, None, :] - book[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        out[a:a + _BLOCK] = np.argmin(d2, axis=1)
    return out


def centroid_sums(x, ids, k):
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, ids, x)
    counts = np.bincount(ids, minlength=k).astype(np.int64)
    return sums, counts


def oscillator_bank(amps, prev_amp, phases, incs, hop, ramp):
    """Sum-of-sinusoids synthesis, ``hop`` samples per amplitude row.

    Within row i the amplitude glides linearly from the previous row's value
    over the first ``ramp`` samples. Phases advance by ``incs`` per sample and
    are wrapped once per row. Returns (samples, last_amp, phases).
    """
    n_rows, n_bands = amps.shape
    out = np.empty(n_rows * hop)
    k = np.arange(hop, dtype=np.float64)
    glide = np.minimum((k + 1.0) / ramp, 1.0)
    ph = phases.copy()
    last = prev_amp.copy()
    two_pi = 2.0 * np.pi
    for i in range(n_rows):
        a = last[None, :] + (amps[i] - last)[None, :] * glide[:, None]
        s = np.sin(ph[None, :] + k[:, None] * incs[None, :])
        out[i * hop:(i + 1) * hop] = (a * s).sum(axis=1)
        ph = np.mod(ph + hop * incs, two_pi)
        last = amps[i].copy()
    return out, last, ph
