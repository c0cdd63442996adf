"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``WINKURT_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are always
importable as ``*_numba`` / ``*_numpy`` so they can be benchmarked and
cross-checked against each other.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("WINKURT_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------------------
# sliding-window central sums
# ---------------------------------------------------------------------------

def window_sums_numpy(slot_power, w, n_batches, circular):
    """Per-batch sums of d, d**2, d**3 where d = <P>_w - 1.

    ``slot_power`` holds p_X + p_Y per time slot; the window average pools
    both polarizations, i.e. divides by 2w.  Returns an array of shape
    (n_batches, 4) with columns (count, sum d, sum d^2, sum d^3).  Window
    positions are assigned to contiguous batches for batch-means error bars.
    """
    x = np.asarray(slot_power, dtype=np.float64)
    if circular:
        x = np.concatenate([x, x[: w - 1]])
    c = np.concatenate(([0.0], np.cumsum(x)))
    d = (c[w:] - c[:-w]) / (2.0 * w) - 1.0
    n_pos = d.shape[0]
    edges = (np.arange(n_batches + 1) * n_pos) // n_batches
    out = np.zeros((n_batches, 4))
    d2 = d * d
    out[:, 0] = np.diff(edges)
    starts = edges[:-1]
    nonempty = out[:, 0] > 0
    s = starts[nonempty]
    out[nonempty, 1] = np.add.reduceat(d, s)
    out[nonempty, 2] = np.add.reduceat(d2, s)
    out[nonempty, 3] = np.add.reduceat(d2 * d, s)
    return out


if HAVE_NUMBA:

    @njit(cache=False, nogil=True)
    def window_sums_numba(slot_power, w, n_batches, circular):
        n = slot_power.shape[0]
        n_pos = n if circular else n - w + 1
        out = np.zeros((n_batches, 4))
        inv = 1.0 / (2.0 * w)
        acc = 0.0
        for i in range(w):
            acc += slot_power[i % n]
        b = 0
        b_end = n_pos // n_batches
        for t in range(n_pos):
            while t >= b_end:
                b += 1
                b_end = ((b + 1) * n_pos) // n_batches
            if t > 0:
                # re-sum periodically so rounding drift cannot accumulate
                if t % 65536 == 0:
                    acc = 0.0
                    for i in range(w):
                        acc += slot_power[(t + i) % n]
                else:
                    acc += slot_power[(t + w - 1) % n] - slot_power[t - 1]
            d = acc * inv - 1.0
            d2 = d * d
            out[b, 0] += 1.0
            out[b, 1] += d
            out[b, 2] += d2
            out[b, 3] += d2 * d
        return out

else:  # pragma: no cover
    window_sums_numba = None


def window_sums(slot_power, w, n_batches=1, circular=False):
    slot_power = np.ascontiguousarray(slot_power, dtype=np.float64)
    if USE_NUMBA:
        return window_sums_numba(slot_power, int(w), int(n_batches), bool(circular))
    return window_sums_numpy(slot_power, int(w), int(n_batches), bool(circular))


# ---------------------------------------------------------------------------
# Manakov Kerr phase rotation
# ---------------------------------------------------------------------------

def kerr_phase_numpy(field, coeff):
    """Rotate both polarizations by coeff * (|E_x|^2 + |E_y|^2), in place."""
    ex, ey = field[0], field[1]
    power = ex.real**2 + ex.imag**2 + ey.real**2 + ey.imag**2
    rot = np.exp(1j * coeff * power)
    field *= rot
    return field


if HAVE_NUMBA:

    @njit(cache=False, nogil=True)
    def kerr_phase_numba(field, coeff):
        n = field.shape[1]
        for i in range(n):
            ex = field[0, i]
            ey = field[1, i]
            phi = coeff * (ex.real * ex.real + ex.imag * ex.imag
                           + ey.real * ey.real + ey.imag * ey.imag)
            rot = complex(np.cos(phi), np.sin(phi))
            field[0, i] = ex * rot
            field[1, i] = ey * rot
        return field

else:  # pragma: no cover
    kerr_phase_numba = None


def kerr_phase(field, coeff):
    if USE_NUMBA:
        return kerr_phase_numba(field, float(coeff))
    return kerr_phase_numpy(field, float(coeff))
