"""Windowed central/standardized moments and optimal window lengths.

The window average <P>_w pools both polarizations of w consecutive slots
(2w samples of per-pol normalized power).  With d = <P>_w - 1 the windowed
central moments are m_k(w) = <d^k> (2w)^(k-1); mu4 and mu6 follow from
mu4 = m2 + 2 m1 + 1 and mu6 = m3 + 3 m2 + 3 m1 + 1.  For i.i.d. power
samples m2 and m3 do not depend on w.

Sliding windows with stride one are used and windows overhanging the end of
the stream are dropped unless ``circular=True``.  Error bars come from
batch means over contiguous runs of window positions.
"""
import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import InvalidInput, InvalidParameter

__all__ = [
    "WindowedMoments",
    "MomentProfile",
    "WindowRule",
    "InvarianceReport",
    "windowed_moments",
    "moment_profile",
    "optimal_windows",
    "iid_invariance_check",
    "power_of_two_windows",
]


@dataclass(frozen=True)
class WindowedMoments:
    w: int
    m1_bar: float
    m2_bar: float
    m3_bar: float
    mu4_bar: float
    mu6_bar: float
    n_positions: int
    se_m2: float
    se_m3: float
    se_mu4: float
    se_mu6: float


def _default_batches(n_pos, w):
    return int(min(100, max(2, n_pos // (20 * (w + 64)))))


def _batch_values(sums, w):
    cnt = sums[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        m1 = sums[:, 1] / cnt
        m2 = sums[:, 2] / cnt * (2.0 * w)
        m3 = sums[:, 3] / cnt * (2.0 * w) ** 2
    return m1, m2, m3


def _se(values, weights):
    ok = weights > 0
    v = values[ok]
    if v.size < 2:
        return math.nan
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def _slot_power(stream):
    if hasattr(stream, "slot_power"):
        return np.asarray(stream.slot_power, dtype=np.float64)
    p = np.asarray(stream, dtype=np.float64)
    if p.ndim == 2 and p.shape[1] == 2:
        return p.sum(axis=1)
    raise InvalidInput("expected a PdmSymbolStream or an array of per-pol powers (slots, 2)")


def windowed_moments(stream, w, circular=False, n_batches=None):
    """Windowed moments of ``stream`` for a single window length ``w``.

    ``stream`` may also be a (slots, 2) array of per-polarization normalized
    powers whose mean is one.
    """
    sp = _slot_power(stream)
    w = int(w)
    if w < 1:
        raise InvalidParameter("w must be >= 1")
    if w > sp.shape[0]:
        raise InvalidInput(f"window {w} longer than the stream ({sp.shape[0]} slots)")
    n_pos = sp.shape[0] if circular else sp.shape[0] - w + 1
    if n_batches is None:
        n_batches = _default_batches(n_pos, w)
    n_batches = max(1, min(int(n_batches), n_pos))
    sums = _accel.window_sums(sp, w, n_batches, circular)
    tot = sums.sum(axis=0)
    m1 = tot[1] / tot[0]
    m2 = tot[2] / tot[0] * (2.0 * w)
    m3 = tot[3] / tot[0] * (2.0 * w) ** 2
    b1, b2, b3 = _batch_values(sums, w)
    cnt = sums[:, 0]
    return WindowedMoments(
        w=w,
        m1_bar=float(m1),
        m2_bar=float(m2),
        m3_bar=float(m3),
        mu4_bar=float(m2 + 2 * m1 + 1),
        mu6_bar=float(m3 + 3 * m2 + 3 * m1 + 1),
        n_positions=int(tot[0]),
        se_m2=_se(b2, cnt),
        se_m3=_se(b3, cnt),
        se_mu4=_se(b2 + 2 * b1, cnt),
        se_mu6=_se(b3 + 3 * b2 + 3 * b1, cnt),
    )


@dataclass(frozen=True)
class MomentProfile:
    windows: np.ndarray
    m1_bar: np.ndarray
    m2_bar: np.ndarray
    m3_bar: np.ndarray
    mu4_bar: np.ndarray
    mu6_bar: np.ndarray
    sample_count: np.ndarray
    se_mu4: np.ndarray
    se_mu6: np.ndarray
    label: str = ""

    def at(self, w):
        i = int(np.flatnonzero(self.windows == w)[0])
        return self.mu4_bar[i], self.mu6_bar[i]

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["w", "m2_bar", "m3_bar", "mu4_bar", "mu6_bar", "n_positions"])
        for i, w in enumerate(self.windows):
            wr.writerow([int(w), repr(float(self.m2_bar[i])), repr(float(self.m3_bar[i])),
                         repr(float(self.mu4_bar[i])), repr(float(self.mu6_bar[i])),
                         int(self.sample_count[i])])
        return buf.getvalue()


def moment_profile(stream, windows, circular=False):
    windows = [int(w) for w in windows]
    if not windows:
        raise InvalidParameter("empty window grid")
    if any(b <= a for a, b in zip(windows, windows[1:])):
        raise InvalidParameter("windows must be strictly ascending")
    rows = [windowed_moments(stream, w, circular=circular) for w in windows]

    def col(name, dtype=np.float64):
        return np.array([getattr(r, name) for r in rows], dtype=dtype)

    return MomentProfile(
        windows=np.array(windows),
        m1_bar=col("m1_bar"),
        m2_bar=col("m2_bar"),
        m3_bar=col("m3_bar"),
        mu4_bar=col("mu4_bar"),
        mu6_bar=col("mu6_bar"),
        sample_count=col("n_positions", np.int64),
        se_mu4=col("se_mu4"),
        se_mu6=col("se_mu6"),
        label=getattr(stream, "label", ""),
    )


def power_of_two_windows(max_w):
    out = [1]
    while out[-1] * 2 <= max_w:
        out.append(out[-1] * 2)
    return out


@dataclass(frozen=True)
class WindowRule:
    """Link quantities that set the SPM/XPM window lengths.

    ``beta2`` in s^2/m (sign ignored), ``L_span`` in m, ``delta_f`` is the
    channel spacing normalized to the symbol rate.
    """

    R_sym: float
    B_ch: float
    beta2: float
    L_span: float
    N_span: int
    delta_f: float = 1.0
    N_ch: int = 1

    def __post_init__(self):
        for name in ("R_sym", "B_ch", "L_span", "N_span", "delta_f", "N_ch"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")


def optimal_window_lengths(rule):
    """Real-valued (w_SPM, w_XPM) before rounding."""
    w_spm = 2.0 * rule.R_sym * rule.B_ch * abs(rule.beta2) * rule.L_span * rule.N_span
    return w_spm, w_spm * math.sqrt(rule.delta_f * rule.N_ch)


def optimal_windows(rule):
    """Integer (w_SPM, w_XPM): nearest integer, never below one."""
    w_spm, w_xpm = optimal_window_lengths(rule)
    return max(1, int(round(w_spm))), max(1, int(round(w_xpm)))


@dataclass(frozen=True)
class InvarianceReport:
    windows: tuple
    orders: tuple
    diffs: dict
    stderr: dict
    nsigma: float
    passed: bool

    def failures(self):
        out = []
        for k in self.orders:
            for w, d, s in zip(self.windows, self.diffs[k], self.stderr[k]):
                if abs(d) > self.nsigma * s + 1e-12:
                    out.append((k, w, d, s))
        return out


def iid_invariance_check(stream, windows, nsigma=5.0, orders=(2, 3), n_batches=50):
    """Test that m2(w) and m3(w) match their w = 1 values within nsigma.

    Both profiles are split into the same number of contiguous batches and
    the standard error of the per-batch difference m_k(w) - m_k(1) is used,
    which accounts for the two estimates sharing the same samples.
    """
    sp = _slot_power(stream)
    base_sums = _accel.window_sums(sp, 1, n_batches, False)
    base = _batch_values(base_sums, 1)
    base_tot = base_sums.sum(axis=0)
    diffs = {k: [] for k in orders}
    errs = {k: [] for k in orders}
    for w in windows:
        w = int(w)
        sums = _accel.window_sums(sp, w, n_batches, False)
        cur = _batch_values(sums, w)
        tot = sums.sum(axis=0)
        for k in orders:
            full = tot[k] / tot[0] * (2.0 * w) ** (k - 1)
            full_base = base_tot[k] / base_tot[0] * 2.0 ** (k - 1)
            diffs[k].append(float(full - full_base))
            errs[k].append(_se(cur[k - 1] - base[k - 1], sums[:, 0]))
    passed = all(
        abs(d) <= nsigma * s + 1e-12
        for k in orders for d, s in zip(diffs[k], errs[k])
    )
    return InvarianceReport(tuple(int(w) for w in windows), tuple(orders), diffs, errs,
                            float(nsigma), passed)
