"""Amplitude alphabets, i.i.d. PDM symbol sources and classical moments."""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInput, InvalidParameter, Infeasible

__all__ = [
    "AmplitudeAlphabet",
    "PdmSymbolStream",
    "MomentSet",
    "make_qam_alphabet",
    "make_mb_alphabet",
    "entropy_bits",
    "draw_iid_stream",
    "draw_gaussian_stream",
    "classical_moments",
    "alphabet_moments",
]


@dataclass(frozen=True)
class AmplitudeAlphabet:
    """Positive amplitude levels with per-level probabilities."""

    levels: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if levels.ndim != 1 or levels.size == 0 or levels.shape != probs.shape:
            raise InvalidParameter("levels and probabilities must be equal-length 1-D arrays")
        if np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
            raise InvalidParameter("levels must be positive and strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidParameter("probabilities must be nonnegative and sum to 1")
        levels.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "probabilities", probs)

    @property
    def M(self):
        return self.levels.size

    @property
    def entropy(self):
        return entropy_bits(self.probabilities)


def entropy_bits(probabilities):
    p = np.asarray(probabilities, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def make_qam_alphabet(M):
    """Uniform amplitudes {1, 3, ..., 2M-1} (the positive half of a 2M-PAM)."""
    if int(M) != M or M < 1:
        raise InvalidParameter(f"M must be a positive integer, got {M!r}")
    M = int(M)
    return AmplitudeAlphabet(np.arange(1, 2 * M, 2, dtype=np.float64), np.full(M, 1.0 / M))


def _mb_probs(levels, lam):
    # shift by the smallest energy so large lam cannot underflow everything
    e = levels**2 - levels[0] ** 2
    w = np.exp(-lam * e)
    return w / w.sum()


def make_mb_alphabet(M, target_entropy):
    """Maxwell-Boltzmann amplitudes Pr(a) ~ exp(-lam a^2) with a given entropy.

    lam >= 0 is found by bracketing root search on the (monotone) entropy
    curve; the result matches ``target_entropy`` to within 1e-9 bits.
    """
    base = make_qam_alphabet(M)
    hmax = np.log2(base.M)
    if not 0.0 < target_entropy:
        raise InvalidParameter("target_entropy must be positive")
    if target_entropy > hmax + 1e-12:
        raise Infeasible(f"target entropy {target_entropy} exceeds log2(M) = {hmax}")
    if target_entropy >= hmax - 1e-12:
        return base
    levels = base.levels

    def gap(lam):
        return entropy_bits(_mb_probs(levels, lam)) - target_entropy

    hi = 1e-3
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise Infeasible("entropy target too close to zero for a finite lambda")
    lam = brentq(gap, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return AmplitudeAlphabet(levels, _mb_probs(levels, lam))


@dataclass(frozen=True)
class PdmSymbolStream:
    """Dual-polarization symbols, shape (slots, 2), normalized to unit power.

    Normalization uses the empirical mean of the per-slot total power, so the
    per-polarization normalized powers ``p`` have a mean of exactly one (up
    to rounding).
    """

    symbols: np.ndarray
    normalization: float = 1.0
    label: str = field(default="", compare=False)

    @classmethod
    def from_raw(cls, raw, label=""):
        raw = np.asarray(raw, dtype=np.complex128)
        if raw.ndim != 2 or raw.shape[1] != 2:
            raise InvalidInput("raw symbols must have shape (slots, 2)")
        if raw.shape[0] == 0:
            raise InvalidInput("empty stream")
        mean_power = float(np.mean(raw.real**2 + raw.imag**2)) * 2.0
        if not mean_power > 0:
            raise InvalidInput("stream has zero power")
        scale = 1.0 / np.sqrt(mean_power)
        sym = raw * scale
        sym.flags.writeable = False
        return cls(sym, scale, label)

    @property
    def slots(self):
        return self.symbols.shape[0]

    def __len__(self):
        return self.symbols.shape[0]

    @property
    def pol_power(self):
        """Per-polarization normalized power p, shape (slots, 2), mean 1."""
        s = self.symbols
        return 2.0 * (s.real**2 + s.imag**2)

    @property
    def slot_power(self):
        """p_X + p_Y per slot (twice the 4-D normalized power)."""
        return self.pol_power.sum(axis=1)


@dataclass(frozen=True)
class MomentSet:
    mu4: float
    mu6: float
    m1: float
    m2: float
    m3: float


def _signed_iid(rng, alphabet, shape):
    idx = rng.choice(alphabet.M, size=shape, p=alphabet.probabilities)
    signs = rng.integers(0, 2, size=shape, dtype=np.int8) * 2 - 1
    return alphabet.levels[idx] * signs


def draw_iid_stream(alphabet, slots, seed, label=""):
    """I.i.d. signed amplitudes on all four real dimensions of every slot."""
    if slots < 1:
        raise InvalidParameter("slots must be >= 1")
    rng = np.random.default_rng(seed)
    a = _signed_iid(rng, alphabet, (int(slots), 4))
    raw = np.empty((int(slots), 2), dtype=np.complex128)
    raw[:, 0] = a[:, 0] + 1j * a[:, 1]
    raw[:, 1] = a[:, 2] + 1j * a[:, 3]
    return PdmSymbolStream.from_raw(raw, label or f"iid-M{alphabet.M}")


def draw_gaussian_stream(slots, seed, label="gaussian"):
    """Circularly symmetric complex Gaussian on each polarization."""
    if slots < 1:
        raise InvalidParameter("slots must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((int(slots), 4))
    raw = (g[:, 0::2] + 1j * g[:, 1::2])
    return PdmSymbolStream.from_raw(raw, label)


def classical_moments(stream):
    """Central moments of per-pol power p and mu4 = <p^2>, mu6 = <p^3>."""
    if stream is None or len(stream) == 0:
        raise InvalidInput("empty stream")
    p = stream.pol_power.ravel()
    d = p - 1.0
    return MomentSet(
        mu4=float(np.mean(p * p)),
        mu6=float(np.mean(p * p * p)),
        m1=float(np.mean(d)),
        m2=float(np.mean(d * d)),
        m3=float(np.mean(d * d * d)),
    )


def alphabet_moments(alphabet):
    """Exact (mu4, mu6) for i.i.d. symbols with I and Q drawn from ``alphabet``."""
    a2 = alphabet.levels**2
    pr = alphabet.probabilities
    # per-pol power = a_I^2 + a_Q^2 with independent I, Q
    power = (a2[:, None] + a2[None, :]).ravel()
    joint = (pr[:, None] * pr[None, :]).ravel()
    mean = float(joint @ power)
    return float(joint @ power**2) / mean**2, float(joint @ power**3) / mean**3
