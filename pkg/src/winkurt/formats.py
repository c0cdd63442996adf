"""Named modulation formats -> symbol streams.

Tokens: ``gaussian``, ``qpsk``, ``iid-qam`` (uniform M), ``iid-mb``
(Maxwell-Boltzmann at entropy H), ``ess1d-<n>`` and ``ess4d-<n>``.
"""
import math
import re
from functools import lru_cache

from .alphabet import (PdmSymbolStream, draw_gaussian_stream, draw_iid_stream, make_mb_alphabet,
                       make_qam_alphabet)
from .errors import InvalidParameter
from .shaping import EssCodec1D, EssCodec4D, shaped_stream

_TOKEN = re.compile(r"^(gaussian|qpsk|iid-qam|iid-mb|ess1d-(\d+)|ess4d-(\d+))$")

REFERENCE_FORMATS = ("gaussian", "qpsk", "iid-qam")


def parse_format(token):
    token = token.strip().lower()
    m = _TOKEN.match(token)
    if not m:
        raise InvalidParameter(f"unknown modulation format {token!r}")
    if token.startswith("ess"):
        n = int(m.group(2) or m.group(3))
        if n < 1:
            raise InvalidParameter("shaping block length must be >= 1")
        return token[:5], n
    return token, None


@lru_cache(maxsize=64)
def codec_for(kind, M, n, H, inner_cap=None):
    if kind == "ess1d":
        return EssCodec1D.for_rate(M, n, H)
    return EssCodec4D.for_rate(M, n, H, inner_cap)


def make_stream(token, slots, seed, M=4, H=1.6, inner_cap=None):
    """Exactly ``slots`` normalized time slots of the named format."""
    kind, n = parse_format(token)
    if kind == "gaussian":
        return draw_gaussian_stream(slots, seed)
    if kind == "qpsk":
        return draw_iid_stream(make_qam_alphabet(1), slots, seed, "qpsk")
    if kind == "iid-qam":
        return draw_iid_stream(make_qam_alphabet(M), slots, seed, "iid-qam")
    if kind == "iid-mb":
        return draw_iid_stream(make_mb_alphabet(M, H), slots, seed, "iid-mb")
    codec = codec_for(kind, M, n, H, inner_cap if kind == "ess4d" else None)
    st = shaped_stream(codec, math.ceil(slots / n), seed, label=token)
    if st.slots == slots:
        return st
    # a trailing partial block is cut; renormalize what is kept
    return PdmSymbolStream.from_raw(st.symbols[:slots], token)
