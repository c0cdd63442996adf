"""Enumerative sphere shaping (ESS) over 1-D amplitudes and 4-D time slots.

Amplitudes are the odd integers 1, 3, ..., 2M-1.  Since a^2 - 1 is always a
multiple of 8, every block energy has the form ``length + 8*j``; the trellis
is therefore stored over the *excess* j = (energy - length) / 8, which keeps
it small even for long blocks.  Counts are exact Python integers.

Ordering convention: 1-D codecs enumerate sequences in ascending
lexicographic order of the amplitude levels.  4-D codecs order slot cells by
slot energy first and lexicographically within an energy group.
"""
import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .alphabet import PdmSymbolStream
from .errors import Infeasible, InvalidCodeword, InvalidParameter

__all__ = [
    "ShapedBlock",
    "EssCodec1D",
    "EssCodec4D",
    "count_sequences",
    "energy_distribution",
    "min_cap_for_rate",
    "min_outer_cap_4d",
    "default_inner_cap",
    "ess_encode",
    "ess_decode",
    "ess4d_encode",
    "ess4d_decode",
    "shaped_stream",
    "codec_summary_csv",
]


def _check_M(M):
    if int(M) != M or M < 1:
        raise InvalidParameter(f"M must be a positive integer, got {M!r}")
    return int(M)


def _level_costs(M):
    # (a^2 - 1) / 8 for a = 2m + 1, i.e. the triangular numbers m(m+1)/2
    return [m * (m + 1) // 2 for m in range(M)]


def _excess(energy, length):
    """Largest excess budget j with length + 8j <= energy (or -1)."""
    if energy < length:
        return -1
    return int((energy - length) // 8)


def _weighted_table(mult, length, budget):
    """table[k][j] = weighted number of k-cell sequences with excess <= j.

    ``mult`` maps a cell cost to the number of cells with that cost.
    """
    costs = sorted(mult)
    table = [[1] * (budget + 1)]
    for _ in range(length):
        prev = table[-1]
        row = [0] * (budget + 1)
        for c in costs:
            m = mult[c]
            if c > budget:
                break
            for j in range(c, budget + 1):
                row[j] += m * prev[j - c]
        table.append(row)
    return table


def _weighted_distribution(mult, length):
    """dist[j] = weighted number of length-cell sequences with excess exactly j."""
    dist = [1]
    for _ in range(length):
        new = [0] * (len(dist) + max(mult))
        for c, m in mult.items():
            for j, v in enumerate(dist):
                if v:
                    new[j + c] += m * v
        while len(new) > 1 and new[-1] == 0:
            new.pop()
        dist = new
    return dist


def count_sequences(M, length, energy_cap):
    """Number of amplitude sequences of ``length`` with total energy <= cap."""
    M = _check_M(M)
    if length < 1:
        raise InvalidParameter("length must be >= 1")
    j = _excess(energy_cap, length)
    if j < 0:
        return 0
    j = min(j, length * _level_costs(M)[-1])
    mult = {c: 1 for c in _level_costs(M)}
    return _weighted_table(mult, length, j)[length][j]


def energy_distribution(M, length):
    """Map exact block energy -> number of sequences (achievable energies only)."""
    M = _check_M(M)
    dist = _weighted_distribution({c: 1 for c in _level_costs(M)}, length)
    return {length + 8 * j: v for j, v in enumerate(dist) if v}


def _min_cap_from_distribution(dist, length, target_bits):
    need = 1 << int(target_bits)
    acc = 0
    for j, v in enumerate(dist):
        acc += v
        if acc >= need:
            return length + 8 * j, acc
    raise Infeasible(f"{target_bits} bits not reachable (max count {acc})")


def min_cap_for_rate(M, length_1d, target_bits):
    """Smallest achievable energy cap whose sequence count is >= 2**target_bits."""
    M = _check_M(M)
    if target_bits < 0:
        raise InvalidParameter("target_bits must be >= 0")
    if target_bits > length_1d * math.log2(M) + 1e-12:
        raise Infeasible(f"{target_bits} bits exceed {length_1d} * log2({M})")
    dist = _weighted_distribution({c: 1 for c in _level_costs(M)}, length_1d)
    return _min_cap_from_distribution(dist, length_1d, target_bits)[0]


def _inner_cells(M, inner_budget):
    """Group all 4-tuples of level indices by slot cost (<= inner_budget)."""
    costs = _level_costs(M)
    groups = {}
    for tup in itertools.product(range(M), repeat=4):
        c = sum(costs[m] for m in tup)
        if c <= inner_budget:
            groups.setdefault(c, []).append(tup)
    return {c: groups[c] for c in sorted(groups)}


def min_outer_cap_4d(M, n, inner_cap, target_bits):
    M = _check_M(M)
    groups = _inner_cells(M, _excess(inner_cap, 4))
    if not groups:
        raise Infeasible(f"inner cap {inner_cap} admits no slot")
    dist = _weighted_distribution({c: len(g) for c, g in groups.items()}, n)
    return _min_cap_from_distribution(dist, 4 * n, target_bits)[0]


def default_inner_cap(M, n, target_bits):
    """Smallest inner (per-slot) cap at which ``target_bits`` remain reachable."""
    M = _check_M(M)
    t_max = _level_costs(M)[-1]
    for ji in range(4 * t_max + 1):
        groups = _inner_cells(M, ji)
        total = sum(len(g) for g in groups.values()) ** n
        if total >= (1 << int(target_bits)):
            return 4 + 8 * ji
    raise Infeasible(f"{target_bits} bits exceed the unshaped 4-D capacity")


@dataclass(frozen=True)
class ShapedBlock:
    amplitudes: np.ndarray
    index: int


class _EnumerativeCodec:
    """Shared machinery: sequences of ``length`` cells drawn from cost groups."""

    cell_dim = 1

    def _build(self, groups, length, budget):
        self._groups = groups
        self._mult = {c: len(g) for c, g in groups.items()}
        self._costs = sorted(groups)
        self._lookup = {c: {cell: i for i, cell in enumerate(g)} for c, g in groups.items()}
        self._cell_cost = {cell: c for c, g in groups.items() for cell in g}
        self._length = length
        self._budget = budget
        self.trellis = _weighted_table(self._mult, length, budget)
        self.count = self.trellis[length][budget]
        if self.count < 1:
            raise Infeasible("energy caps admit no sequence")
        self.payload_bits = self.count.bit_length() - 1
        self._levels = np.arange(1, 2 * self.M, 2)

    def completions(self, position, energy):
        """Weighted number of ways to finish a block from ``position`` (cells
        already emitted) given the accumulated energy so far."""
        r = self._length - position
        spent = (energy - position * self.cell_dim) // 8
        j = self._budget - spent
        if j < 0:
            return 0
        return self.trellis[r][j]

    @property
    def rate(self):
        """Payload bits per positive 1-D amplitude."""
        return self.payload_bits / (4 * self.n)

    def encode(self, index):
        index = int(index)
        if not 0 <= index < (1 << self.payload_bits):
            raise InvalidParameter(f"index {index} outside [0, 2^{self.payload_bits})")
        t = self.trellis
        j = self._budget
        out = []
        rem = index
        for pos in range(self._length):
            r = self._length - pos - 1
            for c in self._costs:
                if c > j:
                    raise AssertionError("trellis exhausted")  # pragma: no cover
                rest = t[r][j - c]
                block = self._mult[c] * rest
                if rem < block:
                    k, rem = divmod(rem, rest)
                    out.extend(self._groups[c][k])
                    j -= c
                    break
                rem -= block
        amps = self._levels[np.asarray(out, dtype=np.int64)]
        return ShapedBlock(amps, index)

    # -- vectorized int64 paths (counts below 2^63) -------------------------
    @property
    def batch_capable(self):
        return self.count.bit_length() <= 63

    def _batch_tables(self):
        if getattr(self, "_bt", None) is None:
            T = np.array(self.trellis, dtype=np.int64)
            cells = {c: np.array(self._groups[c], dtype=np.int64) for c in self._costs}
            ncode = self.M ** self.cell_dim
            code_cost = np.full(ncode, -1, dtype=np.int64)
            code_rank = np.zeros(ncode, dtype=np.int64)
            radix = self.M ** np.arange(self.cell_dim - 1, -1, -1)
            for c, arr in cells.items():
                codes = arr @ radix
                code_cost[codes] = c
                code_rank[codes] = np.arange(len(arr))
            self._bt = (T, cells, code_cost, code_rank, radix)
        return self._bt

    def encode_batch(self, indices):
        """Vectorized ``encode`` returning an (N, 4n) amplitude array."""
        if not self.batch_capable:
            return np.array([self.encode(int(i)).amplitudes for i in indices])
        T, cells, _, _, _ = self._batch_tables()
        rem = np.array(indices, dtype=np.int64).ravel()
        if rem.size and (rem.min() < 0 or rem.max() >= (1 << self.payload_bits)):
            raise InvalidParameter(f"index outside [0, 2^{self.payload_bits})")
        N = rem.size
        j = np.full(N, self._budget, dtype=np.int64)
        out = np.zeros((N, self._length, self.cell_dim), dtype=np.int64)
        for pos in range(self._length):
            r = self._length - pos - 1
            open_ = np.ones(N, dtype=bool)
            for c in self._costs:
                fits = j >= c
                rest = np.where(fits, T[r, np.maximum(j - c, 0)], 0)
                block = self._mult[c] * rest
                take = open_ & (rem < block)
                if take.any():
                    k = rem[take] // rest[take]
                    rem[take] -= k * rest[take]
                    out[take, pos] = cells[c][k]
                    j[take] -= c
                    open_ &= ~take
                if not open_.any():
                    break
                rem[open_] -= block[open_]
        return self._levels[out.reshape(N, self.block_len)]

    def decode_batch(self, amplitudes):
        """Vectorized ``decode`` of an (N, 4n) amplitude array."""
        a = np.asarray(amplitudes)
        if a.ndim != 2 or a.shape[1] != self.block_len:
            raise InvalidCodeword(f"expected shape (N, {self.block_len}), got {a.shape}")
        if not self.batch_capable:
            return np.array([self.decode(row) for row in a], dtype=object)
        T, _, code_cost, code_rank, radix = self._batch_tables()
        m = (a - 1) / 2
        if np.any(m != np.round(m)) or np.any(m < 0) or np.any(m >= self.M):
            raise InvalidCodeword("amplitudes outside the alphabet")
        codes = m.astype(np.int64).reshape(a.shape[0], self._length, self.cell_dim) @ radix
        N = a.shape[0]
        j = np.full(N, self._budget, dtype=np.int64)
        index = np.zeros(N, dtype=np.int64)
        for pos in range(self._length):
            r = self._length - pos - 1
            c = code_cost[codes[:, pos]]
            if np.any(c < 0) or np.any(c > j):
                raise InvalidCodeword("sequence violates the energy cap")
            for c2 in self._costs:
                below = c2 < c
                if not below.any():
                    break
                index[below] += self._mult[c2] * T[r, j[below] - c2]
            index += code_rank[codes[:, pos]] * T[r, j - c]
            j -= c
        if np.any(index >= (1 << self.payload_bits)):
            raise InvalidCodeword("sequence maps outside the payload range")
        return index

    def decode(self, amplitudes):
        a = np.asarray(getattr(amplitudes, "amplitudes", amplitudes))
        if a.shape != (4 * self.n,):
            raise InvalidCodeword(f"expected {4 * self.n} amplitudes, got shape {a.shape}")
        m = (a - 1) / 2
        if np.any(m != np.round(m)) or np.any(m < 0) or np.any(m >= self.M):
            raise InvalidCodeword("amplitudes outside the alphabet")
        m = m.astype(np.int64).reshape(self._length, self.cell_dim)
        t = self.trellis
        j = self._budget
        index = 0
        for pos in range(self._length):
            cell = tuple(int(v) for v in m[pos])
            c = self._cell_cost.get(cell)
            if c is None or c > j:
                raise InvalidCodeword("sequence violates the energy cap")
            r = self._length - pos - 1
            for c2 in self._costs:
                if c2 >= c:
                    break
                index += self._mult[c2] * t[r][j - c2]
            index += self._lookup[c][cell] * t[r][j - c]
            j -= c
        if index >= (1 << self.payload_bits):
            raise InvalidCodeword("sequence maps outside the payload range")
        return index


class EssCodec1D(_EnumerativeCodec):
    """Outer-only sphere shaping of 4n amplitudes under a block energy cap."""

    kind = "ess1d"
    cell_dim = 1

    def __init__(self, M, n, energy_cap):
        self.M = _check_M(M)
        if n < 1:
            raise InvalidParameter("n must be >= 1")
        self.n = int(n)
        self.block_len = 4 * self.n
        j = _excess(energy_cap, self.block_len)
        if j < 0:
            raise Infeasible(f"cap {energy_cap} below the minimum block energy {self.block_len}")
        j = min(j, self.block_len * _level_costs(self.M)[-1])
        self.energy_cap = self.block_len + 8 * j
        self.inner_cap = None
        groups = {c: [(m,)] for m, c in enumerate(_level_costs(self.M))}
        self._build(groups, self.block_len, j)

    @classmethod
    def for_rate(cls, M, n, H):
        bits = int(math.floor(H * 4 * n + 1e-9))
        return cls(M, n, min_cap_for_rate(M, 4 * n, bits))

    def __repr__(self):
        return (f"EssCodec1D(M={self.M}, n={self.n}, energy_cap={self.energy_cap}, "
                f"payload_bits={self.payload_bits})")


class EssCodec4D(_EnumerativeCodec):
    """Inner per-slot cap concatenated with an outer block cap over n slots."""

    kind = "ess4d"
    cell_dim = 4

    def __init__(self, M, n, energy_cap, inner_cap):
        self.M = _check_M(M)
        if n < 1:
            raise InvalidParameter("n must be >= 1")
        self.n = int(n)
        self.block_len = 4 * self.n
        ji = _excess(inner_cap, 4)
        if ji < 0:
            raise Infeasible(f"inner cap {inner_cap} below the minimum slot energy 4")
        ji = min(ji, 4 * _level_costs(self.M)[-1])
        self.inner_cap = 4 + 8 * ji
        groups = _inner_cells(self.M, ji)
        j = _excess(energy_cap, self.block_len)
        if j < 0:
            raise Infeasible(f"cap {energy_cap} below the minimum block energy {self.block_len}")
        j = min(j, self.n * ji)
        self.energy_cap = self.block_len + 8 * j
        self.inner_cells = groups
        self._build(groups, self.n, j)

    @classmethod
    def for_rate(cls, M, n, H, inner_cap=None):
        bits = int(math.floor(H * 4 * n + 1e-9))
        if inner_cap is None:
            inner_cap = default_inner_cap(M, n, bits)
        return cls(M, n, min_outer_cap_4d(M, n, inner_cap, bits), inner_cap)

    def __repr__(self):
        return (f"EssCodec4D(M={self.M}, n={self.n}, energy_cap={self.energy_cap}, "
                f"inner_cap={self.inner_cap}, payload_bits={self.payload_bits})")


def ess_encode(codec, index):
    return codec.encode(index)


def ess_decode(codec, amplitudes):
    return codec.decode(amplitudes)


ess4d_encode = ess_encode
ess4d_decode = ess_decode


def _random_index(rng, bits):
    if bits == 0:
        return 0
    nbytes = (bits + 7) // 8
    v = int.from_bytes(rng.bytes(nbytes), "little")
    return v >> (8 * nbytes - bits)


def shaped_stream(codec, blocks, seed, zero_payload=False, label=None):
    """Encode ``blocks`` random payloads and map them onto PDM time slots.

    Amplitudes 4i-3..4i of a block form slot i as (I_X, Q_X, I_Y, Q_Y); each
    amplitude receives an independent equiprobable sign.
    """
    if blocks < 1:
        raise InvalidParameter("blocks must be >= 1")
    payload_seed, sign_seed = np.random.SeedSequence(seed).spawn(2)
    prng = np.random.default_rng(payload_seed)
    idx = [0 if zero_payload else _random_index(prng, codec.payload_bits)
           for _ in range(int(blocks))]
    if codec.batch_capable:
        amps = codec.encode_batch(idx).astype(np.float64)
    else:
        amps = np.array([codec.encode(i).amplitudes for i in idx], dtype=np.float64)
    srng = np.random.default_rng(sign_seed)
    signs = srng.integers(0, 2, size=amps.shape, dtype=np.int8) * 2 - 1
    a = (amps * signs).reshape(-1, 4)
    raw = np.empty((a.shape[0], 2), dtype=np.complex128)
    raw[:, 0] = a[:, 0] + 1j * a[:, 1]
    raw[:, 1] = a[:, 2] + 1j * a[:, 3]
    return PdmSymbolStream.from_raw(raw, label or f"{codec.kind}-n{codec.n}")


def block_energies(stream_amplitudes, n):
    a = np.asarray(stream_amplitudes, dtype=np.float64).reshape(-1, 4 * n)
    return (a * a).sum(axis=1)


def codec_summary_csv(codecs):
    """CSV text with one row per codec (counts as exact decimal strings)."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["kind", "M", "n", "energy_cap", "inner_cap", "payload_bits", "H", "count"])
    for c in codecs:
        wr.writerow([c.kind, c.M, c.n, c.energy_cap,
                     "" if c.inner_cap is None else c.inner_cap,
                     c.payload_bits, f"{c.rate:.6f}", str(c.count)])
    return buf.getvalue()

