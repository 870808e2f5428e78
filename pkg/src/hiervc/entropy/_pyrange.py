"""Pure-Python range coder kernel (reference and fallback for the Cython build).

State is a 64-bit ``low`` with a carry bit and a 64-bit ``range``; tables have
a fixed total of 2**16, so each symbol narrows the range by ``range >> 16``.
Output is emitted in 32-bit words with LZMA-style carry propagation through a
cached word plus a run of pending 0xFFFFFFFF words.
"""
from __future__ import annotations

from bisect import bisect_right

import numpy as np

from ..errors import CorruptChunkError, SymbolRangeError, TruncationError

MASK32 = 0xFFFFFFFF
MASK64 = (1 << 64) - 1
TOP_WORD = 0xFFFFFFFF00000000
RENORM = 1 << 32
PRECISION = 16


def encode(sym: np.ndarray, idx: np.ndarray, cdf: np.ndarray, nsyms: np.ndarray) -> bytes:
    rows = cdf.tolist()
    limits = nsyms.tolist()
    low = 0
    rng = MASK64
    cache = 0
    held = 1  # cache word plus pending 0xFFFFFFFF words
    first = True
    words: list[int] = []

    def shift_low():
        nonlocal low, cache, held, first
        if low < TOP_WORD or low > MASK64:
            carry = low >> 64
            w = cache
            while held:
                if first:
                    first = False
                else:
                    words.append((w + carry) & MASK32)
                w = MASK32
                held -= 1
            cache = (low >> 32) & MASK32
        held += 1
        low = (low & MASK32) << 32

    for s, t in zip(sym.tolist(), idx.tolist()):
        if not 0 <= s < limits[t]:
            raise SymbolRangeError(f"symbol offset {s} outside table {t} range [0, {limits[t]})")
        row = rows[t]
        c = row[s]
        r = rng >> PRECISION
        low += r * c
        rng = r * (row[s + 1] - c)
        if rng < RENORM:
            rng <<= 32
            shift_low()
    for _ in range(3):
        shift_low()
    return np.array(words, dtype="<u4").tobytes()


def decode(data: bytes, idx: np.ndarray, cdf: np.ndarray, nsyms: np.ndarray) -> np.ndarray:
    n_words, tail = divmod(len(data), 4)
    words = np.frombuffer(data, dtype="<u4", count=n_words).tolist()
    rows = cdf.tolist()
    limits = nsyms.tolist()
    pos = 2
    if n_words < 2:
        raise TruncationError(f"payload of {len(data)} bytes is shorter than the 8-byte coder state")
    code = (words[0] << 32) | words[1]
    rng = MASK64
    out = []
    for t in idx.tolist():
        row = rows[t]
        r = rng >> PRECISION
        v = code // r
        if v >= (1 << PRECISION):
            raise CorruptChunkError("range decoder state out of bounds")
        s = bisect_right(row, v, 0, limits[t] + 1) - 1
        c = row[s]
        code -= r * c
        rng = r * (row[s + 1] - c)
        if rng < RENORM:
            if pos >= n_words:
                raise TruncationError(f"payload ended after {len(out) + 1} of {len(idx)} symbols")
            code = (code << 32) | words[pos]
            pos += 1
            rng <<= 32
        out.append(s)
    if pos != n_words or tail:
        raise CorruptChunkError(f"{len(data) - 4 * pos} trailing payload bytes after the last symbol")
    return np.array(out, dtype=np.int32)
