# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled range coder kernel; bit-identical to ``_pyrange``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint32_t, uint64_t, int32_t

from ..errors import CorruptChunkError, SymbolRangeError, TruncationError

cnp.import_array()

cdef uint64_t MASK32 = 0xFFFFFFFFu
cdef uint64_t TOP_WORD = 0xFFFFFFFF00000000u
cdef uint64_t RENORM = 1ULL << 32
cdef int PRECISION = 16


cdef struct EncState:
    uint64_t low
    uint64_t rng
    uint64_t cache
    int carry
    Py_ssize_t held
    int first
    Py_ssize_t n_out


cdef inline void _shift_low(EncState* st, uint32_t* out) noexcept nogil:
    cdef uint64_t w
    if st.low < TOP_WORD or st.carry:
        w = st.cache
        while st.held:
            if st.first:
                st.first = 0
            else:
                out[st.n_out] = <uint32_t>((w + <uint64_t>st.carry) & MASK32)
                st.n_out += 1
            w = MASK32
            st.held -= 1
        st.cache = st.low >> 32
    st.held += 1
    st.carry = 0
    st.low = (st.low & MASK32) << 32


def encode(const int32_t[::1] sym, const int32_t[::1] idx, const uint32_t[:, ::1] cdf,
           const int32_t[::1] nsyms):
    cdef Py_ssize_t n = sym.shape[0], i
    cdef int32_t s, t
    cdef uint64_t r, c, nl
    cdef EncState st
    out_arr = np.zeros(n + 4, dtype=np.uint32)
    cdef uint32_t[::1] out = out_arr
    st.low = 0
    st.rng = 0xFFFFFFFFFFFFFFFFu
    st.cache = 0
    st.carry = 0
    st.held = 1
    st.first = 1
    st.n_out = 0
    for i in range(n):
        s = sym[i]
        t = idx[i]
        if s < 0 or s >= nsyms[t]:
            raise SymbolRangeError(f"symbol offset {s} outside table {t} range [0, {nsyms[t]})")
        c = cdf[t, s]
        r = st.rng >> PRECISION
        nl = st.low + r * c
        if nl < st.low:
            st.carry = 1
        st.low = nl
        st.rng = r * (cdf[t, s + 1] - c)
        if st.rng < RENORM:
            st.rng <<= 32
            _shift_low(&st, &out[0])
    for i in range(3):
        _shift_low(&st, &out[0])
    return out_arr[:st.n_out].astype("<u4").tobytes()


def decode(const unsigned char[::1] data, const int32_t[::1] idx, const uint32_t[:, ::1] cdf,
           const int32_t[::1] nsyms):
    cdef Py_ssize_t n = idx.shape[0], i, n_words = data.shape[0] // 4, pos = 2
    cdef Py_ssize_t tail = data.shape[0] % 4
    cdef int32_t t, lo, hi, mid
    cdef uint64_t code, rng, r, v, c
    if n_words < 2:
        raise TruncationError(f"payload of {data.shape[0]} bytes is shorter than the 8-byte coder state")
    words_arr = np.frombuffer(bytes(data[:4 * n_words]), dtype="<u4").astype(np.uint32)
    cdef const uint32_t[::1] words = words_arr
    out_arr = np.empty(n, dtype=np.int32)
    cdef int32_t[::1] out = out_arr
    code = (<uint64_t>words[0] << 32) | words[1]
    rng = 0xFFFFFFFFFFFFFFFFu
    for i in range(n):
        t = idx[i]
        r = rng >> PRECISION
        v = code // r
        if v >= (1ULL << PRECISION):
            raise CorruptChunkError("range decoder state out of bounds")
        lo = 0
        hi = nsyms[t]
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cdf[t, mid] <= v:
                lo = mid
            else:
                hi = mid
        c = cdf[t, lo]
        code -= r * c
        rng = r * (cdf[t, lo + 1] - c)
        if rng < RENORM:
            if pos >= n_words:
                raise TruncationError(f"payload ended after {i + 1} of {n} symbols")
            code = (code << 32) | words[pos]
            pos += 1
            rng <<= 32
        out[i] = lo
    if pos != n_words or tail:
        raise CorruptChunkError(f"{data.shape[0] - 4 * pos} trailing payload bytes after the last symbol")
    return out_arr
