# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled depthwise convolution (stride 1) on pre-padded NCHW input.

Accumulation order per output element matches the numpy fallback (taps in
row-major order, no fused multiply-add), so forward results agree bitwise.
"""

ctypedef fused real:
    float
    double


def depthwise_forward(const real[:, :, :, ::1] xp, const real[:, ::1] taps, real[:, :, :, ::1] out,
                      int kh, int kw):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t b, ch, y, x, i, j
    cdef real acc, wt
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(ho):
                    for x in range(wo):
                        out[b, ch, y, x] = 0
                for i in range(kh):
                    for j in range(kw):
                        wt = taps[ch, i * kw + j]
                        for y in range(ho):
                            for x in range(wo):
                                out[b, ch, y, x] = out[b, ch, y, x] + xp[b, ch, y + i, x + j] * wt


def depthwise_backward(const real[:, :, :, ::1] xp, const real[:, ::1] taps, const real[:, :, :, ::1] g,
                       real[:, :, :, ::1] gxp, real[:, ::1] gtaps, int kh, int kw):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], ho = g.shape[2], wo = g.shape[3]
    cdef Py_ssize_t b, ch, y, x, i, j
    cdef real acc, wt, gv
    with nogil:
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    wt = taps[ch, i * kw + j]
                    acc = 0
                    for b in range(n):
                        for y in range(ho):
                            for x in range(wo):
                                gv = g[b, ch, y, x]
                                acc = acc + gv * xp[b, ch, y + i, x + j]
                                gxp[b, ch, y + i, x + j] = gxp[b, ch, y + i, x + j] + gv * wt
                    gtaps[ch, i * kw + j] = acc
