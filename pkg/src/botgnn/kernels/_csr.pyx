# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR aggregation kernels (the hot inner loop of message passing).

Both kernels write into a caller-allocated ``out`` so the Python wrapper owns
allocation and dtype checks. Mean aggregation sums neighbor rows first and
scales once per row, which keeps the result independent of neighbor order for
exactly-representable inputs.
"""

from libc.stdint cimport int64_t


def mean_gather(const int64_t[::1] offsets,
                const int64_t[::1] indices,
                const double[::1] inv_count,
                const double[:, ::1] src,
                double[:, ::1] out):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t d = src.shape[1]
    cdef Py_ssize_t i, e, k, j
    cdef double s
    for i in range(n):
        for k in range(d):
            s = 0.0
            for e in range(offsets[i], offsets[i + 1]):
                s += src[indices[e], k]
            out[i, k] = s * inv_count[i]


def weighted_gather(const int64_t[::1] offsets,
                    const int64_t[::1] indices,
                    const double[::1] weights,
                    const double[:, ::1] src,
                    double[:, ::1] out):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t d = src.shape[1]
    cdef Py_ssize_t i, e, k
    cdef int64_t j
    cdef double w
    for i in range(n):
        for e in range(offsets[i], offsets[i + 1]):
            j = indices[e]
            w = weights[e]
            for k in range(d):
                out[i, k] += w * src[j, k]
