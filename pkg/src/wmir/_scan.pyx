# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cosine-scan kernel.

Computes dot products of one query against every row of a float32 matrix,
accumulating in float64. Row results depend only on (row, query), never on
which other rows are scanned, so restricted searches score identically to
full scans.
"""


def scan_scores(const float[:, ::1] mat, const double[::1] query, double[::1] out):
    """out[i] = sum_j mat[i, j] * query[j], accumulated in float64."""
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t d = mat.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    if query.shape[0] != d or out.shape[0] != n:
        raise ValueError("scan_scores: shape mismatch")
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += (<double> mat[i, j]) * query[j]
            out[i] = acc
