# cython: language_level=3
"""Compiled kernel: mutual information of a projective qubit measurement
swept over many Bloch directions.

For a measurement along unit vector n, outcome probabilities for a state
with Bloch vector r are (1 +/- n.r)/2.  The kernel fills `out[j]` with
I(X:Y) for the ensemble {probs[x], bloch[x]} measured along dirs[j].
"""

from libc.math cimport log2

import numpy as np


cdef inline double _h2(double p) nogil:
    # Binary entropy with the 0 log 0 = 0 convention.
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * log2(p) - (1.0 - p) * log2(1.0 - p)


def grid_mutual_info(
    const double[:, ::1] dirs,
    const double[:, ::1] bloch,
    const double[::1] probs,
    double[::1] out,
):
    """Fill out[j] with the measured mutual information along dirs[j]."""
    cdef Py_ssize_t n_dirs = dirs.shape[0]
    cdef Py_ssize_t n_states = bloch.shape[0]
    cdef Py_ssize_t j, x
    cdef double dot, p_plus, pbar, cond
    if bloch.shape[1] != 3 or dirs.shape[1] != 3:
        raise ValueError("directions and Bloch vectors must have 3 components")
    if probs.shape[0] != n_states or out.shape[0] != n_dirs:
        raise ValueError("array lengths do not match")
    with nogil:
        for j in range(n_dirs):
            pbar = 0.0
            cond = 0.0
            for x in range(n_states):
                dot = (dirs[j, 0] * bloch[x, 0]
                       + dirs[j, 1] * bloch[x, 1]
                       + dirs[j, 2] * bloch[x, 2])
                if dot > 1.0:
                    dot = 1.0
                elif dot < -1.0:
                    dot = -1.0
                p_plus = 0.5 * (1.0 + dot)
                pbar += probs[x] * p_plus
                cond += probs[x] * _h2(p_plus)
            out[j] = _h2(pbar) - cond
    return np.asarray(out)
