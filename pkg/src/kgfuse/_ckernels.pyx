# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled DistMult kernels. See ``_pykernels`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt
from cython cimport floating

cnp.import_array()

NAME = "cython"


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def sgd_step(floating[:, ::1] ent, floating[:, ::1] rel,
             const long long[::1] heads, const long long[::1] rels,
             const long long[::1] tails, labels, double lr, bint renorm):
    cdef Py_ssize_t n = heads.shape[0], d = ent.shape[1]
    cdef Py_ssize_t i, k, hi, ri, ti
    cdef double[::1] y = np.ascontiguousarray(labels, dtype=np.float64)
    cdef double[:, ::1] grad = np.zeros((3 * n, d), dtype=np.float64)
    cdef double sigma, scale, total = 0.0, nrm
    cdef double hv, rv, tv
    cdef cnp.uint8_t[::1] seen = np.zeros(ent.shape[0] if renorm else 1, dtype=np.uint8)

    with nogil:
        for i in range(n):
            hi = heads[i]
            ri = rels[i]
            ti = tails[i]
            sigma = 0.0
            for k in range(d):
                sigma = sigma + <double>rel[ri, k] * <double>ent[hi, k] * <double>ent[ti, k]
            total = total + _softplus(-y[i] * sigma)
            scale = -y[i] * _sigmoid(-y[i] * sigma)
            for k in range(d):
                hv = ent[hi, k]
                rv = rel[ri, k]
                tv = ent[ti, k]
                grad[3 * i, k] = -lr * scale * rv * tv
                grad[3 * i + 1, k] = -lr * scale * rv * hv
                grad[3 * i + 2, k] = -lr * scale * hv * tv
        if lr != 0.0:
            for i in range(n):
                for k in range(d):
                    ent[heads[i], k] += <floating>grad[3 * i, k]
            for i in range(n):
                for k in range(d):
                    ent[tails[i], k] += <floating>grad[3 * i + 1, k]
            for i in range(n):
                for k in range(d):
                    rel[rels[i], k] += <floating>grad[3 * i + 2, k]
            if renorm:
                for i in range(2 * n):
                    hi = heads[i] if i < n else tails[i - n]
                    if seen[hi]:
                        continue
                    seen[hi] = 1
                    nrm = 0.0
                    for k in range(d):
                        nrm = nrm + <double>ent[hi, k] * <double>ent[hi, k]
                    nrm = sqrt(nrm)
                    if nrm > 0.0:
                        for k in range(d):
                            ent[hi, k] = <floating>(ent[hi, k] / nrm)
    return total


def filtered_ranks(const double[:, ::1] scores, const long long[::1] targets,
                   const long long[::1] filt_ptr, const long long[::1] filt_idx):
    cdef Py_ssize_t n_q = scores.shape[0], n = scores.shape[1]
    cdef Py_ssize_t q, j, tgt, e
    cdef double s_t
    cdef long long count
    cdef cnp.uint8_t[::1] excluded = np.zeros(n, dtype=np.uint8)
    out = np.empty(n_q, dtype=np.int64)
    cdef long long[::1] ranks = out

    with nogil:
        for q in range(n_q):
            tgt = targets[q]
            s_t = scores[q, tgt]
            # branchless count over the whole row; the target contributes 0
            count = 1
            for j in range(n):
                count += (scores[q, j] > s_t) | ((scores[q, j] == s_t) & (j < tgt))
            # then take back filtered candidates, each once
            for j in range(filt_ptr[q], filt_ptr[q + 1]):
                e = filt_idx[j]
                if e == tgt or excluded[e]:
                    continue
                excluded[e] = 1
                count -= (scores[q, e] > s_t) | ((scores[q, e] == s_t) & (e < tgt))
            for j in range(filt_ptr[q], filt_ptr[q + 1]):
                excluded[filt_idx[j]] = 0
            ranks[q] = count
    return out
