# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled block-codec kernel: fused 8x8 DCT, quantization, exp-Golomb bit
accounting, and inverse transform for one plane."""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport fabs, floor

from ._tables import DCT_BASIS, ZIGZAG

cnp.import_array()

cdef double[8][8] _BASIS
cdef long[64] _ZZ

_basis_arr = np.ascontiguousarray(DCT_BASIS, dtype=np.float64)
_zz_arr = np.ascontiguousarray(ZIGZAG, dtype=np.int64)
cdef Py_ssize_t _i, _j
for _i in range(8):
    for _j in range(8):
        _BASIS[_i][_j] = _basis_arr[_i, _j]
for _i in range(64):
    _ZZ[_i] = _zz_arr[_i]


cdef inline long _ue_len(long v) nogil:
    cdef long n = v + 1
    cdef long bits = 0
    while n > 0:
        n >>= 1
        bits += 1
    return 2 * (bits - 1) + 1


def encode_plane(cnp.ndarray[cnp.float64_t, ndim=2] residual, double step):
    """Same contract as the numpy fallback: (bit_count, recon_residual)."""
    cdef Py_ssize_t h = residual.shape[0]
    cdef Py_ssize_t w = residual.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] recon = np.empty((h, w), dtype=np.float64)
    cdef double[:, :] res = residual
    cdef double[:, :] rec = recon

    cdef double[8][8] blk
    cdef double[8][8] tmp
    cdef double[8][8] coef
    cdef long[64] lv
    cdef long total_bits = 0
    cdef Py_ssize_t by, bx, i, j, k
    cdef double acc, q
    cdef long level, run, last_nz, idx
    cdef bint any_nz

    with nogil:
        for by in range(0, h, 8):
            for bx in range(0, w, 8):
                for i in range(8):
                    for j in range(8):
                        blk[i][j] = res[by + i, bx + j]

                # forward: coef = B @ blk @ B.T
                for i in range(8):
                    for j in range(8):
                        acc = 0.0
                        for k in range(8):
                            acc += _BASIS[i][k] * blk[k][j]
                        tmp[i][j] = acc
                for i in range(8):
                    for j in range(8):
                        acc = 0.0
                        for k in range(8):
                            acc += tmp[i][k] * _BASIS[j][k]
                        coef[i][j] = acc

                # quantize (round half away from zero)
                for i in range(8):
                    for j in range(8):
                        q = coef[i][j] / step
                        if q >= 0.0:
                            level = <long> floor(q + 0.5)
                        else:
                            level = -(<long> floor(-q + 0.5))
                        lv[i * 8 + j] = level
                        coef[i][j] = level * step

                # bit accounting in zigzag order with zero runs
                total_bits += 1
                any_nz = False
                run = 0
                for idx in range(64):
                    level = lv[_ZZ[idx]]
                    if level == 0:
                        run += 1
                    else:
                        any_nz = True
                        total_bits += _ue_len(run)
                        total_bits += _ue_len(level if level > 0 else -level) + 1
                        run = 0
                if any_nz:
                    total_bits += 1

                # inverse: rec = B.T @ coef @ B
                for i in range(8):
                    for j in range(8):
                        acc = 0.0
                        for k in range(8):
                            acc += _BASIS[k][i] * coef[k][j]
                        tmp[i][j] = acc
                for i in range(8):
                    for j in range(8):
                        acc = 0.0
                        for k in range(8):
                            acc += tmp[i][k] * _BASIS[k][j]
                        rec[by + i, bx + j] = acc

    return total_bits, recon
