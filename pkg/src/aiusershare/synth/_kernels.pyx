# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled population kernel. Must stay bit-identical to ``_kernels_py``."""
import numpy as np

from libc.stdint cimport int32_t, uint8_t, uint64_t


cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t NSTREAMS = 8


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _u(uint64_t key, uint64_t counter) noexcept nogil:
    return <double>(_mix(key + counter * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)


def stream_key(uint64_t seed):
    return _mix(seed + GOLDEN)


def uniforms(uint64_t seed, uint64_t economy, Py_ssize_t n, uint64_t stream):
    """Uniform [0, 1) draws for individuals ``0..n-1`` of one stream."""
    cdef uint64_t key = _mix(seed + GOLDEN)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef uint64_t base = economy << 32
    with nogil:
        for i in range(n):
            ov[i] = _u(key, (base + <uint64_t>i) * NSTREAMS + stream)
    return out


def generate_block(uint64_t seed, uint64_t economy, Py_ssize_t n,
                   double p_desktop, double p_ms, double p_opt, int minutes_max,
                   double q_desktop, double p_mobile, double q_mobile, double rho):
    """Flags (bit field) and monthly minutes for one economy's individuals."""
    cdef uint64_t key = _mix(seed + GOLDEN)
    flags = np.zeros(n, dtype=np.uint8)
    minutes = np.empty(n, dtype=np.int32)
    cdef uint8_t[::1] fv = flags
    cdef int32_t[::1] mv = minutes
    cdef Py_ssize_t i
    cdef uint64_t c
    cdef uint8_t f
    cdef bint has_d, ms
    cdef double ud, um, sel
    cdef double span = <double>(minutes_max + 1)
    cdef uint64_t base = economy << 32
    with nogil:
        for i in range(n):
            c = (base + <uint64_t>i) * NSTREAMS
            f = 0
            has_d = _u(key, c) < p_desktop
            if has_d:
                f |= 1
                ms = _u(key, c + 1) < p_ms
                if ms:
                    f |= 2
                    if _u(key, c + 2) < p_opt:
                        f |= 4
            mv[i] = <int32_t>(_u(key, c + 3) * span)
            ud = _u(key, c + 4)
            if has_d and ud < q_desktop:
                f |= 8
            if _u(key, c + 5) < p_mobile:
                f |= 16
                sel = _u(key, c + 7)
                if rho >= 0.0:
                    um = ud if sel < rho else _u(key, c + 6)
                else:
                    um = (1.0 - ud) if sel < -rho else _u(key, c + 6)
                if um < q_mobile:
                    f |= 32
            fv[i] = f
    return flags, minutes
