# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, floor, log

cnp.import_array()

BACKEND = "cython"


def warp_nearest(const unsigned char[:, :, ::1] img, double m0, double m1,
                 double m2, double m3, double m4, double m5, int fill):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    out = np.empty((h, w, c), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    cdef Py_ssize_t x, y, k, ix, iy
    cdef double sx, sy, fx, fy
    with nogil:
        for y in range(h):
            fy = <double>y
            for x in range(w):
                fx = <double>x
                sx = m0 * fx + m1 * fy
                sx = sx + m2
                sy = m3 * fx + m4 * fy
                sy = sy + m5
                sx = floor(sx + 0.5)
                sy = floor(sy + 0.5)
                if sx >= 0 and sx < w and sy >= 0 and sy < h:
                    ix = <Py_ssize_t>sx
                    iy = <Py_ssize_t>sy
                    for k in range(c):
                        o[y, x, k] = img[iy, ix, k]
                else:
                    for k in range(c):
                        o[y, x, k] = <unsigned char>fill
    return out


def blend(const unsigned char[:, :, ::1] orig,
          const unsigned char[:, :, ::1] degenerate, double factor):
    cdef Py_ssize_t h = orig.shape[0], w = orig.shape[1], c = orig.shape[2]
    out = np.empty((h, w, c), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] o = out
    cdef Py_ssize_t x, y, k
    cdef double g = 1.0 - factor, v, a, b
    with nogil:
        for y in range(h):
            for x in range(w):
                for k in range(c):
                    a = g * <double>degenerate[y, x, k]
                    b = factor * <double>orig[y, x, k]
                    v = floor(a + b + 0.5)
                    if v < 0:
                        v = 0
                    elif v > 255:
                        v = 255
                    o[y, x, k] = <unsigned char>v
    return out


def box_blur3(const unsigned char[:, :, ::1] img):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    out = np.array(img, dtype=np.uint8, copy=True)
    if h < 3 or w < 3:
        return out
    cdef unsigned char[:, :, ::1] o = out
    cdef Py_ssize_t x, y, k, dy, dx
    cdef long acc
    with nogil:
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                for k in range(c):
                    acc = 0
                    for dy in range(-1, 2):
                        for dx in range(-1, 2):
                            acc += img[y + dy, x + dx, k]
                    o[y, x, k] = <unsigned char>((acc + 4) // 9)
    return out


def kl_rows(const double[:, ::1] p, const double[:, ::1] q, double floor_):
    cdef Py_ssize_t n = p.shape[0], kk = p.shape[1], i, k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double s, pk, qk
    with nogil:
        for i in range(n):
            s = 0.0
            for k in range(kk):
                pk = p[i, k]
                if pk > 0:
                    qk = q[i, k]
                    if qk < floor_:
                        qk = floor_
                    s += pk * log(pk / qk)
            o[i] = s if s > 0 else 0.0
    return out


def push_deltas(double[:, ::1] window, cnp.int64_t[::1] count,
                cnp.int64_t[::1] head, idx, values):
    cdef cnp.int64_t[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t cap = window.shape[1], j, i
    with nogil:
        for j in range(ix.shape[0]):
            i = ix[j]
            window[i, head[i]] = vals[j]
            head[i] = (head[i] + 1) % cap
            if count[i] < cap:
                count[i] += 1


def window_variance(const double[:, ::1] window, const cnp.int64_t[::1] count):
    cdef Py_ssize_t n = window.shape[0], i, j, m
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double mean, d, s, shift
    with nogil:
        for i in range(n):
            m = count[i]
            if m < 2:
                continue
            shift = window[i, 0]
            s = 0.0
            for j in range(m):
                s += window[i, j] - shift
            mean = s / m
            s = 0.0
            for j in range(m):
                d = (window[i, j] - shift) - mean
                s += d * d
            o[i] = s
    return out


def record_rows(double[:, ::1] last_probs, cnp.int64_t[::1] last_epoch,
                double[:, ::1] window, cnp.int64_t[::1] count, cnp.int64_t[::1] head,
                double[::1] last_delta, const cnp.int64_t[::1] idx,
                const double[:, ::1] probs, cnp.int64_t epoch, double floor_):
    cdef Py_ssize_t n = last_probs.shape[0], kk = last_probs.shape[1]
    cdef Py_ssize_t cap = window.shape[1], b = idx.shape[0], j, k, i
    cdef double s, pk, qk
    cdef int status = 0
    with nogil:
        for j in range(b):
            i = idx[j]
            if i < 0 or i >= n:
                status = 1
                break
            for k in range(kk):
                pk = probs[j, k]
                if pk != pk or pk - pk != 0.0:
                    status = 2
                    break
            if status:
                break
            if last_epoch[i] >= epoch:
                status = 3
                break
        if status == 0:
            for j in range(b):
                i = idx[j]
                if last_epoch[i] >= 0:
                    s = 0.0
                    for k in range(kk):
                        pk = probs[j, k]
                        if pk > 0:
                            qk = last_probs[i, k]
                            if qk < floor_:
                                qk = floor_
                            s += pk * log(pk / qk)
                    if s < 0:
                        s = 0.0
                    window[i, head[i]] = s
                    head[i] = (head[i] + 1) % cap
                    if count[i] < cap:
                        count[i] += 1
                    last_delta[i] = s
                else:
                    last_delta[i] = NAN
                for k in range(kk):
                    last_probs[i, k] = probs[j, k]
                last_epoch[i] = epoch
    return status
