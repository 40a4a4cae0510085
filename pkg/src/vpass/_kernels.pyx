# cython: language_level=3
"""Compiled kernels for the recurrence, the c scan and the exhaustive oracles.

Signatures and results match ``_kernels_py`` exactly.
"""

from libc.stdlib cimport malloc, free

DEF MAXN = 64


cdef inline void _fill(long *dst, object seq, int n):
    cdef int i
    for i in range(n):
        dst[i] = seq[i]


cdef inline void _respond(const long *xs, long a, const long *ys, long c, long z,
                          int n, long *out) noexcept nogil:
    cdef long k = (a * xs[0] + ys[0] + xs[1] + c) % z
    cdef int i, j
    out[0] = k
    for i in range(1, n):
        j = i + 1 if i + 1 < n else 0
        k = (a * k + ys[i] + xs[i] + c + xs[j]) % z
        out[i] = k


cdef inline bint _same(const long *p, const long *q, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        if p[i] != q[i]:
            return False
    return True


cdef inline long _scan(const long *xs, long a, const long *ys, const long *ks,
                       long z, int n, long *tried) noexcept nogil:
    cdef long buf[MAXN]
    cdef long c
    for c in range(z):
        _respond(xs, a, ys, c, z, n, buf)
        if _same(buf, ks, n):
            tried[0] = c + 1
            return c
    tried[0] = z
    return -1


cdef inline bint _next_digits(long *xs, int n, long z) noexcept nogil:
    # odometer increment, last position fastest; False once exhausted
    cdef int i = n - 1
    while i >= 0:
        xs[i] += 1
        if xs[i] < z:
            return True
        xs[i] = 0
        i -= 1
    return False


def response(xs, long a, ys, long c, long z):
    cdef int n = len(xs)
    if n > MAXN:
        raise ValueError("sequence too long for compiled kernel")
    cdef long cx[MAXN]
    cdef long cy[MAXN]
    cdef long out[MAXN]
    _fill(cx, xs, n)
    _fill(cy, ys, n)
    _respond(cx, a, cy, c, z, n, out)
    return tuple([out[i] for i in range(n)])


def scan_c(xs, long a, ys, ks, long z):
    cdef int n = len(xs)
    if n > MAXN:
        raise ValueError("sequence too long for compiled kernel")
    cdef long cx[MAXN]
    cdef long cy[MAXN]
    cdef long ck[MAXN]
    cdef long tried = 0
    _fill(cx, xs, n)
    _fill(cy, ys, n)
    _fill(ck, ks, n)
    cdef long c = _scan(cx, a, cy, ck, z, n, &tried)
    return c, tried


def consistent_keys(units, int n, long z, salts, responses):
    cdef int m = len(salts)
    cdef int t, i
    cdef long a, tried
    cdef bint ok
    cdef long xs[MAXN]
    cdef long *ys = <long *> malloc(max(m, 1) * n * sizeof(long))
    cdef long *ks = <long *> malloc(max(m, 1) * n * sizeof(long))
    found = []
    try:
        for t in range(m):
            _fill(ys + t * n, salts[t], n)
            _fill(ks + t * n, responses[t], n)
        for a in units:
            for i in range(n):
                xs[i] = 0
            while True:
                ok = True
                for t in range(m):
                    if _scan(xs, a, ys + t * n, ks + t * n, z, n, &tried) < 0:
                        ok = False
                        break
                if ok:
                    found.append((tuple([xs[i] for i in range(n)]), a))
                if not _next_digits(xs, n, z):
                    break
    finally:
        free(ys)
        free(ks)
    return found


def reachable_keys_modified(units, int n, long z, responses):
    cdef int m = len(responses)
    cdef int t, i
    cdef long a
    cdef bint ok, hit
    cdef long xs[MAXN]
    cdef long ys[MAXN]
    cdef long buf[MAXN]
    cdef long *ks = <long *> malloc(max(m, 1) * n * sizeof(long))
    found = []
    try:
        for t in range(m):
            _fill(ks + t * n, responses[t], n)
        for a in units:
            for i in range(n):
                xs[i] = 0
            while True:
                ok = True
                for t in range(m):
                    hit = False
                    for i in range(n):
                        ys[i] = 0
                    while True:
                        _respond(xs, a, ys, 0, z, n, buf)
                        if _same(buf, ks + t * n, n):
                            hit = True
                            break
                        if not _next_digits(ys, n, z):
                            break
                    if not hit:
                        ok = False
                        break
                if ok:
                    found.append((tuple([xs[i] for i in range(n)]), a))
                if not _next_digits(xs, n, z):
                    break
    finally:
        free(ks)
    return found
