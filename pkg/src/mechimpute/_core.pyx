# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels: partition refinement and pattern embedding search.

Semantics match ``_core_py`` exactly; see that module for the argument layout.
"""

from libc.stdlib cimport malloc, calloc, free


cdef inline int _cmp_atoms(int a, int b, int *rank, int *ptr, long *codes) noexcept nogil:
    cdef int la, lb, m, j
    if rank[a] != rank[b]:
        return -1 if rank[a] < rank[b] else 1
    la = ptr[a + 1] - ptr[a]
    lb = ptr[b + 1] - ptr[b]
    m = la if la < lb else lb
    for j in range(m):
        if codes[ptr[a] + j] != codes[ptr[b] + j]:
            return -1 if codes[ptr[a] + j] < codes[ptr[b] + j] else 1
    if la != lb:
        return -1 if la < lb else 1
    return 0


cdef void _merge_sort(int *arr, int *tmp, int n, int *rank, int *ptr, long *codes) noexcept nogil:
    cdef int width = 1, lo, mid, hi, i, j, k
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if _cmp_atoms(arr[j], arr[i], rank, ptr, codes) < 0:
                    tmp[k] = arr[j]
                    j += 1
                else:
                    tmp[k] = arr[i]
                    i += 1
                k += 1
            while i < mid:
                tmp[k] = arr[i]
                i += 1
                k += 1
            while j < hi:
                tmp[k] = arr[j]
                j += 1
                k += 1
            lo += 2 * width
        for i in range(n):
            arr[i] = tmp[i]
        width *= 2


cdef void _sort_longs(long *a, int n) noexcept nogil:
    cdef int i, j
    cdef long v
    for i in range(1, n):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


def refine_ranks(ranks, ptr, idx, ords):
    cdef int n = len(ranks)
    cdef int m = len(idx)
    cdef int i, k, pos, cells, ncells, prev
    cdef int *cur = <int *> malloc((n + 1) * sizeof(int))
    cdef int *new = <int *> malloc((n + 1) * sizeof(int))
    cdef int *cptr = <int *> malloc((n + 1) * sizeof(int))
    cdef int *cidx = <int *> malloc((m + 1) * sizeof(int))
    cdef int *cord = <int *> malloc((m + 1) * sizeof(int))
    cdef long *codes = <long *> malloc((m + 1) * sizeof(long))
    cdef int *order = <int *> malloc((n + 1) * sizeof(int))
    cdef int *tmp = <int *> malloc((n + 1) * sizeof(int))
    try:
        for i in range(n):
            cur[i] = ranks[i]
        for i in range(n + 1):
            cptr[i] = ptr[i]
        for k in range(m):
            cidx[k] = idx[k]
            cord[k] = ords[k]
        ncells = len(set(ranks))
        with nogil:
            while True:
                for i in range(n):
                    for k in range(cptr[i], cptr[i + 1]):
                        codes[k] = <long> cur[cidx[k]] * 8 + cord[k]
                    _sort_longs(codes + cptr[i], cptr[i + 1] - cptr[i])
                for i in range(n):
                    order[i] = i
                _merge_sort(order, tmp, n, cur, cptr, codes)
                cells = 0
                for pos in range(n):
                    i = order[pos]
                    if pos > 0 and _cmp_atoms(i, order[pos - 1], cur, cptr, codes) == 0:
                        new[i] = new[order[pos - 1]]
                    else:
                        new[i] = pos
                        cells += 1
                for i in range(n):
                    cur[i] = new[i]
                if cells == ncells:
                    break
                ncells = cells
        return [cur[i] for i in range(n)]
    finally:
        free(cur)
        free(new)
        free(cptr)
        free(cidx)
        free(cord)
        free(codes)
        free(order)
        free(tmp)


cdef struct MatchCtx:
    int k
    int n
    unsigned char *compat
    int *back_ptr
    int *back_pos
    int *back_ord
    signed char *adj
    int *ptr
    int *nbr_sorted
    int *assign
    unsigned char *used


cdef void _rec(MatchCtx *c, int p, list out):
    cdef int lo, hi, anchor, t, q, j, start, stop, b
    cdef bint ok
    if p == c.k:
        out.append(tuple([c.assign[j] for j in range(c.k)]))
        return
    lo = c.back_ptr[p]
    hi = c.back_ptr[p + 1]
    if lo < hi:
        anchor = c.assign[c.back_pos[lo]]
        start = c.ptr[anchor]
        stop = c.ptr[anchor + 1]
    else:
        start = 0
        stop = c.n
    for j in range(start, stop):
        t = c.nbr_sorted[j] if lo < hi else j
        if c.used[t] or not c.compat[p * c.n + t]:
            continue
        ok = True
        for q in range(lo, hi):
            b = c.adj[c.assign[c.back_pos[q]] * c.n + t]
            if b == 0 or (c.back_ord[q] != 0 and b != c.back_ord[q]):
                ok = False
                break
        if ok:
            c.assign[p] = t
            c.used[t] = 1
            _rec(c, p + 1, out)
            c.used[t] = 0
    c.assign[p] = -1


def match_pattern(compat, back_ptr, back_pos, back_ord, ptr, idx, ords):
    cdef int k = len(compat)
    if k == 0:
        return [()]
    cdef int n = len(compat[0])
    cdef int nb = len(back_pos)
    cdef int m = len(idx)
    cdef int i, j, p, a
    cdef MatchCtx c
    out = []
    c.k = k
    c.n = n
    c.compat = <unsigned char *> malloc(k * n + 1)
    c.back_ptr = <int *> malloc((k + 1) * sizeof(int))
    c.back_pos = <int *> malloc((nb + 1) * sizeof(int))
    c.back_ord = <int *> malloc((nb + 1) * sizeof(int))
    c.adj = <signed char *> calloc(n * n + 1, 1)
    c.ptr = <int *> malloc((n + 1) * sizeof(int))
    c.nbr_sorted = <int *> malloc((m + 1) * sizeof(int))
    c.assign = <int *> malloc((k + 1) * sizeof(int))
    c.used = <unsigned char *> calloc(n + 1, 1)
    try:
        for p in range(k):
            row = compat[p]
            for i in range(n):
                c.compat[p * n + i] = 1 if row[i] else 0
            c.assign[p] = -1
        for p in range(k + 1):
            c.back_ptr[p] = back_ptr[p]
        for j in range(nb):
            c.back_pos[j] = back_pos[j]
            c.back_ord[j] = back_ord[j]
        for i in range(n + 1):
            c.ptr[i] = ptr[i]
        for i in range(n):
            nbrs = sorted(idx[ptr[i]:ptr[i + 1]])
            for j in range(len(nbrs)):
                c.nbr_sorted[c.ptr[i] + j] = nbrs[j]
            for j in range(ptr[i], ptr[i + 1]):
                a = idx[j]
                c.adj[i * n + a] = ords[j]
        _rec(&c, 0, out)
        return out
    finally:
        free(c.compat)
        free(c.back_ptr)
        free(c.back_pos)
        free(c.back_ord)
        free(c.adj)
        free(c.ptr)
        free(c.nbr_sorted)
        free(c.assign)
        free(c.used)
