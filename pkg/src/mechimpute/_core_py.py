"""Pure-Python versions of the hot graph kernels.

Both functions mirror the compiled versions in ``_core.pyx`` exactly and are
used when the extension is not built (or ``MECHIMPUTE_PURE_PYTHON`` is set).

Graphs are passed in CSR form: ``ptr`` (n + 1 offsets), ``idx`` (neighbor
indices) and ``ords`` (bond order codes, parallel to ``idx``).
"""

from __future__ import annotations

from collections.abc import Sequence


def refine_ranks(
    ranks: Sequence[int],
    ptr: Sequence[int],
    idx: Sequence[int],
    ords: Sequence[int],
) -> list[int]:
    """Refine a vertex partition until it is equitable.

    Ranks use the "start position" convention: every vertex in a cell carries
    the sorted position of the cell's first member. Refinement only ever splits
    cells and keeps the relative order of existing cells.
    """
    n = len(ranks)
    cur = list(ranks)
    ncells = len(set(cur))
    while True:
        keys = []
        for i in range(n):
            sig = sorted(cur[idx[k]] * 8 + ords[k] for k in range(ptr[i], ptr[i + 1]))
            keys.append((cur[i], sig))
        order = sorted(range(n), key=keys.__getitem__)
        new = [0] * n
        cells = 0
        for pos, i in enumerate(order):
            if pos and keys[i] == keys[order[pos - 1]]:
                new[i] = new[order[pos - 1]]
            else:
                new[i] = pos
                cells += 1
        if cells == ncells:
            return new
        cur = new
        ncells = cells


def match_pattern(
    compat: Sequence[Sequence[int]],
    back_ptr: Sequence[int],
    back_pos: Sequence[int],
    back_ord: Sequence[int],
    ptr: Sequence[int],
    idx: Sequence[int],
    ords: Sequence[int],
) -> list[tuple[int, ...]]:
    """Enumerate every injective pattern embedding.

    ``compat[p][t]`` says whether pattern position ``p`` may sit on target atom
    ``t``. Position ``p`` must be bonded to the earlier positions
    ``back_pos[back_ptr[p]:back_ptr[p + 1]]``; a ``back_ord`` of 0 accepts any
    bond order. Results are tuples of target atoms indexed by position, in
    lexicographic order.
    """
    k = len(compat)
    if k == 0:
        return [()]
    n = len(compat[0])
    adj = [dict(zip(idx[ptr[i]:ptr[i + 1]], ords[ptr[i]:ptr[i + 1]])) for i in range(n)]
    assign = [-1] * k
    used = [False] * n
    out: list[tuple[int, ...]] = []

    def rec(p: int) -> None:
        if p == k:
            out.append(tuple(assign))
            return
        lo, hi = back_ptr[p], back_ptr[p + 1]
        if lo < hi:
            anchor = assign[back_pos[lo]]
            pool = sorted(idx[ptr[anchor]:ptr[anchor + 1]])
        else:
            pool = range(n)
        row = compat[p]
        for t in pool:
            if used[t] or not row[t]:
                continue
            for q in range(lo, hi):
                b = adj[assign[back_pos[q]]].get(t, 0)
                if b == 0 or (back_ord[q] and b != back_ord[q]):
                    break
            else:
                assign[p] = t
                used[t] = True
                rec(p + 1)
                used[t] = False
        assign[p] = -1

    rec(0)
    return out
