"""Independent brute-force oracles used by the tests."""

from __future__ import annotations

import itertools
from collections.abc import Sequence

from mechimpute.beam import RankedCandidate, discounted_rank
from mechimpute.molgraph import StateBag
from mechimpute.templates import ANY_ORDER, PatternGraph


def brute_matches(pattern: PatternGraph, state: StateBag, distinct_molecules: bool = False) -> list[str]:
    """All injective slot assignments satisfying atom and bond constraints, as sorted signatures."""
    atoms = [(mi, ai) for mi, mol in enumerate(state.molecules) for ai in range(len(mol.atoms))]
    cands = []
    for pa in pattern.atoms:
        ok = []
        for mi, ai in atoms:
            mol = state.molecules[mi]
            if pa.accepts(mol.atoms[ai], mol.degree(ai), ai in mol.ring_atoms):
                ok.append((mi, ai))
        cands.append(ok)
    slots = pattern.slots
    out = set()
    for combo in itertools.product(*cands):
        if len(set(combo)) != len(combo):
            continue
        where = dict(zip(slots, combo))
        good = True
        for a, b, order in pattern.bonds:
            (ma, aa), (mb, ab) = where[a], where[b]
            if ma != mb:
                good = False
                break
            have = state.molecules[ma].bond_between(aa, ab)
            if have is None or (order != ANY_ORDER and int(have) != order):
                good = False
                break
        if not good:
            continue
        if distinct_molecules and len(pattern.components) > 1:
            mols = [where[c[0]][0] for c in pattern.components]
            if len(set(mols)) != len(mols):
                continue
        out.add(",".join(f"{s}:{m}.{a}" for s, (m, a) in sorted(where.items())))
    return sorted(out)


class TableRanker:
    """Synthetic ranker over named states: ``table[name]`` lists candidate names in rank order.

    The name ``"stop"`` stands for the stop candidate. States are distinct
    alkanes so they have real keys.
    """

    def __init__(self, table: dict[str, Sequence[str]]):
        self.table = table
        names = sorted(set(table) | {c for v in table.values() for c in v if c != "stop"})
        self.state = {n: StateBag.from_smiles(["C" * (i + 1)]) for i, n in enumerate(names)}
        self.name = {s.key: n for n, s in self.state.items()}
        self.calls: list[str] = []

    def rank(self, state: StateBag) -> list[RankedCandidate]:
        name = self.name[state.key]
        self.calls.append(name)
        out = []
        for r, c in enumerate(self.table.get(name, ["stop"]), start=1):
            if c == "stop":
                out.append(RankedCandidate(state, r, 1.0 / (r + 1), True, "stop"))
            else:
                out.append(RankedCandidate(self.state[c], r, 1.0 / (r + 1), False, f"{name}->{c}"))
        return out


def exhaustive_paths(table: dict[str, Sequence[str]], root: str, gamma: float, max_depth: int):
    """Every simple candidate sequence from ``root`` that ends in stop: (R, names, ranks)."""
    out = []

    def walk(node: str, visited: tuple[str, ...], ranks: tuple[int, ...]) -> None:
        if len(ranks) >= max_depth:
            return
        for r, c in enumerate(table.get(node, ["stop"]), start=1):
            if c == "stop":
                rr = ranks + (r,)
                out.append((discounted_rank(rr, gamma), visited, rr))
            elif c not in visited:
                walk(c, visited + (c,), ranks + (r,))

    walk(root, (root,), ())
    return sorted(out)
