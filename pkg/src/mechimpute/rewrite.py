"""Template matching against state bags and edit application."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from mechimpute import kernels
from mechimpute.molgraph import ATOMIC_NUMBER, MAX_ABS_CHARGE, Bond, BondOrder, Molecule, StateBag
from mechimpute.templates import ElementaryTemplate, PatternGraph


class EditFault(RuntimeError):
    """A template edit could not be applied; this points at a faulty template."""


@dataclass(frozen=True)
class Embedding:
    """Slot assignment of one pattern match: ``(slot, molecule index, atom index)`` triples."""

    mapping: tuple[tuple[int, int, int], ...]

    @property
    def assignment(self) -> dict[int, tuple[int, int]]:
        return {s: (m, a) for s, m, a in self.mapping}

    @property
    def signature(self) -> str:
        return ",".join(f"{s}:{m}.{a}" for s, m, a in self.mapping)

    @classmethod
    def from_signature(cls, text: str) -> Embedding:
        if not text:
            return cls(())
        out = []
        for part in text.split(","):
            slot, rest = part.split(":")
            mol, atom = rest.split(".")
            out.append((int(slot), int(mol), int(atom)))
        return cls(tuple(sorted(out)))


@dataclass(frozen=True)
class _Flat:
    owner: tuple[tuple[int, int], ...]  # global index -> (molecule, atom)
    offsets: tuple[int, ...]
    z: np.ndarray
    charge: np.ndarray
    h: np.ndarray
    aromatic: np.ndarray
    ring: np.ndarray
    degree: np.ndarray
    ptr: list[int]
    idx: list[int]
    ords: list[int]


@lru_cache(maxsize=50_000)
def _flatten(state: StateBag) -> _Flat:
    owner = []
    offsets = []
    z, charge, h, arom, ring, deg = [], [], [], [], [], []
    ptr, idx, ords = [0], [], []
    base = 0
    for mi, mol in enumerate(state.molecules):
        offsets.append(base)
        rings = mol.ring_atoms
        for ai, atom in enumerate(mol.atoms):
            owner.append((mi, ai))
            z.append(ATOMIC_NUMBER[atom.element])
            charge.append(atom.charge)
            h.append(atom.implicit_h)
            arom.append(atom.aromatic)
            ring.append(ai in rings)
            deg.append(mol.degree(ai))
            for w, order in mol.adjacency[ai]:
                idx.append(base + w)
                ords.append(int(order))
            ptr.append(len(idx))
        base += len(mol.atoms)
    return _Flat(
        tuple(owner), tuple(offsets), np.array(z, dtype=np.int32), np.array(charge, dtype=np.int32),
        np.array(h, dtype=np.int32), np.array(arom, dtype=bool), np.array(ring, dtype=bool),
        np.array(deg, dtype=np.int32), ptr, idx, ords,
    )


def _compat_row(pa, flat: _Flat) -> np.ndarray:
    mask = np.ones(len(flat.owner), dtype=bool)
    if pa.elements is not None:
        mask &= np.isin(flat.z, [ATOMIC_NUMBER[e] for e in pa.elements])
    if pa.charge is not None:
        mask &= flat.charge == pa.charge
    if pa.h_exact is not None:
        mask &= flat.h == pa.h_exact
    if pa.min_h is not None:
        mask &= flat.h >= pa.min_h
    if pa.max_h is not None:
        mask &= flat.h <= pa.max_h
    if pa.aromatic is not None:
        mask &= flat.aromatic == pa.aromatic
    if pa.in_ring is not None:
        mask &= flat.ring == pa.in_ring
    if pa.max_degree is not None:
        mask &= flat.degree <= pa.max_degree
    return mask


def _search_order(pattern: PatternGraph, counts: dict[int, int]) -> list[int]:
    """Rarest slot first, then grow along pattern bonds (rarest neighbor next)."""
    nbrs: dict[int, set[int]] = {s: set() for s in pattern.slots}
    for a, b, _ in pattern.bonds:
        nbrs[a].add(b)
        nbrs[b].add(a)
    order: list[int] = []
    placed: set[int] = set()
    remaining = set(pattern.slots)
    while remaining:
        frontier = [s for s in remaining if nbrs[s] & placed]
        pool = frontier or remaining
        nxt = min(pool, key=lambda s: (counts[s], s))
        order.append(nxt)
        placed.add(nxt)
        remaining.discard(nxt)
    return order


def find_matches(pattern: PatternGraph, state: StateBag, distinct_molecules: bool = False) -> list[Embedding]:
    """All embeddings of ``pattern`` in ``state``, sorted by signature.

    Distinct pattern components may land in the same molecule unless
    ``distinct_molecules`` is set.
    """
    if not pattern.atoms:
        return [Embedding(())]
    flat = _flatten(state)
    if not flat.owner:
        return []
    rows = {pa.slot: _compat_row(pa, flat) for pa in pattern.atoms}
    counts = {s: int(r.sum()) for s, r in rows.items()}
    if min(counts.values()) == 0:
        return []
    order = _search_order(pattern, counts)
    pos = {s: i for i, s in enumerate(order)}
    back_ptr, back_pos, back_ord = [0], [], []
    for s in order:
        earlier = sorted(
            (pos[b if a == s else a], o)
            for a, b, o in pattern.bonds
            if s in (a, b) and pos[b if a == s else a] < pos[s]
        )
        for p, o in earlier:
            back_pos.append(p)
            back_ord.append(o)
        back_ptr.append(len(back_pos))
    compat = [rows[s].astype(np.uint8).tolist() for s in order]
    raw = kernels.match_pattern(compat, back_ptr, back_pos, back_ord, flat.ptr, flat.idx, flat.ords)
    comps = pattern.components
    out = {}
    for hit in raw:
        mapping = tuple(sorted((s, *flat.owner[hit[pos[s]]]) for s in pattern.slots))
        if distinct_molecules and len(comps) > 1:
            slot_mol = {s: m for s, m, _ in mapping}
            mols = [slot_mol[c[0]] for c in comps]
            if len(set(mols)) != len(mols):
                continue
        emb = Embedding(mapping)
        out[emb.signature] = emb
    return [out[k] for k in sorted(out)]


def check_required_agents(template: ElementaryTemplate, state: StateBag) -> bool:
    return all(find_matches(agent, state) for agent in template.required_agents)


def apply(template: ElementaryTemplate, state: StateBag, embedding: Embedding) -> StateBag:
    """Apply the template's edits, in order, at ``embedding``; re-split species after."""
    if template.is_termination:
        return state
    flat = _flatten(state)
    slot_to_global = {s: flat.offsets[m] + a for s, m, a in embedding.mapping}
    atoms = [atom for mol in state.molecules for atom in mol.atoms]
    bonds: dict[tuple[int, int], BondOrder] = {}
    stereo: dict[tuple[int, int], str | None] = {}
    for mi, mol in enumerate(state.molecules):
        base = flat.offsets[mi]
        for bd in mol.bonds:
            bonds[(base + bd.a, base + bd.b)] = bd.order
            stereo[(base + bd.a, base + bd.b)] = bd.stereo
    for edit in template.edits:
        try:
            g = [slot_to_global[s] for s in edit.slots]
        except KeyError as exc:
            raise EditFault(f"{template.id}: slot {exc.args[0]} missing from embedding") from None
        if edit.kind in ("make_bond", "break_bond", "set_order"):
            key = (min(g), max(g))
            if edit.kind == "make_bond":
                if key in bonds:
                    raise EditFault(f"{template.id}: make_bond on already bonded slots {edit.slots}")
                bonds[key] = BondOrder(edit.value)
            elif key not in bonds:
                raise EditFault(f"{template.id}: {edit.kind} on missing bond {edit.slots}")
            elif edit.kind == "break_bond":
                del bonds[key]
                stereo.pop(key, None)
            else:
                bonds[key] = BondOrder(edit.value)
            continue
        atom = atoms[g[0]]
        if edit.kind == "delta_h":
            new_h = atom.implicit_h + edit.value
            if new_h < 0:
                raise EditFault(f"{template.id}: delta_h drives implicit_h below 0 on slot {edit.slots[0]}")
            atoms[g[0]] = replace(atom, implicit_h=new_h)
        elif edit.kind == "delta_charge":
            new_q = atom.charge + edit.value
            if abs(new_q) > MAX_ABS_CHARGE:
                raise EditFault(f"{template.id}: charge {new_q} out of range on slot {edit.slots[0]}")
            atoms[g[0]] = replace(atom, charge=new_q)
        elif edit.kind == "set_aromatic":
            atoms[g[0]] = replace(atom, aromatic=bool(edit.value))
        else:
            raise EditFault(f"{template.id}: unknown edit {edit.kind}")
    merged = Molecule(tuple(atoms), tuple(Bond(a, b, o, stereo.get((a, b))) for (a, b), o in bonds.items()))
    return StateBag((merged,))


def enumerate_applications(
    template: ElementaryTemplate, state: StateBag, check_agents: bool = True
) -> list[tuple[Embedding, StateBag]]:
    """One entry per distinct successor, in embedding-signature order.

    Embeddings whose edits cannot be carried out are skipped.
    """
    if template.is_termination:
        return [(Embedding(()), state)]
    if check_agents and not check_required_agents(template, state):
        return []
    seen: set[str] = set()
    out = []
    for emb in find_matches(template.pattern, state, template.distinct_molecules):
        try:
            succ = apply(template, state, emb)
        except EditFault:
            continue
        if succ.key in seen:
            continue
        seen.add(succ.key)
        out.append((emb, succ))
    return out
