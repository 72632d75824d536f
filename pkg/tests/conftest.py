from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from mechimpute.dataset import emit_dataset, impute_many
from mechimpute.molgraph import Atom, Bond, BondOrder, Molecule, canonical_form
from mechimpute.network import Limits, ReactionRecord
from mechimpute.templates import load_starter_pack

DATA = Path(__file__).parent / "data"
PKG_DATA = Path(__file__).parent.parent / "src" / "mechimpute" / "data"
DESK = PKG_DATA / "desk_corpus.jsonl"


def desk_raw() -> list[dict]:
    return [json.loads(line) for line in DESK.read_text().splitlines() if line.strip()]


def desk_records() -> list[ReactionRecord]:
    return [ReactionRecord.from_json(o) for o in desk_raw()]


def record(rid: str) -> ReactionRecord:
    return next(r for r in desk_records() if r.id == rid)


def molecule_corpus() -> list[str]:
    return [ln.strip() for ln in (DATA / "molecules.smi").read_text().splitlines() if ln.strip()]


_VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1}


def random_molecule(rng: random.Random, n_atoms: int, ring_bonds: int = 1) -> Molecule:
    """Connected random heavy-atom graph with valence-consistent implicit H."""
    elems = [rng.choice("CCCCCNNOOS") for _ in range(n_atoms)]
    elems = [e if e != "S" else rng.choice(["S", "Cl", "F"]) for e in elems]
    used = [0] * n_atoms
    bonds: dict[tuple[int, int], int] = {}

    def room(i: int) -> int:
        return _VALENCE[elems[i]] - used[i]

    for i in range(1, n_atoms):
        partners = [j for j in range(i) if room(j) >= 1]
        if not partners:
            elems[i] = "C"
            partners = [j for j in range(i) if room(j) >= 1] or [0]
        j = rng.choice(partners)
        order = 1
        if room(j) >= 2 and room(i) >= 2 and rng.random() < 0.2:
            order = 2
        bonds[(j, i)] = order
        used[i] += order
        used[j] += order
    for _ in range(ring_bonds):
        a, b = rng.sample(range(n_atoms), 2) if n_atoms > 2 else (0, 0)
        key = (min(a, b), max(a, b))
        if a != b and key not in bonds and room(a) >= 1 and room(b) >= 1:
            bonds[key] = 1
            used[a] += 1
            used[b] += 1
    atoms = tuple(Atom(e, implicit_h=max(0, _VALENCE[e] - used[i])) for i, e in enumerate(elems))
    return Molecule(atoms, tuple(Bond(a, b, BondOrder(o)) for (a, b), o in bonds.items()))


def random_permutation(mol: Molecule, rng: random.Random) -> Molecule:
    perm = list(range(len(mol.atoms)))
    rng.shuffle(perm)
    return mol.relabel(perm)


@pytest.fixture(scope="session")
def pack():
    return load_starter_pack()


@pytest.fixture(scope="session")
def imputations(pack):
    return {imp.record.id: imp for imp in impute_many(desk_records(), pack)}


@pytest.fixture(scope="session")
def generated(tmp_path_factory, pack):
    out = tmp_path_factory.mktemp("gen")
    manifest = emit_dataset(desk_raw(), pack, out, Limits(), (0.8, 0.1, 0.1), seed=0)
    return out, manifest


@pytest.fixture(scope="session")
def network_species(imputations) -> list[str]:
    seen: dict[str, None] = {}
    for imp in imputations.values():
        if imp.network is None:
            continue
        for state in imp.network.nodes.values():
            for mol in state.molecules:
                seen.setdefault(canonical_form(mol))
    return list(seen)
