"""Heavy-atom molecular graphs, SMILES I/O and canonical identity.

Hydrogens are never graph nodes: they live as ``implicit_h`` counts on the
heavy atom that carries them. Aromaticity is taken from the input as written
(lowercase symbols); nothing is perceived or kekulized, because mechanistic
intermediates routinely have broken aromatic systems.
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property, lru_cache

from mechimpute import kernels

log = logging.getLogger(__name__)

ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce "
    "Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn "
    "Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl "
    "Mc Lv Ts Og"
).split()
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(ELEMENTS, start=1)}

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {**AROMATIC_ORGANIC, "se": "Se", "as": "As", "te": "Te", "si": "Si"}

DEFAULT_VALENCE = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}
MAX_ABS_CHARGE = 4


class ParseError(ValueError):
    """Malformed SMILES; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


BOND_SYMBOL = {BondOrder.SINGLE: "-", BondOrder.DOUBLE: "=", BondOrder.TRIPLE: "#", BondOrder.AROMATIC: ":"}
SYMBOL_BOND = {v: k for k, v in BOND_SYMBOL.items()}


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    implicit_h: int = 0
    aromatic: bool = False
    map_id: int | None = None
    isotope: int | None = None
    # opaque; never part of canonical identity
    chirality: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.element not in ATOMIC_NUMBER:
            raise ValueError(f"unknown element {self.element!r}")
        if self.implicit_h < 0:
            raise ValueError(f"negative hydrogen count on {self.element}")
        if abs(self.charge) > MAX_ABS_CHARGE:
            raise ValueError(f"formal charge {self.charge} out of range on {self.element}")

    def invariant(self) -> tuple:
        return (ATOMIC_NUMBER[self.element], self.isotope or 0, self.charge, self.implicit_h, self.aromatic)


@dataclass(frozen=True, order=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    # "/" or "\" as written; kept for output only
    stereo: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError("bond endpoints must differ")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        object.__setattr__(self, "order", BondOrder(self.order))


@dataclass(frozen=True)
class Molecule:
    """Attributed undirected graph over heavy atoms."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        bonds = tuple(sorted(self.bonds))
        seen = set()
        n = len(self.atoms)
        for bd in bonds:
            if bd.b >= n or bd.a < 0:
                raise ValueError(f"bond ({bd.a}, {bd.b}) references a missing atom")
            if (bd.a, bd.b) in seen:
                raise ValueError(f"duplicate bond between {bd.a} and {bd.b}")
            seen.add((bd.a, bd.b))
        object.__setattr__(self, "bonds", bonds)

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, BondOrder], ...], ...]:
        nbrs: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for bd in self.bonds:
            nbrs[bd.a].append((bd.b, bd.order))
            nbrs[bd.b].append((bd.a, bd.order))
        return tuple(tuple(sorted(x)) for x in nbrs)

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def bond_between(self, i: int, j: int) -> BondOrder | None:
        for nb, order in self.adjacency[i]:
            if nb == j:
                return order
        return None

    @cached_property
    def ring_atoms(self) -> frozenset[int]:
        """Atoms that sit on at least one cycle (incident to a non-bridge bond)."""
        n = len(self.atoms)
        disc = [-1] * n
        low = [0] * n
        bridges = set()
        timer = 0
        for root in range(n):
            if disc[root] != -1:
                continue
            disc[root] = low[root] = timer
            timer += 1
            stack = [(root, -1, iter(self.adjacency[root]))]
            while stack:
                v, parent, it = stack[-1]
                for w, _ in it:
                    if disc[w] == -1:
                        disc[w] = low[w] = timer
                        timer += 1
                        stack.append((w, v, iter(self.adjacency[w])))
                        break
                    if w != parent:
                        low[v] = min(low[v], disc[w])
                else:
                    stack.pop()
                    if parent >= 0:
                        low[parent] = min(low[parent], low[v])
                        if low[v] > disc[parent]:
                            bridges.add((min(v, parent), max(v, parent)))
        return frozenset(
            i for bd in self.bonds if (bd.a, bd.b) not in bridges for i in (bd.a, bd.b)
        )

    def components(self) -> list[Molecule]:
        """Split into connected pieces, preserving relative atom order."""
        n = len(self.atoms)
        comp = [-1] * n
        count = 0
        for start in range(n):
            if comp[start] != -1:
                continue
            comp[start] = count
            stack = [start]
            while stack:
                v = stack.pop()
                for w, _ in self.adjacency[v]:
                    if comp[w] == -1:
                        comp[w] = count
                        stack.append(w)
            count += 1
        if count <= 1:
            return [self]
        pieces = []
        for c in range(count):
            members = [i for i in range(n) if comp[i] == c]
            pieces.append(self.subgraph(members))
        return pieces

    def subgraph(self, members: Sequence[int]) -> Molecule:
        remap = {old: new for new, old in enumerate(members)}
        atoms = [self.atoms[i] for i in members]
        bonds = [
            Bond(remap[bd.a], remap[bd.b], bd.order, bd.stereo)
            for bd in self.bonds
            if bd.a in remap and bd.b in remap
        ]
        return Molecule(tuple(atoms), tuple(bonds))

    def relabel(self, order: Sequence[int]) -> Molecule:
        """Return the same graph with atom ``order[k]`` moved to index ``k``."""
        return self.subgraph(order)

    def csr(self) -> tuple[list[int], list[int], list[int]]:
        ptr = [0]
        idx: list[int] = []
        ords: list[int] = []
        for nbrs in self.adjacency:
            for w, order in nbrs:
                idx.append(w)
                ords.append(int(order))
            ptr.append(len(idx))
        return ptr, idx, ords

    @classmethod
    def from_smiles(cls, text: str) -> Molecule:
        return parse_smiles(text)

    def __str__(self) -> str:
        return canonical_form(self)


def default_h(element: str, aromatic: bool, bond_sum: int) -> int:
    """Implicit hydrogens a bare organic-subset atom receives."""
    valences = DEFAULT_VALENCE.get(element)
    if valences is None:
        return 0
    total = bond_sum + (1 if aromatic else 0)
    for v in valences:
        if v >= total:
            return v - total
    return 0


def _bond_sum(orders: Iterable[int]) -> int:
    return sum(1 if o == BondOrder.AROMATIC else int(o) for o in orders)


# ---------------------------------------------------------------------------
# SMILES parsing


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.data = text.encode("utf-8")
        self.pos = 0
        self.atoms: list[dict] = []
        self.bonds: dict[tuple[int, int], tuple[BondOrder | None, str | None]] = {}
        self.rings: dict[int, tuple[int, str | None, int]] = {}

    def error(self, message: str, pos: int | None = None) -> ParseError:
        p = self.pos if pos is None else pos
        return ParseError(message, len(self.text[:p].encode("utf-8")))

    def peek(self, k: int = 0) -> str:
        i = self.pos + k
        return self.text[i] if i < len(self.text) else ""

    def parse(self) -> Molecule:
        if not self.text:
            raise self.error("empty SMILES", 0)
        prev: int | None = None
        pending_bond: str | None = None
        branch_stack: list[tuple[int, int]] = []
        expect_atom = True
        while self.pos < len(self.text):
            ch = self.peek()
            start = self.pos
            if ch == "(":
                if prev is None or pending_bond is not None:
                    raise self.error("branch without a preceding atom")
                branch_stack.append((prev, start))
                self.pos += 1
                expect_atom = True
            elif ch == ")":
                if not branch_stack:
                    raise self.error("unbalanced ')'")
                if expect_atom or pending_bond is not None:
                    raise self.error("empty branch")
                prev, _ = branch_stack.pop()
                self.pos += 1
                expect_atom = False
            elif ch == ".":
                if pending_bond is not None or expect_atom:
                    raise self.error("misplaced '.'")
                if branch_stack:
                    raise self.error("'.' inside a branch")
                prev = None
                self.pos += 1
                expect_atom = True
            elif ch in "-=#:/\\":
                if pending_bond is not None or prev is None:
                    raise self.error(f"misplaced bond {ch!r}")
                pending_bond = ch
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise self.error("ring closure without an atom")
                self.ring_closure(prev, pending_bond, start)
                pending_bond = None
            elif ch in "+H":
                raise self.error("charge or hydrogen outside brackets")
            elif ch == "[" or ch.isalpha() or ch == "*":
                idx = self.bracket_atom() if ch == "[" else self.organic_atom()
                if prev is not None:
                    self.add_bond(prev, idx, pending_bond, start)
                pending_bond = None
                prev = idx
                expect_atom = False
            else:
                raise self.error(f"unexpected character {ch!r}")
        if pending_bond is not None:
            raise self.error("dangling bond at end of input")
        if branch_stack:
            raise self.error("unbalanced '('", branch_stack[-1][1])
        if self.rings:
            digit, (_, _, pos) = sorted(self.rings.items())[0]
            raise self.error(f"unclosed ring {digit}", pos)
        if expect_atom:
            raise self.error("SMILES ends without an atom")
        return self.build()

    def add_bond(self, a: int, b: int, symbol: str | None, pos: int) -> None:
        key = (min(a, b), max(a, b))
        if key in self.bonds or a == b:
            raise self.error("duplicate bond", pos)
        order = None if symbol is None or symbol in "/\\" else SYMBOL_BOND[symbol]
        self.bonds[key] = (order, symbol if symbol in ("/", "\\") else None)

    def ring_closure(self, atom: int, symbol: str | None, start: int) -> None:
        if self.peek() == "%":
            digits = self.text[self.pos + 1:self.pos + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise self.error("bad %nn ring label")
            label = int(digits)
            self.pos += 3
        else:
            label = int(self.peek())
            self.pos += 1
        if label in self.rings:
            other, other_sym, _ = self.rings.pop(label)
            if symbol and other_sym and symbol != other_sym:
                raise self.error("conflicting ring-closure bonds", start)
            self.add_bond(other, atom, symbol or other_sym, start)
        else:
            self.rings[label] = (atom, symbol, start)

    def organic_atom(self) -> int:
        ch = self.peek()
        two = self.text[self.pos:self.pos + 2]
        if ch == "*":
            raise self.error("wildcard atoms are not allowed in molecules")
        if two in ("Cl", "Br"):
            sym, aromatic = two, False
            self.pos += 2
        elif ch in ORGANIC:
            sym, aromatic = ch, False
            self.pos += 1
        elif ch in AROMATIC_ORGANIC:
            sym, aromatic = AROMATIC_ORGANIC[ch], True
            self.pos += 1
        else:
            raise self.error(f"unknown element {ch!r}")
        self.atoms.append(dict(element=sym, aromatic=aromatic, bracket=False))
        return len(self.atoms) - 1

    def bracket_atom(self) -> int:
        open_pos = self.pos
        close = self.text.find("]", self.pos)
        if close < 0:
            raise self.error("unterminated bracket atom")
        body = self.text[self.pos + 1:close]
        i = 0
        isotope = None
        while i < len(body) and body[i].isdigit():
            i += 1
        if i:
            isotope = int(body[:i])
        sym = None
        aromatic = False
        for length in (2, 1):
            cand = body[i:i + length]
            if len(cand) != length:
                continue
            if cand in AROMATIC_BRACKET:
                sym, aromatic = AROMATIC_BRACKET[cand], True
            elif cand in ATOMIC_NUMBER:
                sym = cand
            if sym:
                i += length
                break
        if sym is None:
            if body[i:i + 1] == "*":
                raise self.error("wildcard atoms are not allowed in molecules", open_pos + 1 + i)
            raise self.error(f"unknown element in [{body}]", open_pos + 1 + i)
        chirality = None
        if body[i:i + 1] == "@":
            j = i
            while j < len(body) and (body[j] == "@" or body[j].isupper() and body[j] != "H" or body[j].isdigit()):
                j += 1
            chirality = body[i:j]
            i = j
        hcount = 0
        if body[i:i + 1] == "H":
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            hcount = int(body[i:j]) if j > i else 1
            i = j
        charge = 0
        if body[i:i + 1] in ("+", "-"):
            sign = 1 if body[i] == "+" else -1
            j = i + 1
            while j < len(body) and body[j] == body[i]:
                j += 1
            if j - i > 1:
                charge = sign * (j - i)
            else:
                k = j
                while k < len(body) and body[k].isdigit():
                    k += 1
                charge = sign * (int(body[j:k]) if k > j else 1)
                j = k
            i = j
        map_id = None
        if body[i:i + 1] == ":":
            j = i + 1
            while j < len(body) and body[j].isdigit():
                j += 1
            if j == i + 1:
                raise self.error("empty atom map", open_pos + 1 + i)
            map_id = int(body[i + 1:j]) or None
            i = j
        if i != len(body):
            raise self.error(f"unexpected {body[i:]!r} in bracket atom", open_pos + 1 + i)
        if abs(charge) > MAX_ABS_CHARGE:
            raise self.error(f"charge {charge} out of range", open_pos)
        self.atoms.append(dict(
            element=sym, aromatic=aromatic, bracket=True, h=hcount, charge=charge,
            map_id=map_id, isotope=isotope, chirality=chirality,
        ))
        self.pos = close + 1
        return len(self.atoms) - 1

    def build(self) -> Molecule:
        bonds = {}
        for (a, b), (order, stereo) in self.bonds.items():
            if order is None:
                both = self.atoms[a]["aromatic"] and self.atoms[b]["aromatic"]
                order = BondOrder.AROMATIC if both else BondOrder.SINGLE
            bonds[(a, b)] = (order, stereo)
        # fold explicit [H] atoms into their heavy neighbor
        fold = set()
        extra_h = Counter()
        for i, at in enumerate(self.atoms):
            if at["element"] != "H" or not at["bracket"] or at.get("charge") or at.get("isotope"):
                continue
            if at.get("h"):
                continue
            nbrs = [(b if a == i else a) for (a, b) in bonds if i in (a, b)]
            if len(nbrs) == 1 and self.atoms[nbrs[0]]["element"] != "H" and bonds[tuple(sorted((i, nbrs[0])))][0] == BondOrder.SINGLE:
                fold.add(i)
                extra_h[nbrs[0]] += 1
        keep = [i for i in range(len(self.atoms)) if i not in fold]
        remap = {old: new for new, old in enumerate(keep)}
        bond_sums = Counter()
        for (a, b), (order, _) in bonds.items():
            if a in fold or b in fold:
                continue
            bond_sums[a] += _bond_sum([order])
            bond_sums[b] += _bond_sum([order])
        atoms = []
        for i in keep:
            at = self.atoms[i]
            if at["bracket"]:
                h = at["h"] + extra_h[i]
                atoms.append(Atom(
                    at["element"], at["charge"], h, at["aromatic"], at["map_id"],
                    at["isotope"], at["chirality"],
                ))
            else:
                h = default_h(at["element"], at["aromatic"], bond_sums[i] + extra_h[i]) + extra_h[i]
                atoms.append(Atom(at["element"], 0, h, at["aromatic"]))
        out_bonds = [
            Bond(remap[a], remap[b], order, stereo)
            for (a, b), (order, stereo) in bonds.items()
            if a not in fold and b not in fold
        ]
        return Molecule(tuple(atoms), tuple(out_bonds))


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a heavy-atom graph.

    Dots are accepted; the result may then be disconnected (use
    :meth:`StateBag.from_smiles` to split species).
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# canonical labeling and SMILES writing


def _initial_ranks(mol: Molecule) -> list[int]:
    keys = [atom.invariant() + (mol.degree(i),) for i, atom in enumerate(mol.atoms)]
    order = sorted(range(len(keys)), key=keys.__getitem__)
    ranks = [0] * len(keys)
    for pos, i in enumerate(order):
        ranks[i] = ranks[order[pos - 1]] if pos and keys[i] == keys[order[pos - 1]] else pos
    return ranks


def canonical_ranks(mol: Molecule) -> list[int]:
    """A canonical atom labeling (a permutation) of ``mol``.

    Invariant refinement seeded with element, isotope, charge, hydrogen count,
    aromatic flag and degree; remaining ties are broken by individualizing each
    member of the first non-trivial cell in turn and keeping the labeling whose
    certificate (sorted labeled edge list) is lexicographically smallest.
    """
    n = len(mol.atoms)
    if n == 0:
        return []
    ptr, idx, ords = mol.csr()
    ranks = kernels.refine_ranks(_initial_ranks(mol), ptr, idx, ords)
    best: list = [None, None]

    def certificate(r: list[int]) -> tuple:
        return tuple(sorted(
            (min(r[bd.a], r[bd.b]), max(r[bd.a], r[bd.b]), int(bd.order)) for bd in mol.bonds
        ))

    def search(r: list[int]) -> None:
        counts = Counter(r)
        tied = [v for v, c in counts.items() if c > 1]
        if not tied:
            cert = certificate(r)
            if best[0] is None or cert < best[0]:
                best[0], best[1] = cert, r
            return
        cell = min(tied)
        for v in (i for i in range(n) if r[i] == cell):
            split = [x + 1 if (x == cell and i != v) else x for i, x in enumerate(r)]
            search(kernels.refine_ranks(split, ptr, idx, ords))

    search(ranks)
    return best[1]


def _atom_token(atom: Atom, bond_sum: int, canonical: bool) -> str:
    sym = atom.element.lower() if atom.aromatic else atom.element
    isotope = atom.isotope
    chirality = None if canonical else atom.chirality
    map_id = None if canonical else atom.map_id
    bare_ok = (
        atom.charge == 0 and isotope is None and chirality is None and map_id is None
        and (atom.element in ORGANIC if not atom.aromatic else sym in AROMATIC_ORGANIC)
        and default_h(atom.element, atom.aromatic, bond_sum) == atom.implicit_h
    )
    if bare_ok:
        return sym
    out = ["["]
    if isotope is not None:
        out.append(str(isotope))
    out.append(sym)
    if chirality:
        out.append(chirality)
    if atom.implicit_h:
        out.append("H" if atom.implicit_h == 1 else f"H{atom.implicit_h}")
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        out.append(sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}")
    if map_id:
        out.append(f":{map_id}")
    out.append("]")
    return "".join(out)


def _bond_token(mol: Molecule, a: int, b: int, order: BondOrder, stereo: str | None) -> str:
    if stereo:
        return stereo
    both = mol.atoms[a].aromatic and mol.atoms[b].aromatic
    implied = BondOrder.AROMATIC if both else BondOrder.SINGLE
    return "" if order == implied else BOND_SYMBOL[order]


def _write(mol: Molecule, ranks: Sequence[int], canonical: bool) -> tuple[str, list[int]]:
    """DFS writer visiting neighbors in ``ranks`` order. Returns text and emission order."""
    n = len(mol.atoms)
    adj = [sorted(mol.adjacency[i], key=lambda x: ranks[x[0]]) for i in range(n)]
    stereo = {(bd.a, bd.b): bd.stereo for bd in mol.bonds} if not canonical else {}
    bond_sums = [_bond_sum(o for _, o in adj[i]) for i in range(n)]

    visited = [False] * n
    parent = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    ring_bonds: list[list[tuple[int, BondOrder]]] = [[] for _ in range(n)]
    roots = []
    for start in sorted(range(n), key=lambda i: ranks[i]):
        if visited[start]:
            continue
        roots.append(start)
        visited[start] = True
        stack = [(start, iter(adj[start]))]
        seen_edges = set()
        while stack:
            v, it = stack[-1]
            for w, order in it:
                e = (min(v, w), max(v, w))
                if e in seen_edges:
                    continue
                seen_edges.add(e)
                if visited[w]:
                    ring_bonds[v].append((w, order))
                    ring_bonds[w].append((v, order))
                else:
                    visited[w] = True
                    parent[w] = v
                    children[v].append(w)
                    stack.append((w, iter(adj[w])))
                    break
            else:
                stack.pop()

    emitted = [False] * n
    emission: list[int] = []
    open_rings: dict[tuple[int, int], int] = {}
    free_digits: list[int] = []
    next_digit = [1]

    def ring_label(d: int) -> str:
        return str(d) if d < 10 else f"%{d:02d}"

    out: list[str] = []

    def emit(v: int) -> None:
        # iterative over the main chain, recursive over branches
        while True:
            out.append(_atom_token(mol.atoms[v], bond_sums[v], canonical))
            emitted[v] = True
            emission.append(v)
            for w, order in sorted(ring_bonds[v], key=lambda x: ranks[x[0]]):
                e = (min(v, w), max(v, w))
                if emitted[w]:
                    d = open_rings.pop(e)
                    out.append(ring_label(d))
                    free_digits.append(d)
                    free_digits.sort()
                else:
                    if free_digits:
                        d = free_digits.pop(0)
                    else:
                        d = next_digit[0]
                        next_digit[0] += 1
                    open_rings[e] = d
                    out.append(_bond_token(mol, v, w, order, stereo.get(e)) + ring_label(d))
            kids = children[v]
            if not kids:
                return
            for w in kids[:-1]:
                out.append("(")
                out.append(_bond_token(mol, v, w, mol.bond_between(v, w), stereo.get((min(v, w), max(v, w)))))
                emit(w)
                out.append(")")
            w = kids[-1]
            out.append(_bond_token(mol, v, w, mol.bond_between(v, w), stereo.get((min(v, w), max(v, w)))))
            v = w

    for k, r in enumerate(roots):
        if k:
            out.append(".")
        emit(r)
    return "".join(out), emission


def write_smiles(mol: Molecule) -> str:
    """SMILES for ``mol`` in its current atom order, keeping maps and stereo marks."""
    return _write(mol, list(range(len(mol.atoms))), canonical=False)[0]


@lru_cache(maxsize=200_000)
def _canonical(mol: Molecule) -> tuple[str, tuple[int, ...]]:
    pieces = mol.components()
    if len(pieces) > 1:
        return ".".join(sorted(_canonical(p)[0] for p in pieces)), ()
    ranks = canonical_ranks(mol)
    text, emission = _write(mol, ranks, canonical=True)
    return text, tuple(emission)


def canonical_form(mol: Molecule) -> str:
    """Canonical SMILES: equal strings iff attribute-preserving isomorphic.

    Atom maps and stereo marks are ignored.
    """
    return _canonical(mol)[0]


def canonical_molecule(mol: Molecule) -> Molecule:
    """``mol`` with atoms reordered into canonical emission order (connected input)."""
    _, emission = _canonical(mol)
    if not emission or list(emission) == list(range(len(mol.atoms))):
        return mol
    return mol.relabel(emission)


# ---------------------------------------------------------------------------
# state bags


@dataclass(frozen=True)
class StateBag:
    """Multiset of species present at one point of a mechanism.

    Molecules are split into connected species, put into canonical atom order
    and sorted by canonical SMILES on construction, so two bags describing the
    same species multiset hold identical tuples.
    """

    molecules: tuple[Molecule, ...] = ()

    def __post_init__(self) -> None:
        species: list[Molecule] = []
        for mol in self.molecules:
            species.extend(canonical_molecule(p) for p in mol.components() if len(p.atoms))
        species.sort(key=lambda m: (canonical_form(m), write_smiles(m)))
        object.__setattr__(self, "molecules", tuple(species))

    @classmethod
    def from_smiles(cls, smiles: Iterable[str]) -> StateBag:
        return cls(tuple(parse_smiles(s) for s in smiles))

    @cached_property
    def key(self) -> str:
        return ".".join(canonical_form(m) for m in self.molecules)

    def smiles(self) -> list[str]:
        return [canonical_form(m) for m in self.molecules]

    def __len__(self) -> int:
        return len(self.molecules)

    def __add__(self, other: StateBag) -> StateBag:
        return StateBag(self.molecules + other.molecules)


def state_key(state: StateBag) -> str:
    """Sorted canonical SMILES of every species joined with '.'."""
    return state.key


def heavy_atom_census(state: StateBag | Molecule) -> dict[str, int]:
    mols = state.molecules if isinstance(state, StateBag) else (state,)
    counts: Counter[str] = Counter()
    for mol in mols:
        counts.update(a.element for a in mol.atoms if a.element != "H")
    return dict(counts)


def net_charge(state: StateBag) -> int:
    return sum(a.charge for m in state.molecules for a in m.atoms)


def total_h(state: StateBag) -> int:
    return sum(a.implicit_h for m in state.molecules for a in m.atoms)


def valence_warnings(mol: Molecule, slack: int = 0) -> list[str]:
    """Advisory valence check; intermediates may legitimately exceed it."""
    msgs = []
    for i, atom in enumerate(mol.atoms):
        valences = DEFAULT_VALENCE.get(atom.element)
        if not valences:
            continue
        used = sum(1.5 if o == BondOrder.AROMATIC else int(o) for _, o in mol.adjacency[i]) + atom.implicit_h
        limit = max(valences) + abs(atom.charge)
        if used > limit + slack:
            msgs.append(f"atom {i} ({atom.element}{atom.charge:+d}) valence {used:g} exceeds {limit}")
    return msgs
