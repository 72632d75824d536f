"""Elementary reaction templates: data model, ``.mrt`` DSL parser/printer, validator.

A pack is a list of reaction classes; each class holds named conditions
(reagent regimes) and each condition an ordered list of elementary steps.
Example::

    class "Bromo N-alkylation / Chloro N-alkylation" {
      condition "Reaction" {
        agents: none
        step 1 "Addition of amine" {
          pattern: [N;al;+0;h1+:1] . [C;al;+0:2]-[Cl,Br,I:3]
          edits: make_bond(:1,:2,-), break_bond(:2,:3),
                 delta_charge(:1,+1), delta_charge(:3,-1)
        }
        step 2 "Amine deprotonation" proton_implicit(-1) {
          pattern: [N;+1;h1+:1]
          edits: delta_h(:1,-1), delta_charge(:1,-1)
        }
      }
    }

Atom constraints: ``+n``/``-n`` exact charge, ``Hn`` exact hydrogen count,
``hn+`` at least n hydrogens, ``hn`` at most n hydrogens, ``ar``/``al``
aromatic/aliphatic, ``ring`` ring membership, ``deg<=n`` heavy-atom degree.
Lowercase element symbols are shorthand for the ``ar`` constraint. Bonds:
``-`` ``=`` ``#`` ``:`` and ``~`` (any order). A ``#`` followed by whitespace
starts a comment that runs to the end of the line. Ring closures use SMILES-style
digits after an atom, e.g. ``[P:1]-1-[C:2]-[C:3]-[O:4]-1``.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from mechimpute.molgraph import ATOMIC_NUMBER, Atom

ANY_ORDER = 0
ORDER_SYMBOL = {ANY_ORDER: "~", 1: "-", 2: "=", 3: "#", 4: ":"}
SYMBOL_ORDER = {v: k for k, v in ORDER_SYMBOL.items()}
ORDER_WORDS = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}

EDIT_KINDS = ("make_bond", "break_bond", "set_order", "delta_h", "delta_charge", "set_aromatic")
TERMINATION_STEP = "end"


class PackError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class PatternAtom:
    slot: int
    elements: frozenset[str] | None = None  # None = any element
    charge: int | None = None
    h_exact: int | None = None
    min_h: int | None = None
    max_h: int | None = None
    aromatic: bool | None = None
    in_ring: bool | None = None
    max_degree: int | None = None

    def accepts(self, atom: Atom, degree: int, in_ring: bool) -> bool:
        if self.elements is not None and atom.element not in self.elements:
            return False
        if self.charge is not None and atom.charge != self.charge:
            return False
        if self.h_exact is not None and atom.implicit_h != self.h_exact:
            return False
        if self.min_h is not None and atom.implicit_h < self.min_h:
            return False
        if self.max_h is not None and atom.implicit_h > self.max_h:
            return False
        if self.aromatic is not None and atom.aromatic != self.aromatic:
            return False
        if self.in_ring is not None and in_ring != self.in_ring:
            return False
        if self.max_degree is not None and degree > self.max_degree:
            return False
        return True


@dataclass(frozen=True)
class PatternGraph:
    atoms: tuple[PatternAtom, ...] = ()
    bonds: tuple[tuple[int, int, int], ...] = ()  # (slot, slot, order or ANY_ORDER)

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(sorted(self.atoms, key=lambda a: a.slot)))
        norm = sorted((min(a, b), max(a, b), o) for a, b, o in self.bonds)
        object.__setattr__(self, "bonds", tuple(norm))

    @property
    def slots(self) -> tuple[int, ...]:
        return tuple(a.slot for a in self.atoms)

    def atom(self, slot: int) -> PatternAtom:
        for a in self.atoms:
            if a.slot == slot:
                return a
        raise KeyError(slot)

    def bond(self, s1: int, s2: int) -> int | None:
        key = (min(s1, s2), max(s1, s2))
        for a, b, o in self.bonds:
            if (a, b) == key:
                return o
        return None

    @property
    def components(self) -> tuple[tuple[int, ...], ...]:
        parent = {s: s for s in self.slots}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, _ in self.bonds:
            parent[find(a)] = find(b)
        groups: dict[int, list[int]] = {}
        for s in self.slots:
            groups.setdefault(find(s), []).append(s)
        return tuple(sorted(tuple(g) for g in groups.values()))

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class EditOp:
    kind: str
    slots: tuple[int, ...]
    value: int | bool | None = None  # bond order, signed amount or aromatic flag

    def __str__(self) -> str:
        refs = ",".join(f":{s}" for s in self.slots)
        if self.kind in ("make_bond", "set_order"):
            return f"{self.kind}({refs},{ORDER_SYMBOL[self.value]})"
        if self.kind == "break_bond":
            return f"{self.kind}({refs})"
        if self.kind == "set_aromatic":
            return f"{self.kind}({refs},{'true' if self.value else 'false'})"
        return f"{self.kind}({refs},{self.value:+d})"


@dataclass(frozen=True)
class ElementaryTemplate:
    id: str
    class_name: str
    condition_name: str
    step_name: str
    step_index: int
    pattern: PatternGraph = field(default_factory=PatternGraph)
    edits: tuple[EditOp, ...] = ()
    required_agents: tuple[PatternGraph, ...] = ()
    proton_implicit: int = 0
    is_termination: bool = False
    distinct_molecules: bool = False

    @property
    def net_charge_change(self) -> int:
        return sum(e.value for e in self.edits if e.kind == "delta_charge")

    @property
    def net_h_change(self) -> int:
        return sum(e.value for e in self.edits if e.kind == "delta_h")


@dataclass(frozen=True)
class Condition:
    name: str
    agents: tuple[PatternGraph, ...]
    steps: tuple[ElementaryTemplate, ...]
    distinct_molecules: bool = False


@dataclass(frozen=True)
class ReactionClassDef:
    class_name: str
    conditions: tuple[Condition, ...]

    @property
    def aliases(self) -> tuple[str, ...]:
        return tuple(a.strip() for a in self.class_name.split("/") if a.strip())

    def matches(self, name: str) -> bool:
        wanted = name.strip().casefold()
        return wanted == self.class_name.casefold() or any(wanted == a.casefold() for a in self.aliases)

    def templates(self) -> list[ElementaryTemplate]:
        return [t for c in self.conditions for t in c.steps]


def termination_template(class_name: str = "") -> ElementaryTemplate:
    """The auto-generated no-change step that closes every pathway."""
    tid = f"{class_name}/{TERMINATION_STEP}" if class_name else TERMINATION_STEP
    return ElementaryTemplate(
        id=tid, class_name=class_name, condition_name="", step_name="termination",
        step_index=0, is_termination=True,
    )


def all_templates(defs: list[ReactionClassDef]) -> list[ElementaryTemplate]:
    return [t for d in defs for t in d.templates()]


def find_classes(defs: list[ReactionClassDef], name: str) -> list[ReactionClassDef]:
    return [d for d in defs if d.matches(name)]


# ---------------------------------------------------------------------------
# parser


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def where(self, pos: int | None = None) -> tuple[int, int]:
        p = self.pos if pos is None else pos
        line = self.text.count("\n", 0, p) + 1
        col = p - (self.text.rfind("\n", 0, p) + 1) + 1
        return line, col

    def error(self, message: str, pos: int | None = None) -> PackError:
        return PackError(message, *self.where(pos))

    def skip(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "#" and (self.pos + 1 >= len(self.text) or self.text[self.pos + 1].isspace()):
                nl = self.text.find("\n", self.pos)
                self.pos = len(self.text) if nl < 0 else nl
            else:
                break

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, literal: str) -> None:
        self.skip()
        if not self.text.startswith(literal, self.pos):
            got = self.text[self.pos:self.pos + 12].split("\n")[0] or "end of input"
            raise self.error(f"expected {literal!r}, found {got!r}")
        self.pos += len(literal)

    def word(self) -> str:
        self.skip()
        m = re.compile(r"[A-Za-z_][A-Za-z_0-9]*").match(self.text, self.pos)
        if not m:
            raise self.error("expected a keyword")
        self.pos = m.end()
        return m.group()

    def peek_word(self) -> str:
        self.skip()
        m = re.compile(r"[A-Za-z_][A-Za-z_0-9]*").match(self.text, self.pos)
        return m.group() if m else ""

    def string(self) -> str:
        self.skip()
        if self.peek() != '"':
            raise self.error("expected a quoted string")
        end = self.text.find('"', self.pos + 1)
        if end < 0 or "\n" in self.text[self.pos:end]:
            raise self.error("unterminated string")
        s = self.text[self.pos + 1:end]
        self.pos = end + 1
        return s

    def integer(self, signed: bool = False) -> int:
        self.skip()
        pat = r"[+-]?\d+" if signed else r"\d+"
        m = re.compile(pat).match(self.text, self.pos)
        if not m:
            raise self.error("expected a signed integer" if signed else "expected an integer")
        self.pos = m.end()
        return int(m.group())


def _parse_atom_expr(r: _Reader) -> PatternAtom:
    start = r.pos
    r.expect("[")
    end = r.text.find("]", r.pos)
    if end < 0:
        raise r.error("unterminated pattern atom", start)
    body = r.text[r.pos:end]
    r.pos = end + 1
    head, sep, slot_txt = body.rpartition(":")
    if not sep or not slot_txt.strip().isdigit() or int(slot_txt) < 1:
        raise r.error(f"pattern atom [{body}] needs a positive ':slot' label", start)
    slot = int(slot_txt)
    parts = [p.strip() for p in head.split(";")]
    elem_txt, constraints = parts[0], parts[1:]
    kw: dict = {}
    if elem_txt == "*":
        elements = None
    else:
        syms = [e.strip() for e in elem_txt.split(",")]
        norm = []
        lowers = []
        for sym in syms:
            cap = sym[:1].upper() + sym[1:]
            if not sym or cap not in ATOMIC_NUMBER:
                raise r.error(f"unknown element symbol {sym!r}", start)
            norm.append(cap)
            lowers.append(sym[:1].islower())
        elements = frozenset(norm)
        if all(lowers):
            kw["aromatic"] = True
    for c in constraints:
        if re.fullmatch(r"[+-]\d+", c):
            kw["charge"] = int(c)
        elif re.fullmatch(r"H\d+", c):
            kw["h_exact"] = int(c[1:])
        elif re.fullmatch(r"h\d+\+", c):
            kw["min_h"] = int(c[1:-1])
        elif re.fullmatch(r"h\d+", c):
            kw["max_h"] = int(c[1:])
        elif c == "ar":
            kw["aromatic"] = True
        elif c == "al":
            kw["aromatic"] = False
        elif c == "ring":
            kw["in_ring"] = True
        elif c == "!ring":
            kw["in_ring"] = False
        elif re.fullmatch(r"deg<=\d+", c):
            kw["max_degree"] = int(c[5:])
        else:
            raise r.error(f"unknown atom constraint {c!r}", start)
    return PatternAtom(slot=slot, elements=elements, **kw)


_BOND_CHARS = "-=#:~"


def _parse_pattern(r: _Reader) -> PatternGraph:
    atoms: list[PatternAtom] = []
    bonds: list[tuple[int, int, int]] = []
    slot_pos: dict[int, int] = {}
    seen_pairs: set[tuple[int, int]] = set()

    def add_bond(a: int, b: int, order: int, pos: int) -> None:
        key = (min(a, b), max(a, b))
        if a == b or key in seen_pairs:
            raise r.error(f"duplicate bond between slots {a} and {b}", pos)
        seen_pairs.add(key)
        bonds.append((a, b, order))

    def add_atom(pa: PatternAtom, pos: int) -> None:
        if pa.slot in slot_pos:
            raise r.error(f"slot {pa.slot} declared twice", pos)
        slot_pos[pa.slot] = pos
        atoms.append(pa)

    def component() -> None:
        rings: dict[int, tuple[int, str | None, int]] = {}
        r.skip()
        pos = r.pos
        first = _parse_atom_expr(r)
        add_atom(first, pos)
        prev = first.slot
        stack: list[int] = []
        while True:
            r.skip()
            ch = r.text[r.pos] if r.pos < len(r.text) else ""
            nxt = r.text[r.pos + 1] if r.pos + 1 < len(r.text) else ""
            if ch.isdigit() or (ch in _BOND_CHARS and nxt.isdigit()):
                pos = r.pos
                sym = None
                if ch in _BOND_CHARS:
                    sym = ch
                    r.pos += 1
                label = int(r.text[r.pos])
                r.pos += 1
                if label in rings:
                    other, osym, opos = rings.pop(label)
                    if sym and osym and sym != osym:
                        raise r.error("conflicting ring-closure bonds", pos)
                    s = sym or osym
                    if s is None:
                        raise r.error("ring closure needs an explicit bond symbol", pos)
                    add_bond(other, prev, SYMBOL_ORDER[s], pos)
                else:
                    rings[label] = (prev, sym, pos)
            elif ch == "(":
                r.pos += 1
                stack.append(prev)
            elif ch == ")":
                if not stack:
                    raise r.error("unbalanced ')' in pattern")
                r.pos += 1
                prev = stack.pop()
            elif ch in _BOND_CHARS and ch:
                pos = r.pos
                r.pos += 1
                r.skip()
                if r.peek() != "[":
                    raise r.error("bond must be followed by a pattern atom")
                apos = r.pos
                pa = _parse_atom_expr(r)
                add_atom(pa, apos)
                add_bond(prev, pa.slot, SYMBOL_ORDER[ch], pos)
                prev = pa.slot
            elif ch == "[":
                raise r.error("adjacent pattern atoms need an explicit bond")
            else:
                break
        if stack:
            raise r.error("unbalanced '(' in pattern")
        if rings:
            label, (_, _, pos) = sorted(rings.items())[0]
            raise r.error(f"unclosed ring {label} in pattern", pos)

    component()
    while r.peek() == ".":
        r.pos += 1
        component()
    return PatternGraph(tuple(atoms), tuple(bonds))


def parse_pattern(text: str) -> PatternGraph:
    """Parse a standalone pattern such as ``[O;-1:1]-[C:2]``."""
    r = _Reader(text)
    pattern = _parse_pattern(r)
    r.skip()
    if not r.at_end():
        raise r.error("trailing text after pattern")
    return pattern


def _parse_order(r: _Reader) -> int:
    r.skip()
    ch = r.peek()
    if ch in "-=#:":
        r.pos += 1
        return SYMBOL_ORDER[ch]
    w = r.word()
    if w not in ORDER_WORDS:
        raise r.error(f"unknown bond order {w!r}")
    return ORDER_WORDS[w]


def _parse_edit(r: _Reader) -> tuple[EditOp, int]:
    r.skip()
    pos = r.pos
    kind = r.word()
    if kind not in EDIT_KINDS:
        raise r.error(f"unknown edit {kind!r}", pos)
    r.expect("(")
    nslots = 2 if kind in ("make_bond", "break_bond", "set_order") else 1
    slots = []
    for i in range(nslots):
        if i:
            r.expect(",")
        r.expect(":")
        slots.append(r.integer())
    value: int | bool | None = None
    if kind in ("make_bond", "set_order"):
        r.expect(",")
        value = _parse_order(r)
        if value == ANY_ORDER:
            raise r.error("edits need a concrete bond order", pos)
    elif kind in ("delta_h", "delta_charge"):
        r.expect(",")
        value = r.integer(signed=True)
        if value == 0:
            raise r.error(f"{kind} amount must be nonzero", pos)
    elif kind == "set_aromatic":
        r.expect(",")
        w = r.word()
        if w not in ("true", "false"):
            raise r.error("set_aromatic takes true or false", pos)
        value = w == "true"
    r.expect(")")
    if nslots == 2 and slots[0] == slots[1]:
        raise r.error(f"{kind} needs two different slots", pos)
    return EditOp(kind, tuple(slots), value), pos


def _parse_agents(r: _Reader) -> tuple[PatternGraph, ...]:
    r.expect(":")
    if r.peek_word() == "none":
        r.word()
        return ()
    agents = [_parse_pattern(r)]
    while r.peek() == ",":
        r.pos += 1
        agents.append(_parse_pattern(r))
    return tuple(agents)


def _parse_step(r: _Reader, class_name: str, cond: str, agents, distinct: bool) -> ElementaryTemplate:
    start = r.pos
    index = r.integer()
    name = r.string()
    proton = 0
    if r.peek_word() == "proton_implicit":
        r.word()
        r.expect("(")
        proton = r.integer(signed=True)
        if proton not in (-1, 1):
            raise r.error("proton_implicit takes +1 or -1")
        r.expect(")")
    r.expect("{")
    if r.word() != "pattern":
        raise r.error("expected 'pattern'")
    r.expect(":")
    pattern = _parse_pattern(r)
    if r.word() != "edits":
        raise r.error("expected 'edits'")
    r.expect(":")
    edits = [_parse_edit(r)]
    while r.peek() == ",":
        r.pos += 1
        edits.append(_parse_edit(r))
    r.expect("}")
    declared = set(pattern.slots)
    for edit, pos in edits:
        for s in edit.slots:
            if s not in declared:
                raise r.error(f"edit {edit.kind} references undeclared slot {s}", pos)
    return ElementaryTemplate(
        id=f"{class_name}/{cond}/{index}",
        class_name=class_name,
        condition_name=cond,
        step_name=name,
        step_index=index,
        pattern=pattern,
        edits=tuple(e for e, _ in edits),
        required_agents=agents,
        proton_implicit=proton,
        distinct_molecules=distinct,
    ), start


def parse_pack(text: str) -> list[ReactionClassDef]:
    """Parse a ``.mrt`` document; raises :class:`PackError` with line and column."""
    r = _Reader(text)
    defs: list[ReactionClassDef] = []
    ids: set[str] = set()
    while not r.at_end():
        pos = r.pos
        if r.word() != "class":
            raise r.error("expected 'class'", pos)
        class_name = r.string()
        r.expect("{")
        conditions = []
        while r.peek() != "}":
            cpos = r.pos
            if r.word() != "condition":
                raise r.error("expected 'condition'", cpos)
            cond = r.string()
            r.expect("{")
            agents: tuple[PatternGraph, ...] = ()
            distinct = False
            steps: list[ElementaryTemplate] = []
            while r.peek() != "}":
                kpos = r.pos
                kw = r.word()
                if kw == "agents":
                    if steps:
                        raise r.error("'agents' must precede the steps", kpos)
                    agents = _parse_agents(r)
                elif kw == "distinct_molecules":
                    distinct = True
                elif kw == "step":
                    t, spos = _parse_step(r, class_name, cond, agents, distinct)
                    if t.step_index != len(steps) + 1:
                        raise r.error(
                            f"step {t.step_index} out of order (expected {len(steps) + 1})", spos
                        )
                    if t.id in ids:
                        raise r.error(f"duplicate template id {t.id!r}", spos)
                    ids.add(t.id)
                    steps.append(t)
                else:
                    raise r.error(f"unexpected {kw!r} in condition", kpos)
                if r.at_end():
                    raise r.error("unexpected end of input")
            if not steps:
                raise r.error(f"condition {cond!r} has no steps", cpos)
            r.expect("}")
            conditions.append(Condition(cond, agents, tuple(steps), distinct))
        r.expect("}")
        defs.append(ReactionClassDef(class_name, tuple(conditions)))
    return defs


def load_pack(path: str | Path) -> list[ReactionClassDef]:
    return parse_pack(Path(path).read_text(encoding="utf-8"))


def starter_pack_path() -> Path:
    return Path(str(resources.files("mechimpute") / "packs" / "starter.mrt"))


def load_starter_pack() -> list[ReactionClassDef]:
    return load_pack(starter_pack_path())


# ---------------------------------------------------------------------------
# printer


def _format_atom(pa: PatternAtom) -> str:
    elems = "*" if pa.elements is None else ",".join(sorted(pa.elements, key=ATOMIC_NUMBER.get))
    cons = []
    if pa.charge is not None:
        cons.append(f"{pa.charge:+d}")
    if pa.h_exact is not None:
        cons.append(f"H{pa.h_exact}")
    if pa.min_h is not None:
        cons.append(f"h{pa.min_h}+")
    if pa.max_h is not None:
        cons.append(f"h{pa.max_h}")
    if pa.aromatic is not None:
        cons.append("ar" if pa.aromatic else "al")
    if pa.in_ring is not None:
        cons.append("ring" if pa.in_ring else "!ring")
    if pa.max_degree is not None:
        cons.append(f"deg<={pa.max_degree}")
    return "[" + ";".join([elems] + cons) + f":{pa.slot}]"


def format_pattern(p: PatternGraph) -> str:
    adj: dict[int, list[tuple[int, int]]] = {s: [] for s in p.slots}
    for a, b, o in p.bonds:
        adj[a].append((b, o))
        adj[b].append((a, o))
    for s in adj:
        adj[s].sort()
    pieces = []
    for comp in p.components:
        visited: set[int] = set()
        used: set[tuple[int, int]] = set()
        closures: dict[int, list[tuple[int, int]]] = {s: [] for s in comp}
        tree: dict[int, list[tuple[int, int]]] = {s: [] for s in comp}
        # DFS to split tree and ring-closure bonds
        stack = [(comp[0], iter(adj[comp[0]]))]
        visited.add(comp[0])
        while stack:
            v, it = stack[-1]
            for w, o in it:
                e = (min(v, w), max(v, w))
                if e in used:
                    continue
                used.add(e)
                if w in visited:
                    closures[w].append((v, o))
                    closures[v].append((w, o))
                else:
                    visited.add(w)
                    tree[v].append((w, o))
                    stack.append((w, iter(adj[w])))
                    break
            else:
                stack.pop()
        out: list[str] = []
        labels: dict[tuple[int, int], int] = {}
        emitted: set[int] = set()

        def emit(v: int) -> None:
            out.append(_format_atom(p.atom(v)))
            emitted.add(v)
            for w, o in closures[v]:
                e = (min(v, w), max(v, w))
                if w in emitted:
                    out.append(f"{ORDER_SYMBOL[o]}{labels.pop(e)}")
                else:
                    label = next(d for d in range(1, 10) if d not in labels.values())
                    labels[e] = label
                    out.append(f"{ORDER_SYMBOL[o]}{label}")
            kids = tree[v]
            for i, (w, o) in enumerate(kids):
                last = i == len(kids) - 1
                if not last:
                    out.append("(")
                out.append(ORDER_SYMBOL[o])
                emit(w)
                if not last:
                    out.append(")")

        emit(comp[0])
        pieces.append("".join(out))
    return " . ".join(pieces)


def print_pack(defs: list[ReactionClassDef]) -> str:
    """Serialize definitions back to ``.mrt`` text (inverse of :func:`parse_pack`)."""
    lines = []
    for d in defs:
        lines.append(f'class "{d.class_name}" {{')
        for c in d.conditions:
            lines.append(f'  condition "{c.name}" {{')
            if c.agents:
                lines.append("    agents: " + ", ".join(format_pattern(a) for a in c.agents))
            else:
                lines.append("    agents: none")
            if c.distinct_molecules:
                lines.append("    distinct_molecules")
            for t in c.steps:
                flag = f" proton_implicit({t.proton_implicit:+d})" if t.proton_implicit else ""
                lines.append(f'    step {t.step_index} "{t.step_name}"{flag} {{')
                lines.append(f"      pattern: {format_pattern(t.pattern)}")
                lines.append("      edits: " + ", ".join(str(e) for e in t.edits))
                lines.append("    }")
            lines.append("  }")
        lines.append("}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    template_id: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.template_id}: {self.message}"


def validate_template(t: ElementaryTemplate) -> list[Diagnostic]:
    """Static checks on one template. Returns diagnostics, never raises."""
    out: list[Diagnostic] = []

    def err(msg: str) -> None:
        out.append(Diagnostic("error", t.id, msg))

    def warn(msg: str) -> None:
        out.append(Diagnostic("warning", t.id, msg))

    if t.is_termination:
        if t.edits or t.pattern.atoms:
            err("termination template must have no pattern and no edits")
        return out
    slots = set(t.pattern.slots)
    h_drop: Counter[int] = Counter()
    for e in t.edits:
        missing = [s for s in e.slots if s not in slots]
        if missing:
            err(f"{e.kind} references undeclared slot {missing[0]}")
        if e.kind == "delta_h" and e.value < 0:
            h_drop[e.slots[0]] += -e.value
    for slot, drop in sorted(h_drop.items()):
        if slot not in slots:
            continue
        pa = t.pattern.atom(slot)
        floor = pa.h_exact if pa.h_exact is not None else pa.min_h
        if floor is None or floor < drop:
            warn(f"delta_h on slot {slot} can drive implicit_h below 0 (no h{drop}+ constraint)")
    net = t.net_charge_change
    if abs(net) > 1:
        err(f"|net charge|>1 (net change {net:+d})")
    elif net and t.proton_implicit == 0:
        err(f"uncompensated net charge ({net:+d}) on a step without proton_implicit")
    elif t.proton_implicit and net != t.proton_implicit:
        err(f"net charge change {net:+d} disagrees with proton_implicit({t.proton_implicit:+d})")
    if t.net_h_change != t.proton_implicit:
        err(f"net hydrogen change {t.net_h_change:+d} disagrees with proton_implicit({t.proton_implicit:+d})")
    for e in t.edits:
        if e.kind == "make_bond" and all(s in slots for s in e.slots) and t.pattern.bond(*e.slots) is not None:
            err(f"make_bond between slots {e.slots[0]} and {e.slots[1]}, which the pattern already bonds")
        if e.kind in ("break_bond", "set_order") and all(s in slots for s in e.slots):
            if t.pattern.bond(*e.slots) is None:
                warn(f"{e.kind} on slots {e.slots[0]}-{e.slots[1]} not bonded in the pattern")
    return out


def validate_pack(defs: list[ReactionClassDef]) -> list[Diagnostic]:
    return [d for t in all_templates(defs) for d in validate_template(t)]
