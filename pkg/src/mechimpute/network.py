"""Elementary-reaction networks: expansion, product location, pruning, pathways."""

from __future__ import annotations

from collections import Counter, deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from mechimpute.molgraph import Molecule, ParseError, StateBag, canonical_form, parse_smiles
from mechimpute.rewrite import enumerate_applications, find_matches
from mechimpute.templates import ElementaryTemplate, ReactionClassDef, find_classes


class UnknownClass(LookupError):
    pass


@dataclass(frozen=True)
class ReactionRecord:
    id: str
    class_name: str
    reactants: tuple[str, ...]
    agents: tuple[str, ...] = ()
    products: tuple[str, ...] = ()

    @classmethod
    def from_json(cls, obj: dict) -> ReactionRecord:
        if not obj.get("products"):
            raise ValueError(f"record {obj.get('id')!r} has no products")
        return cls(
            id=str(obj["id"]),
            class_name=obj["class"],
            reactants=tuple(obj.get("reactants", ())),
            agents=tuple(obj.get("agents", ())),
            products=tuple(obj["products"]),
        )

    def to_json(self) -> dict:
        return {
            "id": self.id, "class": self.class_name, "reactants": list(self.reactants),
            "agents": list(self.agents), "products": list(self.products),
        }

    def root_state(self) -> StateBag:
        return StateBag.from_smiles(self.reactants + self.agents)

    def product_molecules(self) -> list[Molecule]:
        mols: list[Molecule] = []
        for smi in self.products:
            mols.extend(parse_smiles(smi).components())
        return mols


@dataclass(frozen=True)
class Limits:
    max_depth: int = 12
    max_nodes: int = 5000
    max_paths: int = 64
    all_classes: bool = False


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    template_id: str
    signature: str
    dst: str


@dataclass
class MechNetwork:
    root: str
    nodes: dict[str, StateBag]
    edges: list[Edge] = field(default_factory=list)
    depth: dict[str, int] = field(default_factory=dict)
    truncated_nodes: bool = False
    truncated_depth: bool = False
    conditions: tuple[str, ...] = ()
    targets: frozenset[str] = frozenset()

    @property
    def truncated(self) -> bool:
        return self.truncated_nodes or self.truncated_depth

    def out_edges(self, key: str) -> list[Edge]:
        return sorted(e for e in self.edges if e.src == key)

    def successors(self) -> dict[str, list[Edge]]:
        adj: dict[str, list[Edge]] = {k: [] for k in self.nodes}
        for e in sorted(self.edges):
            adj[e.src].append(e)
        return adj

    def terminal_nodes(self) -> list[str]:
        has_out = {e.src for e in self.edges}
        return sorted(k for k in self.nodes if k not in has_out)


def select_conditions(
    record: ReactionRecord, pack: list[ReactionClassDef], root: StateBag, all_classes: bool = False
) -> tuple[list[ElementaryTemplate], list[str], bool]:
    """Templates of every condition whose agents are present in ``root``.

    Returns (templates, selected condition labels, class found).
    """
    classes = list(pack) if all_classes else find_classes(pack, record.class_name)
    templates: list[ElementaryTemplate] = []
    labels: list[str] = []
    for cdef in classes:
        for cond in cdef.conditions:
            if all(find_matches(agent, root) for agent in cond.agents):
                templates.extend(cond.steps)
                labels.append(f"{cdef.class_name}/{cond.name}")
    return templates, labels, bool(classes)


def expand_network(record: ReactionRecord, pack: list[ReactionClassDef], limits: Limits = Limits()) -> MechNetwork:
    """Breadth-first template application from the reactants-plus-agents state.

    Conditions are chosen once, by checking their required agents against the
    root state; afterwards their steps fire wherever their patterns match, so a
    consumed agent (e.g. hydroxide) does not block later steps.
    """
    root = record.root_state()
    templates, labels, found = select_conditions(record, pack, root, limits.all_classes)
    if not found:
        raise UnknownClass(record.class_name)
    net = MechNetwork(root=root.key, nodes={root.key: root}, depth={root.key: 0}, conditions=tuple(labels))
    frontier = [root.key]
    seen_edges: set[tuple[str, str, str]] = set()
    for d in range(limits.max_depth + 1):
        nxt: list[str] = []
        for key in frontier:
            state = net.nodes[key]
            for t in templates:
                for emb, succ in enumerate_applications(t, state, check_agents=False):
                    skey = succ.key
                    if skey == key:
                        continue
                    if d == limits.max_depth:
                        if skey not in net.nodes:
                            net.truncated_depth = True
                        continue
                    if skey not in net.nodes:
                        if len(net.nodes) >= limits.max_nodes:
                            net.truncated_nodes = True
                            continue
                        net.nodes[skey] = succ
                        net.depth[skey] = d + 1
                        nxt.append(skey)
                    if (key, t.id, skey) in seen_edges:
                        continue
                    seen_edges.add((key, t.id, skey))
                    net.edges.append(Edge(key, t.id, emb.signature, skey))
        frontier = nxt
        if not frontier:
            break
    return net


def _species_counter(mols: Iterable[Molecule]) -> Counter[str]:
    return Counter(canonical_form(m) for m in mols)


def find_product_nodes(net: MechNetwork, products: list[Molecule]) -> set[str]:
    """Nodes whose state holds every recorded product (with multiplicity)."""
    want = _species_counter(products)
    if not want:
        return set()
    out = set()
    for key, state in net.nodes.items():
        have = _species_counter(state.molecules)
        if all(have[s] >= c for s, c in want.items()):
            out.add(key)
    return out


def _bfs(adj: dict[str, list[str]], starts: Iterable[str]) -> dict[str, int]:
    dist = {s: 0 for s in starts}
    queue = deque(sorted(dist))
    while queue:
        v = queue.popleft()
        for w in adj.get(v, ()):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def prune_to_product(net: MechNetwork, product_keys: Iterable[str], max_depth: int | None = None) -> MechNetwork:
    """Keep the nodes and edges on some root-to-product path of length <= ``max_depth``."""
    targets = frozenset(k for k in product_keys if k in net.nodes)
    if not targets:
        return MechNetwork(
            root=net.root, nodes={net.root: net.nodes[net.root]}, depth={net.root: 0},
            conditions=net.conditions,
        )
    limit = max_depth if max_depth is not None else len(net.nodes)
    fwd: dict[str, list[str]] = {}
    rev: dict[str, list[str]] = {}
    for e in net.edges:
        fwd.setdefault(e.src, []).append(e.dst)
        rev.setdefault(e.dst, []).append(e.src)
    d_root = _bfs(fwd, [net.root])
    d_prod = _bfs(rev, targets)
    keep = {
        k for k in net.nodes
        if k in d_root and k in d_prod and d_root[k] + d_prod[k] <= limit
    }
    edges = [
        e for e in net.edges
        if e.src in keep and e.dst in keep and d_root[e.src] + 1 + d_prod[e.dst] <= limit
    ]
    return MechNetwork(
        root=net.root,
        nodes={k: net.nodes[k] for k in net.nodes if k in keep},
        edges=sorted(edges),
        depth={k: d_root[k] for k in keep},
        conditions=net.conditions,
        targets=frozenset(targets & keep),
    )


@dataclass(frozen=True)
class PathStep:
    before: str
    template_id: str
    signature: str
    after: str


def linearize_pathways(pruned: MechNetwork, max_paths: int = 64) -> tuple[list[list[PathStep]], bool]:
    """Every simple root-to-product path, ordered by edge sequence. Returns (paths, truncated).

    A path ends at the first product node it reaches: the mechanism is
    complete there and the termination step follows.
    """
    if not pruned.targets:
        return [], False
    adj = pruned.successors()
    paths: list[list[PathStep]] = []
    truncated = False
    on_path = {pruned.root}
    trail: list[PathStep] = []

    def dfs(v: str) -> bool:
        nonlocal truncated
        if v in pruned.targets:
            if len(paths) >= max_paths:
                truncated = True
                return False
            paths.append(list(trail))
            return True
        for e in adj.get(v, ()):
            if e.dst in on_path:
                continue
            on_path.add(e.dst)
            trail.append(PathStep(e.src, e.template_id, e.signature, e.dst))
            ok = dfs(e.dst)
            trail.pop()
            on_path.discard(e.dst)
            if not ok:
                return False
        return True

    dfs(pruned.root)
    return paths, truncated


@dataclass(frozen=True)
class Impurity:
    species: str
    depth: int
    pathway: tuple[PathStep, ...]


def shortest_pathway(net: MechNetwork, target: str) -> list[PathStep]:
    parent: dict[str, Edge | None] = {net.root: None}
    queue = deque([net.root])
    adj = net.successors()
    while queue:
        v = queue.popleft()
        if v == target:
            break
        for e in adj.get(v, ()):
            if e.dst not in parent:
                parent[e.dst] = e
                queue.append(e.dst)
    if target not in parent:
        return []
    steps = []
    cur = target
    while parent[cur] is not None:
        e = parent[cur]
        steps.append(PathStep(e.src, e.template_id, e.signature, e.dst))
        cur = e.src
    return steps[::-1]


def enumerate_impurities(net: MechNetwork, products: list[Molecule]) -> list[Impurity]:
    """Species in terminal states that are neither recorded products nor starting materials."""
    recorded = set(_species_counter(products))
    start = set(_species_counter(net.nodes[net.root].molecules))
    best: dict[str, tuple[int, str]] = {}
    for key in net.terminal_nodes():
        if key == net.root:
            continue
        d = net.depth[key]
        for mol in net.nodes[key].molecules:
            smi = canonical_form(mol)
            if smi in recorded or smi in start:
                continue
            cand = (d, key)
            if smi not in best or cand < best[smi]:
                best[smi] = cand
    out = [
        Impurity(smi, d, tuple(shortest_pathway(net, key)))
        for smi, (d, key) in best.items()
    ]
    return sorted(out, key=lambda i: (i.depth, i.species))


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(net: MechNetwork, highlight: Iterable[str] = ()) -> str:
    """Graphviz digraph of the network; highlighted states and the edges between them are red."""
    hl = set(highlight)
    order = sorted(net.nodes, key=lambda k: (net.depth.get(k, 0), k))
    ids = {k: f"n{i}" for i, k in enumerate(order)}
    lines = ["digraph mechanism {", "  rankdir=LR;", '  node [shape=box, fontname="monospace"];']
    for k in order:
        attrs = [f'label="{_dot_escape(k)}"']
        if k == net.root:
            attrs.append("peripheries=2")
        if k in hl:
            attrs.append('color="red"')
        lines.append(f"  {ids[k]} [{', '.join(attrs)}];")
    for e in sorted(net.edges):
        attrs = [f'label="{_dot_escape(e.template_id)}"']
        if e.src in hl and e.dst in hl:
            attrs += ['color="red"', "penwidth=2"]
        lines.append(f"  {ids[e.src]} -> {ids[e.dst]} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# one-record driver


@dataclass
class Imputation:
    record: ReactionRecord
    status: str  # reproduced | no_condition | agents_missing | limit_hit | no_product | parse_error
    network: MechNetwork | None = None
    pruned: MechNetwork | None = None
    pathways: list[list[PathStep]] = field(default_factory=list)
    paths_truncated: bool = False
    message: str = ""

    @property
    def reproduced(self) -> bool:
        return self.status == "reproduced"


def impute(record: ReactionRecord, pack: list[ReactionClassDef], limits: Limits = Limits()) -> Imputation:
    """Expand, locate the recorded products, prune and linearize one reaction."""
    try:
        products = record.product_molecules()
        net = expand_network(record, pack, limits)
    except ParseError as exc:
        return Imputation(record, "parse_error", message=str(exc))
    except UnknownClass:
        return Imputation(record, "no_condition", message=f"no class matches {record.class_name!r}")
    except ValueError as exc:
        return Imputation(record, "parse_error", message=str(exc))
    if not net.conditions:
        return Imputation(record, "agents_missing", net, message="no condition has its required agents")
    keys = find_product_nodes(net, products)
    if not keys:
        status = "limit_hit" if net.truncated else "no_product"
        return Imputation(record, status, net, message="recorded product not reached")
    pruned = prune_to_product(net, keys, limits.max_depth)
    paths, cut = linearize_pathways(pruned, limits.max_paths)
    return Imputation(record, "reproduced", net, pruned, paths, cut)
