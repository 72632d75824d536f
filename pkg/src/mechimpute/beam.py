"""Step rankers and the consecutive-prediction beam search.

A ranker maps a state to an ordered candidate list of next states. One
candidate is always the stop candidate, whose state equals the input state.
The beam search strings rankings together, scoring each path either by the
discounted accumulated rank ``R = sum_n gamma**n * r_n`` (depth ``n`` counted
from 0) or by the summed log-probability of the chosen candidates.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

from mechimpute.dataset import ElementaryStepRecord
from mechimpute.molgraph import StateBag
from mechimpute.network import MechNetwork, _bfs
from mechimpute.rewrite import enumerate_applications
from mechimpute.templates import ElementaryTemplate, ReactionClassDef, all_templates

STOP = "stop"


@dataclass(frozen=True)
class RankedCandidate:
    state: StateBag
    rank: int
    score: float | None = None
    is_stop: bool = False
    label: str = ""


@dataclass(frozen=True)
class BeamNode:
    state: StateBag
    depth: int
    path: tuple[tuple[str, int], ...]
    acc_rank: float
    acc_logprob: float | None
    ancestor_keys: frozenset[str]
    states: tuple[StateBag, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 10
    gamma: float = 0.5
    max_depth: int = 12
    mode: str = "rank"

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.mode not in ("rank", "prob"):
            raise ValueError(f"unknown beam mode {self.mode!r}")


@dataclass(frozen=True)
class BeamResult:
    final: StateBag
    path: tuple[tuple[str, int], ...]
    states: tuple[StateBag, ...]
    acc_rank: float
    acc_logprob: float | None

    def objective(self, mode: str) -> float:
        return self.acc_rank if mode == "rank" else -(self.acc_logprob or 0.0)


class StepRanker(Protocol):
    def rank(self, state: StateBag) -> list[RankedCandidate]: ...


def discounted_rank(ranks: Sequence[int], gamma: float = 0.5) -> float:
    return math.fsum(r * gamma**n for n, r in enumerate(ranks))


def finalize_ranking(state: StateBag, ordered: Iterable[tuple[StateBag, str, float | None]]) -> list[RankedCandidate]:
    """Dedup by state key, assign ranks 1..m and mark the stop candidate."""
    out: list[RankedCandidate] = []
    seen: set[str] = set()
    for cand, label, score in ordered:
        if cand.key in seen:
            continue
        seen.add(cand.key)
        out.append(RankedCandidate(cand, len(out) + 1, score, cand.key == state.key, label))
    if state.key not in seen:
        out.append(RankedCandidate(state, len(out) + 1, None, True, STOP))
    return out


def _weights_to_scores(weights: list[float]) -> list[float]:
    total = math.fsum(weights)
    return [w / total for w in weights]


def _applications(templates: Sequence[ElementaryTemplate], state: StateBag) -> dict[str, tuple[StateBag, str]]:
    """Successor key -> (state, first template id producing it), templates in the given order."""
    succ: dict[str, tuple[StateBag, str]] = {}
    for t in templates:
        if t.is_termination:
            continue
        for _, nxt in enumerate_applications(t, state, check_agents=False):
            if nxt.key != state.key and nxt.key not in succ:
                succ[nxt.key] = (nxt, t.id)
    return succ


class OracleRanker:
    """Ground truth from imputed networks: the productive next state first, stop at product nodes."""

    def __init__(self, networks: Iterable[tuple[MechNetwork, MechNetwork]]):
        self._truth: dict[str, str | None] = {}
        self._succ: dict[str, dict[str, tuple[StateBag, str]]] = {}
        for full, pruned in networks:
            for e in sorted(full.edges):
                self._succ.setdefault(e.src, {}).setdefault(e.dst, (full.nodes[e.dst], e.template_id))
            for key in full.nodes:
                self._succ.setdefault(key, {})
            if not pruned.targets:
                continue
            rev: dict[str, list[str]] = {}
            for e in pruned.edges:
                rev.setdefault(e.dst, []).append(e.src)
            d_prod = _bfs(rev, pruned.targets)
            for key in pruned.nodes:
                if key in self._truth:
                    continue
                if key in pruned.targets:
                    self._truth[key] = None
                    continue
                nxt = [e for e in pruned.out_edges(key) if d_prod.get(e.dst) == d_prod[key] - 1]
                if nxt:
                    self._truth[key] = nxt[0].dst

    def rank(self, state: StateBag) -> list[RankedCandidate]:
        key = state.key
        if key not in self._succ:
            return [RankedCandidate(state, 1, 1.0, True, STOP)]
        succ = self._succ[key]
        ordered: list[tuple[StateBag, str]] = []
        truth = self._truth.get(key, "")
        if truth is None:
            ordered.append((state, STOP))
        elif truth:
            ordered.append(succ[truth])
        ordered += [succ[k] for k in sorted(succ)]
        ordered.append((state, STOP))
        ranking = finalize_ranking(state, ((s, lbl, None) for s, lbl in ordered))
        m = len(ranking)
        scores = [0.9] + [0.1 / (m - 1)] * (m - 1) if m > 1 else [1.0]
        return [RankedCandidate(c.state, c.rank, sc, c.is_stop, c.label) for c, sc in zip(ranking, scores)]


class FrequencyRanker:
    """Orders template applications by training frequency of their template id.

    Ties fall back to successor state key. The stop candidate is always last,
    since termination rows carry no information about when to stop.
    """

    def __init__(self, counts: Counter[str], templates: Sequence[ElementaryTemplate]):
        self.counts = counts
        self.templates = [t for t in templates if not t.is_termination]

    def rank(self, state: StateBag) -> list[RankedCandidate]:
        best: dict[str, tuple[int, StateBag, str]] = {}
        for t in self.templates:
            c = self.counts.get(t.id, 0)
            for _, nxt in enumerate_applications(t, state, check_agents=False):
                if nxt.key == state.key:
                    continue
                prev = best.get(nxt.key)
                if prev is None or c > prev[0]:
                    best[nxt.key] = (c, nxt, t.id)
        order = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
        weights = [v[0] + 1.0 for _, v in order] + [1.0]
        scores = _weights_to_scores(weights)
        ranked = [(v[1], v[2], s) for (_, v), s in zip(order, scores)]
        ranked.append((state, STOP, scores[-1]))
        return finalize_ranking(state, ranked)


class UniformRanker:
    """Every template application equally likely, listed by successor state key, stop last."""

    def __init__(self, templates: Sequence[ElementaryTemplate]):
        self.templates = [t for t in templates if not t.is_termination]

    def rank(self, state: StateBag) -> list[RankedCandidate]:
        succ = _applications(self.templates, state)
        m = len(succ) + 1
        ranked = [(succ[k][0], succ[k][1], 1.0 / m) for k in sorted(succ)]
        ranked.append((state, STOP, 1.0 / m))
        return finalize_ranking(state, ranked)


def train_frequency_ranker(steps: Iterable[ElementaryStepRecord], pack: list[ReactionClassDef]) -> StepRanker:
    templates = all_templates(pack)
    counts = Counter(s.template_id for s in steps if not s.is_termination)
    if not counts:
        return UniformRanker(templates)
    return FrequencyRanker(counts, templates)


class ExternalRanker:
    """Ranker served by a child process speaking line-delimited JSON on stdin/stdout."""

    def __init__(self, command: str):
        self.command = command
        self._proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
        )

    def rank(self, state: StateBag) -> list[RankedCandidate]:
        assert self._proc.stdin and self._proc.stdout
        self._proc.stdin.write(json.dumps({"state": state.smiles()}) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError(f"external ranker {self.command!r} closed its output")
        reply = json.loads(line)
        cands = sorted(reply.get("candidates", []), key=lambda c: c["rank"])
        ranked = [(StateBag.from_smiles(c["state"]), "extern", c.get("score")) for c in cands]
        return finalize_ranking(state, ranked)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()  # type: ignore[union-attr]
            self._proc.wait(timeout=10)


def _child(node: BeamNode, cand: RankedCandidate, cfg: BeamConfig) -> BeamNode:
    logp = None
    if cfg.mode == "prob":
        if cand.score is None or not 0.0 < cand.score <= 1.0:
            raise ValueError("prob mode needs candidate scores in (0, 1]")
        logp = (node.acc_logprob or 0.0) + math.log(cand.score)
    return BeamNode(
        state=cand.state,
        depth=node.depth + 1,
        path=node.path + ((cand.label, cand.rank),),
        acc_rank=node.acc_rank + cand.rank * cfg.gamma**node.depth,
        acc_logprob=logp,
        ancestor_keys=node.ancestor_keys | {cand.state.key},
        states=node.states + (cand.state,),
    )


def beam_search(root: StateBag, ranker: StepRanker, config: BeamConfig = BeamConfig()) -> list[BeamResult]:
    """Best-first beam over ranker predictions; returns up to ``beam_width`` finished paths.

    Each depth layer expands every beam node, pools all children (stop
    children become finished paths) and keeps the best ``beam_width`` of the
    pool. Children that revisit a state already on their own path are dropped.
    Paths still open at ``max_depth`` count as failures.
    """
    cfg = config

    def objective(n: BeamNode) -> tuple:
        primary = n.acc_rank if cfg.mode == "rank" else -(n.acc_logprob or 0.0)
        return (primary, n.path, n.state.key)

    start = BeamNode(root, 0, (), 0.0, 0.0 if cfg.mode == "prob" else None, frozenset({root.key}), (root,))
    beam = [start]
    finals: list[BeamNode] = []
    for _ in range(cfg.max_depth):
        pool: list[tuple[BeamNode, bool]] = []
        for node in beam:
            for cand in ranker.rank(node.state):
                if cand.is_stop:
                    pool.append((_child(node, cand, cfg), True))
                elif cand.state.key not in node.ancestor_keys:
                    pool.append((_child(node, cand, cfg), False))
        pool.sort(key=lambda item: objective(item[0]))
        beam = []
        for child, done in pool[: cfg.beam_width]:
            (finals if done else beam).append(child)
        finals.sort(key=objective)
        finals = finals[: cfg.beam_width]
        if not beam:
            break
        # extending a path only worsens its objective
        if len(finals) >= cfg.beam_width and objective(finals[-1])[0] <= objective(beam[0])[0]:
            break
    return [BeamResult(n.state, n.path, n.states, n.acc_rank, n.acc_logprob) for n in finals]
