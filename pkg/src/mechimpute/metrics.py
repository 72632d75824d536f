"""Evaluation metrics over prediction logs: top-k step accuracy, sequence rank, coverage."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

DEFAULT_KS = (1, 2, 3, 5, 10)

Rank = int | None  # None is FAIL: the truth is absent from the candidates


def state_key_of(smiles: Iterable[str]) -> str:
    return ".".join(sorted(smiles))


def match(truth: Sequence[str], candidate: Sequence[str]) -> bool:
    """Multiset equality of canonical SMILES."""
    return sorted(truth) == sorted(candidate)


@dataclass(frozen=True)
class StepPredictionLog:
    rxn_id: str
    step_index: int
    truth: tuple[str, ...]
    candidates: tuple[tuple[str, ...], ...]
    path_id: int = 0

    @property
    def truth_rank(self) -> Rank:
        for i, cand in enumerate(self.candidates, start=1):
            if match(self.truth, cand):
                return i
        return None

    def to_json(self) -> dict:
        return {
            "type": "step", "rxn_id": self.rxn_id, "path_id": self.path_id, "step_index": self.step_index,
            "truth": list(self.truth), "candidates": [list(c) for c in self.candidates],
        }

    @classmethod
    def from_json(cls, obj: dict) -> StepPredictionLog:
        return cls(
            rxn_id=str(obj["rxn_id"]), step_index=int(obj["step_index"]), truth=tuple(obj["truth"]),
            candidates=tuple(tuple(c) for c in obj["candidates"]), path_id=int(obj.get("path_id", 0)),
        )


@dataclass(frozen=True)
class SequenceResult:
    rxn_id: str
    per_step_ranks: tuple[Rank, ...]
    sequence_rank: Rank


def topk_from_ranks(ranks: Sequence[Rank], ks: Sequence[int] = DEFAULT_KS) -> dict[int, float]:
    if not ranks:
        raise ValueError("top-k accuracy is undefined on an empty log")
    if list(ks) != sorted(ks):
        raise ValueError("ks must be ascending")
    n = len(ranks)
    return {k: sum(1 for r in ranks if r is not None and r <= k) / n for k in ks}


def topk_accuracy(logs: Sequence[StepPredictionLog], ks: Sequence[int] = DEFAULT_KS) -> dict[int, float]:
    return topk_from_ranks([log.truth_rank for log in logs], ks)


def sequence_rank(per_step_ranks: Sequence[Rank]) -> Rank:
    """Worst step rank of a sequence; any FAIL makes the sequence FAIL."""
    if not per_step_ranks:
        raise ValueError("sequence rank is undefined for an empty sequence")
    if any(r is None for r in per_step_ranks):
        return None
    return max(per_step_ranks)  # type: ignore[type-var]


def sequence_results(logs: Iterable[StepPredictionLog]) -> list[SequenceResult]:
    """One result per reaction: the best sequence rank over its pathways.

    FAIL counts as worse than any integer rank.
    """
    by_path: dict[str, dict[int, list[StepPredictionLog]]] = defaultdict(lambda: defaultdict(list))
    for log in logs:
        by_path[log.rxn_id][log.path_id].append(log)
    out = []
    for rxn in sorted(by_path):
        best: tuple[float, int] | None = None
        chosen: tuple[Rank, ...] = ()
        for pid in sorted(by_path[rxn]):
            steps = sorted(by_path[rxn][pid], key=lambda s: s.step_index)
            ranks = tuple(s.truth_rank for s in steps)
            sr = sequence_rank(ranks)
            cand = (math.inf if sr is None else sr, pid)
            if best is None or cand < best:
                best, chosen = cand, ranks
        out.append(SequenceResult(rxn, chosen, sequence_rank(chosen)))
    return out


def sequence_topk(results: Sequence[SequenceResult], ks: Sequence[int] = DEFAULT_KS) -> dict[int, float]:
    return topk_from_ranks([r.sequence_rank for r in results], ks)


def coverage(manifest: dict) -> float:
    """Reproduced / total from a generation manifest; undefined (error) for an empty run."""
    total = manifest.get("total", 0)
    if not total:
        raise ValueError("coverage is undefined for zero records")
    return manifest["reproduced"] / total


def format_rank(r: Rank) -> int | str:
    return "FAIL" if r is None else r


def build_report(
    logs: Sequence[StepPredictionLog],
    ks: Sequence[int] = DEFAULT_KS,
    beam_lines: Sequence[dict] = (),
) -> dict:
    steps = topk_accuracy(logs, ks)
    seqs = sequence_results(logs)
    report = {
        "n_steps": len(logs),
        "n_reactions": len(seqs),
        "step_fail": sum(1 for log in logs if log.truth_rank is None),
        "topk_step": {str(k): v for k, v in steps.items()},
        "topk_sequence": {str(k): v for k, v in sequence_topk(seqs, ks).items()},
        "sequences": [
            {"rxn_id": s.rxn_id, "per_step_ranks": [format_rank(r) for r in s.per_step_ranks],
             "sequence_rank": format_rank(s.sequence_rank)}
            for s in seqs
        ],
    }
    if beam_lines:
        recovered = sum(1 for b in beam_lines if b.get("recovered"))
        report["beam_recovered"] = recovered
        report["beam_total"] = len(beam_lines)
        report["beam_recovery"] = recovered / len(beam_lines)
    return report


def format_table(report: dict) -> str:
    ks = list(report["topk_step"])
    width = max(len("sequence rank"), 4)
    head = "metric".ljust(width) + "".join(f"  top-{k:<4}" for k in ks)
    rows = [head, "-" * len(head)]
    for name, key in (("elementary", "topk_step"), ("sequence rank", "topk_sequence")):
        rows.append(name.ljust(width) + "".join(f"  {report[key][k]:<8.3f}" for k in ks))
    rows.append(f"steps={report['n_steps']} reactions={report['n_reactions']} step_fail={report['step_fail']}")
    if "beam_recovery" in report:
        rows.append(f"beam recovered {report['beam_recovered']}/{report['beam_total']}")
    return "\n".join(rows) + "\n"
