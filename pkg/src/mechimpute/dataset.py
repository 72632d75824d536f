"""Mechanistic dataset emission: step rows, reaction-level splits, manifest."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from collections.abc import Iterable, Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from mechimpute.network import Imputation, Limits, ReactionRecord, impute
from mechimpute.templates import ReactionClassDef, termination_template

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
FAILURE_KINDS = ("parse_error", "no_condition", "agents_missing", "limit_hit", "no_product")


@dataclass(frozen=True)
class ElementaryStepRecord:
    rxn_id: str
    path_id: int
    step_index: int
    before: tuple[str, ...]
    after: tuple[str, ...]
    template_id: str
    is_termination: bool

    def to_json(self) -> dict:
        d = asdict(self)
        d["before"] = list(self.before)
        d["after"] = list(self.after)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> ElementaryStepRecord:
        return cls(
            rxn_id=str(obj["rxn_id"]), path_id=int(obj["path_id"]), step_index=int(obj["step_index"]),
            before=tuple(obj["before"]), after=tuple(obj["after"]),
            template_id=obj["template_id"], is_termination=bool(obj["is_termination"]),
        )


def parse_ratios(text: str | Iterable[float]) -> tuple[float, float, float]:
    """``"8:1:1"`` (or three numbers) normalized to fractions summing to 1."""
    parts = [float(x) for x in text.split(":")] if isinstance(text, str) else [float(x) for x in text]
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) <= 0:
        raise ValueError(f"split needs three non-negative weights, got {text!r}")
    total = sum(parts)
    return tuple(p / total for p in parts)  # type: ignore[return-value]


def split_of(rxn_id: str, ratios: tuple[float, float, float], seed: int) -> str:
    """Reaction-level split from a seeded hash of the id (independent of input order)."""
    digest = hashlib.sha256(f"{seed}\x00{rxn_id}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    acc = 0.0
    for name, frac in zip(SPLITS, ratios):
        acc += frac
        if u < acc:
            return name
    # rounding slack: last split with nonzero weight
    return next(n for n, f in reversed(list(zip(SPLITS, ratios))) if f > 0)


def pathway_rows(imp: Imputation) -> list[ElementaryStepRecord]:
    """Step rows for every pathway of a reproduced reaction, each closed by a termination row."""
    rows: list[ElementaryStepRecord] = []
    if not imp.reproduced:
        return rows
    nodes = imp.pruned.nodes
    end_id = termination_template(imp.record.class_name).id
    for pid, path in enumerate(imp.pathways):
        for i, step in enumerate(path):
            rows.append(ElementaryStepRecord(
                imp.record.id, pid, i, tuple(nodes[step.before].smiles()),
                tuple(nodes[step.after].smiles()), step.template_id, False,
            ))
        final = nodes[path[-1].after if path else imp.pruned.root].smiles()
        rows.append(ElementaryStepRecord(
            imp.record.id, pid, len(path), tuple(final), tuple(final), end_id, True,
        ))
    return rows


_PACK: list[ReactionClassDef] | None = None
_LIMITS: Limits | None = None


def _init_worker(pack: list[ReactionClassDef], limits: Limits) -> None:
    global _PACK, _LIMITS
    _PACK, _LIMITS = pack, limits


def _process(item: dict | ReactionRecord) -> dict:
    try:
        record = item if isinstance(item, ReactionRecord) else ReactionRecord.from_json(item)
    except (KeyError, TypeError, ValueError) as exc:
        rid = item.get("id") if isinstance(item, dict) else None
        return {"id": rid, "status": "parse_error", "message": f"bad record: {exc}", "rows": []}
    imp = impute(record, _PACK, _LIMITS)
    net = imp.network
    return {
        "id": record.id,
        "status": imp.status,
        "message": imp.message,
        "rows": [r.to_json() for r in pathway_rows(imp)],
        "truncated_nodes": bool(net and net.truncated_nodes),
        "truncated_depth": bool(net and net.truncated_depth),
        "truncated_paths": imp.paths_truncated,
    }


def process_records(
    records: Iterable[dict | ReactionRecord],
    pack: list[ReactionClassDef],
    limits: Limits = Limits(),
    workers: int = 1,
) -> Iterator[dict]:
    """Impute each record; results come back in input order whatever the worker count."""
    if workers <= 1:
        _init_worker(pack, limits)
        for item in records:
            yield _process(item)
        return
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(pack, limits)) as pool:
        yield from pool.map(_process, records, chunksize=2)


def _impute_one(record: ReactionRecord) -> Imputation:
    return impute(record, _PACK, _LIMITS)


def impute_many(
    records: Iterable[ReactionRecord], pack: list[ReactionClassDef], limits: Limits = Limits(), workers: int = 1
) -> list[Imputation]:
    """Impute records in input order, optionally across a process pool."""
    if workers <= 1:
        return [impute(r, pack, limits) for r in records]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(pack, limits)) as pool:
        return list(pool.map(_impute_one, records, chunksize=2))


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False)


def emit_dataset(
    records: Iterable[dict | ReactionRecord],
    pack: list[ReactionClassDef],
    out_dir: str | Path,
    limits: Limits = Limits(),
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    workers: int = 1,
) -> dict:
    """Write ``train/val/test.jsonl``, ``rejects.jsonl`` and ``manifest.json``; return the manifest."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handles = {name: open(out / f"{name}.jsonl", "w", encoding="utf-8", newline="\n") for name in SPLITS}
    rejects = open(out / "rejects.jsonl", "w", encoding="utf-8", newline="\n")
    total = 0
    failures: Counter[str] = Counter()
    truncation: Counter[str] = Counter()
    rows_per: Counter[str] = Counter()
    rxns_per: Counter[str] = Counter()
    try:
        for res in process_records(records, pack, limits, workers):
            total += 1
            for kind in ("nodes", "depth", "paths"):
                if res.get(f"truncated_{kind}"):
                    truncation[kind] += 1
            if res["status"] != "reproduced":
                failures[res["status"]] += 1
                rejects.write(_dump({"id": res["id"], "reason": res["status"], "message": res["message"]}) + "\n")
                log.info("reject %s: %s", res["id"], res["status"])
                continue
            split = split_of(res["id"], ratios, seed)
            rxns_per[split] += 1
            for row in res["rows"]:
                handles[split].write(_dump(row) + "\n")
                rows_per[split] += 1
    finally:
        for h in handles.values():
            h.close()
        rejects.close()
    reproduced = total - sum(failures.values())
    manifest = {
        "total": total,
        "reproduced": reproduced,
        "coverage": reproduced / total if total else None,
        "coverage_defined": bool(total),
        "failures": {k: failures[k] for k in FAILURE_KINDS},
        "truncated": {k: truncation[k] for k in ("nodes", "depth", "paths")},
        "reactions": {k: rxns_per[k] for k in SPLITS},
        "rows": {k: rows_per[k] for k in SPLITS},
        "seed": seed,
        "ratios": list(ratios),
        "limits": asdict(limits),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def read_steps(path: str | Path) -> list[ElementaryStepRecord]:
    return [ElementaryStepRecord.from_json(o) for o in read_jsonl(path)]
