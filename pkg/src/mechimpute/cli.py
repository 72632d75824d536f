"""``mechimpute`` command line: pack validation, dataset generation, beam, evaluation, impurities, DOT."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from mechimpute.beam import (
    BeamConfig,
    ExternalRanker,
    OracleRanker,
    StepRanker,
    UniformRanker,
    beam_search,
    train_frequency_ranker,
)
from mechimpute.dataset import (
    ElementaryStepRecord,
    emit_dataset,
    impute_many,
    parse_ratios,
    pathway_rows,
    read_jsonl,
    read_steps,
)
from mechimpute.metrics import DEFAULT_KS, StepPredictionLog, build_report, format_table
from mechimpute.molgraph import ParseError, StateBag, canonical_form, parse_smiles, valence_warnings
from mechimpute.network import (
    Limits,
    ReactionRecord,
    UnknownClass,
    enumerate_impurities,
    expand_network,
    export_dot,
    find_product_nodes,
    prune_to_product,
)
from mechimpute.templates import (
    PackError,
    ReactionClassDef,
    all_templates,
    load_pack,
    parse_pack,
    starter_pack_path,
    validate_pack,
)

log = logging.getLogger("mechimpute")

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    """Bad input files or flags: exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    pack_path: str
    limits: Limits
    ratios: tuple[float, float, float]
    seed: int
    beam: BeamConfig
    valence_slack: int
    workers: int

    def __post_init__(self) -> None:
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _config_from(args: argparse.Namespace) -> RunConfig:
    try:
        return RunConfig(
            pack_path=args.pack or str(starter_pack_path()),
            limits=Limits(args.max_depth, args.max_nodes, args.max_paths, args.all_classes),
            ratios=parse_ratios(args.split),
            seed=args.seed,
            beam=BeamConfig(args.beam, args.gamma, args.max_depth, args.mode),
            valence_slack=args.valence_slack,
            workers=args.workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def read_config_file(path: str) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment. Keys use flag spelling without dashes."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _load_pack(path: str) -> list[ReactionClassDef]:
    try:
        return load_pack(path)
    except OSError as exc:
        raise UsageError(f"cannot read pack {path}: {exc}") from None
    except PackError as exc:
        raise UsageError(f"pack {path}: {exc}") from None


def _read_records(path: str | None) -> list[dict]:
    if not path:
        raise UsageError("--reactions is required")
    try:
        return list(read_jsonl(path))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _parse_records(raw: list[dict]) -> list[ReactionRecord]:
    out = []
    for obj in raw:
        try:
            out.append(ReactionRecord.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("skipping record %s: %s", obj.get("id"), exc)
    return out


def _open_out(path: str | None) -> TextIO:
    if not path or path == "-":
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="\n")


def _close(fh: TextIO) -> None:
    if fh is not sys.stdout:
        fh.close()


# ---------------------------------------------------------------------------
# commands


def cmd_validate_pack(args: argparse.Namespace) -> int:
    path = args.path or args.pack
    if not path:
        raise UsageError("validate-pack needs a pack path")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read pack {path}: {exc}") from None
    try:
        pack = parse_pack(text)
    except PackError as exc:
        print(f"{path}:{exc.line}:{exc.col}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    diags = validate_pack(pack)
    for d in diags:
        print(f"{path}: {d.severity}: {d.template_id}: {d.message}", file=sys.stderr)
    n_err = sum(1 for d in diags if d.severity == "error")
    n_tpl = sum(1 for _ in all_templates(pack))
    print(f"{len(pack)} classes, {n_tpl} templates, {n_err} errors, {len(diags) - n_err} warnings", file=sys.stderr)
    return EXIT_DOMAIN if n_err else EXIT_OK


def cmd_canon(args: argparse.Namespace, cfg: RunConfig) -> int:
    inputs = list(args.smiles)
    if args.input:
        try:
            inputs += [ln.strip() for ln in Path(args.input).read_text(encoding="utf-8").splitlines() if ln.strip()]
        except OSError as exc:
            raise UsageError(f"cannot read {args.input}: {exc}") from None
    status = EXIT_OK
    for smi in inputs:
        try:
            mol = parse_smiles(smi)
        except ParseError as exc:
            print(f"{smi}: {exc}", file=sys.stderr)
            status = EXIT_DOMAIN
            continue
        print(".".join(sorted(canonical_form(p) for p in mol.components())))
        for w in valence_warnings(mol, cfg.valence_slack):
            print(f"{smi}: warning: {w}", file=sys.stderr)
    return status


def cmd_gen(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not args.out:
        raise UsageError("gen needs --out")
    raw = _read_records(args.reactions)
    pack = _load_pack(cfg.pack_path)
    manifest = emit_dataset(raw, pack, args.out, cfg.limits, cfg.ratios, cfg.seed, cfg.workers)
    cov = manifest["coverage"]
    shown = "undefined" if cov is None else f"{cov:.3f}"
    print(f"{manifest['reproduced']}/{manifest['total']} reproduced, coverage {shown}", file=sys.stderr)
    return EXIT_OK


def make_ranker(spec: str, pack: list[ReactionClassDef], imputations, train_path: str | None) -> StepRanker:
    if spec == "oracle":
        return OracleRanker((imp.network, imp.pruned) for imp in imputations if imp.reproduced)
    if spec == "uniform":
        return UniformRanker(all_templates(pack))
    if spec == "frequency":
        if not train_path:
            raise UsageError("the frequency ranker needs --train")
        try:
            steps = read_steps(train_path)
        except OSError as exc:
            raise UsageError(f"cannot read {train_path}: {exc}") from None
        return train_frequency_ranker(steps, pack)
    if spec.startswith("extern:"):
        return ExternalRanker(spec[len("extern:"):])
    raise UsageError(f"unknown ranker {spec!r}")


def _contains(final: StateBag, products: list[str]) -> bool:
    have = Counter(final.smiles())
    want = Counter(canonical_form(m) for smi in products for m in parse_smiles(smi).components())
    return all(have[s] >= c for s, c in want.items())


def cmd_beam(args: argparse.Namespace, cfg: RunConfig) -> int:
    records = _parse_records(_read_records(args.reactions))
    pack = _load_pack(cfg.pack_path)
    if args.steps:
        try:
            truth_rows = read_steps(args.steps)
        except OSError as exc:
            raise UsageError(f"cannot read {args.steps}: {exc}") from None
        wanted = {r.rxn_id for r in truth_rows}
        records = [r for r in records if r.id in wanted]
    imps = impute_many(records, pack, cfg.limits, cfg.workers)
    if not args.steps:
        truth_rows = [row for imp in imps for row in pathway_rows(imp)]
    ranker = make_ranker(args.ranker, pack, imps, args.train)
    by_rxn: dict[str, list[ElementaryStepRecord]] = {}
    for row in truth_rows:
        by_rxn.setdefault(row.rxn_id, []).append(row)
    out = _open_out(args.out)
    try:
        header = {
            "type": "header", "ranker": args.ranker, "beam": cfg.beam.beam_width, "gamma": cfg.beam.gamma,
            "mode": cfg.beam.mode, "max_depth": cfg.beam.max_depth,
        }
        out.write(json.dumps(header) + "\n")
        for rec in records:
            rows = by_rxn.get(rec.id)
            if not rows:
                continue
            for row in rows:
                cands = ranker.rank(StateBag.from_smiles(row.before))
                entry = StepPredictionLog(
                    row.rxn_id, row.step_index, row.after, tuple(tuple(c.state.smiles()) for c in cands), row.path_id,
                )
                out.write(json.dumps(entry.to_json()) + "\n")
            results = beam_search(rec.root_state(), ranker, cfg.beam)
            preds = [
                {"final": r.final.smiles(), "path": [list(p) for p in r.path], "acc_rank": r.acc_rank,
                 "acc_logprob": r.acc_logprob}
                for r in results
            ]
            recovered = bool(results) and _contains(results[0].final, list(rec.products))
            out.write(json.dumps({"type": "beam", "rxn_id": rec.id, "recovered": recovered, "predictions": preds}) + "\n")
    finally:
        _close(out)
        if isinstance(ranker, ExternalRanker):
            ranker.close()
    return EXIT_OK


def load_prediction_log(path: str) -> tuple[list[StepPredictionLog], list[dict]]:
    steps, beams = [], []
    try:
        for obj in read_jsonl(path):
            kind = obj.get("type", "step")
            if kind == "step":
                steps.append(StepPredictionLog.from_json(obj))
            elif kind == "beam":
                beams.append(obj)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    return steps, beams


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not args.pred or not args.truth:
        raise UsageError("eval needs --pred and --truth")
    try:
        ks = sorted({int(k) for k in args.topk.split(",")})
    except ValueError:
        raise UsageError(f"bad --topk {args.topk!r}") from None
    steps, beams = load_prediction_log(args.pred)
    truth: dict[tuple[str, int, int], ElementaryStepRecord] = {}
    for path in args.truth:
        try:
            for row in read_steps(path):
                truth[(row.rxn_id, row.path_id, row.step_index)] = row
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from None
    pred_ids = {s.rxn_id for s in steps}
    truth_ids = {k[0] for k in truth}
    orphans = sorted(pred_ids ^ truth_ids)
    missing_steps = sorted(k for k in truth if k[0] in pred_ids and k not in {(s.rxn_id, s.path_id, s.step_index) for s in steps})
    if orphans or missing_steps:
        for rid in orphans:
            side = "prediction log" if rid in pred_ids else "truth"
            print(f"orphan reaction {rid} (only in {side})", file=sys.stderr)
        for k in missing_steps:
            print(f"missing prediction for {k[0]} path {k[1]} step {k[2]}", file=sys.stderr)
        return EXIT_DOMAIN
    scored = []
    for s in steps:
        row = truth.get((s.rxn_id, s.path_id, s.step_index))
        if row is None:
            print(f"prediction for unknown step {s.rxn_id} path {s.path_id} step {s.step_index}", file=sys.stderr)
            return EXIT_DOMAIN
        scored.append(StepPredictionLog(s.rxn_id, s.step_index, row.after, s.candidates, s.path_id))
    if not scored:
        print("no steps to evaluate", file=sys.stderr)
        return EXIT_DOMAIN
    report = build_report(scored, ks, [b for b in beams if b["rxn_id"] in truth_ids])
    if args.out:
        out = _open_out(args.out)
        out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
        _close(out)
    sys.stdout.write(format_table(report))
    return EXIT_OK


def cmd_impurities(args: argparse.Namespace, cfg: RunConfig) -> int:
    records = _parse_records(_read_records(args.reactions))
    pack = _load_pack(cfg.pack_path)
    imps = impute_many(records, pack, cfg.limits, cfg.workers)
    out = _open_out(args.out)
    try:
        for rec, imp in zip(records, imps):
            entry: dict = {"rxn_id": rec.id, "status": imp.status, "impurities": []}
            if imp.network is not None:
                for imp_ in enumerate_impurities(imp.network, rec.product_molecules()):
                    entry["impurities"].append({
                        "species": imp_.species, "depth": imp_.depth,
                        "pathway": [{"before": s.before, "template_id": s.template_id, "after": s.after}
                                    for s in imp_.pathway],
                    })
            out.write(json.dumps(entry) + "\n")
    finally:
        _close(out)
    return EXIT_OK


def cmd_dot(args: argparse.Namespace, cfg: RunConfig) -> int:
    records = _parse_records(_read_records(args.reactions))
    if args.id:
        records = [r for r in records if r.id == args.id]
    if not records:
        raise UsageError("no matching reaction record")
    rec = records[0]
    pack = _load_pack(cfg.pack_path)
    try:
        net = expand_network(rec, pack, cfg.limits)
    except UnknownClass:
        print(f"no class matches {rec.class_name!r}", file=sys.stderr)
        return EXIT_DOMAIN
    keys = find_product_nodes(net, rec.product_molecules())
    highlight = prune_to_product(net, keys, cfg.limits.max_depth).nodes if keys else {}
    out = _open_out(args.out)
    out.write(export_dot(net, highlight))
    _close(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; explicit flags win")
    p.add_argument("--pack", help="template pack (default: bundled starter pack)")
    p.add_argument("--reactions", help="reaction records JSONL")
    p.add_argument("--out", help="output path (directory for gen; '-' or absent means stdout)")
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--max-nodes", type=int, default=5000)
    p.add_argument("--max-paths", type=int, default=64)
    p.add_argument("--split", default="8:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--mode", choices=("rank", "prob"), default="rank")
    p.add_argument("--ranker", default="oracle", help="oracle | frequency | uniform | extern:<cmd>")
    p.add_argument("--topk", default=",".join(map(str, DEFAULT_KS)))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--all-classes", action="store_true")
    p.add_argument("--valence-slack", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="mechimpute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}
    p = sub.add_parser("validate-pack", help="parse and lint a template pack")
    p.add_argument("path", nargs="?")
    _common(p)
    p = sub.add_parser("canon", help="canonical SMILES")
    p.add_argument("smiles", nargs="*")
    p.add_argument("--input", help="file with one SMILES per line")
    _common(p)
    p = sub.add_parser("gen", help="generate the mechanistic dataset")
    _common(p)
    p = sub.add_parser("beam", help="rank steps and run beam search")
    p.add_argument("--steps", help="truth step rows to score (default: imputed from the reactions)")
    p.add_argument("--train", help="training step rows for the frequency ranker")
    _common(p)
    p = sub.add_parser("eval", help="score a prediction log against truth rows")
    p.add_argument("--pred", help="prediction log JSONL")
    p.add_argument("--truth", nargs="+", help="truth step rows JSONL")
    _common(p)
    p = sub.add_parser("impurities", help="list predicted side products")
    _common(p)
    p = sub.add_parser("dot", help="render a reaction network as DOT")
    p.add_argument("--id", help="record id (default: first record)")
    _common(p)
    for name, action in sub.choices.items():
        subs[name] = action
    return parser, subs


_BOOL_KEYS = {"all_classes", "verbose"}


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        defaults: dict[str, object] = {}
        for key, value in values.items():
            if key not in known or key in ("config", "command"):
                raise UsageError(f"{args.config}: unknown key {key!r}")
            defaults[key] = value.lower() in ("1", "true", "yes", "on") if key in _BOOL_KEYS else value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


COMMANDS = {
    "canon": cmd_canon, "gen": cmd_gen, "beam": cmd_beam, "eval": cmd_eval,
    "impurities": cmd_impurities, "dot": cmd_dot,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"mechimpute: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:  # argparse usage errors
        return EXIT_IO if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate-pack":
            return cmd_validate_pack(args)
        cfg = _config_from(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"mechimpute: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
