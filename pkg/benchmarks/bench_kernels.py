"""Compare the compiled and pure-Python kernels.

Times the two hot kernels directly on identical inputs (rank refinement over a
molecule corpus, pattern matching over random graphs) and then an end-to-end
desk-corpus imputation in a subprocess per backend.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import os
import random
import subprocess
import sys
import time
from pathlib import Path

from mechimpute import _core_py
from mechimpute.molgraph import Atom, Bond, BondOrder, Molecule, StateBag, _initial_ranks, parse_smiles
from mechimpute.rewrite import _compat_row, _flatten
from mechimpute.templates import parse_pattern

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "tests" / "data" / "molecules.smi"
PATTERNS = ["[C:1]-[C:2]", "[N,O:1]-[C:2]-[C:3]", "[C:1]-1-[C:2]-[C:3]-1", "[C:1](-[C:2])(-[C:3])-[C:4]"]

E2E = """
import json, time
from mechimpute import kernels
from mechimpute.dataset import impute_many
from mechimpute.network import ReactionRecord
from mechimpute.templates import load_starter_pack
recs = [ReactionRecord.from_json(json.loads(l)) for l in open({path!r}) if l.strip()]
pack = load_starter_pack()
t0 = time.perf_counter()
for _ in range({repeat}):
    impute_many(recs, pack)
print(kernels.BACKEND, (time.perf_counter() - t0) / {repeat})
"""


def chain(rng: random.Random, n: int) -> Molecule:
    atoms = tuple(Atom(rng.choice("CCCNO"), implicit_h=1) for _ in range(n))
    bonds = tuple(Bond(rng.randrange(i), i, BondOrder(1)) for i in range(1, n))
    return Molecule(atoms, bonds)


def match_inputs(pattern_text: str, state: StateBag) -> tuple:
    pattern = parse_pattern(pattern_text)
    flat = _flatten(state)
    order = list(pattern.slots)
    pos = {s: i for i, s in enumerate(order)}
    back_ptr, back_pos, back_ord = [0], [], []
    for s in order:
        for a, b, o in pattern.bonds:
            other = b if a == s else a if b == s else None
            if other is not None and pos[other] < pos[s]:
                back_pos.append(pos[other])
                back_ord.append(o)
        back_ptr.append(len(back_pos))
    compat = [_compat_row(pattern.atom(s), flat).astype("uint8").tolist() for s in order]
    return compat, back_ptr, back_pos, back_ord, flat.ptr, flat.idx, flat.ords


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        from mechimpute import _core
    except ImportError:
        print("compiled backend not built; run: python3 setup.py build_ext --inplace", file=sys.stderr)
        return 1

    mols = [parse_smiles(s) for s in CORPUS.read_text().split()]
    rng = random.Random(0)
    mols += [chain(rng, rng.randint(20, 60)) for _ in range(50)]
    refine_args = [(_initial_ranks(m), *m.csr()) for m in mols]
    states = [StateBag((chain(rng, rng.randint(8, 24)),)) for _ in range(60)]
    match_args = [match_inputs(p, s) for p in PATTERNS for s in states]

    rows = []
    for name, calls in (("refine_ranks", refine_args), ("match_pattern", match_args)):
        fast_fn, slow_fn = getattr(_core, name), getattr(_core_py, name)
        fast = best_of(lambda: [fast_fn(*a) for a in calls], args.repeat)
        slow = best_of(lambda: [slow_fn(*a) for a in calls], args.repeat)
        rows.append((f"{name} x{len(calls)}", fast, slow))

    desk = ROOT / "src" / "mechimpute" / "data" / "desk_corpus.jsonl"
    e2e = {}
    for pure in (False, True):
        env = {k: v for k, v in os.environ.items() if k != "MECHIMPUTE_PURE_PYTHON"}
        if pure:
            env["MECHIMPUTE_PURE_PYTHON"] = "1"
        code = E2E.format(path=str(desk), repeat=args.repeat)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        e2e[backend] = float(secs)
    rows.append(("desk imputation (20 records)", e2e["cython"], e2e["python"]))

    print(f"{'workload':32} {'cython s':>10} {'python s':>10} {'speedup':>8}")
    for label, fast, slow in rows:
        print(f"{label:32} {fast:10.4f} {slow:10.4f} {slow / fast:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
