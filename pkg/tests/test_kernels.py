from __future__ import annotations

import os
import random
import subprocess
import sys

import pytest

from conftest import molecule_corpus, random_molecule
from mechimpute import _core_py, kernels
from mechimpute.molgraph import StateBag, _initial_ranks, parse_smiles
from mechimpute.rewrite import _compat_row, _flatten
from mechimpute.templates import parse_pattern

_core = pytest.importorskip("mechimpute._core", reason="compiled backend not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_refine_parity_on_corpus():
    rng = random.Random(1)
    mols = [parse_smiles(s) for s in molecule_corpus()]
    mols += [random_molecule(rng, rng.randint(1, 14), rng.randint(0, 3)) for _ in range(100)]
    for mol in mols:
        ptr, idx, ords = mol.csr()
        init = _initial_ranks(mol)
        assert list(_core.refine_ranks(init, ptr, idx, ords)) == list(_core_py.refine_ranks(init, ptr, idx, ords))


def _match_inputs(pattern_text: str, state: StateBag):
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


@pytest.mark.parametrize(
    "pattern",
    ["[C:1]-[C:2]", "[C:1]~[O:2]", "[C:1] . [O:2]", "[N,O:1]-[C:2]-[C:3]", "[C:1]-1-[C:2]-[C:3]-1"],
)
def test_match_parity(pattern):
    rng = random.Random(2)
    for _ in range(40):
        state = StateBag((random_molecule(rng, rng.randint(2, 10), rng.randint(0, 2)),))
        args = _match_inputs(pattern, state)
        assert sorted(map(tuple, _core.match_pattern(*args))) == sorted(map(tuple, _core_py.match_pattern(*args)))


def _run_backend(pure: bool) -> str:
    env = dict(os.environ)
    env.pop("MECHIMPUTE_PURE_PYTHON", None)
    if pure:
        env["MECHIMPUTE_PURE_PYTHON"] = "1"
    code = (
        "import sys\n"
        "from mechimpute import kernels\n"
        "from mechimpute.molgraph import canonical_form, parse_smiles\n"
        "print(kernels.BACKEND)\n"
        "for line in sys.stdin:\n"
        "    print(canonical_form(parse_smiles(line.strip())))\n"
    )
    smis = "\n".join(s for s in molecule_corpus() if "." not in s) + "\n"
    res = subprocess.run([sys.executable, "-c", code], input=smis, capture_output=True, text=True, env=env, check=True)
    return res.stdout


def test_whole_pipeline_backend_parity():
    fast, slow = _run_backend(False), _run_backend(True)
    assert fast.split("\n", 1)[0] == "cython"
    assert slow.split("\n", 1)[0] == "python"
    assert fast.split("\n", 1)[1] == slow.split("\n", 1)[1]
