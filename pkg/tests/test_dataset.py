from __future__ import annotations

import json

import pytest

from conftest import desk_raw
from mechimpute.dataset import SPLITS, emit_dataset, parse_ratios, read_steps, split_of
from mechimpute.molgraph import StateBag, heavy_atom_census
from mechimpute.network import Limits


def gen(tmp_path, pack, records, name="out", **kw):
    out = tmp_path / name
    manifest = emit_dataset(records, pack, out, Limits(), **kw)
    return out, manifest


def test_single_snar_record_four_rows(tmp_path, pack):
    snar = [o for o in desk_raw() if o["id"] == "snar-001"]
    out, manifest = gen(tmp_path, pack, snar, ratios=(1.0, 0.0, 0.0))
    rows = read_steps(out / "train.jsonl")
    assert len(rows) == 4
    assert [r.is_termination for r in rows] == [False, False, False, True]
    assert rows[-1].before == rows[-1].after == rows[-2].after
    assert (out / "val.jsonl").read_text() == (out / "test.jsonl").read_text() == ""
    assert manifest["rows"] == {"train": 4, "val": 0, "test": 0}


def test_split_is_a_partition(generated):
    out, manifest = generated
    owner: dict[str, str] = {}
    for split in SPLITS:
        for row in read_steps(out / f"{split}.jsonl"):
            assert owner.setdefault(row.rxn_id, split) == split
    assert len(owner) == manifest["reproduced"] == 17
    assert sum(manifest["reactions"].values()) == 17


def test_manifest_breakdown(generated):
    _, m = generated
    assert m["total"] == 20 and m["coverage"] == pytest.approx(0.85)
    assert m["failures"]["agents_missing"] == 1
    assert m["failures"]["no_condition"] == 1
    assert m["failures"]["no_product"] == 1
    assert m["seed"] == 0 and m["ratios"] == [0.8, 0.1, 0.1]


def test_rejects_stream(generated):
    out, _ = generated
    rejects = [json.loads(line) for line in (out / "rejects.jsonl").read_text().splitlines()]
    assert {r["id"]: r["reason"] for r in rejects} == {
        "ester-002": "agents_missing", "suzuki-001": "no_condition", "snar-004": "no_product",
    }


def test_bad_record_is_rejected_not_fatal(tmp_path, pack):
    records = [{"id": "bad", "class": "Williamson ether synthesis", "reactants": ["C(("], "products": ["C"]},
               {"id": "noprod", "class": "X", "reactants": ["C"], "products": []}] + desk_raw()[:2]
    out, m = gen(tmp_path, pack, records)
    assert m["total"] == 4 and m["reproduced"] == 2 and m["failures"]["parse_error"] == 2


def test_empty_input(tmp_path, pack):
    out, m = gen(tmp_path, pack, [])
    assert m["coverage"] is None and m["coverage_defined"] is False
    assert all((out / f"{s}.jsonl").read_text() == "" for s in SPLITS)


def test_rows_conserve_heavy_atoms(generated):
    out, _ = generated
    for split in SPLITS:
        for row in read_steps(out / f"{split}.jsonl"):
            assert heavy_atom_census(StateBag.from_smiles(row.before)) == heavy_atom_census(
                StateBag.from_smiles(row.after))
            assert list(row.before) == sorted(row.before)


def test_determinism_across_workers(tmp_path, pack):
    a, _ = gen(tmp_path, pack, desk_raw(), "a")
    b, _ = gen(tmp_path, pack, desk_raw(), "b", workers=3)
    for name in [f"{s}.jsonl" for s in SPLITS] + ["rejects.jsonl", "manifest.json"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_split_hash_properties():
    ratios = parse_ratios("8:1:1")
    assert ratios == pytest.approx((0.8, 0.1, 0.1))
    ids = [f"r{i}" for i in range(2000)]
    counts = {s: sum(split_of(i, ratios, 0) == s for i in ids) for s in SPLITS}
    assert 1500 < counts["train"] < 1700 and 120 < counts["val"] < 280
    assert all(split_of(i, (1.0, 0.0, 0.0), 5) == "train" for i in ids[:100])
    assert [split_of(i, ratios, 1) for i in ids[:50]] != [split_of(i, ratios, 2) for i in ids[:50]]


@pytest.mark.parametrize("bad", ["1:1", "a:b:c", "-1:1:1", "0:0:0"])
def test_bad_ratios(bad):
    with pytest.raises(ValueError):
        parse_ratios(bad)


def test_ratios_must_sum_to_one(tmp_path, pack):
    with pytest.raises(ValueError):
        emit_dataset([], pack, tmp_path, ratios=(0.5, 0.1, 0.1))
