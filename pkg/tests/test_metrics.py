from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mechimpute.metrics import (
    DEFAULT_KS,
    StepPredictionLog,
    build_report,
    coverage,
    format_table,
    match,
    sequence_rank,
    sequence_results,
    topk_accuracy,
    topk_from_ranks,
)

ranks_st = st.lists(st.one_of(st.none(), st.integers(1, 15)), min_size=1, max_size=40)


def log_with_rank(rxn: str, idx: int, rank: int | None, pid: int = 0, m: int = 12) -> StepPredictionLog:
    truth = (f"T{rxn}{idx}",)
    cands = [(f"X{i}",) for i in range(m)]
    if rank is not None:
        cands[rank - 1] = truth
    return StepPredictionLog(rxn, idx, truth, tuple(cands), pid)


def test_match():
    assert match(["A", "B"], ["A", "B"])
    assert match(["B", "A"], ["A", "B"])
    assert not match(["A"], ["A", "[Cl-]"])


def test_topk_counting_example():
    acc = topk_from_ranks([1, 2, 1, None], [1, 2, 10])
    assert acc == {1: 0.5, 2: 0.75, 10: 0.75}
    assert set(topk_from_ranks([1, 1, 1]).values()) == {1.0}


def test_topk_empty_is_error():
    with pytest.raises(ValueError):
        topk_accuracy([])


def test_truth_rank_from_candidates():
    assert log_with_rank("r", 0, 3).truth_rank == 3
    assert log_with_rank("r", 0, None).truth_rank is None


@pytest.mark.parametrize("seq, expect", [([1, 3, 1], 3), ([1, 1, 1], 1), ([1, None, 1], None)])
def test_sequence_rank(seq, expect):
    assert sequence_rank(seq) == expect


def test_sequence_rank_empty():
    with pytest.raises(ValueError):
        sequence_rank([])


@given(ranks_st)
def test_topk_monotone(ranks):
    acc = topk_from_ranks(ranks, DEFAULT_KS)
    vals = [acc[k] for k in DEFAULT_KS]
    assert vals == sorted(vals)
    assert topk_from_ranks(ranks, [10**6])[10**6] == sum(r is not None for r in ranks) / len(ranks)


@given(ranks_st)
def test_sequence_rank_is_max(ranks):
    sr = sequence_rank(ranks)
    if None in ranks:
        assert sr is None
    else:
        assert sr == max(ranks) and sr in ranks


def test_best_pathway_wins():
    logs = [log_with_rank("r", 0, 4, pid=0), log_with_rank("r", 0, 2, pid=1), log_with_rank("r", 1, 1, pid=1)]
    (res,) = sequence_results(logs)
    assert res.sequence_rank == 2 and res.per_step_ranks == (2, 1)


def test_report_and_table():
    logs = [log_with_rank("a", 0, 1), log_with_rank("a", 1, 2), log_with_rank("b", 0, None)]
    rep = build_report(logs, [1, 2], [{"rxn_id": "a", "recovered": True}])
    assert rep["topk_step"] == {"1": pytest.approx(1 / 3), "2": pytest.approx(2 / 3)}
    assert rep["topk_sequence"] == {"1": 0.0, "2": 0.5}
    assert rep["sequences"][1]["sequence_rank"] == "FAIL"
    table = format_table(rep)
    assert "elementary" in table and "sequence rank" in table and "top-2" in table


def test_coverage():
    assert coverage({"total": 20, "reproduced": 17}) == pytest.approx(0.85)
    with pytest.raises(ValueError):
        coverage({"total": 0, "reproduced": 0})


def test_sequence_fraction_bounded_by_per_reaction_step_accuracy():
    rng = random.Random(0)
    for _ in range(200):
        logs = []
        for r in range(rng.randint(1, 8)):
            for i in range(rng.randint(1, 6)):
                logs.append(log_with_rank(f"r{r}", i, rng.choice([None, 1, 1, 1, 2, 3, 5, 11])))
        seqs = sequence_results(logs)
        for k in DEFAULT_KS:
            frac = sum(s.sequence_rank is not None and s.sequence_rank <= k for s in seqs) / len(seqs)
            macro = sum(
                topk_accuracy([lg for lg in logs if lg.rxn_id == s.rxn_id], [k])[k] for s in seqs
            ) / len(seqs)
            assert frac <= macro + 1e-12
