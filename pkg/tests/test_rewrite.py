from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import molecule_corpus, random_molecule
from mechimpute.molgraph import StateBag, heavy_atom_census, net_charge, total_h
from mechimpute.rewrite import EditFault, Embedding, apply, enumerate_applications, find_matches
from mechimpute.templates import all_templates, parse_pack, parse_pattern, termination_template
from oracles import brute_matches

EXTRA_PATTERNS = [
    "[C:1]",
    "[C:1]-[C:2]",
    "[C:1]~[O:2]",
    "[c:1]:[c:2]:[c:3]",
    "[C:1]=[O:2] . [O:3]",
    "[N,O:1]-[C;al:2]-[C:3]=[O:4]",
    "[C;ring:1]-1-[C:2]-[C:3]-1",
    "[C;h2+:1]-[C;!ring:2]",
    "[C;deg<=1:1]",
    "[O;H1:1] . [O;H1:2]",
    "[C:1](-[C:2])(-[C:3])-[C:4]",
]


def corpus_patterns(pack):
    pats = [parse_pattern(p) for p in EXTRA_PATTERNS]
    for t in all_templates(pack):
        pats.append(t.pattern)
        pats.extend(t.required_agents)
    return [p for p in pats if len(p.atoms) <= 6]


def small_states(network_species):
    states = [StateBag.from_smiles([s]) for s in molecule_corpus() + network_species]
    return [s for s in states if sum(len(m.atoms) for m in s.molecules) <= 12]


def signatures(pattern, state, distinct=False):
    return [e.signature for e in find_matches(pattern, state, distinct)]


def test_matcher_equals_brute_force(pack, network_species):
    for pattern in corpus_patterns(pack):
        for state in small_states(network_species)[::3]:
            assert signatures(pattern, state) == brute_matches(pattern, state), (pattern, state.key)


def test_matcher_on_two_molecule_states(pack):
    rng = random.Random(5)
    smis = ["CCO", "CC(=O)OC", "[OH-]", "CN", "CCBr", "O", "c1ccccc1O"]
    pats = corpus_patterns(pack)
    for a, b in itertools.combinations(smis, 2):
        state = StateBag.from_smiles([a, b])
        for p in rng.sample(pats, 8):
            for distinct in (False, True):
                assert signatures(p, state, distinct) == brute_matches(p, state, distinct)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 50_000))
def test_matcher_property_random_graphs(seed):
    rng = random.Random(seed)
    state = StateBag((random_molecule(rng, rng.randint(2, 10), rng.randint(0, 2)),))
    pattern = parse_pattern(rng.choice(EXTRA_PATTERNS))
    assert signatures(pattern, state) == brute_matches(pattern, state)


def test_embedding_signature_round_trip():
    e = Embedding(((1, 0, 3), (2, 1, 0)))
    assert e.signature == "1:0.3,2:1.0"
    assert Embedding.from_signature(e.signature) == e


def test_nalkylation_two_steps(pack):
    add, deprot = next(c for c in pack if c.matches("Bromo N-alkylation")).templates()
    root = StateBag.from_smiles(["CN", "CCBr"])
    ((_, mid),) = enumerate_applications(add, root)
    assert mid.key == "C(C)[NH2+]C.[Br-]"
    ((_, end),) = enumerate_applications(deprot, mid)
    assert end.key == "C(C)NC.[Br-]"
    assert heavy_atom_census(end) == heavy_atom_census(root)
    assert net_charge(end) - net_charge(root) == -1
    assert total_h(end) - total_h(root) == -1


def test_dedup_by_successor(pack):
    deprot = next(c for c in pack if c.matches("Williamson ether synthesis")).templates()[0]
    # two equivalent hydroxyls give one successor
    apps = enumerate_applications(deprot, StateBag.from_smiles(["OCCO"]))
    assert len(apps) == 1


def test_required_agents_gate(pack):
    ester = next(c for c in pack if c.matches("Ester hydrolysis"))
    hydroxide_step = ester.conditions[0].steps[0]
    assert enumerate_applications(hydroxide_step, StateBag.from_smiles(["CCOC(C)=O"])) == []
    assert enumerate_applications(hydroxide_step, StateBag.from_smiles(["CCOC(C)=O", "[OH-]"]))


FAULTY = """class "F" { condition "c" { agents: none
  step 1 "bad" proton_implicit(-1) { pattern: [C:1] edits: delta_h(:1,-5), delta_charge(:1,-1) }
  step 2 "bond" { pattern: [C:1] . [O:2] edits: break_bond(:1,:2) } } }"""


def test_edit_faults():
    (c,) = parse_pack(FAULTY)
    bad_h, bad_bond = c.templates()
    state = StateBag.from_smiles(["C", "O"])
    with pytest.raises(EditFault):
        apply(bad_h, state, find_matches(bad_h.pattern, state)[0])
    with pytest.raises(EditFault):
        apply(bad_bond, state, find_matches(bad_bond.pattern, state)[0])


def test_termination_is_identity():
    state = StateBag.from_smiles(["CCO"])
    ((emb, succ),) = enumerate_applications(termination_template("X"), state)
    assert succ.key == state.key and emb.mapping == ()


def test_wittig_distinct_molecules(pack):
    wittig = next(c for c in pack if c.matches("Wittig olefination")).templates()[0]
    # an intramolecular ylide/carbonyl pair is excluded
    state = StateBag.from_smiles(["O=CCCC=P(c1ccccc1)(c1ccccc1)c1ccccc1"])
    assert enumerate_applications(wittig, state) == []
    state = StateBag.from_smiles(["O=CC", "C=P(c1ccccc1)(c1ccccc1)c1ccccc1"])
    assert len(enumerate_applications(wittig, state)) == 1


def test_inapplicable_embeddings_are_skipped():
    (cdef,) = parse_pack('class "X" { condition "c" { agents: none '
                         'step 1 "s" { pattern: [N:1] . [C:2] edits: make_bond(:1,:2,-) } } }')
    (t,) = cdef.templates()
    with pytest.raises(EditFault):
        apply(t, StateBag.from_smiles(["CN"]), find_matches(t.pattern, StateBag.from_smiles(["CN"]))[0])
    assert enumerate_applications(t, StateBag.from_smiles(["CN"])) == []
    assert len(enumerate_applications(t, StateBag.from_smiles(["CCN"]))) == 1
