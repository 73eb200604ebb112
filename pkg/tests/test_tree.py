import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_tree
from wmm.errors import CombinatorialLimit, EmptyPathSet
from wmm.tree import (BranchEvidence, NodeSpec, TreeSpec, evidence_combinations,
                      informative_paths, internal_count_nodes, validate_tree,
                      warn_internal_counts)


def _tree(edges, root="Z", counts=None):
    ids = []
    for p, c in edges:
        for i in (p, c):
            if i not in ids:
                ids.append(i)
    if root not in ids:
        ids.insert(0, root)
    counts = counts or {}
    return TreeSpec(tuple(NodeSpec(i, observed_count=counts.get(i)) for i in ids), tuple(edges), root)


def test_fig3_tree_is_valid(fig3):
    spec, evidence = fig3
    assert validate_tree(spec, evidence).ok


def test_two_roots_reported():
    spec = _tree([("Z", "A"), ("Y", "B")])
    report = validate_tree(spec)
    assert any("multiple roots" in v for v in report.violations)


def test_cycle_reported():
    spec = _tree([("Z", "A"), ("A", "B"), ("B", "C"), ("C", "A")])
    report = validate_tree(spec)
    assert any("acyclic" in v for v in report.violations)


def test_duplicate_ids_and_multiple_parents():
    spec = TreeSpec((NodeSpec("Z"), NodeSpec("A"), NodeSpec("A"), NodeSpec("B")),
                    (("Z", "A"), ("Z", "B"), ("A", "B")), "Z")
    v = validate_tree(spec).violations
    assert any("duplicate" in x for x in v)
    assert any("2 parents" in x for x in v)


def test_evidence_checks():
    spec = _tree([("Z", "A"), ("Z", "B"), ("A", "C")])
    bad = [BranchEvidence(("Z", "A"), 5, 4, "s"),
           BranchEvidence(("Z", "B"), 1, 4, "s"),
           BranchEvidence(("A", "C"), 1, 4, "s")]
    v = validate_tree(spec, bad).violations
    assert any("[0, n]" in x for x in v)
    assert any("non-sibling" in x for x in v)
    over = [BranchEvidence(("Z", "A"), 3, 4, "t"), BranchEvidence(("Z", "B"), 2, 4, "t")]
    assert any("exceed" in x for x in validate_tree(spec, over).violations)


def test_fig3_paths(fig3):
    spec, evidence = fig3
    paths = informative_paths(spec, evidence)
    assert [p.leaf for p in paths] == ["A", "B"]
    assert [len(p) for p in paths] == [1, 2]


def test_fig3_without_q_evidence(fig3):
    spec, evidence = fig3
    only_p = [e for e in evidence if e.edge[0] == "Z"]
    assert [p.leaf for p in informative_paths(spec, only_p)] == ["A"]


def test_hcv_paths(hcv):
    spec, evidence = hcv
    assert [p.leaf for p in informative_paths(spec, evidence)] == ["AA", "BB", "D", "KK", "LL"]


def test_zero_count_leaf_is_not_informative(fig3):
    spec, evidence = fig3
    spec0 = spec.with_counts({"B": 0})
    assert [p.leaf for p in informative_paths(spec0, evidence)] == ["A"]


def test_empty_path_set_names_the_failing_condition(fig3):
    spec, evidence = fig3
    no_counts = spec.with_counts({"A": None, "B": None})
    with pytest.raises(EmptyPathSet, match=r"condition \(ii\)"):
        informative_paths(no_counts, evidence)
    with pytest.raises(EmptyPathSet, match=r"condition \(iii\)"):
        informative_paths(spec, [e for e in evidence if e.edge[0] == "At"])


def test_internal_counts_warn_and_optional_endpoints(fig3):
    spec, evidence = fig3
    spec2 = spec.with_counts({"At": 250})
    assert internal_count_nodes(spec2) == ["At"]
    with pytest.warns(UserWarning, match="At"):
        warn_internal_counts(spec2)
    leaves = [p.leaf for p in informative_paths(spec2, evidence, include_internal=True)]
    assert leaves == ["A", "At", "B"]
    assert [p.leaf for p in informative_paths(spec2, evidence)] == ["A", "B"]


def test_combinations_counts():
    one = [BranchEvidence(("Z", f"N{i}"), 1, 10, f"s{i}") for i in range(3)]
    assert len(evidence_combinations(one)) == 1
    two = [BranchEvidence(("Z", "A"), 1, 10, "s", alt) for alt in "ab"]
    two += [BranchEvidence(("Z", "B"), 2, 10, "t", alt) for alt in "ab"]
    assert len(evidence_combinations(two)) == 4
    eleven = [BranchEvidence(("Z", f"N{i}"), 1, 10, f"s{i}") for i in range(10)]
    eleven += [BranchEvidence(("Z", "N10"), 1, 10, "x", alt) for alt in "abc"]
    assert len(evidence_combinations(eleven)) == 3


def test_combination_cap():
    ev = [BranchEvidence(("Z", f"N{i}"), 1, 10, f"s{i}", alt) for i in range(11) for alt in "ab"]
    with pytest.raises(CombinatorialLimit):
        evidence_combinations(ev)
    assert len(evidence_combinations(ev, cap=4096)) == 2048


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_paths_are_adjacent_and_monotone_in_evidence(seed):
    rng = np.random.default_rng(seed)
    spec, evidence = random_tree(rng)
    try:
        full = informative_paths(spec, evidence)
    except EmptyPathSet:
        full = ()
    for path in full:
        assert path.edges[0][0] == spec.root
        assert path.edges[-1][1] == path.leaf
        for (_, c), (p, _) in zip(path.edges, path.edges[1:]):
            assert c == p
    # dropping evidence never adds paths; adding it back never removes any
    keep = [e for e in evidence if rng.uniform() < 0.6]
    try:
        partial = {p.leaf for p in informative_paths(spec, keep)}
    except EmptyPathSet:
        partial = set()
    assert partial <= {p.leaf for p in full}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=5))
def test_combinations_are_distinct(alts):
    ev = [BranchEvidence(("Z", f"N{i}"), 1, 10, f"s{i}", str(a))
          for i, k in enumerate(alts) for a in range(k)]
    combos = evidence_combinations(ev)
    assert len(combos) == int(np.prod(alts))
    keys = {tuple(sorted((e, v.alternative_id) for e, v in c.items())) for c in combos}
    assert len(keys) == len(combos)
