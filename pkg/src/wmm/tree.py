"""Evidence trees: structure, validation and informative paths."""

from __future__ import annotations

import itertools
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Optional

from wmm.errors import CombinatorialLimit, EmptyPathSet, TreeValidationError

Edge = tuple[str, str]

DEFAULT_COMBINATION_CAP = 1024


@dataclass(frozen=True)
class NodeSpec:
    id: str
    label: str = ""
    observed_count: Optional[int] = None


@dataclass(frozen=True)
class BranchEvidence:
    """Survey evidence for one edge: ``successes`` of ``sample_size`` moved along it.

    Records sharing ``source_id`` come from one survey of the parent
    population. ``alternative_id`` separates competing estimates for the
    same edge.
    """

    edge: Edge
    successes: int
    sample_size: int
    source_id: str
    alternative_id: str = "0"

    def __post_init__(self):
        object.__setattr__(self, "edge", (str(self.edge[0]), str(self.edge[1])))


@dataclass(frozen=True)
class InformativePath:
    leaf: str
    edges: tuple[Edge, ...]
    leaf_count: int

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise TreeValidationError(self.violations)


@dataclass(frozen=True)
class TreeSpec:
    nodes: tuple[NodeSpec, ...]
    edges: tuple[Edge, ...]
    root: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(p), str(c)) for p, c in self.edges))

    @cached_property
    def node_map(self) -> dict[str, NodeSpec]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def parent_of(self) -> dict[str, str]:
        return {c: p for p, c in self.edges}

    @cached_property
    def children_of(self) -> dict[str, list[str]]:
        out = defaultdict(list)
        for p, c in self.edges:
            out[p].append(c)
        return dict(out)

    def children(self, node_id: str) -> list[str]:
        return self.children_of.get(node_id, [])

    def is_leaf(self, node_id: str) -> bool:
        return not self.children_of.get(node_id)

    def path_edges(self, node_id: str) -> tuple[Edge, ...]:
        """Edges from the root down to ``node_id``."""
        edges = []
        cur = node_id
        while cur != self.root:
            parent = self.parent_of[cur]
            edges.append((parent, cur))
            cur = parent
        return tuple(reversed(edges))

    def with_counts(self, counts: Mapping[str, Optional[int]]) -> "TreeSpec":
        nodes = tuple(
            NodeSpec(n.id, n.label, counts[n.id]) if n.id in counts else n for n in self.nodes
        )
        return TreeSpec(nodes, self.edges, self.root)


def validate_tree(spec: TreeSpec, evidence: Iterable[BranchEvidence] = ()) -> ValidationReport:
    """Collect every structural violation of ``spec`` (and of ``evidence``, if given)."""
    v: list[str] = []
    ids = [n.id for n in spec.nodes]
    seen = set()
    for i in ids:
        if i in seen:
            v.append(f"duplicate node id {i!r}")
        seen.add(i)
    for n in spec.nodes:
        c = n.observed_count
        if c is not None and (c < 0 or c != math.floor(c)):
            v.append(f"node {n.id!r}: observed_count must be a non-negative integer")
    for p, c in spec.edges:
        for end in (p, c):
            if end not in seen:
                v.append(f"edge ({p!r}, {c!r}) references unknown node {end!r}")
        if p == c:
            v.append(f"self-loop on {p!r} violates acyclic structure")
    n_parents = defaultdict(int)
    for _, c in spec.edges:
        n_parents[c] += 1
    for c, k in sorted(n_parents.items()):
        if k > 1:
            v.append(f"node {c!r} has {k} parents")
    if spec.root not in seen:
        v.append(f"root {spec.root!r} is not a node")
    elif n_parents.get(spec.root):
        v.append(f"root {spec.root!r} has a parent")
    parentless = [i for i in ids if not n_parents.get(i)]
    if len(parentless) > 1:
        v.append(f"multiple roots: {sorted(parentless)}")

    # reachability and cycles via DFS from the root
    children = defaultdict(list)
    for p, c in spec.edges:
        children[p].append(c)
    state = {}
    cyclic = False
    if spec.root in seen:
        stack = [(spec.root, iter(children[spec.root]))]
        state[spec.root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state.get(nxt) == 1:
                cyclic = True
            elif nxt not in state:
                state[nxt] = 1
                stack.append((nxt, iter(children[nxt])))
    unreachable = sorted(i for i in seen if i not in state)
    if unreachable:
        # nodes on a cycle detached from the root are unreachable as well
        if any(n_parents.get(i) for i in unreachable) and _has_cycle(unreachable, children):
            cyclic = True
        v.append(f"nodes not connected to root: {unreachable}")
    if cyclic:
        v.append("graph is not acyclic")

    v.extend(_validate_evidence(spec, evidence))
    return ValidationReport(tuple(v))


def _has_cycle(nodes, children):
    nodes = set(nodes)
    color = {}
    for start in nodes:
        if start in color:
            continue
        stack = [(start, iter(children[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif nxt in nodes:
                if color.get(nxt) == 1:
                    return True
                if nxt not in color:
                    color[nxt] = 1
                    stack.append((nxt, iter(children[nxt])))
    return False


def _validate_evidence(spec: TreeSpec, evidence: Iterable[BranchEvidence]) -> list[str]:
    v = []
    edges = set(spec.edges)
    by_source = defaultdict(list)
    for ev in evidence:
        if ev.edge not in edges:
            v.append(f"evidence for unknown edge {ev.edge}")
        if ev.sample_size <= 0:
            v.append(f"edge {ev.edge}: sample size must be positive")
        if not 0 <= ev.successes <= ev.sample_size:
            v.append(f"edge {ev.edge}: successes must lie in [0, n]")
        by_source[(ev.source_id, ev.alternative_id)].append(ev)
    for (src, alt), evs in sorted(by_source.items()):
        parents = {e.edge[0] for e in evs}
        if len(parents) > 1:
            v.append(f"source {src!r} spans non-sibling edges (parents {sorted(parents)})")
            continue
        sizes = {e.sample_size for e in evs}
        if len(sizes) > 1:
            v.append(f"source {src!r} reports different sample sizes {sorted(sizes)}")
            continue
        if len({e.edge for e in evs}) != len(evs):
            v.append(f"source {src!r} reports the same edge twice")
        if sum(e.successes for e in evs) > evs[0].sample_size:
            v.append(f"source {src!r}: sibling successes exceed the shared sample size")
    return v


def evidence_combinations(
    evidence: Iterable[BranchEvidence], cap: int = DEFAULT_COMBINATION_CAP
) -> list[dict[Edge, BranchEvidence]]:
    """Every way of choosing one alternative per evidenced edge."""
    per_edge = defaultdict(dict)
    for ev in evidence:
        per_edge[ev.edge][ev.alternative_id] = ev
    edges = sorted(per_edge)
    options = [[per_edge[e][a] for a in sorted(per_edge[e])] for e in edges]
    total = math.prod(len(o) for o in options)
    if total > cap:
        raise CombinatorialLimit(f"{total} evidence combinations exceed the cap of {cap}")
    return [dict(zip(edges, choice)) for choice in itertools.product(*options)]


def _single_combination(evidence) -> dict[Edge, BranchEvidence]:
    combos = evidence_combinations(evidence)
    if len(combos) != 1:
        raise ValueError("evidence has several alternatives per edge; pass a combination")
    return combos[0]


def informative_paths(
    spec: TreeSpec,
    evidence: Iterable[BranchEvidence] | Mapping[Edge, BranchEvidence],
    combination: Optional[Mapping[Edge, BranchEvidence]] = None,
    *,
    include_internal: bool = False,
) -> tuple[InformativePath, ...]:
    """Root-to-leaf paths that are informative.

    A path is informative when (i) it runs from the root to a leaf, (ii) the
    leaf carries a positive observed count and (iii) every edge on it has a
    branching estimate.

    With ``include_internal`` set, internal nodes carrying counts are also
    accepted as path endpoints.
    """
    if combination is None:
        combination = evidence if isinstance(evidence, Mapping) else _single_combination(evidence)
    evidenced = set(combination)
    paths = []
    for node in sorted(spec.nodes, key=lambda n: n.id):
        # a zero count back-calculates to zero and carries no information
        if not node.observed_count or node.id == spec.root:
            continue
        if not spec.is_leaf(node.id) and not include_internal:
            continue
        edges = spec.path_edges(node.id)
        if all(e in evidenced for e in edges):
            paths.append(InformativePath(node.id, edges, int(node.observed_count)))
    if not paths:
        counted = [n for n in spec.nodes if n.observed_count and n.id != spec.root
                   and (include_internal or spec.is_leaf(n.id))]
        if not counted:
            raise EmptyPathSet(
                "no informative path: condition (ii) fails, no leaf carries a positive observed count"
            )
        raise EmptyPathSet(
            "no informative path: condition (iii) fails, every counted leaf has an edge "
            "without a branching estimate"
        )
    return tuple(paths)


def internal_count_nodes(spec: TreeSpec) -> list[str]:
    return sorted(
        n.id for n in spec.nodes
        if n.observed_count is not None and n.id != spec.root and not spec.is_leaf(n.id)
    )


def warn_internal_counts(spec: TreeSpec):
    internal = internal_count_nodes(spec)
    if internal:
        warnings.warn(
            f"observed counts on internal nodes {internal} are not path endpoints; "
            "re-root or truncate the tree, or pass include_internal=True",
            stacklevel=3,
        )
    return internal
