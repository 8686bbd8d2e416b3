"""Compile argument frames into a causally ordered Bayesian network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from prenv.argument import (
    FULL_TABLE,
    NOISY_OR,
    ArgumentFrame,
    Qualifier,
    check_frame,
    reconcile_leak,
)
from prenv.errors import (
    ArcError,
    CompileError,
    ConflictingArgumentsError,
    CycleError,
    MissingPriorError,
    NotMergeableError,
    ParseError,
    UnknownNodeError,
)
from prenv.schema_kb import KnowledgeBase

log = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Node:
    id: str
    parents: tuple[str, ...]
    cpt: Qualifier

    def __post_init__(self):
        if self.cpt.arity != len(self.parents):
            raise CompileError(
                f"node {self.id!r}: CPT arity {self.cpt.arity} != {len(self.parents)} parents"
            )
        if len(set(self.parents)) != len(self.parents) or self.id in self.parents:
            raise CompileError(f"node {self.id!r}: bad parent list {self.parents}")

    def factor(self) -> np.ndarray:
        """CPT as an array over (parents..., self); state index 0 is True."""
        p = np.asarray(self.cpt.expand(), dtype=float)
        arr = np.stack([p, 1.0 - p], axis=-1)
        return arr.reshape((2,) * len(self.parents) + (2,))


@dataclass(frozen=True)
class BayesNet:
    nodes: tuple[Node, ...]
    provenance: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        object.__setattr__(self, "nodes", nodes)
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise CompileError("duplicate node ids")
        known = set(ids)
        for n in nodes:
            for p in n.parents:
                if p not in known:
                    raise CompileError(f"node {n.id!r} has unknown parent {p!r}")
        object.__setattr__(
            self, "_by_id", {n.id: n for n in nodes}
        )

    @classmethod
    def unchecked(cls, nodes: Iterable[Node], provenance=None) -> "BayesNet":
        """Build without the acyclicity check (tests and tooling only)."""
        return cls(tuple(nodes), dict(provenance or {}))

    @classmethod
    def build(cls, nodes: Iterable[Node], provenance=None) -> "BayesNet":
        net = cls.unchecked(nodes, provenance)
        check_causal_order(net)
        return net

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._by_id

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def parents(self, node_id: str) -> tuple[str, ...]:
        return self.node(node_id).parents

    def children(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return tuple(n.id for n in self.nodes if node_id in n.parents)

    def arcs(self) -> list[tuple[str, str]]:
        return sorted((p, n.id) for n in self.nodes for p in n.parents)

    def replace_nodes(self, updates: Iterable[Node], note: str | None = None) -> "BayesNet":
        by_id = dict(self._by_id)
        prov = {k: tuple(v) for k, v in self.provenance.items()}
        for n in updates:
            by_id[n.id] = n
            if note:
                prov[n.id] = tuple(prov.get(n.id, ())) + (note,)
        return BayesNet.unchecked(by_id.values(), prov)


def cpt_entry_count(net: BayesNet) -> dict[str, int]:
    """Number of full-table entries per family (2^m for m parents)."""
    return {n.id: len(n.cpt.expand()) for n in net.nodes}


def check_causal_order(net: BayesNet) -> list[str]:
    """Topological order of ``net``; raises ``CycleError`` with one concrete cycle."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {nid: WHITE for nid in net.ids}
    order: list[str] = []
    for start in net.ids:
        if colour[start] != WHITE:
            continue
        # iterative DFS over parent edges; stack holds (node, iterator)
        path = [start]
        stack = [iter(net.parents(start))]
        colour[start] = GREY
        while stack:
            advanced = False
            for parent in stack[-1]:
                if colour[parent] == GREY:
                    # walking parent links; reverse to report arc direction
                    i = path.index(parent)
                    cycle = list(reversed(path[i:]))
                    k = cycle.index(min(cycle))
                    cycle = cycle[k:] + cycle[:k]
                    raise CycleError(cycle + [cycle[0]])
                if colour[parent] == WHITE:
                    colour[parent] = GREY
                    path.append(parent)
                    stack.append(iter(net.parents(parent)))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                done = path.pop()
                colour[done] = BLACK
                order.append(done)
    return order


# --------------------------------------------------------------------------
# merging arguments into families


@dataclass(frozen=True)
class _Contribution:
    argument: str
    causes: tuple[str, ...]
    qualifier: Qualifier


def merge_arguments_noisy_or(frames: Sequence[ArgumentFrame]) -> Qualifier:
    """Combine frames sharing one claim into a single noisy-or qualifier.

    The result's probabilities follow the sorted union of the frames' causes.
    A single frame is returned unchanged.
    """
    if not frames:
        raise CompileError("nothing to merge")
    claims = {tuple(f.effects) for f in frames}
    if len(claims) != 1:
        raise CompileError(f"frames do not share one claim: {sorted(claims)}")
    contribs = [_Contribution(f.id, f.causes, f.qualifier) for f in frames]
    return _merge_noisy_or(frames[0].effects[0], contribs)


def _merge_noisy_or(effect: str, contribs: Sequence[_Contribution]) -> Qualifier:
    if len(contribs) == 1:
        return contribs[0].qualifier
    strengths: dict[str, tuple[float, str]] = {}
    leaks: list[float] = []
    for c in contribs:
        q = c.qualifier
        if q.kind == FULL_TABLE:
            if q.arity != 1:
                raise NotMergeableError(
                    f"argument {c.argument!r} gives a joint table over {list(c.causes)}; "
                    f"supply one joint table for {effect!r} instead"
                )
            pairs, leak = [(c.causes[0], q.table[0])], q.table[1]
        else:
            pairs, leak = list(zip(c.causes, q.probs)), q.leak
        leaks.append(leak)
        for cause, p in pairs:
            if cause in strengths and abs(strengths[cause][0] - p) > MERGE_TOLERANCE:
                raise ConflictingArgumentsError(
                    effect, strengths[cause][1], c.argument,
                    f"P({effect}|{cause}) = {strengths[cause][0]!r} vs {p!r}",
                )
            strengths.setdefault(cause, (p, c.argument))
    causes = sorted(strengths)
    return Qualifier.noisy_or([strengths[c][0] for c in causes], reconcile_leak(leaks))


def _combine(effect: str, contribs: list[_Contribution]) -> tuple[tuple[str, ...], Qualifier]:
    # identical cause sets must agree
    distinct: list[_Contribution] = []
    for c in contribs:
        same = [d for d in distinct if d.causes == c.causes]
        if same:
            d = same[0]
            if not d.qualifier.isclose(c.qualifier, MERGE_TOLERANCE):
                if d.qualifier.kind == FULL_TABLE and c.qualifier.kind == FULL_TABLE:
                    raise ConflictingArgumentsError(effect, d.argument, c.argument,
                                                    "contradictory full tables")
                distinct.append(c)
            continue
        distinct.append(c)
    if len(distinct) == 1:
        return distinct[0].causes, distinct[0].qualifier

    # a joint table covering every other argument's causes is the most specific
    # context and supersedes them
    union = set().union(*(c.causes for c in distinct))
    covering = [
        c for c in distinct
        if c.qualifier.kind == FULL_TABLE and c.qualifier.arity > 1 and set(c.causes) == union
    ]
    if len(covering) == 1:
        winner = covering[0]
        log.debug("%s: joint table from %s supersedes %d arguments",
                  effect, winner.argument, len(distinct) - 1)
        return winner.causes, winner.qualifier
    if len(covering) > 1:
        raise ConflictingArgumentsError(effect, covering[0].argument, covering[1].argument,
                                        "two covering joint tables")

    qual = _merge_noisy_or(effect, distinct)
    return tuple(sorted(union)), qual


def compile_network(frames: Sequence[ArgumentFrame], kb: KnowledgeBase) -> BayesNet:
    """Build the network induced by ``frames``.

    Arcs run cause to effect whatever the argument direction. Arguments
    sharing a claim are merged (noisy-or, or a covering joint table); nodes
    without parents take their prior from the knowledge base.
    """
    if not frames:
        raise CompileError("no argument frames to compile")
    unique = {f.id: f for f in sorted(frames, key=lambda f: f.id)}
    for f in unique.values():
        for pid in f.propositions:
            kb.require(pid)
        check_frame(f, kb)

    families: dict[str, list[_Contribution]] = {}
    provenance: dict[str, set[str]] = {}
    for f in unique.values():
        for pid in f.propositions:
            provenance.setdefault(pid, set()).add(f.id)
        for effect in f.effects:
            families.setdefault(effect, []).append(_Contribution(f.id, f.causes, f.qualifier))

    nodes = []
    for pid in sorted(provenance):
        if pid in families:
            parents, cpt = _combine(pid, families[pid])
        else:
            prior = kb.prior(pid)
            if prior is None:
                raise MissingPriorError(pid)
            parents, cpt = (), Qualifier.full_table((prior,))
        nodes.append(Node(pid, tuple(parents), cpt))
    return BayesNet.build(nodes, {k: tuple(sorted(v)) for k, v in provenance.items()})


# --------------------------------------------------------------------------
# arc reversal


def _reaches(net: BayesNet, start: str, target: str, skip: tuple[str, str]) -> bool:
    stack, seen = [start], set()
    while stack:
        cur = stack.pop()
        for child in net.children(cur):
            if (cur, child) == skip:
                continue
            if child == target:
                return True
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return False


def _table_from(arr: np.ndarray) -> tuple[float, ...]:
    """P(True) rows from an array over (parents..., self)."""
    return tuple(float(v) for v in arr[..., 0].reshape(-1))


def reverse_arc(net: BayesNet, source: str, target: str) -> BayesNet:
    """Reverse ``source -> target`` with Bayes' rule, preserving the joint.

    Both nodes end up sharing the union of their former parents; the new
    CPTs are full tables.
    """
    if source not in net.parents(target):
        raise ArcError(f"no arc {source} -> {target}")
    if _reaches(net, source, target, skip=(source, target)):
        raise ArcError(f"reversing {source} -> {target} would create a cycle")

    a, b = net.node(source), net.node(target)
    others = tuple(sorted((set(a.parents) | set(b.parents)) - {source}))
    labels = {v: i for i, v in enumerate((source, target) + others)}

    joint = np.einsum(
        a.factor(), [labels[v] for v in a.parents + (source,)],
        b.factor(), [labels[v] for v in b.parents + (target,)],
        [labels[source], labels[target]] + [labels[v] for v in others],
    )
    p_target = joint.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_source = np.where(p_target > 0, joint / p_target, 0.5)

    # target | others  -> axes (others..., target)
    new_b_arr = np.moveaxis(p_target, 0, -1)
    new_b = Node(target, others, Qualifier.full_table(_table_from(new_b_arr)))

    a_parents = tuple(sorted(others + (target,)))
    scope = [target] + list(others)
    order = [scope.index(p) + 1 for p in a_parents]
    new_a_arr = np.transpose(p_source, order + [0])
    new_a = Node(source, a_parents, Qualifier.full_table(_table_from(new_a_arr)))

    out = net.replace_nodes([new_a, new_b], note=f"reversed:{source}->{target}")
    check_causal_order(out)
    return out


# --------------------------------------------------------------------------
# export formats


def to_dot(net: BayesNet) -> str:
    lines = ["digraph bayesnet {"]
    for n in net.nodes:
        lines.append(f'  "{n.id}";')
    for p, c in net.arcs():
        lines.append(f'  "{p}" -> "{c}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def dumps_net(net: BayesNet) -> str:
    """Textual network format; floats are written with ``repr`` so they round-trip."""
    out = ["# prenv network"]
    for n in net.nodes:
        out.append(f"node {n.id}")
        out.append(" ".join(["parents", *n.parents]))
        out.append(f"cpt {n.cpt}")
        for src in net.provenance.get(n.id, ()):
            out.append(f"source {src}")
        out.append("end")
    return "\n".join(out) + "\n"


def loads_net(text: str) -> BayesNet:
    nodes, provenance = [], {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        if keyword == "node":
            if current is not None:
                raise ParseError("'node' before 'end'", lineno)
            current = {"id": rest.strip(), "parents": None, "cpt": None, "sources": []}
        elif current is None:
            raise ParseError(f"{keyword!r} outside a node block", lineno)
        elif keyword == "parents":
            current["parents"] = tuple(rest.split())
        elif keyword == "cpt":
            current["cpt"] = _parse_cpt(rest, lineno)
        elif keyword == "source":
            current["sources"].append(rest.strip())
        elif keyword == "end":
            if current["parents"] is None or current["cpt"] is None:
                raise ParseError(f"node {current['id']!r} lacks parents or cpt", lineno)
            nodes.append(Node(current["id"], current["parents"], current["cpt"]))
            if current["sources"]:
                provenance[current["id"]] = tuple(current["sources"])
            current = None
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno)
    if current is not None:
        raise ParseError("unterminated node block", len(text.splitlines()))
    return BayesNet.build(nodes, provenance)


def _parse_cpt(rest: str, lineno: int) -> Qualifier:
    parts = rest.split()
    try:
        values = [float(v) for v in parts[1:]]
    except ValueError as exc:
        raise ParseError(f"bad number in cpt: {exc}", lineno) from None
    if parts and parts[0] == FULL_TABLE:
        return Qualifier.full_table(values)
    if parts and parts[0] == NOISY_OR and values:
        return Qualifier.noisy_or(values[1:], values[0])
    raise ParseError(f"bad cpt line {rest!r}", lineno)
