"""Exact inference: variable elimination with an enumeration oracle.

Factors are numpy arrays with one axis of length 2 per variable; index 0 is
True and index 1 is False.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from prenv.errors import (
    ImpossibleEvidenceError,
    NetTooLargeError,
    ParseError,
    UnknownNodeError,
)
from prenv.network import BayesNet

Evidence = Mapping[str, bool]

ORACLE_MAX_NODES = 20


@dataclass(frozen=True)
class Factor:
    scope: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (2,) * len(self.scope):
            raise ValueError(f"factor shape {self.values.shape} does not match scope {self.scope}")
        if np.any(self.values < 0):
            raise ValueError("factor values must be non-negative")

    def reduce(self, evidence: Evidence) -> "Factor":
        idx = tuple(
            (0 if evidence[v] else 1) if v in evidence else slice(None) for v in self.scope
        )
        scope = tuple(v for v in self.scope if v not in evidence)
        return Factor(scope, np.asarray(self.values[idx]))


def _check_evidence(net: BayesNet, evidence: Evidence) -> None:
    for node in evidence:
        if node not in net:
            raise UnknownNodeError(node)


def node_factors(net: BayesNet) -> list[Factor]:
    return [Factor(n.parents + (n.id,), n.factor()) for n in net.nodes]


def _product_sum(factors: Sequence[Factor], keep: Sequence[str]) -> Factor:
    """Multiply ``factors`` and sum out everything not in ``keep``."""
    labels: dict[str, int] = {}
    operands: list = []
    for f in factors:
        operands.append(f.values)
        operands.append([labels.setdefault(v, len(labels)) for v in f.scope])
    keep = tuple(keep)
    for v in keep:
        labels.setdefault(v, len(labels))
    if not factors:
        return Factor(keep, np.ones((2,) * len(keep)))
    out = np.einsum(*operands, [labels[v] for v in keep])
    return Factor(keep, np.asarray(out, dtype=float))


def elimination_order(factors: Sequence[Factor], eliminate: Iterable[str]) -> list[str]:
    """Min-degree order over the interaction graph; ties broken by node id."""
    neighbours: dict[str, set[str]] = {}
    for f in factors:
        for v in f.scope:
            neighbours.setdefault(v, set()).update(u for u in f.scope if u != v)
    remaining = set(eliminate)
    order = []
    while remaining:
        v = min(remaining, key=lambda u: (len(neighbours.get(u, ())), u))
        nbrs = neighbours.pop(v, set())
        for u in nbrs:
            neighbours[u].discard(v)
            neighbours[u].update(nbrs - {u})
        remaining.discard(v)
        order.append(v)
    return order


def marginal_table(net: BayesNet, variables: Sequence[str], evidence: Evidence = {}) -> Factor:
    """Unnormalised P(variables, evidence) over ``variables`` (in the given order)."""
    _check_evidence(net, evidence)
    for v in variables:
        net.node(v)
    overlap = set(variables) & set(evidence)
    if overlap:
        raise ValueError(f"variables {sorted(overlap)} are also observed")
    factors = [f.reduce(evidence) for f in node_factors(net)]
    keep = set(variables)
    hidden = [v for v in net.ids if v not in keep and v not in evidence]
    for v in elimination_order(factors, hidden):
        touching = [f for f in factors if v in f.scope]
        if not touching:
            continue
        scope = sorted({u for f in touching for u in f.scope} - {v})
        factors = [f for f in factors if v not in f.scope]
        factors.append(_product_sum(touching, scope))
    return _product_sum(factors, tuple(variables))


def evidence_probability(net: BayesNet, evidence: Evidence) -> float:
    """P(evidence) under ``net``."""
    return float(marginal_table(net, (), evidence).values)


def posterior(net: BayesNet, query: str, evidence: Evidence = {}) -> float:
    """P(query = True | evidence)."""
    net.node(query)
    if query in evidence:
        raise ValueError(f"query {query!r} is observed")
    table = marginal_table(net, (query,), evidence).values
    z = float(table.sum())
    if z <= 0.0:
        raise ImpossibleEvidenceError(f"evidence {dict(evidence)} has probability 0")
    return float(table[0]) / z


def posteriors(net: BayesNet, evidence: Evidence = {}) -> dict[str, float]:
    """P(node = True | evidence) for every node; observed nodes report 1 or 0."""
    if evidence and evidence_probability(net, evidence) <= 0.0:
        raise ImpossibleEvidenceError(f"evidence {dict(evidence)} has probability 0")
    out = {}
    for nid in net.ids:
        if nid in evidence:
            out[nid] = 1.0 if evidence[nid] else 0.0
        else:
            out[nid] = posterior(net, nid, evidence)
    return out


def joint_probability(net: BayesNet, assignment: Evidence) -> float:
    """Product of CPT entries selected by a full assignment."""
    for nid in assignment:
        if nid not in net:
            raise UnknownNodeError(nid)
    missing = [nid for nid in net.ids if nid not in assignment]
    if missing:
        raise ValueError(f"assignment misses nodes {missing}")
    prob = 1.0
    for n in net.nodes:
        p = n.cpt.prob_true(tuple(assignment[q] for q in n.parents))
        prob *= p if assignment[n.id] else 1.0 - p
    return prob


def enumerate_oracle(net: BayesNet, query: str | None = None, evidence: Evidence = {}) -> float:
    """Brute-force P(evidence) or P(query | evidence) by summing the joint."""
    if len(net) > ORACLE_MAX_NODES:
        raise NetTooLargeError(f"{len(net)} nodes exceeds oracle cap {ORACLE_MAX_NODES}")
    _check_evidence(net, evidence)
    free = [nid for nid in net.ids if nid not in evidence]
    total = with_query = 0.0
    for values in itertools.product((True, False), repeat=len(free)):
        assignment = dict(evidence)
        assignment.update(zip(free, values))
        p = joint_probability(net, assignment)
        total += p
        if query is not None and assignment[query]:
            with_query += p
    if query is None:
        return total
    if total <= 0.0:
        raise ImpossibleEvidenceError(f"evidence {dict(evidence)} has probability 0")
    return with_query / total


# --------------------------------------------------------------------------
# evidence files

_EVIDENCE_LINE = re.compile(r"^([A-Za-z_][\w\-.]*)\s*=\s*(true|false)$")


def parse_evidence(text: str) -> dict[str, bool]:
    """Parse ``<node> = true|false`` lines (``#`` comments allowed)."""
    out: dict[str, bool] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _EVIDENCE_LINE.match(line)
        if not m:
            raise ParseError(f"expected '<node> = true|false', found {line!r}", lineno)
        node, value = m.group(1), m.group(2) == "true"
        if node in out:
            raise ParseError(f"duplicate evidence for {node!r}", lineno)
        out[node] = value
    return out


def dumps_evidence(evidence: Evidence) -> str:
    return "".join(f"{k} = {'true' if v else 'false'}\n" for k, v in sorted(evidence.items()))
