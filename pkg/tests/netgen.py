"""Random binary networks for property tests."""

from __future__ import annotations

import itertools

import numpy as np

from prenv.argument import Qualifier
from prenv.network import BayesNet, Node


def node_names(n: int) -> list[str]:
    return [f"n{i:02d}" for i in range(n)]


def random_cpt(rng: np.random.Generator, arity: int, lo: float = 0.02, hi: float = 0.98) -> Qualifier:
    if arity >= 1 and rng.random() < 0.4:
        probs = rng.uniform(lo, hi, size=arity)
        return Qualifier.noisy_or(tuple(float(p) for p in probs), float(rng.uniform(lo, 0.3)))
    values = rng.uniform(lo, hi, size=2**arity)
    return Qualifier.full_table(tuple(float(v) for v in values))


def random_dag(rng: np.random.Generator, n: int, max_parents: int = 3) -> BayesNet:
    """Random DAG whose arcs respect a random permutation of the node names."""
    names = node_names(n)
    order = list(rng.permutation(names))
    nodes = []
    for i, name in enumerate(order):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        parents = sorted(rng.choice(order[:i], size=k, replace=False)) if k else []
        nodes.append(Node(name, tuple(str(p) for p in parents), random_cpt(rng, len(parents))))
    return BayesNet.build(nodes)


def random_evidence(rng: np.random.Generator, net: BayesNet, max_size: int | None = None) -> dict[str, bool]:
    ids = list(net.ids)
    size = int(rng.integers(0, (max_size or len(ids)) + 1))
    chosen = rng.choice(ids, size=size, replace=False) if size else []
    return {str(v): bool(rng.random() < 0.5) for v in chosen}


def all_assignments(ids):
    for bits in itertools.product((True, False), repeat=len(ids)):
        yield dict(zip(ids, bits))


def random_cyclic(rng: np.random.Generator, n: int) -> tuple[BayesNet, set[tuple[str, str]]]:
    """Random DAG plus a chain closed into a directed cycle; returns (net, arcs)."""
    dag = random_dag(rng, n)
    arcs = set(dag.arcs())
    names = list(rng.permutation(dag.ids))
    k = int(rng.integers(2, n + 1))
    chain = [str(v) for v in names[:k]]
    arcs |= set(zip(chain, chain[1:]))
    arcs.add((chain[-1], chain[0]))
    nodes = []
    for v in dag.ids:
        ps = tuple(sorted(p for p, c in arcs if c == v))
        nodes.append(Node(v, ps, Qualifier.full_table((0.5,) * 2 ** len(ps))))
    return BayesNet.unchecked(nodes), arcs
