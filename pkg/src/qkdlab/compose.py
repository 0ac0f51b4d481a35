"""Additive security budgets for composed protocol stacks.

Distinguishability bounds compose additively: a stack that uses one
component inside another is as secure as the sum of their epsilons.  This
module models a stack as a rooted tree of named components and computes the
budget as a correctly-rounded float sum (`math.fsum`), so totals do not
depend on summation order and dyadic budgets stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class CompositionNode:
    """One component: an id, a display name, its epsilon, and its parent."""

    node_id: str
    name: str
    eps: float
    parent: str | None = None

    def __post_init__(self):
        if not self.node_id:
            raise ValueError("node_id must be nonempty")
        if not math.isfinite(self.eps) or self.eps < 0.0:
            raise ValueError(f"node {self.node_id!r} has invalid eps {self.eps!r}")


class CompositionTree:
    """A rooted tree of components; every non-root has exactly one parent."""

    def __init__(self, nodes: Iterable[CompositionNode]):
        nodes = tuple(nodes)
        if not nodes:
            raise ValueError("composition tree needs at least one node")
        by_id: dict[str, CompositionNode] = {}
        for node in nodes:
            if node.node_id in by_id:
                raise ValueError(f"duplicate node id {node.node_id!r}")
            by_id[node.node_id] = node
        roots = [n for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise ValueError(f"tree needs exactly one root, found {len(roots)}")
        for node in nodes:
            if node.parent is not None and node.parent not in by_id:
                raise ValueError(f"node {node.node_id!r} names unknown parent {node.parent!r}")
        # Walk each node to the root; a walk longer than the node count
        # means a parent cycle.
        for node in nodes:
            cur = node
            steps = 0
            while cur.parent is not None:
                cur = by_id[cur.parent]
                steps += 1
                if steps > len(nodes):
                    raise ValueError(f"parent chain starting at {node.node_id!r} loops")
        self.nodes = nodes
        self.by_id = by_id
        self.root = roots[0]

    def children(self, node_id: str) -> tuple[CompositionNode, ...]:
        return tuple(n for n in self.nodes if n.parent == node_id)

    def __repr__(self) -> str:
        return f"CompositionTree({len(self.nodes)} nodes, root={self.root.node_id!r})"


def compose_pair(eps_outer: float, eps_inner: float) -> float:
    """Budget of one protocol run with one component substituted into it."""
    for eps in (eps_outer, eps_inner):
        if not math.isfinite(eps) or eps < 0.0:
            raise ValueError(f"epsilon must be finite and nonnegative, got {eps!r}")
    return math.fsum((eps_outer, eps_inner))


def tree_total(tree: CompositionTree) -> float:
    """Total budget of the stack: the fsum of every node's epsilon.

    fsum is correctly rounded, so any traversal order gives the same float.
    """
    return math.fsum(n.eps for n in tree.nodes)


def repeated_chain(rounds: int, eps_round: float, eps_amplifier: float) -> CompositionTree:
    """The alternating stack of `rounds` protocol rounds and amplifier steps.

    Each round uses the amplified key of everything below it; the innermost
    component is an ideal seed with epsilon zero.
    """
    if not isinstance(rounds, int) or rounds < 1:
        raise ValueError(f"rounds must be a positive integer, got {rounds!r}")
    for eps in (eps_round, eps_amplifier):
        if not math.isfinite(eps) or eps < 0.0:
            raise ValueError(f"epsilon must be finite and nonnegative, got {eps!r}")
    nodes = []
    parent = None
    for i in range(rounds, 0, -1):
        nodes.append(CompositionNode(f"round_{i}", f"key round {i}", eps_round, parent))
        nodes.append(CompositionNode(f"amplify_{i}", f"amplifier {i}", eps_amplifier, f"round_{i}"))
        parent = f"amplify_{i}"
    nodes.append(CompositionNode("seed", "ideal seed", 0.0, parent))
    return CompositionTree(nodes)


def repeated_qkd(rounds: int, eps_round: float, eps_amplifier: float) -> float:
    """Budget of the repeated stack: rounds * (eps_round + eps_amplifier).

    Computed as the fsum over the explicit chain, which is exact whenever
    the straightforward sum is representable.
    """
    return tree_total(repeated_chain(rounds, eps_round, eps_amplifier))
