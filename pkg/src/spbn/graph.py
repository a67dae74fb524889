"""Directed acyclic graphs over named nodes."""

from __future__ import annotations

import json

from .errors import DataError


class Dag:
    """Immutable DAG: ordered node names plus a set of (parent, child) arcs."""

    __slots__ = ("nodes", "arcs", "_order_index")

    def __init__(self, nodes, arcs=()):
        self.nodes = tuple(str(n) for n in nodes)
        if len(set(self.nodes)) != len(self.nodes):
            raise DataError("node names must be unique")
        self._order_index = {name: k for k, name in enumerate(self.nodes)}
        arc_set = frozenset((str(u), str(v)) for u, v in arcs)
        for u, v in arc_set:
            if u not in self._order_index or v not in self._order_index:
                raise DataError(f"arc ({u}, {v}) references an unknown node")
            if u == v:
                raise DataError(f"self-loop on {u}")
        self.arcs = arc_set
        if self.topological_order() is None:
            raise DataError("arc set contains a cycle")

    def parents(self, node: str) -> tuple[str, ...]:
        """Parents of node, in declared node order."""
        found = [u for u, v in self.arcs if v == node]
        return tuple(sorted(found, key=self._order_index.__getitem__))

    def children(self, node: str) -> tuple[str, ...]:
        found = [v for u, v in self.arcs if u == node]
        return tuple(sorted(found, key=self._order_index.__getitem__))

    def topological_order(self):
        """Node names in a parent-first order, or None if cyclic."""
        in_degree = {n: 0 for n in self.nodes}
        for _, v in self.arcs:
            in_degree[v] += 1
        ready = [n for n in self.nodes if in_degree[n] == 0]
        order = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            for child in self.children(node):
                in_degree[child] -= 1
                if in_degree[child] == 0:
                    ready.append(child)
        return order if len(order) == len(self.nodes) else None

    def has_path(self, source: str, target: str, skip_arc=None) -> bool:
        """True if a directed path source -> ... -> target exists;
        skip_arc, when given, is one arc to ignore during the walk."""
        stack = [source]
        seen = set()
        while stack:
            node = stack.pop()
            if node == target:
                return True
            if node in seen:
                continue
            seen.add(node)
            for u, v in self.arcs:
                if u == node and (skip_arc is None or (u, v) != skip_arc):
                    stack.append(v)
        return False

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.arcs or (b, a) in self.arcs

    def with_arc(self, u: str, v: str) -> "Dag":
        return Dag(self.nodes, self.arcs | {(u, v)})

    def without_arc(self, u: str, v: str) -> "Dag":
        return Dag(self.nodes, self.arcs - {(u, v)})

    def with_flipped_arc(self, u: str, v: str) -> "Dag":
        return Dag(self.nodes, (self.arcs - {(u, v)}) | {(v, u)})

    def sorted_arcs(self):
        return sorted(self.arcs)

    def __eq__(self, other):
        return (
            isinstance(other, Dag)
            and self.nodes == other.nodes
            and self.arcs == other.arcs
        )

    def __hash__(self):
        return hash((self.nodes, self.arcs))

    def __repr__(self):
        return f"Dag(nodes={self.nodes!r}, arcs={self.sorted_arcs()!r})"


def structure_to_dict(dag: Dag, types=None) -> dict:
    payload = {"nodes": list(dag.nodes), "arcs": [list(a) for a in dag.sorted_arcs()]}
    if types is not None:
        payload["types"] = {node: str(types[node]) for node in dag.nodes}
    return payload


def structure_from_dict(payload: dict):
    """Parse {nodes, arcs, types?}; returns (Dag, types-or-None)."""
    try:
        dag = Dag(payload["nodes"], [tuple(a) for a in payload.get("arcs", [])])
    except (KeyError, TypeError) as exc:
        raise DataError(f"bad structure payload: {exc}") from exc
    types = payload.get("types")
    if types is not None:
        types = {str(k): str(v) for k, v in types.items()}
        unknown = set(types) - set(dag.nodes)
        if unknown:
            raise DataError(f"types given for unknown nodes: {sorted(unknown)}")
    return dag, types


def save_structure(path, dag: Dag, types=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(structure_to_dict(dag, types), fh, indent=2)
        fh.write("\n")


def load_structure(path):
    with open(path, "r", encoding="utf-8") as fh:
        return structure_from_dict(json.load(fh))
