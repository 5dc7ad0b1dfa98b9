"""Undirected agent topology: validation, neighbor queries, Laplacian."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GraphError",
    "Disconnected",
    "SelfLoop",
    "DuplicateEdge",
    "IndexOutOfRange",
    "Graph",
    "build_graph",
    "degree",
    "laplacian",
]


class GraphError(ValueError):
    pass


class Disconnected(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class IndexOutOfRange(GraphError, IndexError):
    pass


@dataclass(frozen=True)
class Graph:
    """Connected undirected graph on nodes ``0..n-1``.

    Construct through :func:`build_graph`, which performs validation.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...] = field(repr=False, compare=False)

    def degree(self, i: int) -> int:
        _check_node(self, i)
        return len(self.neighbors[i])

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(nb) for nb in self.neighbors)

    def laplacian(self) -> np.ndarray:
        return laplacian(self)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}


def _check_node(g: Graph, i: int) -> None:
    if not 0 <= i < g.n:
        raise IndexOutOfRange(f"node {i} not in range 0..{g.n - 1}")


def _is_connected(n: int, adj: Sequence[Sequence[int]]) -> bool:
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == n


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> Graph:
    """Validate an edge list and return an immutable :class:`Graph`.

    Edges are unordered pairs; ``(i, j)`` and ``(j, i)`` are the same edge
    and listing both raises :class:`DuplicateEdge`.
    """
    if int(n) != n or n < 2:
        raise GraphError(f"need an integer n >= 2, got {n!r}")
    n = int(n)
    seen: set[tuple[int, int]] = set()
    ordered: list[tuple[int, int]] = []
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"edge must be a pair, got {e!r}")
        i, j = int(e[0]), int(e[1])
        for v in (i, j):
            if not 0 <= v < n:
                raise IndexOutOfRange(f"edge {e!r}: node {v} not in range 0..{n - 1}")
        if i == j:
            raise SelfLoop(f"self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdge(f"edge {key} listed twice")
        seen.add(key)
        ordered.append(key)
        adj[i].append(j)
        adj[j].append(i)
    if not _is_connected(n, adj):
        raise Disconnected(f"graph on {n} nodes with edges {ordered} is not connected")
    return Graph(
        n=n,
        edges=tuple(ordered),
        neighbors=tuple(tuple(sorted(a)) for a in adj),
    )


def degree(g: Graph, i: int) -> int:
    return g.degree(i)


def laplacian(g: Graph) -> np.ndarray:
    """Integer-valued ``D - A`` as a float array (exact for any sane n)."""
    L = np.zeros((g.n, g.n))
    for i, j in g.edges:
        L[i, j] -= 1.0
        L[j, i] -= 1.0
        L[i, i] += 1.0
        L[j, j] += 1.0
    return L
