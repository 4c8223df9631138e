"""Exact max-flow / min-cut on small graphs (Dinic's algorithm).

Capacities are floats; residual comparisons use a tolerance scaled to the
largest capacity so that saturated edges are treated as saturated despite
accumulated rounding. Edge traversal order is the insertion order, which
makes the returned cut deterministic.
"""

from __future__ import annotations

from collections import deque


class FlowNetwork:
    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []
        self._max_cap = 0.0

    def add_edge(self, u: int, v: int, cap_uv: float, cap_vu: float = 0.0) -> None:
        if cap_uv < 0 or cap_vu < 0:
            raise ValueError(f"negative capacity on edge ({u}, {v})")
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap_uv))
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(cap_vu))
        self._max_cap = max(self._max_cap, cap_uv, cap_vu)

    def max_flow(self, source: int, sink: int) -> float:
        tol = 1e-12 * (1.0 + self._max_cap)
        to, cap, head = self.to, self.cap, self.head
        flow = 0.0
        while True:
            level = [-1] * self.n
            level[source] = 0
            queue = deque([source])
            while queue:
                u = queue.popleft()
                for e in head[u]:
                    v = to[e]
                    if level[v] < 0 and cap[e] > tol:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[sink] < 0:
                return flow
            it = [0] * self.n

            def push(u: int, limit: float) -> float:
                if u == sink:
                    return limit
                while it[u] < len(head[u]):
                    e = head[u][it[u]]
                    v = to[e]
                    if cap[e] > tol and level[v] == level[u] + 1:
                        sent = push(v, min(limit, cap[e]))
                        if sent > 0.0:
                            cap[e] -= sent
                            cap[e ^ 1] += sent
                            return sent
                    it[u] += 1
                return 0.0

            while True:
                sent = push(source, float("inf"))
                if sent <= 0.0:
                    break
                flow += sent

    def source_side(self, source: int) -> list[bool]:
        """Nodes reachable from the source in the residual graph."""
        tol = 1e-12 * (1.0 + self._max_cap)
        seen = [False] * self.n
        seen[source] = True
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if not seen[v] and self.cap[e] > tol:
                    seen[v] = True
                    queue.append(v)
        return seen
