"""Independent oracles used by the acceptance suite.

Deliberately naive implementations that share no code with the package: a
full-matrix edit-distance table, a breadth-first exhaustive edit search, and
pixel-set IoU counting.
"""

from __future__ import annotations

from docqa.core import BBox


def dp_distance(a: str, b: str) -> int:
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        table[i][0] = i
    for j in range(n + 1):
        table[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + cost,
            )
    return table[m][n]


def bfs_universe_distances(source: str, universe: list[str], alphabet: str) -> dict[str, int]:
    """Exhaustive single-edit BFS from ``source`` to every universe string.

    The search space is capped at the longest universe string: an optimal edit
    sequence never needs to grow beyond the longer of the two endpoints.
    """
    max_len = max(len(s) for s in universe)
    targets = set(universe)
    dist = {source: 0}
    frontier = [source]
    remaining = len(targets) - (1 if source in targets else 0)
    while frontier and remaining > 0:
        nxt = []
        for s in frontier:
            neighbors = set()
            for i in range(len(s)):
                neighbors.add(s[:i] + s[i + 1 :])
                for c in alphabet:
                    if c != s[i]:
                        neighbors.add(s[:i] + c + s[i + 1 :])
            if len(s) < max_len:
                for i in range(len(s) + 1):
                    for c in alphabet:
                        neighbors.add(s[:i] + c + s[i:])
            for n in neighbors:
                if n not in dist:
                    dist[n] = dist[s] + 1
                    nxt.append(n)
                    if n in targets:
                        remaining -= 1
        frontier = nxt
    return {t: dist[t] for t in targets}


def raster_iou(a: BBox, b: BBox) -> float:
    cells_a = {(x, y) for x in range(a.x1, a.x2) for y in range(a.y1, a.y2)}
    cells_b = {(x, y) for x in range(b.x1, b.x2) for y in range(b.y1, b.y2)}
    union = cells_a | cells_b
    if not union:
        return 0.0
    return len(cells_a & cells_b) / len(union)
