"""Agent-side map memory: fog of war plus remembered object sightings.

The memory is reconstructible from a stream of observations alone, so the
demonstrator, the annotator, the evaluator, and the teleop service all share
one update path and never peek at unexplored ground truth. Cells are stored
sparsely; anything never observed is unknown.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .sim import Observation

UNKNOWN = "?"
KNOWN_FLOOR = "."
KNOWN_WALL = "#"

_NEIGHBORS = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass
class MapMemory:
    known: dict = field(default_factory=dict)  # (x, y) -> "." | "#"
    sightings: dict = field(default_factory=dict)  # category -> {(x, y)}

    def cell_state(self, x: int, y: int) -> str:
        return self.known.get((x, y), UNKNOWN)

    def is_known_floor(self, x: int, y: int) -> bool:
        return self.known.get((x, y)) == KNOWN_FLOOR

    def explored(self, x: int, y: int) -> bool:
        return (x, y) in self.known

    def observe_cells(self, cells) -> None:
        for x, y, kind in cells:
            self.known[(x, y)] = KNOWN_FLOOR if kind == "floor" else KNOWN_WALL

    def record_objects(self, items) -> None:
        """items: iterable of (category, (x, y)) sightings."""
        for category, cell in items:
            if cell is not None:
                self.sightings.setdefault(category, set()).add(tuple(cell))

    def update(self, obs: Observation, detections=None) -> None:
        """Fold one observation in. `detections` overrides the sighting list
        (the annotator passes its possibly-noisy detections); by default the
        observation's own visible objects are recorded."""
        self.observe_cells(obs.visible_cells)
        if detections is None:
            from .sim import project_bearing

            detections = [
                (o.category, project_bearing(obs.pose, o.bearing_deg, o.distance_cells))
                for o in obs.visible_objects
            ]
        self.record_objects(detections)

    def is_frontier(self, x: int, y: int) -> bool:
        """Known floor cell bordering at least one unknown cell."""
        if not self.is_known_floor(x, y):
            return False
        return any((x + dx, y + dy) not in self.known for dx, dy in _NEIGHBORS)

    def frontier_cells(self) -> list:
        return [cell for cell, kind in self.known.items() if kind == KNOWN_FLOOR and self.is_frontier(*cell)]

    def render_rows(self, width: int, height: int) -> list[str]:
        """Fog-of-war rows for display; unknown cells render as '?'."""
        return [
            "".join(self.cell_state(x, y) for x in range(width)) for y in range(height)
        ]


def bfs_known(memory: MapMemory, start, goals: set) -> list | None:
    """Shortest path over known floor cells from start into `goals`.

    Returns the path including both endpoints, or None. Neighbor order
    (N, E, S, W) is fixed; among equally near goals the lowest (y, x) wins.
    """
    if start in goals:
        return [start]
    dist = {start: 0}
    parent: dict = {}
    queue = deque([start])
    best_goal = None
    goal_depth = None
    while queue:
        x, y = queue.popleft()
        d = dist[(x, y)]
        if goal_depth is not None and d >= goal_depth:
            break
        for dx, dy in _NEIGHBORS:
            nxt = (x + dx, y + dy)
            if nxt in dist or not memory.is_known_floor(*nxt):
                continue
            dist[nxt] = d + 1
            parent[nxt] = (x, y)
            if nxt in goals:
                key = (nxt[1], nxt[0])
                if goal_depth is None or key < (best_goal[1], best_goal[0]):
                    goal_depth = d + 1
                    best_goal = nxt
                continue
            queue.append(nxt)
    if best_goal is None:
        return None
    path = [best_goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def nearest_frontier_path(memory: MapMemory, start) -> list | None:
    """Path to the nearest frontier cell (ties: lowest (y, x))."""
    if memory.is_frontier(*start):
        return [start]
    frontiers = set(memory.frontier_cells())
    if not frontiers:
        return None
    return bfs_known(memory, start, frontiers)
