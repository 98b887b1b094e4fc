"""Shared navigation planner behind the scripted demonstrator and the
annotator's suggestion round.

Every plan is a (motive, directive) sentence pair. Motives are free-form
templates; directives come from a fixed six-phrase table that maps one-to-one
onto the action space, so a suggestion is always executable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .memory import MapMemory, bfs_known, nearest_frontier_path
from .sim import (
    FOV_HALF_ANGLE_DEG,
    Action,
    AgentPose,
    PITCH_BANDS,
    bearing_to,
    snap_heading,
)
from .world import CooccurrencePriors

# Published directive table: the only phrases a suggestion may end with.
DIRECTIVE_ACTIONS = {
    "move forward": Action.MOVE_FORWARD,
    "turn left": Action.TURN_LEFT,
    "turn right": Action.TURN_RIGHT,
    "look up": Action.LOOK_UP,
    "look down": Action.LOOK_DOWN,
    "stop": Action.STOP,
}
ACTION_DIRECTIVES = {action: phrase for phrase, action in DIRECTIVE_ACTIONS.items()}

PLAUSIBILITY_THRESHOLD = 0.3
RELEVANCE_GATE = 0.5

_CARDINAL_HEADING = {(0, -1): 0, (1, 0): 3, (0, 1): 6, (-1, 0): 9}
_NEIGHBORS = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass(frozen=True)
class Subgoal:
    """One detected object: category plus where the detection points.

    cell is None for detections that cannot be placed on the map (for
    example a chat-backend hallucination); those still inform room inference
    but never anchor navigation.
    """

    category: str
    cell: tuple[int, int] | None
    bearing_deg: float
    distance_cells: float


@dataclass(frozen=True)
class PlanDecision:
    motive: str
    directive: str
    action: Action
    referent: str | None = None

    @property
    def text(self) -> str:
        return f"{self.motive}; {self.directive}"


def _decision(motive: str, action: Action, referent: str | None = None) -> PlanDecision:
    return PlanDecision(motive, ACTION_DIRECTIVES[action], action, referent)


def turn_toward(heading: int, direction: tuple[int, int]) -> Action | None:
    """Minimal rotation so the heading snaps onto `direction`; None if it does."""
    desired = _CARDINAL_HEADING[direction]
    if snap_heading(heading) == desired:
        return None
    options = []
    for t in (desired - 1, desired, desired + 1):
        t %= 12
        options.append(((t - heading) % 12, 0, Action.TURN_RIGHT))
        options.append(((heading - t) % 12, 1, Action.TURN_LEFT))
    return min(options)[2]


def _step_along(pose: AgentPose, nxt: tuple[int, int], motive: str, referent=None) -> PlanDecision:
    direction = (nxt[0] - pose.x, nxt[1] - pose.y)
    turn = turn_toward(pose.heading, direction)
    if turn is None:
        return _decision(motive, Action.MOVE_FORWARD, referent)
    return _decision(motive, turn, referent)


def known_region_around(memory: MapMemory, cell: tuple[int, int], radius: int) -> set:
    """Known floor cells within `radius` hops of `cell` over the known map."""
    if not memory.is_known_floor(*cell):
        return set()
    region = {cell}
    queue = deque([(cell, 0)])
    while queue:
        (x, y), d = queue.popleft()
        if d >= radius:
            continue
        for dx, dy in _NEIGHBORS:
            nxt = (x + dx, y + dy)
            if nxt not in region and memory.is_known_floor(*nxt):
                region.add(nxt)
                queue.append((nxt, d + 1))
    return region


def _has_unexplored_fringe(memory: MapMemory, cell: tuple[int, int], radius: int = 1) -> bool:
    for dx in range(-radius, radius + 1):
        for dy in range(-radius, radius + 1):
            if not memory.explored(cell[0] + dx, cell[1] + dy):
                return True
    return False


def _face_or_adjust(pose: AgentPose, cell: tuple[int, int], motive: str, referent) -> PlanDecision:
    """Already within stopping range but the target is not in view: rotate or
    tilt until the visibility predicate can pass."""
    bearing, dist = bearing_to(pose, cell[0], cell[1])
    lo, hi = PITCH_BANDS[pose.pitch]
    if dist < lo and pose.pitch > -1:
        return _decision(motive, Action.LOOK_DOWN, referent)
    if dist > hi and pose.pitch < 1:
        return _decision(motive, Action.LOOK_UP, referent)
    if abs(bearing) > FOV_HALF_ANGLE_DEG:
        return _decision(motive, Action.TURN_RIGHT if bearing > 0 else Action.TURN_LEFT, referent)
    # In-cone and in-band yet undetected; nudge the heading rather than freeze.
    return _decision(motive, Action.TURN_LEFT, referent)


def plan_navigation(
    pose: AgentPose,
    target_category: str,
    subgoals: list[Subgoal],
    memory: MapMemory,
    priors: CooccurrencePriors | None = None,
    inferred_room: str = "unknown",
    relevance_scores: dict | None = None,
    *,
    success_radius_cells: int = 1,
    plausibility_threshold: float = PLAUSIBILITY_THRESHOLD,
    relevance_gate: float = RELEVANCE_GATE,
    enable_association_detour: bool = True,
) -> PlanDecision:
    """Decide the next action from the agent's own world view.

    Branch order: stop when the target is detected in stopping range; approach
    a located target; detour toward a highly relevant subgoal when the room
    plausibly holds the target; otherwise push the exploration frontier; and
    declare the target absent when nothing is left to explore.
    """
    relevance_scores = relevance_scores or {}
    pos = (pose.x, pose.y)
    detected_target = [s for s in subgoals if s.category == target_category]

    for item in detected_target:
        if item.cell is None:
            continue
        region = known_region_around(memory, item.cell, success_radius_cells)
        if pos in region:
            return _decision("stop here", Action.STOP, target_category)

    # Approach a target we can place on the map: detected now or remembered.
    candidates = {s.cell for s in detected_target if s.cell is not None}
    candidates |= set(memory.sightings.get(target_category, ()))
    candidates = {c for c in candidates if memory.is_known_floor(*c)}
    if candidates:
        goals = set()
        for cell in candidates:
            goals |= known_region_around(memory, cell, success_radius_cells)
        motive = f"approach the {target_category}"
        if pos in goals:
            containing = sorted(
                (c for c in candidates if pos in known_region_around(memory, c, success_radius_cells)),
                key=lambda c: (abs(c[0] - pos[0]) + abs(c[1] - pos[1]), c[1], c[0]),
            )
            return _face_or_adjust(pose, containing[0], motive, target_category)
        path = bfs_known(memory, pos, goals)
        if path is not None and len(path) > 1:
            return _step_along(pose, path[1], motive, target_category)
        # No known route yet; fall through to exploration.

    if enable_association_detour and priors is not None:
        plausibility = priors.p_object_in_room(target_category, inferred_room)
        if plausibility >= plausibility_threshold:
            ranked = sorted(
                (
                    s
                    for s in subgoals
                    if s.category != target_category
                    and s.cell is not None
                    and relevance_scores.get(s.category, 0.0) >= relevance_gate
                    and memory.is_known_floor(*s.cell)
                    and _has_unexplored_fringe(memory, s.cell)
                ),
                key=lambda s: (-relevance_scores.get(s.category, 0.0), s.category),
            )
            for sub in ranked:
                goals = known_region_around(memory, sub.cell, 1)
                if pos in goals:
                    continue
                path = bfs_known(memory, pos, goals)
                if path is not None and len(path) > 1:
                    return _step_along(
                        pose, path[1], f"search near the {sub.category}", sub.category
                    )

    path = nearest_frontier_path(memory, pos)
    if path is None:
        return _decision("target likely absent", Action.STOP, target_category)
    if len(path) == 1:
        # Standing on the frontier: scan. Recover a level gaze first so the
        # sweep can actually reveal adjacent cells.
        if pose.pitch > 0:
            return _decision("explore another room", Action.LOOK_DOWN)
        return _decision("explore another room", Action.TURN_LEFT)
    return _step_along(pose, path[1], "explore another room")
