"""Discrete agent simulator: 12 headings, pitch bands, line-of-sight, stepping.

Conventions: x grows rightward, y grows downward. Heading is an index 0..11 in
30-degree increments measured clockwise from north (0 = north, 3 = east).
Pitch is an index in {-1, 0, +1} for {-30, 0, +30} degrees.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from enum import IntEnum

from .errors import IllegalTransitionError
from .world import Scene

MAX_EPISODE_STEPS = 500
FOV_HALF_ANGLE_DEG = 39.5
HEADING_STEPS = 12
DEG_PER_HEADING = 30

# Inclusive visibility distance band (in cells) per pitch index.
PITCH_BANDS = {-1: (0.0, 4.0), 0: (1.0, 8.0), 1: (5.0, 10.0)}
MAX_VIEW_DISTANCE = 10.0


class Action(IntEnum):
    MOVE_FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    LOOK_UP = 3
    LOOK_DOWN = 4
    STOP = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Action":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown action name: {label!r}") from None


ACTION_NAMES = tuple(a.label for a in Action)

# Heading index -> unit move when the heading snaps to that cardinal axis.
_CARDINAL_DIRS = {0: (0, -1), 3: (1, 0), 6: (0, 1), 9: (-1, 0)}


def snap_heading(heading: int) -> int:
    """Nearest cardinal heading index (0/3/6/9) for a 12-step heading."""
    return ((heading + 1) % HEADING_STEPS) // 3 * 3


def heading_direction(heading: int) -> tuple[int, int]:
    return _CARDINAL_DIRS[snap_heading(heading)]


@dataclass(frozen=True)
class AgentPose:
    x: int
    y: int
    heading: int  # 0..11
    pitch: int = 0  # -1, 0, +1

    @property
    def heading_deg(self) -> int:
        return self.heading * DEG_PER_HEADING

    @property
    def pitch_deg(self) -> int:
        return self.pitch * DEG_PER_HEADING


@dataclass(frozen=True)
class VisibleObject:
    instance_id: str
    category: str
    bearing_deg: float  # relative to heading, clockwise positive, (-180, 180]
    distance_cells: float


@dataclass(frozen=True)
class Observation:
    pose: AgentPose
    target_category: str
    step_index: int
    visible_objects: tuple[VisibleObject, ...]
    visible_cells: tuple[tuple[int, int, str], ...]  # (x, y, "floor"|"wall")
    room_type_hidden: str | None  # ground truth; policies must never read it


@dataclass(frozen=True)
class EpisodeState:
    scene: Scene
    episode_id: str
    target_category: str
    pose: AgentPose
    steps_taken: int = 0
    status: str = "running"  # running | success | failure_stop | failure_timeout
    path_length_m: float = 0.0
    success_radius_cells: int = 1

    @property
    def done(self) -> bool:
        return self.status != "running"


def wrap_angle(deg: float) -> float:
    """Wrap to (-180, 180]."""
    wrapped = (deg + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


def bearing_to(pose: AgentPose, x: int, y: int) -> tuple[float, float]:
    """(relative bearing deg, distance cells) from pose to a cell center."""
    dx = x - pose.x
    dy = y - pose.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0, 0.0
    absolute = math.degrees(math.atan2(dx, -dy))  # clockwise from north
    return wrap_angle(absolute - pose.heading_deg), dist


def project_bearing(pose: AgentPose, bearing_deg: float, distance_cells: float) -> tuple[int, int]:
    """Invert bearing_to: recover the integer cell a sighting refers to."""
    theta = math.radians(pose.heading_deg + bearing_deg)
    x = pose.x + distance_cells * math.sin(theta)
    y = pose.y - distance_cells * math.cos(theta)
    return int(round(x)), int(round(y))


def bresenham_line(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer line from (x0,y0) to (x1,y1), endpoints included."""
    cells = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        cells.append((x, y))
        if x == x1 and y == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def line_clear(scene: Scene, x0: int, y0: int, x1: int, y1: int) -> bool:
    """True when no wall cell lies strictly between the two endpoints."""
    for x, y in bresenham_line(x0, y0, x1, y1)[1:-1]:
        if not scene.is_floor(x, y):
            return False
    return True


def visible(scene: Scene, pose: AgentPose, position: tuple[int, int]) -> bool:
    """Visibility predicate for a cell: view cone, pitch band, line of sight."""
    bearing, dist = bearing_to(pose, position[0], position[1])
    lo, hi = PITCH_BANDS[pose.pitch]
    if not lo <= dist <= hi:
        return False
    if dist > 0.0 and abs(bearing) > FOV_HALF_ANGLE_DEG:
        return False
    return line_clear(scene, pose.x, pose.y, position[0], position[1])


def visible_cells(scene: Scene, pose: AgentPose) -> list[tuple[int, int, str]]:
    """All cells the agent currently observes, own cell included."""
    out = [(pose.x, pose.y, "floor" if scene.is_floor(pose.x, pose.y) else "wall")]
    reach = int(MAX_VIEW_DISTANCE)
    for y in range(max(0, pose.y - reach), min(scene.height, pose.y + reach + 1)):
        for x in range(max(0, pose.x - reach), min(scene.width, pose.x + reach + 1)):
            if (x, y) == (pose.x, pose.y):
                continue
            if visible(scene, pose, (x, y)):
                out.append((x, y, "floor" if scene.is_floor(x, y) else "wall"))
    return out


def observe(scene: Scene, state: EpisodeState) -> Observation:
    """Build the symbolic observation at the state's pose."""
    pose = state.pose
    objs = []
    for obj in scene.objects:
        if visible(scene, pose, (obj.x, obj.y)):
            bearing, dist = bearing_to(pose, obj.x, obj.y)
            objs.append(VisibleObject(obj.instance_id, obj.category, bearing, dist))
    objs.sort(key=lambda o: (o.distance_cells, o.bearing_deg, o.instance_id))
    room = scene.room_at(pose.x, pose.y)
    return Observation(
        pose=pose,
        target_category=state.target_category,
        step_index=state.steps_taken,
        visible_objects=tuple(objs),
        visible_cells=tuple(visible_cells(scene, pose)),
        room_type_hidden=room.room_type if room else None,
    )


def hop_distance_to_category(
    scene: Scene, start: tuple[int, int], category: str, limit: int | None = None
) -> int | None:
    """Minimum 4-connected floor hops from start to any instance of category."""
    targets = {(o.x, o.y) for o in scene.objects if o.category == category}
    if not targets:
        return None
    if start in targets:
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        (x, y), d = queue.popleft()
        if limit is not None and d >= limit:
            continue
        for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            nxt = (x + dx, y + dy)
            if nxt in seen or not scene.is_floor(*nxt):
                continue
            if nxt in targets:
                return d + 1
            seen.add(nxt)
            queue.append((nxt, d + 1))
    return None


def target_visible(scene: Scene, obs: Observation) -> bool:
    return any(o.category == obs.target_category for o in obs.visible_objects)


def reset(
    scene: Scene,
    episode_id: str,
    target_category: str,
    start_pose: AgentPose,
    success_radius_cells: int = 1,
) -> EpisodeState:
    if not scene.is_floor(start_pose.x, start_pose.y):
        raise ValueError(f"start pose ({start_pose.x},{start_pose.y}) is not on floor")
    return EpisodeState(
        scene=scene,
        episode_id=episode_id,
        target_category=target_category,
        pose=start_pose,
        success_radius_cells=success_radius_cells,
    )


def step(state: EpisodeState, action: Action) -> tuple[EpisodeState, Observation]:
    """Apply one action; returns the new state and the observation at it.

    A blocked move_forward is a no-op that still consumes a step. Stop is
    judged on the spot: success needs the target visible and within the
    success radius by 4-connected hops.
    """
    if state.done:
        raise IllegalTransitionError(
            f"episode {state.episode_id} already ended with status {state.status}"
        )
    scene = state.scene
    pose = state.pose
    path = state.path_length_m
    status = "running"

    if action == Action.MOVE_FORWARD:
        dx, dy = heading_direction(pose.heading)
        nx, ny = pose.x + dx, pose.y + dy
        if scene.is_floor(nx, ny):
            pose = replace(pose, x=nx, y=ny)
            path += scene.cell_size_m
    elif action == Action.TURN_LEFT:
        pose = replace(pose, heading=(pose.heading - 1) % HEADING_STEPS)
    elif action == Action.TURN_RIGHT:
        pose = replace(pose, heading=(pose.heading + 1) % HEADING_STEPS)
    elif action == Action.LOOK_UP:
        pose = replace(pose, pitch=min(1, pose.pitch + 1))
    elif action == Action.LOOK_DOWN:
        pose = replace(pose, pitch=max(-1, pose.pitch - 1))

    steps = state.steps_taken + 1
    new_state = replace(state, pose=pose, steps_taken=steps, path_length_m=path)

    if action == Action.STOP:
        obs = observe(scene, new_state)
        hops = hop_distance_to_category(
            scene, (pose.x, pose.y), state.target_category, limit=state.success_radius_cells
        )
        near = hops is not None and hops <= state.success_radius_cells
        status = "success" if (near and target_visible(scene, obs)) else "failure_stop"
        new_state = replace(new_state, status=status)
        return new_state, obs

    if steps >= MAX_EPISODE_STEPS:
        new_state = replace(new_state, status="failure_timeout")
    return new_state, observe(scene, new_state)
