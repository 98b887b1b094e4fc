"""Scripted frontier-search demonstrations, trajectory records, replay."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .episodes import Episode, geodesic_distance, pose_from_json, pose_to_json
from .errors import ReplayError
from .memory import MapMemory
from .planning import Subgoal, plan_navigation
from .sim import (
    Action,
    EpisodeState,
    Observation,
    VisibleObject,
    observe,
    project_bearing,
    reset,
    step,
)
from .world import Scene

TRAJECTORY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrajectoryStep:
    observation: Observation
    action: Action


@dataclass(frozen=True)
class Trajectory:
    episode_id: str
    scene_id: str
    target_category: str
    steps: tuple[TrajectoryStep, ...]
    outcome: str
    path_length_m: float
    demo_source: str  # "scripted" | "human"


def subgoals_from_observation(obs: Observation) -> list[Subgoal]:
    """Ground-truth detections: one subgoal per visible object."""
    return [
        Subgoal(
            category=o.category,
            cell=project_bearing(obs.pose, o.bearing_deg, o.distance_cells),
            bearing_deg=o.bearing_deg,
            distance_cells=o.distance_cells,
        )
        for o in obs.visible_objects
    ]


def scripted_demo(
    scene: Scene, episode: Episode, seed: int = 0, success_radius_cells: int = 1
) -> Trajectory:
    """Run the frontier-search demonstrator to termination.

    Phase one pushes the nearest exploration frontier, sweeping the heading on
    arrival; once the target has been sighted the demonstrator routes through
    known cells and stops when the success predicate holds. The policy is
    fully deterministic; `seed` is accepted for interface stability and kept
    out of the decision path so annotation replays agree step for step.
    """
    del seed
    state = reset(
        scene,
        episode.episode_id,
        episode.target_category,
        episode.start_pose,
        success_radius_cells,
    )
    memory = MapMemory()
    obs = observe(scene, state)
    steps: list[TrajectoryStep] = []
    while not state.done:
        memory.update(obs)
        decision = plan_navigation(
            state.pose,
            episode.target_category,
            subgoals_from_observation(obs),
            memory,
            priors=None,
            enable_association_detour=False,
            success_radius_cells=success_radius_cells,
        )
        steps.append(TrajectoryStep(obs, decision.action))
        state, obs = step(state, decision.action)
    return Trajectory(
        episode_id=episode.episode_id,
        scene_id=scene.scene_id,
        target_category=episode.target_category,
        steps=tuple(steps),
        outcome=state.status,
        path_length_m=state.path_length_m,
        demo_source="scripted",
    )


def replay(
    scene: Scene,
    episode: Episode,
    actions: list[Action],
    demo_source: str = "scripted",
    success_radius_cells: int = 1,
) -> Trajectory:
    """Re-execute an action sequence from the episode start.

    Raises ReplayError on an empty sequence; stepping past termination raises
    IllegalTransitionError from the simulator.
    """
    if not actions:
        raise ReplayError(f"episode {episode.episode_id}: empty action sequence")
    state = reset(
        scene,
        episode.episode_id,
        episode.target_category,
        episode.start_pose,
        success_radius_cells,
    )
    obs = observe(scene, state)
    steps = []
    for action in actions:
        steps.append(TrajectoryStep(obs, Action(action)))
        state, obs = step(state, Action(action))
    return Trajectory(
        episode_id=episode.episode_id,
        scene_id=scene.scene_id,
        target_category=episode.target_category,
        steps=tuple(steps),
        outcome=state.status,
        path_length_m=state.path_length_m,
        demo_source=demo_source,
    )


def verify_replay(scene: Scene, traj: Trajectory, success_radius_cells: int = 1) -> None:
    """Re-simulate a trajectory's actions from its first recorded pose and
    require the identical outcome, path length, and pose sequence. Raises
    ReplayError on any divergence."""
    start = traj.steps[0].observation.pose
    episode = Episode(
        episode_id=traj.episode_id,
        scene_id=traj.scene_id,
        start_pose=start,
        target_category=traj.target_category,
        geodesic_l_m=geodesic_distance(
            scene,
            (start.x, start.y),
            traj.target_category,
            success_radius_cells=success_radius_cells,
        ),
    )
    redone = replay(
        scene,
        episode,
        [s.action for s in traj.steps],
        demo_source=traj.demo_source,
        success_radius_cells=success_radius_cells,
    )
    if redone.outcome != traj.outcome:
        raise ReplayError(
            f"episode {traj.episode_id}: outcome changed on replay: "
            f"{traj.outcome} -> {redone.outcome}"
        )
    if abs(redone.path_length_m - traj.path_length_m) > 1e-9:
        raise ReplayError(f"episode {traj.episode_id}: path length changed on replay")
    for i, (a, b) in enumerate(zip(redone.steps, traj.steps)):
        if a.observation.pose != b.observation.pose:
            raise ReplayError(f"episode {traj.episode_id}: pose diverged at step {i}")


def filter_demos(trajectories, max_steps: int = 500):
    """Keep successful demos within the step budget; report what was removed."""
    kept = []
    report = {"kept": 0, "removed_failure": 0, "removed_too_long": 0}
    for traj in trajectories:
        if traj.outcome != "success":
            report["removed_failure"] += 1
        elif len(traj.steps) > max_steps:
            report["removed_too_long"] += 1
        else:
            kept.append(traj)
            report["kept"] += 1
    return kept, report


def observation_to_json(obs: Observation) -> dict:
    return {
        "pose": pose_to_json(obs.pose),
        "target_category": obs.target_category,
        "step_index": obs.step_index,
        "room_type_hidden": obs.room_type_hidden,
        "visible_objects": [
            {
                "instance_id": o.instance_id,
                "category": o.category,
                "bearing_deg": o.bearing_deg,
                "distance_cells": o.distance_cells,
            }
            for o in obs.visible_objects
        ],
        "visible_cells": [list(c) for c in obs.visible_cells],
    }


def observation_from_json(doc: dict) -> Observation:
    return Observation(
        pose=pose_from_json(doc["pose"]),
        target_category=doc["target_category"],
        step_index=int(doc["step_index"]),
        room_type_hidden=doc["room_type_hidden"],
        visible_objects=tuple(
            VisibleObject(
                o["instance_id"], o["category"], float(o["bearing_deg"]), float(o["distance_cells"])
            )
            for o in doc["visible_objects"]
        ),
        visible_cells=tuple((int(c[0]), int(c[1]), c[2]) for c in doc["visible_cells"]),
    )


def _trajectory_header(traj: Trajectory) -> dict:
    return {
        "kind": "trajectory",
        "episode_id": traj.episode_id,
        "scene_id": traj.scene_id,
        "target_category": traj.target_category,
        "outcome": traj.outcome,
        "path_length_m": traj.path_length_m,
        "demo_source": traj.demo_source,
        "num_steps": len(traj.steps),
    }


def write_trajectories(path, trajectories, manifest_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"kind": "trajectory_file", "format_version": TRAJECTORY_FORMAT_VERSION}
        if manifest_hash is not None:
            header["manifest_hash"] = manifest_hash
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for traj in trajectories:
            _write_one(fh, traj)


def _write_one(fh, traj: Trajectory) -> None:
    fh.write(json.dumps(_trajectory_header(traj), sort_keys=True) + "\n")
    for i, st in enumerate(traj.steps):
        record = {
            "step": i,
            "action": st.action.label,
            "observation": observation_to_json(st.observation),
        }
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def append_trajectory(path, traj: Trajectory, manifest_hash: str | None = None) -> None:
    """Append one trajectory, creating the file (with header) when missing."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8") as fh:
        if fresh:
            header = {"kind": "trajectory_file", "format_version": TRAJECTORY_FORMAT_VERSION}
            if manifest_hash is not None:
                header["manifest_hash"] = manifest_hash
            fh.write(json.dumps(header, sort_keys=True) + "\n")
        _write_one(fh, traj)


def read_trajectories(path) -> list[Trajectory]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trajectory file")
    file_header = json.loads(lines[0])
    if file_header.get("kind") != "trajectory_file":
        raise ValueError(f"{path}: not a trajectory file")
    if file_header.get("format_version") != TRAJECTORY_FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported format_version {file_header.get('format_version')}"
        )
    out: list[Trajectory] = []
    i = 1
    while i < len(lines):
        header = json.loads(lines[i])
        if header.get("kind") != "trajectory":
            raise ValueError(f"{path}: line {i + 1}: expected a trajectory header")
        n = int(header["num_steps"])
        steps = []
        for j in range(n):
            record = json.loads(lines[i + 1 + j])
            steps.append(
                TrajectoryStep(
                    observation_from_json(record["observation"]),
                    Action.from_label(record["action"]),
                )
            )
        out.append(
            Trajectory(
                episode_id=header["episode_id"],
                scene_id=header["scene_id"],
                target_category=header["target_category"],
                steps=tuple(steps),
                outcome=header["outcome"],
                path_length_m=float(header["path_length_m"]),
                demo_source=header["demo_source"],
            )
        )
        i += 1 + n
    return out
