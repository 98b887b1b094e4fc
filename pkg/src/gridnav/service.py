"""HTTP teleoperation service for collecting human demonstrations.

Wire schema (all JSON):

* ``GET /api/session/new`` starts a session on the next scene in rotation
  and returns the render payload below.
* ``GET /api/session/{id}/state`` returns the current payload.
* ``POST /api/session/{id}/action`` with body ``{"action": "turn_left"}``
  steps the simulator and returns the new payload. Unknown session: 404.
  Malformed body or action name: 400. Episode already over: 409.
* ``POST /api/session/{id}/commit`` after termination validates the action
  log by replay and appends the trajectory (demo_source "human") to the
  manifest's trajectory file. Premature or repeated commit: 409.
* ``POST /api/session/{id}/discard`` drops the session.
* ``GET /api/session/{id}/events`` is a server-sent-event stream of render
  payloads: one event on connect, one per action, closing after a terminal
  state is delivered.
* ``GET /api/trajectories`` lists what has been persisted.

The render payload shows only what the operator's agent has discovered:
explored cells and remembered walls (fog-of-war), the agent pose, currently
visible objects, target category, step counter, and episode status. Ground
truth room types and unexplored cells are never serialized.

Each session's state is mutated under its own lock, so concurrent sessions
interleave freely while one session's actions stay strictly ordered.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass, field, replace

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from .demo import Trajectory, TrajectoryStep, append_trajectory, verify_replay
from .episodes import sample_episodes, stable_seed
from .errors import GridnavError, ReplayError
from .manifest import ExperimentManifest
from .memory import MapMemory
from .sim import MAX_EPISODE_STEPS, Action, EpisodeState, Observation, observe, reset, step
from .world import Scene, deserialize_scene, generate_scene

ACTION_NAMES = tuple(a.label for a in Action)
EVENT_POLL_SECONDS = 0.25


@dataclass
class TeleopSession:
    session_id: str
    scene: Scene
    episode_id: str
    target_category: str
    state: EpisodeState
    observation: Observation
    memory: MapMemory
    actions: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    committed: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list = field(default_factory=list)


def render_payload(session: TeleopSession) -> dict:
    """Fog-of-war view of one session; safe to hand to a human operator."""
    scene = session.scene
    obs = session.observation
    pose = session.state.pose
    return {
        "session_id": session.session_id,
        "episode_id": session.episode_id,
        "scene_id": scene.scene_id,
        "target_category": session.target_category,
        "width": scene.width,
        "height": scene.height,
        "grid": session.memory.render_rows(scene.width, scene.height),
        "agent": {
            "x": pose.x,
            "y": pose.y,
            "heading": pose.heading,
            "heading_deg": pose.heading_deg,
            "pitch": pose.pitch,
        },
        "visible_objects": [
            {
                "category": v.category,
                "bearing_deg": v.bearing_deg,
                "distance_cells": v.distance_cells,
            }
            for v in obs.visible_objects
        ],
        "steps": session.state.steps_taken,
        "max_steps": MAX_EPISODE_STEPS,
        "status": session.state.status,
        "path_length_m": session.state.path_length_m,
        "actions": list(ACTION_NAMES),
        "committed": session.committed,
    }


def _notify(session: TeleopSession, payload: dict) -> None:
    for q in list(session.subscribers):
        q.put(payload)


def create_app(
    manifest: ExperimentManifest,
    base_dir,
    session_seed: int = 0,
    frontend_dir=None,
) -> FastAPI:
    """Build the service around one manifest.

    Scenes come from the manifest's scene directory when it exists and are
    generated from the manifest's scene plan otherwise. Committed
    trajectories append to the manifest's trajectory file.
    """
    from pathlib import Path

    base_dir = Path(base_dir)
    scenes: list[Scene] = []
    scenes_dir = base_dir / manifest.paths.scenes_dir
    if scenes_dir.is_dir():
        for path in sorted(scenes_dir.glob("*.json")):
            scenes.append(deserialize_scene(path.read_bytes()))
    if not scenes:
        plan = manifest.scene
        scenes = [
            generate_scene(
                seed=plan.seed + i,
                width=plan.width,
                height=plan.height,
                room_count=plan.room_count,
                cell_size_m=plan.cell_size_m,
            )
            for i in range(plan.count)
        ]

    trajectories_path = base_dir / manifest.paths.trajectories_file
    manifest_hash = manifest.hash()
    radius = manifest.episodes.success_radius_cells

    app = FastAPI(title="gridnav teleop")
    sessions: dict[str, TeleopSession] = {}
    registry_lock = threading.Lock()
    file_lock = threading.Lock()
    counter = {"n": 0}

    def _get(session_id: str) -> TeleopSession:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.get("/api/session/new")
    def new_session() -> dict:
        with registry_lock:
            n = counter["n"]
            counter["n"] += 1
        scene = scenes[n % len(scenes)]
        present = sorted({o.category for o in scene.objects})
        episode = sample_episodes(
            scene,
            present,
            count=1,
            seed=stable_seed(session_seed, n, "teleop"),
            success_radius_cells=radius,
        )[0]
        episode = replace(episode, episode_id=f"{scene.scene_id}_hu{n:04d}")
        state = reset(
            scene,
            episode.episode_id,
            episode.target_category,
            episode.start_pose,
            success_radius_cells=radius,
        )
        obs = observe(scene, state)
        memory = MapMemory()
        memory.observe_cells(obs.visible_cells)
        session = TeleopSession(
            session_id=f"s{n:06d}",
            scene=scene,
            episode_id=episode.episode_id,
            target_category=episode.target_category,
            state=state,
            observation=obs,
            memory=memory,
        )
        with registry_lock:
            sessions[session.session_id] = session
        return render_payload(session)

    @app.get("/api/session/{session_id}/state")
    def session_state(session_id: str) -> dict:
        session = _get(session_id)
        with session.lock:
            return render_payload(session)

    @app.post("/api/session/{session_id}/action")
    def session_action(session_id: str, body: dict = Body(...)) -> dict:
        session = _get(session_id)
        if not isinstance(body, dict) or "action" not in body:
            raise HTTPException(status_code=400, detail="body must be {'action': name}")
        name = body["action"]
        if not isinstance(name, str) or name not in ACTION_NAMES:
            raise HTTPException(status_code=400, detail=f"unknown action {name!r}")
        with session.lock:
            if session.state.done:
                raise HTTPException(
                    status_code=409,
                    detail=f"episode already ended with status {session.state.status}",
                )
            action = Action.from_label(name)
            session.steps.append(TrajectoryStep(session.observation, action))
            session.state, session.observation = step(session.state, action)
            session.memory.observe_cells(session.observation.visible_cells)
            session.actions.append(action)
            payload = render_payload(session)
        _notify(session, payload)
        return payload

    @app.post("/api/session/{session_id}/commit")
    def session_commit(session_id: str) -> dict:
        session = _get(session_id)
        with session.lock:
            if session.committed:
                raise HTTPException(status_code=409, detail="session already committed")
            if not session.state.done:
                raise HTTPException(
                    status_code=409, detail="episode still in progress; cannot commit"
                )
            if not session.actions:
                raise HTTPException(status_code=409, detail="no actions to commit")
            trajectory = Trajectory(
                episode_id=session.episode_id,
                scene_id=session.scene.scene_id,
                target_category=session.target_category,
                steps=tuple(session.steps),
                outcome=session.state.status,
                path_length_m=session.state.path_length_m,
                demo_source="human",
            )
            try:
                verify_replay(session.scene, trajectory, radius)
            except (ReplayError, GridnavError) as exc:
                raise HTTPException(status_code=409, detail=f"replay check failed: {exc}")
            with file_lock:
                trajectories_path.parent.mkdir(parents=True, exist_ok=True)
                append_trajectory(trajectories_path, trajectory, manifest_hash=manifest_hash)
            session.committed = True
            return {
                "episode_id": session.episode_id,
                "outcome": session.state.status,
                "steps": len(session.actions),
                "file": manifest.paths.trajectories_file,
            }

    @app.post("/api/session/{session_id}/discard")
    def session_discard(session_id: str) -> dict:
        session = _get(session_id)
        with registry_lock:
            sessions.pop(session_id, None)
        _notify(session, {"status": "discarded", "session_id": session_id})
        return {"session_id": session_id, "discarded": True}

    @app.get("/api/session/{session_id}/events")
    def session_events(session_id: str) -> StreamingResponse:
        session = _get(session_id)
        q: queue.Queue = queue.Queue()
        session.subscribers.append(q)

        def stream():
            try:
                with session.lock:
                    payload = render_payload(session)
                yield f"event: state\ndata: {json.dumps(payload, sort_keys=True)}\n\n"
                if payload["status"] != "running":
                    return
                while True:
                    try:
                        payload = q.get(timeout=EVENT_POLL_SECONDS)
                    except queue.Empty:
                        if session_id not in sessions:
                            return
                        yield ": keep-alive\n\n"
                        continue
                    yield f"event: state\ndata: {json.dumps(payload, sort_keys=True)}\n\n"
                    if payload.get("status") != "running":
                        return
            finally:
                if q in session.subscribers:
                    session.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/trajectories")
    def list_trajectories() -> dict:
        items = []
        if trajectories_path.exists():
            from .demo import read_trajectories

            for traj in read_trajectories(trajectories_path):
                items.append(
                    {
                        "episode_id": traj.episode_id,
                        "scene_id": traj.scene_id,
                        "target_category": traj.target_category,
                        "demo_source": traj.demo_source,
                        "outcome": traj.outcome,
                        "steps": len(traj.steps),
                    }
                )
        return {"count": len(items), "trajectories": items}

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app
