"""Structured question-answer annotation of trajectories.

Each trajectory step becomes one QARecord holding six ordered rounds:
subgoal detection, room inference, object association, a plausibility check,
a navigation suggestion, and its discretized action. The rule backend is pure
and deterministic; the chat backend delegates detection and suggestion to a
chat-completions endpoint and parses strict reply grammars.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .chat import ChatConfig, chat_complete
from .demo import Trajectory, subgoals_from_observation
from .episodes import stable_seed
from .errors import AnnotationError, ChatParseError
from .memory import MapMemory
from .planning import (
    DIRECTIVE_ACTIONS,
    PLAUSIBILITY_THRESHOLD,
    RELEVANCE_GATE,
    PlanDecision,
    Subgoal,
    plan_navigation,
)
from .sim import Action, Observation
from .world import OBJECT_CATEGORIES, CooccurrencePriors

QA_FORMAT_VERSION = 1
ROOM_SCORE_EPSILON = 1e-6

ROUND_ORDER = (
    "subgoal_detection",
    "room_inference",
    "object_association",
    "plausibility",
    "suggestion",
    "action",
)

# Confidence mix between detection quality and suggestion-label agreement.
DETECTION_WEIGHT = 0.5
ALIGNMENT_WEIGHT = 0.5


@dataclass(frozen=True)
class QARound:
    kind: str
    question: str
    answer: str
    payload: dict


@dataclass(frozen=True)
class QARecord:
    episode_id: str
    step_index: int
    target_category: str
    pitch: int
    last_action: Action | None
    subgoals: tuple[Subgoal, ...]
    rounds: tuple[QARound, ...]
    relevance_scores: dict
    inferred_room: str
    room_confidence: float
    suggested_action: Action
    detection_confidence: float
    label_action: Action | None = None
    alignment_score: float | None = None
    confidence: float | None = None


@dataclass(frozen=True)
class RuleBackend:
    """Deterministic annotator; optional seeded detection noise."""

    noise_prob: float = 0.0
    noise_seed: int = 0

    name = "rule"


@dataclass(frozen=True)
class ChatBackend:
    config: ChatConfig

    name = "chat"


def _describe_objects(subgoals) -> str:
    if not subgoals:
        return "I see no salient objects."
    parts = [
        f"a {s.category} {s.distance_cells:.1f} cells away at bearing {s.bearing_deg:.0f} degrees"
        for s in subgoals
    ]
    return "I see " + ", and ".join(parts) + "."


def _match_fraction(listed, truth, denominator: int) -> float:
    """Category-multiset overlap divided by `denominator`."""
    if denominator <= 0:
        return 1.0
    remaining: dict[str, int] = {}
    for item in truth:
        remaining[item.category] = remaining.get(item.category, 0) + 1
    matched = 0
    for item in listed:
        if remaining.get(item.category, 0) > 0:
            remaining[item.category] -= 1
            matched += 1
    return matched / denominator


def detect_subgoals(obs: Observation, backend) -> tuple[list[Subgoal], float, str]:
    """Detection round: (subgoals, detection_confidence, answer text).

    The rule backend echoes the observation, optionally corrupted by seeded
    noise that drops or mislabels each object with probability noise_prob;
    its confidence is the fraction of ground-truth objects still reported
    faithfully. The chat backend asks the endpoint to enumerate objects and
    scores the fraction of listed objects that match ground truth.
    """
    truth = subgoals_from_observation(obs)
    if isinstance(backend, RuleBackend):
        if backend.noise_prob <= 0.0:
            return truth, 1.0, _describe_objects(truth)
        rng = np.random.default_rng(
            stable_seed(
                backend.noise_seed,
                obs.step_index,
                obs.pose.x,
                obs.pose.y,
                obs.pose.heading,
                obs.pose.pitch + 1,
            )
        )
        noisy: list[Subgoal] = []
        for item in truth:
            if rng.random() >= backend.noise_prob:
                noisy.append(item)
            elif rng.random() < 0.5:
                continue  # dropped
            else:
                others = [c for c in OBJECT_CATEGORIES if c != item.category]
                noisy.append(replace(item, category=others[int(rng.integers(0, len(others)))]))
        confidence = _match_fraction(noisy, truth, len(truth))
        return noisy, confidence, _describe_objects(noisy)

    if isinstance(backend, ChatBackend):
        reply = chat_complete(backend.config, _detection_messages(obs, truth))
        listed = _parse_object_list(reply)
        by_category: dict[str, list[Subgoal]] = {}
        for item in truth:
            by_category.setdefault(item.category, []).append(item)
        subgoals = []
        for category in listed:
            pool = by_category.get(category)
            if pool:
                subgoals.append(pool.pop(0))
            elif category in OBJECT_CATEGORIES:
                # plausible false positive: keep it, but with no geometry
                subgoals.append(Subgoal(category, None, 0.0, 0.0))
            # names outside the vocabulary are dropped entirely; they still
            # count against confidence through the denominator below
        confidence = _match_fraction(subgoals, truth, len(listed))
        return subgoals, confidence, reply.strip()

    raise AnnotationError(f"unknown annotation backend: {backend!r}")


def infer_room(subgoal_categories, priors: CooccurrencePriors) -> tuple[str, float]:
    """Most plausible room type given detected categories.

    Scores each room by summed log priors; confidence is the softmax mass of
    the winner. No detections gives ("unknown", 0.0); ties resolve in
    room-type order.
    """
    cats = list(subgoal_categories)
    if not cats:
        return "unknown", 0.0
    vocab = priors.vocab
    rows = [vocab.category_index(c) for c in cats]
    scores = np.log(priors.object_room[rows, :] + ROOM_SCORE_EPSILON).sum(axis=0)
    best = int(np.argmax(scores))
    exp = np.exp(scores - scores[best])
    return vocab.room_types[best], float(1.0 / exp.sum())


def associate_objects(subgoal_categories, target: str, priors: CooccurrencePriors) -> dict:
    """Relevance of each detected category toward the target, from the
    symmetric co-occurrence table."""
    return {c: priors.relevance(c, target) for c in subgoal_categories}


def alignment_score(suggested: Action, label: Action) -> float:
    if suggested == label:
        return 1.0
    rotations = {Action.TURN_LEFT, Action.TURN_RIGHT}
    tilts = {Action.LOOK_UP, Action.LOOK_DOWN}
    if {suggested, label} <= rotations or {suggested, label} <= tilts:
        return 0.5
    return 0.0


def score_confidence(
    suggested: Action,
    label: Action,
    detection_confidence: float,
    detection_weight: float = DETECTION_WEIGHT,
    alignment_weight: float = ALIGNMENT_WEIGHT,
) -> float:
    """Per-step annotation confidence in [0, 1]."""
    return (
        detection_weight * detection_confidence
        + alignment_weight * alignment_score(suggested, label)
    )


def plan_suggestion(
    inferred_room: str,
    relevance_scores: dict,
    obs: Observation,
    memory: MapMemory,
    priors: CooccurrencePriors,
    subgoals: list[Subgoal] | None = None,
    *,
    success_radius_cells: int = 1,
    plausibility_threshold: float = PLAUSIBILITY_THRESHOLD,
    relevance_gate: float = RELEVANCE_GATE,
) -> PlanDecision:
    """Suggestion round: pick the next move from the annotator's world view.

    `subgoals` defaults to the observation's own objects; the noisy detection
    list is passed instead when noise injection is active.
    """
    if subgoals is None:
        subgoals = subgoals_from_observation(obs)
    return plan_navigation(
        obs.pose,
        obs.target_category,
        subgoals,
        memory,
        priors,
        inferred_room,
        relevance_scores,
        success_radius_cells=success_radius_cells,
        plausibility_threshold=plausibility_threshold,
        relevance_gate=relevance_gate,
        enable_association_detour=True,
    )


def _round_text(kind: str, obs: Observation, decision=None, **ctx) -> tuple[str, str]:
    target = obs.target_category
    if kind == "subgoal_detection":
        return "What objects do you see, and where?", ctx["answer"]
    if kind == "room_inference":
        cats = ctx["categories"]
        room, conf = ctx["room"], ctx["confidence"]
        if not cats:
            return "What type of room does this look like?", (
                "There is not enough evidence to name the room."
            )
        listing = " and ".join(f"the {c}" for c in sorted(set(cats)))
        return "What type of room does this look like?", (
            f"{listing} suggest a {room} (confidence {conf:.2f})."
        )
    if kind == "object_association":
        scores = ctx["scores"]
        if not scores:
            return f"Which visible objects co-occur with a {target}?", (
                "No visible objects to relate."
            )
        listing = ", ".join(f"{c}: {scores[c]:.2f}" for c in sorted(scores))
        return f"Which visible objects co-occur with a {target}?", listing + "."
    if kind == "plausibility":
        word = "plausible" if ctx["plausible"] else "unlikely"
        return (
            f"How plausible is finding a {target} in this room?",
            f"A {target} is {word} in a {ctx['room']} (prior {ctx['prior']:.2f}).",
        )
    if kind == "suggestion":
        return "What should the agent do next?", decision.text
    if kind == "action":
        return "Which discrete action does that correspond to?", decision.action.label
    raise AnnotationError(f"unknown round kind: {kind}")


def annotate_step(
    obs: Observation,
    memory: MapMemory,
    backend,
    priors: CooccurrencePriors,
    last_action: Action | None = None,
    *,
    success_radius_cells: int = 1,
) -> QARecord:
    """Annotate one step. The memory must already contain this step's cells;
    detected sightings are folded into it here, before planning."""
    subgoals, detection_confidence, detect_answer = detect_subgoals(obs, backend)
    memory.record_objects((s.category, s.cell) for s in subgoals)

    categories = [s.category for s in subgoals]
    room, room_confidence = infer_room(categories, priors)
    relevance = associate_objects(categories, obs.target_category, priors)
    prior = priors.p_object_in_room(obs.target_category, room)
    plausible = prior >= PLAUSIBILITY_THRESHOLD

    if isinstance(backend, ChatBackend):
        decision = _chat_suggestion(backend, obs, subgoals, room, relevance, memory)
    else:
        decision = plan_suggestion(
            room,
            relevance,
            obs,
            memory,
            priors,
            subgoals=subgoals,
            success_radius_cells=success_radius_cells,
        )

    rounds = []
    for kind in ROUND_ORDER:
        if kind == "subgoal_detection":
            q, a = _round_text(kind, obs, answer=detect_answer)
            payload = {
                "subgoals": [
                    {
                        "category": s.category,
                        "cell": list(s.cell) if s.cell else None,
                        "bearing_deg": s.bearing_deg,
                        "distance_cells": s.distance_cells,
                    }
                    for s in subgoals
                ],
                "detection_confidence": detection_confidence,
            }
        elif kind == "room_inference":
            q, a = _round_text(
                kind, obs, categories=categories, room=room, confidence=room_confidence
            )
            payload = {"room_type": room, "confidence": room_confidence}
        elif kind == "object_association":
            q, a = _round_text(kind, obs, scores=relevance)
            payload = {"relevance": dict(sorted(relevance.items()))}
        elif kind == "plausibility":
            q, a = _round_text(kind, obs, room=room, prior=prior, plausible=plausible)
            payload = {
                "room_type": room,
                "prior": prior,
                "threshold": PLAUSIBILITY_THRESHOLD,
                "plausible": plausible,
            }
        elif kind == "suggestion":
            q, a = _round_text(kind, obs, decision=decision)
            payload = {
                "motive": decision.motive,
                "directive": decision.directive,
                "action": decision.action.label,
            }
        else:
            q, a = _round_text(kind, obs, decision=decision)
            payload = {"action": decision.action.label}
        rounds.append(QARound(kind, q, a, payload))

    return QARecord(
        episode_id="",
        step_index=obs.step_index,
        target_category=obs.target_category,
        pitch=obs.pose.pitch,
        last_action=last_action,
        subgoals=tuple(subgoals),
        rounds=tuple(rounds),
        relevance_scores=relevance,
        inferred_room=room,
        room_confidence=room_confidence,
        suggested_action=decision.action,
        detection_confidence=detection_confidence,
    )


def annotate_trajectory(
    trajectory: Trajectory,
    backend,
    priors: CooccurrencePriors,
    *,
    success_radius_cells: int = 1,
) -> list[QARecord]:
    """One QARecord per step, with map memory replayed from the recorded
    observations so annotation never consults the scene."""
    memory = MapMemory()
    records: list[QARecord] = []
    last_action: Action | None = None
    for tstep in trajectory.steps:
        obs = tstep.observation
        memory.observe_cells(obs.visible_cells)
        try:
            record = annotate_step(
                obs,
                memory,
                backend,
                priors,
                last_action,
                success_radius_cells=success_radius_cells,
            )
        except AnnotationError as exc:
            raise AnnotationError(
                f"episode {trajectory.episode_id} step {obs.step_index}: {exc}"
            ) from exc
        label = tstep.action
        records.append(
            replace(
                record,
                episode_id=trajectory.episode_id,
                label_action=label,
                alignment_score=alignment_score(record.suggested_action, label),
                confidence=score_confidence(
                    record.suggested_action, label, record.detection_confidence
                ),
            )
        )
        last_action = label
    return records


def annotate_trajectories(
    trajectories,
    backend,
    priors: CooccurrencePriors,
    *,
    success_radius_cells: int = 1,
    max_workers: int = 4,
) -> list[QARecord]:
    """Annotate a batch. The chat backend fans out across trajectories with a
    bounded pool; steps inside one trajectory stay sequential so map memory
    and record order are preserved."""
    trajectories = list(trajectories)
    if isinstance(backend, ChatBackend) and len(trajectories) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            chunks = pool.map(
                lambda t: annotate_trajectory(
                    t, backend, priors, success_radius_cells=success_radius_cells
                ),
                trajectories,
            )
            return [record for chunk in chunks for record in chunk]
    out: list[QARecord] = []
    for trajectory in trajectories:
        out.extend(
            annotate_trajectory(
                trajectory, backend, priors, success_radius_cells=success_radius_cells
            )
        )
    return out


# ---------------------------------------------------------------------------
# Chat backend prompting

_SYSTEM_PROMPT = (
    "You are annotating an indoor navigation step. Answer tersely and end "
    "with the exact line the user asks for."
)

_ACTION_LINE = re.compile(r"^ACTION:\s*([a-z_]+)\s*$")
_OBJECTS_LINE = re.compile(r"^OBJECTS:\s*(.*)$")


def _detection_messages(obs: Observation, truth) -> list[dict]:
    listing = _describe_objects(truth)
    return [
        {"role": "system", "content": _SYSTEM_PROMPT},
        {
            "role": "user",
            "content": (
                f"Viewpoint report: {listing}\n"
                "Enumerate the object categories you can identify. Reply with "
                "one final line of the form 'OBJECTS: cat1, cat2' or "
                "'OBJECTS: none'."
            ),
        },
    ]


def _parse_object_list(reply: str) -> list[str]:
    for line in reversed(reply.strip().splitlines()):
        match = _OBJECTS_LINE.match(line.strip())
        if match:
            body = match.group(1).strip()
            if body.lower() in ("", "none"):
                return []
            return [c.strip() for c in body.split(",") if c.strip()]
    raise ChatParseError("no OBJECTS line in detection reply", raw=reply[:500])


def _chat_suggestion(
    backend: ChatBackend, obs: Observation, subgoals, room, relevance, memory
) -> PlanDecision:
    frontier = "some area is still unexplored" if memory.frontier_cells() else (
        "everything reachable has been explored"
    )
    seen = ", ".join(sorted({s.category for s in subgoals})) or "nothing"
    prompt = (
        f"Goal: reach a {obs.target_category} and stop next to it.\n"
        f"Visible: {seen}. Inferred room: {room}. {frontier}.\n"
        f"Choose the next action from: {', '.join(a.label for a in Action)}.\n"
        "Reply with a short justification and one final line of the form "
        "'ACTION: <name>'."
    )
    reply = chat_complete(
        backend.config,
        [
            {"role": "system", "content": _SYSTEM_PROMPT},
            {"role": "user", "content": prompt},
        ],
    )
    lines = [line.strip() for line in reply.strip().splitlines() if line.strip()]
    if not lines:
        raise ChatParseError("empty suggestion reply", raw=reply[:500])
    match = _ACTION_LINE.match(lines[-1])
    if not match:
        raise ChatParseError(
            f"suggestion reply does not end with an ACTION line: {lines[-1]!r}",
            raw=reply[:500],
        )
    try:
        action = Action.from_label(match.group(1))
    except ValueError as exc:
        raise ChatParseError(str(exc), raw=reply[:500]) from exc
    motive = lines[0] if len(lines) > 1 else f"approach the {obs.target_category}"
    directive = {v: k for k, v in DIRECTIVE_ACTIONS.items()}[action]
    return PlanDecision(motive=motive, directive=directive, action=action)


# ---------------------------------------------------------------------------
# QA dataset IO


def qa_record_to_json(record: QARecord) -> dict:
    return {
        "episode_id": record.episode_id,
        "step_index": record.step_index,
        "target_category": record.target_category,
        "pitch": record.pitch,
        "last_action": record.last_action.label if record.last_action is not None else None,
        "subgoals": [
            {
                "category": s.category,
                "cell": list(s.cell) if s.cell else None,
                "bearing_deg": s.bearing_deg,
                "distance_cells": s.distance_cells,
            }
            for s in record.subgoals
        ],
        "rounds": [
            {"kind": r.kind, "question": r.question, "answer": r.answer, "payload": r.payload}
            for r in record.rounds
        ],
        "relevance_scores": dict(sorted(record.relevance_scores.items())),
        "inferred_room": record.inferred_room,
        "room_confidence": record.room_confidence,
        "suggested_action": record.suggested_action.label,
        "detection_confidence": record.detection_confidence,
        "label_action": record.label_action.label if record.label_action is not None else None,
        "alignment_score": record.alignment_score,
        "confidence": record.confidence,
    }


def qa_record_from_json(doc: dict) -> QARecord:
    return QARecord(
        episode_id=doc["episode_id"],
        step_index=int(doc["step_index"]),
        target_category=doc["target_category"],
        pitch=int(doc["pitch"]),
        last_action=(
            Action.from_label(doc["last_action"]) if doc.get("last_action") else None
        ),
        subgoals=tuple(
            Subgoal(
                s["category"],
                tuple(s["cell"]) if s.get("cell") else None,
                float(s["bearing_deg"]),
                float(s["distance_cells"]),
            )
            for s in doc["subgoals"]
        ),
        rounds=tuple(
            QARound(r["kind"], r["question"], r["answer"], r["payload"])
            for r in doc["rounds"]
        ),
        relevance_scores={k: float(v) for k, v in doc["relevance_scores"].items()},
        inferred_room=doc["inferred_room"],
        room_confidence=float(doc["room_confidence"]),
        suggested_action=Action.from_label(doc["suggested_action"]),
        detection_confidence=float(doc["detection_confidence"]),
        label_action=(
            Action.from_label(doc["label_action"]) if doc.get("label_action") else None
        ),
        alignment_score=(
            float(doc["alignment_score"]) if doc.get("alignment_score") is not None else None
        ),
        confidence=float(doc["confidence"]) if doc.get("confidence") is not None else None,
    )


def validate_qa_record(doc: dict) -> None:
    """Schema check for one QA line; raises AnnotationError on violations."""
    required = (
        "episode_id",
        "step_index",
        "target_category",
        "pitch",
        "subgoals",
        "rounds",
        "relevance_scores",
        "inferred_room",
        "room_confidence",
        "suggested_action",
        "detection_confidence",
        "label_action",
        "alignment_score",
        "confidence",
    )
    for key in required:
        if key not in doc:
            raise AnnotationError(f"QA record missing field {key!r}")
    kinds = tuple(r.get("kind") for r in doc["rounds"])
    if kinds != ROUND_ORDER:
        raise AnnotationError(f"QA rounds out of order: {kinds}")
    suggestion = doc["rounds"][4]["payload"]
    directive = suggestion.get("directive")
    if directive not in DIRECTIVE_ACTIONS:
        raise AnnotationError(f"unknown suggestion directive: {directive!r}")
    if DIRECTIVE_ACTIONS[directive].label != doc["suggested_action"]:
        raise AnnotationError("suggested_action does not match the directive table")
    for prob_field in ("room_confidence", "detection_confidence", "confidence"):
        value = doc[prob_field]
        if value is not None and not (0.0 <= float(value) <= 1.0 and math.isfinite(float(value))):
            raise AnnotationError(f"{prob_field} outside [0, 1]: {value}")


def write_qa_records(path, records, manifest_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"kind": "qa_file", "format_version": QA_FORMAT_VERSION}
        if manifest_hash is not None:
            header["manifest_hash"] = manifest_hash
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(qa_record_to_json(record), sort_keys=True) + "\n")


def read_qa_records(path) -> list[QARecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty QA file")
    header = json.loads(lines[0])
    if header.get("kind") != "qa_file":
        raise ValueError(f"{path}: not a QA dataset file")
    if header.get("format_version") != QA_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
    out = []
    for line in lines[1:]:
        doc = json.loads(line)
        validate_qa_record(doc)
        out.append(qa_record_from_json(doc))
    return out
