"""Closed-loop policy evaluation and navigation metrics.

A rollout mirrors deployment: at each step the annotator (by default the
clean rule backend) turns the raw observation into a QA record, the policy
featurizes it and acts greedily, and the simulator advances. Metrics follow
the usual ObjectNav trio: success rate, success weighted by path length,
and its soft variant based on remaining geodesic distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .annotate import RuleBackend, annotate_step
from .episodes import Episode, SplitConfig, geodesic_distance, sample_episodes, stable_seed
from .errors import EmptyDatasetError
from .memory import MapMemory
from .policy import PolicyParams, TrainConfig, featurize, predict, train
from .sim import Action, observe, reset, step
from .world import CategoryVocab, CooccurrencePriors, Scene

EVAL_FORMAT_VERSION = 1

# Ablation grid: feature mode x training loss, trained on identical data.
ABLATION_ROWS = (
    ("pure_text", "ce"),
    ("cot", "ce"),
    ("hcot", "ce"),
    ("hcot", "adaptive"),
)


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    scene_id: str
    target_category: str
    success: bool
    status: str
    steps: int
    shortest_path_m: float
    agent_path_m: float
    start_distance_m: float
    final_distance_m: float


def run_episode(
    scene: Scene,
    episode: Episode,
    policy,
    vocab: CategoryVocab,
    priors: CooccurrencePriors,
    *,
    backend=None,
    seed: int = 0,
    success_radius_cells: int = 1,
) -> EpisodeResult:
    """Roll one episode to termination.

    `policy` is a PolicyParams (annotate, featurize, act greedily), a
    callable observation -> Action, or None for the seeded uniform-random
    baseline.
    """
    if backend is None:
        backend = RuleBackend()
    rng = None
    if policy is None:
        rng = np.random.default_rng(stable_seed(seed, episode.episode_id, "random_policy"))

    state = reset(
        scene,
        episode.episode_id,
        episode.target_category,
        episode.start_pose,
        success_radius_cells=success_radius_cells,
    )
    obs = observe(scene, state)
    memory = MapMemory()
    last_action = None

    while not state.done:
        memory.observe_cells(obs.visible_cells)
        if isinstance(policy, PolicyParams):
            record = annotate_step(
                obs,
                memory,
                backend,
                priors,
                last_action,
                success_radius_cells=success_radius_cells,
            )
            action = predict(policy, featurize(record, policy.mode, vocab))
        elif callable(policy):
            action = policy(obs)
        else:
            action = Action(int(rng.integers(0, len(Action))))
        state, obs = step(state, action)
        last_action = action

    final_m = geodesic_distance(
        scene,
        (state.pose.x, state.pose.y),
        episode.target_category,
        success_radius_cells=success_radius_cells,
    )
    return EpisodeResult(
        episode_id=episode.episode_id,
        scene_id=scene.scene_id,
        target_category=episode.target_category,
        success=state.status == "success",
        status=state.status,
        steps=state.steps_taken,
        shortest_path_m=episode.geodesic_l_m,
        agent_path_m=state.path_length_m,
        start_distance_m=episode.geodesic_l_m,
        final_distance_m=final_m,
    )


def compute_metrics(results) -> dict:
    """Aggregate success rate, SPL, and SoftSPL over episode results.

    Sums use math.fsum so the aggregate is invariant to result ordering.
    """
    results = list(results)
    if not results:
        raise EmptyDatasetError("no episode results to aggregate")
    n = len(results)
    successes = []
    spl_terms = []
    soft_terms = []
    for r in results:
        ratio = r.shortest_path_m / max(r.shortest_path_m, r.agent_path_m)
        successes.append(1.0 if r.success else 0.0)
        spl_terms.append(ratio if r.success else 0.0)
        progress = max(0.0, 1.0 - r.final_distance_m / r.start_distance_m)
        soft_terms.append(progress * ratio)
    return {
        "episodes": n,
        "success_rate": math.fsum(successes) / n,
        "spl": math.fsum(spl_terms) / n,
        "soft_spl": math.fsum(soft_terms) / n,
    }


def evaluate_split(
    policy,
    split: SplitConfig,
    scenes_by_id: dict,
    vocab: CategoryVocab,
    priors: CooccurrencePriors,
    *,
    episodes_per_scene: int = 10,
    seed: int = 0,
    backend=None,
    success_radius_cells: int = 1,
) -> tuple[list[EpisodeResult], dict]:
    """Evaluate on the split's held-out side.

    For each test scene, episodes are sampled over the evaluation categories
    actually present there; scenes containing none of them are skipped. The
    summary is computed over all episodes pooled.
    """
    eval_categories = set(split.eval_categories())
    results: list[EpisodeResult] = []
    for scene_id in split.test_scenes:
        scene = scenes_by_id[scene_id]
        present = sorted({o.category for o in scene.objects} & eval_categories)
        if not present:
            continue
        episodes = sample_episodes(
            scene,
            present,
            count=episodes_per_scene,
            seed=stable_seed(seed, scene_id, "eval"),
            success_radius_cells=success_radius_cells,
        )
        for episode in episodes:
            results.append(
                run_episode(
                    scene,
                    episode,
                    policy,
                    vocab,
                    priors,
                    backend=backend,
                    seed=seed,
                    success_radius_cells=success_radius_cells,
                )
            )
    if not results:
        raise EmptyDatasetError(
            "evaluation produced no episodes; no test scene contains an "
            "evaluation category"
        )
    return results, compute_metrics(results)


def run_ablation(
    records,
    split: SplitConfig,
    scenes_by_id: dict,
    vocab: CategoryVocab,
    priors: CooccurrencePriors,
    *,
    train_config: TrainConfig | None = None,
    episodes_per_scene: int = 10,
    seed: int = 0,
    success_radius_cells: int = 1,
    log=None,
) -> list[dict]:
    """Train and evaluate every (feature mode, loss) ablation row on the
    same QA records and the same evaluation episodes."""
    base = train_config or TrainConfig()
    rows = []
    for mode, loss in ABLATION_ROWS:
        config = TrainConfig(
            mode=mode,
            loss=loss,
            learning_rate=base.learning_rate,
            momentum=base.momentum,
            batch_size=base.batch_size,
            epochs=base.epochs,
            alpha=base.alpha,
            beta=base.beta,
            seed=base.seed,
        )
        params, history = train(records, mode, vocab, config)
        _, summary = evaluate_split(
            params,
            split,
            scenes_by_id,
            vocab,
            priors,
            episodes_per_scene=episodes_per_scene,
            seed=seed,
            success_radius_cells=success_radius_cells,
        )
        row = {
            "mode": mode,
            "loss": loss,
            "train_accuracy": history[-1]["accuracy"],
            **summary,
        }
        rows.append(row)
        if log is not None:
            log(
                f"{mode:>9s}/{loss:<8s}  SR {row['success_rate']:.3f}  "
                f"SPL {row['spl']:.3f}  SoftSPL {row['soft_spl']:.3f}"
            )
    return rows


# ---------------------------------------------------------------------------
# Report IO


def result_to_json(result: EpisodeResult) -> dict:
    return {
        "episode_id": result.episode_id,
        "scene_id": result.scene_id,
        "target_category": result.target_category,
        "success": result.success,
        "status": result.status,
        "steps": result.steps,
        "shortest_path_m": result.shortest_path_m,
        "agent_path_m": result.agent_path_m,
        "start_distance_m": result.start_distance_m,
        "final_distance_m": result.final_distance_m,
    }


def write_eval_report(path, results, summary: dict, manifest_hash=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"kind": "eval_report", "format_version": EVAL_FORMAT_VERSION}
        if manifest_hash is not None:
            header["manifest_hash"] = manifest_hash
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for result in results:
            fh.write(
                json.dumps({"record": "episode", **result_to_json(result)}, sort_keys=True)
                + "\n"
            )
        fh.write(json.dumps({"record": "summary", **summary}, sort_keys=True) + "\n")


def read_eval_report(path) -> tuple[list[dict], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    header = json.loads(lines[0])
    if header.get("kind") != "eval_report":
        raise ValueError(f"{path}: not an evaluation report")
    episodes = []
    summary = {}
    for line in lines[1:]:
        doc = json.loads(line)
        if doc.get("record") == "episode":
            episodes.append(doc)
        elif doc.get("record") == "summary":
            summary = doc
    return episodes, summary
