"""Acceptance gates: pinned tolerances and runtime budgets, one test per gate.

Run with -v to get one pass/fail line per gate, or -s to also see the
measured values. Gates marked optional exercise the teleop service; the
core gates run without it.
"""

import heapq
import json
import shutil
import time
from contextlib import contextmanager

import numpy as np
import pytest

from gridnav.annotate import RuleBackend, annotate_trajectory, qa_record_to_json
from gridnav.demo import scripted_demo, verify_replay
from gridnav.episodes import (
    geodesic_distance,
    make_splits,
    sample_episodes,
    stable_seed,
    success_region,
)
from gridnav.evaluate import EpisodeResult, compute_metrics, evaluate_split
from gridnav.policy import (
    N_ACTIONS,
    TrainConfig,
    adaptive_loss,
    ce_loss,
    confidence_weights,
    gradient_check,
    train,
)
from gridnav.world import default_priors, default_vocab, generate_scene


@contextmanager
def gate(name, budget_s):
    """Time a gate, print its verdict line, and enforce the runtime budget."""
    info = {"detail": ""}
    started = time.monotonic()
    try:
        yield info
    except BaseException:
        print(f"[gate] {name}: FAIL")
        raise
    elapsed = time.monotonic() - started
    print(f"[gate] {name}: PASS ({info['detail']}; {elapsed:.2f}s of {budget_s:.0f}s)")
    assert elapsed < budget_s, f"{name}: runtime {elapsed:.2f}s over budget {budget_s}s"


def result(success, shortest, agent, start=4.0, final=0.0, eid="e0"):
    return EpisodeResult(
        episode_id=eid,
        scene_id="scn000000",
        target_category="sofa",
        success=success,
        status="success" if success else "failure_timeout",
        steps=1,
        shortest_path_m=shortest,
        agent_path_m=agent,
        start_distance_m=start,
        final_distance_m=final,
    )


def test_metric_exactness():
    with gate("metric exactness", 1.0) as info:
        m = compute_metrics([result(True, 2.0, 4.0)])
        assert abs(m["spl"] - 0.5) < 1e-12
        assert abs(m["success_rate"] - 1.0) < 1e-12
        optimal = compute_metrics([result(True, 1.5, 1.5, eid=f"e{i}") for i in range(5)])
        assert abs(optimal["success_rate"] - 1.0) < 1e-12
        assert abs(optimal["spl"] - 1.0) < 1e-12
        failed = compute_metrics(
            [result(False, 1.5, 3.0, final=4.0, eid=f"e{i}") for i in range(5)]
        )
        assert abs(failed["success_rate"]) < 1e-12
        assert abs(failed["spl"]) < 1e-12
        info["detail"] = "3 closed-form cases at 1e-12"


def test_spl_bounded_by_success_rate():
    with gate("SPL <= SR property", 5.0) as info:
        import random

        rng = random.Random(99)
        for _ in range(1000):
            rows = []
            for k in range(rng.randint(1, 25)):
                shortest = rng.uniform(0.25, 6.0)
                rows.append(
                    result(
                        rng.random() < 0.5,
                        shortest,
                        shortest * rng.uniform(0.8, 4.0),
                        start=rng.uniform(0.5, 6.0),
                        final=rng.uniform(0.0, 6.0),
                        eid=f"e{k}",
                    )
                )
            m = compute_metrics(rows)
            assert m["spl"] <= m["success_rate"] + 1e-12
        info["detail"] = "1000 randomized result sets"


def test_adaptive_weight_algebra():
    with gate("adaptive weight algebra", 1.0) as info:
        # the weight at the gate midpoint is exactly one half
        assert confidence_weights(np.array([0.5]), 10.0, 0.5)[0] == 0.5
        assert confidence_weights(np.array([0.3]), 25.0, 0.3)[0] == 0.5
        rng = np.random.default_rng(4)
        for _ in range(100):
            alpha = rng.uniform(0.1, 50.0)
            beta = rng.uniform(0.1, 0.9)
            delta = rng.uniform(0.0, min(beta, 1.0 - beta))
            pair = confidence_weights(np.array([beta + delta, beta - delta]), alpha, beta)
            assert abs(pair.sum() - 1.0) < 1e-12
        c = np.linspace(0.0, 1.0, 1000)
        w = confidence_weights(c, 10.0, 0.5)
        assert np.all(np.diff(w) > 0.0)
        info["detail"] = "midpoint 0.5 exact, 100 symmetric pairs at 1e-12, 1000-point monotonicity"


def test_gradient_fidelity():
    with gate("gradient fidelity", 10.0) as info:
        rng = np.random.default_rng(12)
        worst = 0.0
        for i in range(100):
            n, dim = int(rng.integers(4, 16)), int(rng.integers(3, 10))
            features = rng.normal(size=(n, dim))
            labels = rng.integers(0, N_ACTIONS, size=n)
            confidence = rng.uniform(0.0, 1.0, size=n)
            params = rng.normal(0, 0.5, size=N_ACTIONS * dim + N_ACTIONS)
            if i % 2 == 0:
                err = gradient_check(ce_loss, params, features, labels)
            else:
                err = gradient_check(
                    adaptive_loss, params, features, labels, confidence, 10.0, 0.5
                )
            worst = max(worst, err)
        assert worst <= 1e-4, worst
        info["detail"] = f"100 instances, both losses, max rel err {worst:.2e}"


def dijkstra_to_region(scene, start, region):
    """Independent oracle: uniform-cost search over floor cells in meters."""
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if (x, y) in region:
            return d
        if d > dist.get((x, y), float("inf")):
            continue
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (x + dx, y + dy)
            if not scene.is_floor(*nxt):
                continue
            nd = d + scene.cell_size_m
            if nd < dist.get(nxt, float("inf")):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return None


@pytest.fixture(scope="module")
def demo_bundle_16():
    """Fifty seeded solvable episodes on 16x16 scenes plus their demos."""
    bundle = []
    for i in range(10):
        scene = generate_scene(seed=400 + i, width=16, height=16, room_count=3)
        cats = sorted({o.category for o in scene.objects})
        for ep in sample_episodes(scene, cats, count=5, seed=stable_seed(400 + i, "accept")):
            bundle.append((scene, ep, scripted_demo(scene, ep)))
    return bundle


def test_geodesic_oracle(demo_bundle_16):
    with gate("geodesic oracle", 30.0) as info:
        rng = np.random.default_rng(55)
        checked = 0
        for i in range(50):
            scene = generate_scene(seed=500 + i, width=16, height=16, room_count=3)
            floor = [
                (x, y)
                for y in range(scene.height)
                for x in range(scene.width)
                if scene.is_floor(x, y)
            ]
            cats = sorted({o.category for o in scene.objects})
            category = cats[int(rng.integers(len(cats)))]
            start = floor[int(rng.integers(len(floor)))]
            region = success_region(scene, category, 1)
            oracle = dijkstra_to_region(scene, start, region)
            bfs = geodesic_distance(scene, start, category, 1)
            assert oracle is not None
            assert abs(bfs - oracle) < 1e-12, (scene.scene_id, start, category)
            checked += 1
        # every successful trajectory walks at least the shortest path
        for scene, ep, demo in demo_bundle_16:
            if demo.outcome == "success":
                assert demo.path_length_m >= ep.geodesic_l_m - 1e-9
        info["detail"] = f"{checked} scenes vs uniform-cost search, p >= l on all successes"


def test_demonstrator_competence(demo_bundle_16):
    with gate("demonstrator competence", 60.0) as info:
        assert len(demo_bundle_16) == 50
        successes = sum(1 for _, _, demo in demo_bundle_16 if demo.outcome == "success")
        rate = successes / len(demo_bundle_16)
        assert rate >= 0.9, rate
        assert all(len(demo.steps) <= 500 for _, _, demo in demo_bundle_16)
        info["detail"] = f"scripted SR {rate:.2f} over 50 episodes"


@pytest.fixture(scope="module")
def corpus():
    """Ten 20x14 scenes, a scene-holdout split, and >= 2000 annotated steps."""
    vocab = default_vocab()
    priors = default_priors(vocab)
    scenes = [generate_scene(seed=200 + i, width=20, height=14, room_count=4) for i in range(10)]
    by_id = {s.scene_id: s for s in scenes}
    split = make_splits(scenes, vocab, "scene_gen", seed=0)
    backend = RuleBackend()
    trajectories = []
    records = []
    allowed = set(split.train_categories())
    per_scene = 12
    for round_no in range(3):
        for scene_id in split.train_scenes:
            scene = by_id[scene_id]
            cats = sorted({o.category for o in scene.objects} & allowed)
            for ep in sample_episodes(
                scene, cats, count=per_scene, seed=stable_seed(round_no, scene_id, "corpus")
            ):
                demo = scripted_demo(scene, ep)
                if demo.outcome != "success":
                    continue
                trajectories.append((scene, demo))
                records.extend(annotate_trajectory(demo, backend, priors))
        if len(records) >= 2000:
            break
        per_scene = 6
    return {
        "vocab": vocab,
        "priors": priors,
        "scenes": scenes,
        "by_id": by_id,
        "split": split,
        "trajectories": trajectories,
        "records": records,
    }


def test_end_to_end_learning_signal(corpus):
    with gate("end-to-end learning signal", 600.0) as info:
        records = corpus["records"]
        assert len(records) >= 2000, len(records)
        assert len(corpus["split"].train_scenes) == 8
        assert len(corpus["split"].test_scenes) == 2
        vocab, priors = corpus["vocab"], corpus["priors"]
        hcot, _ = train(records, "hcot", vocab, TrainConfig(mode="hcot", loss="ce"))
        pure, _ = train(records, "pure_text", vocab, TrainConfig(mode="pure_text", loss="ce"))
        _, m_hcot = evaluate_split(hcot, corpus["split"], corpus["by_id"], vocab, priors)
        _, m_pure = evaluate_split(pure, corpus["split"], corpus["by_id"], vocab, priors)
        _, m_rand = evaluate_split(None, corpus["split"], corpus["by_id"], vocab, priors)
        assert m_hcot["success_rate"] >= 2.0 * m_rand["success_rate"], (m_hcot, m_rand)
        assert m_hcot["success_rate"] >= m_pure["success_rate"], (m_hcot, m_pure)
        info["detail"] = (
            f"{len(records)} steps; SR hcot {m_hcot['success_rate']:.2f} "
            f"vs pure_text {m_pure['success_rate']:.2f} vs random {m_rand['success_rate']:.2f}"
        )


def test_noise_robust_training_benefit(corpus):
    with gate("noisy-label training benefit", 1800.0) as info:
        vocab, priors = corpus["vocab"], corpus["priors"]
        sr_adaptive, sr_ce = [], []
        for seed in range(5):
            backend = RuleBackend(noise_prob=0.3, noise_seed=seed)
            noisy = []
            for _, demo in corpus["trajectories"]:
                noisy.extend(annotate_trajectory(demo, backend, priors))
            adaptive, _ = train(
                noisy,
                "hcot",
                vocab,
                TrainConfig(mode="hcot", loss="adaptive", alpha=10.0, beta=0.5, seed=seed),
            )
            plain, _ = train(
                noisy, "hcot", vocab, TrainConfig(mode="hcot", loss="ce", seed=seed)
            )
            _, m_a = evaluate_split(adaptive, corpus["split"], corpus["by_id"], vocab, priors)
            _, m_c = evaluate_split(plain, corpus["split"], corpus["by_id"], vocab, priors)
            sr_adaptive.append(m_a["success_rate"])
            sr_ce.append(m_c["success_rate"])
        mean_a = sum(sr_adaptive) / 5.0
        mean_c = sum(sr_ce) / 5.0
        assert mean_a >= mean_c, (sr_adaptive, sr_ce)
        info["detail"] = f"noise 0.3, 5 seeds: adaptive SR {mean_a:.2f} >= ce SR {mean_c:.2f}"


def test_zero_shot_object_generalization(corpus):
    with gate("zero-shot object protocol", 900.0) as info:
        vocab, priors = corpus["vocab"], corpus["priors"]
        split = make_splits(corpus["scenes"], vocab, "object_gen", seed=0)
        seen = set(split.seen_categories)
        assert len(seen) == 16 and len(split.unseen_categories) == 5
        records = [r for r in corpus["records"] if r.target_category in seen]
        assert records and all(r.target_category in seen for r in records)
        params, _ = train(records, "hcot", vocab, TrainConfig(mode="hcot", loss="ce"))
        results, m_model = evaluate_split(params, split, corpus["by_id"], vocab, priors)
        unseen = set(split.unseen_categories)
        assert all(r.target_category in unseen for r in results)
        rand_results, m_rand = evaluate_split(None, split, corpus["by_id"], vocab, priors)
        assert all(r.target_category in unseen for r in rand_results)
        assert m_model["success_rate"] >= 2.0 * m_rand["success_rate"], (m_model, m_rand)
        info["detail"] = (
            f"{len(results)} unseen-goal episodes; SR {m_model['success_rate']:.2f} "
            f"vs random {m_rand['success_rate']:.2f}"
        )


def run_pipeline(base):
    from gridnav.cli import main
    from gridnav.manifest import (
        EpisodePlan,
        ExperimentManifest,
        ScenePlan,
        TrainingPlan,
        write_manifest,
    )

    manifest_path = base / "manifest.json"
    write_manifest(
        manifest_path,
        ExperimentManifest(
            scene=ScenePlan(count=3, width=18, height=12, room_count=3, seed=0),
            episodes=EpisodePlan(demos_per_scene=3, eval_per_scene=3, seed=0),
            training=TrainingPlan(features="hcot", loss="ce", epochs=12, seed=0),
        ),
    )
    started = time.monotonic()
    for cmd in ("gen-scenes", "gen-episodes", "demo", "annotate", "train", "eval"):
        assert main([cmd, "--manifest", str(manifest_path)]) == 0, cmd
    return time.monotonic() - started


def test_pipeline_determinism(tmp_path):
    first = tmp_path / "run_a"
    second = tmp_path / "run_b"
    first.mkdir()
    second.mkdir()
    t_first = run_pipeline(first)
    with gate("pipeline determinism", max(1.0, t_first * 2.0)) as info:
        run_pipeline(second)
        compared = []
        for name in ("qa.jsonl", "model.json", "eval_report.jsonl"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
            compared.append(name)
        info["detail"] = f"byte-identical rerun: {', '.join(compared)}"


def test_teleop_round_trip_optional(tmp_path):
    fastapi = pytest.importorskip("fastapi")
    from fastapi.testclient import TestClient

    from gridnav.manifest import EpisodePlan, ExperimentManifest, ScenePlan
    from gridnav.service import create_app

    with gate("teleop round trip", 120.0) as info:
        manifest = ExperimentManifest(
            scene=ScenePlan(count=1, width=18, height=12, room_count=3, seed=0),
            episodes=EpisodePlan(demos_per_scene=1, eval_per_scene=1, seed=0),
        )
        app = create_app(manifest, tmp_path, session_seed=0)
        client = TestClient(app)
        payload = client.get("/api/session/new").json()
        sid = payload["session_id"]

        # scripted browser driver: solve the same deterministic episode offline
        from dataclasses import replace

        scene = generate_scene(seed=0, width=18, height=12, room_count=3)
        present = sorted({o.category for o in scene.objects})
        episode = sample_episodes(scene, present, count=1, seed=stable_seed(0, 0, "teleop"))[0]
        episode = replace(episode, episode_id=f"{scene.scene_id}_hu0000")
        for step_record in scripted_demo(scene, episode).steps:
            resp = client.post(
                f"/api/session/{sid}/action", json={"action": step_record.action.label}
            )
            assert resp.status_code == 200, resp.text
        assert resp.json()["status"] == "success"
        assert client.post(f"/api/session/{sid}/commit").status_code == 200

        from gridnav.demo import read_trajectories

        committed = read_trajectories(tmp_path / "trajectories.jsonl")
        assert len(committed) == 1 and committed[0].demo_source == "human"
        verify_replay(scene, committed[0], 1)

        priors = default_priors()
        human_records = annotate_trajectory(committed[0], RuleBackend(), priors)
        scripted_records = annotate_trajectory(scripted_demo(scene, episode), RuleBackend(), priors)
        human_doc = qa_record_to_json(human_records[0])
        scripted_doc = qa_record_to_json(scripted_records[0])
        assert set(human_doc) == set(scripted_doc)
        assert [r["kind"] for r in human_doc["rounds"]] == [
            r["kind"] for r in scripted_doc["rounds"]
        ]
        info["detail"] = (
            f"human trajectory of {len(committed[0].steps)} steps replayed and "
            f"annotated into {len(human_records)} records"
        )
