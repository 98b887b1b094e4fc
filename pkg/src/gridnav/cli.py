"""Command line front end for the full pipeline.

Every subcommand takes --manifest (the experiment manifest JSON; artifact
paths inside it resolve relative to the manifest's directory) and --seed
(overriding that stage's seed for the invocation). Exit codes: 0 on
success, 1 on validation or runtime failures, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .annotate import (
    ChatBackend,
    RuleBackend,
    annotate_trajectories,
    read_qa_records,
    validate_qa_record,
    write_qa_records,
)
from .chat import ChatConfig
from .demo import (
    filter_demos,
    read_trajectories,
    scripted_demo,
    verify_replay,
    write_trajectories,
)
from .episodes import (
    make_splits,
    read_episodes,
    read_split,
    sample_episodes,
    stable_seed,
    write_episodes,
    write_split,
)
from .errors import EmptyDatasetError, GridnavError, ManifestError, ReplayError
from .evaluate import evaluate_split, run_ablation, write_eval_report
from .manifest import (
    ExperimentManifest,
    load_manifest,
    validate_manifest,
    write_manifest,
)
from .policy import TrainConfig, read_model, train
from .world import default_priors, default_vocab, deserialize_scene, generate_scene, serialize_scene

EVAL_POLICIES = ("model", "random")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--manifest",
        default="manifest.json",
        help="experiment manifest path (default: ./manifest.json)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="override this stage's seed from the manifest",
    )


def _base_dir(args) -> Path:
    return Path(args.manifest).resolve().parent


def _resolve(manifest: ExperimentManifest, args, name: str) -> Path:
    return _base_dir(args) / getattr(manifest.paths, name)


def _load(args) -> ExperimentManifest:
    return load_manifest(args.manifest)


def _read_scenes(manifest: ExperimentManifest, args) -> dict:
    scenes_dir = _resolve(manifest, args, "scenes_dir")
    paths = sorted(scenes_dir.glob("*.json"))
    if not paths:
        raise ManifestError(f"no scenes found under {scenes_dir}; run gen-scenes first")
    scenes = {}
    for path in paths:
        scene = deserialize_scene(path.read_bytes())
        scenes[scene.scene_id] = scene
    return scenes


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_scenes(args) -> int:
    manifest_path = Path(args.manifest)
    if manifest_path.exists():
        manifest = load_manifest(manifest_path)
        if args.seed is not None:
            manifest.scene.seed = args.seed
    else:
        manifest = ExperimentManifest()
        if args.seed is not None:
            manifest.scene.seed = args.seed
            manifest.episodes.seed = args.seed
            manifest.split.seed = args.seed
            manifest.annotation.noise_seed = args.seed
            manifest.training.seed = args.seed
            manifest.evaluation.seed = args.seed
        validate_manifest(manifest)
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        write_manifest(manifest_path, manifest)
        print(f"wrote default manifest to {manifest_path}")

    h = manifest.hash()
    scenes_dir = _resolve(manifest, args, "scenes_dir")
    scenes_dir.mkdir(parents=True, exist_ok=True)
    plan = manifest.scene
    for i in range(plan.count):
        scene = generate_scene(
            seed=plan.seed + i,
            width=plan.width,
            height=plan.height,
            room_count=plan.room_count,
            cell_size_m=plan.cell_size_m,
        )
        (scenes_dir / f"{scene.scene_id}.json").write_bytes(
            serialize_scene(scene, manifest_hash=h)
        )
    print(f"generated {plan.count} scenes under {scenes_dir}")
    return 0


def cmd_gen_episodes(args) -> int:
    manifest = _load(args)
    h = manifest.hash()
    vocab = default_vocab()
    scenes = _read_scenes(manifest, args)
    split_seed = args.seed if args.seed is not None else manifest.split.seed
    split = make_splits(list(scenes.values()), vocab, manifest.split.mode, split_seed)
    write_split(_resolve(manifest, args, "split_file"), split, manifest_hash=h)

    train_cats = set(split.train_categories())
    episodes = []
    for scene_id in split.train_scenes:
        scene = scenes[scene_id]
        present = sorted({o.category for o in scene.objects} & train_cats)
        if not present:
            print(f"note: {scene_id} has no training categories, skipped")
            continue
        episodes.extend(
            sample_episodes(
                scene,
                present,
                count=manifest.episodes.demos_per_scene,
                seed=stable_seed(manifest.episodes.seed, scene_id, "demo"),
                success_radius_cells=manifest.episodes.success_radius_cells,
            )
        )
    if not episodes:
        raise EmptyDatasetError("no demonstration episodes could be sampled")
    write_episodes(_resolve(manifest, args, "episodes_file"), episodes, manifest_hash=h)
    print(
        f"split {split.mode}: {len(split.train_scenes)} train / "
        f"{len(split.test_scenes)} test scenes; {len(episodes)} demo episodes"
    )
    return 0


def cmd_demo(args) -> int:
    manifest = _load(args)
    scenes = _read_scenes(manifest, args)
    episodes = read_episodes(_resolve(manifest, args, "episodes_file"))
    trajectories = []
    for episode in episodes:
        scene = scenes[episode.scene_id]
        trajectories.append(
            scripted_demo(
                scene,
                episode,
                success_radius_cells=manifest.episodes.success_radius_cells,
            )
        )
    kept, stats = filter_demos(trajectories)
    if not kept:
        raise EmptyDatasetError("every scripted demonstration was filtered out")
    write_trajectories(
        _resolve(manifest, args, "trajectories_file"), kept, manifest_hash=manifest.hash()
    )
    print(
        f"demonstrations: kept {stats['kept']}, removed "
        f"{stats['removed_failure']} failures, {stats['removed_too_long']} over-length"
    )
    return 0


def cmd_annotate(args) -> int:
    manifest = _load(args)
    backend_name = args.backend or manifest.annotation.backend
    noise = manifest.annotation.noise_prob if args.noise is None else args.noise
    if not (0.0 <= noise <= 1.0):
        raise ManifestError(f"--noise must lie in [0, 1], got {noise}")
    noise_seed = args.seed if args.seed is not None else manifest.annotation.noise_seed
    if backend_name == "rule":
        backend = RuleBackend(noise_prob=noise, noise_seed=noise_seed)
    elif backend_name == "chat":
        backend = ChatBackend(ChatConfig.from_env())
    else:
        raise ManifestError(f"unknown annotation backend: {backend_name!r}")

    trajectories = read_trajectories(_resolve(manifest, args, "trajectories_file"))
    records = annotate_trajectories(
        trajectories,
        backend,
        default_priors(),
        success_radius_cells=manifest.episodes.success_radius_cells,
        max_workers=args.workers,
    )
    write_qa_records(
        _resolve(manifest, args, "qa_file"), records, manifest_hash=manifest.hash()
    )
    print(
        f"annotated {len(trajectories)} trajectories into {len(records)} QA records "
        f"(backend={backend_name}, noise={noise})"
    )
    return 0


def cmd_train(args) -> int:
    manifest = _load(args)
    plan = manifest.training
    config = TrainConfig(
        mode=args.features or plan.features,
        loss=args.loss or plan.loss,
        learning_rate=plan.learning_rate,
        momentum=plan.momentum,
        batch_size=plan.batch_size,
        epochs=plan.epochs,
        alpha=plan.alpha if args.alpha is None else args.alpha,
        beta=plan.beta if args.beta is None else args.beta,
        seed=args.seed if args.seed is not None else plan.seed,
    )
    if config.mode not in ("pure_text", "cot", "hcot"):
        raise ManifestError(f"unknown feature mode: {config.mode!r}")
    if config.loss not in ("ce", "adaptive"):
        raise ManifestError(f"unknown loss: {config.loss!r}")
    if config.alpha <= 0:
        raise ManifestError(f"--alpha must be positive, got {config.alpha}")
    if not (0.0 <= config.beta <= 1.0):
        raise ManifestError(f"--beta must lie in [0, 1], got {config.beta}")

    vocab = default_vocab()
    records = read_qa_records(_resolve(manifest, args, "qa_file"))
    params, history = train(records, config.mode, vocab, config, log=print)
    from .policy import write_model

    write_model(_resolve(manifest, args, "model_file"), params, config, manifest.hash())
    print(
        f"trained {config.mode}/{config.loss} on {len(records)} records; "
        f"final accuracy {history[-1]['accuracy']:.3f}"
    )
    return 0


def cmd_eval(args) -> int:
    manifest = _load(args)
    vocab = default_vocab()
    priors = default_priors(vocab)
    scenes = _read_scenes(manifest, args)
    mode = args.split or manifest.split.mode
    if mode not in ("object_gen", "scene_gen"):
        raise ManifestError(f"unknown split mode: {mode!r}")
    split = make_splits(list(scenes.values()), vocab, mode, manifest.split.seed)
    if args.policy == "random":
        policy = None
    else:
        policy, _ = read_model(_resolve(manifest, args, "model_file"))
        if policy.vocab_fingerprint != vocab.fingerprint():
            raise ManifestError("model was trained with a different category vocabulary")
    seed = args.seed if args.seed is not None else manifest.evaluation.seed
    results, summary = evaluate_split(
        policy,
        split,
        scenes,
        vocab,
        priors,
        episodes_per_scene=manifest.episodes.eval_per_scene,
        seed=seed,
        success_radius_cells=manifest.episodes.success_radius_cells,
    )
    write_eval_report(
        _resolve(manifest, args, "eval_report_file"), results, summary, manifest.hash()
    )
    print(
        f"{mode} ({args.policy}): episodes {summary['episodes']}  "
        f"SR {summary['success_rate']:.3f}  SPL {summary['spl']:.3f}  "
        f"SoftSPL {summary['soft_spl']:.3f}"
    )
    return 0


def cmd_ablate(args) -> int:
    manifest = _load(args)
    vocab = default_vocab()
    priors = default_priors(vocab)
    scenes = _read_scenes(manifest, args)
    split = make_splits(list(scenes.values()), vocab, manifest.split.mode, manifest.split.seed)
    records = read_qa_records(_resolve(manifest, args, "qa_file"))
    plan = manifest.training
    base = TrainConfig(
        learning_rate=plan.learning_rate,
        momentum=plan.momentum,
        batch_size=plan.batch_size,
        epochs=plan.epochs,
        alpha=plan.alpha,
        beta=plan.beta,
        seed=args.seed if args.seed is not None else plan.seed,
    )
    rows = run_ablation(
        records,
        split,
        scenes,
        vocab,
        priors,
        train_config=base,
        episodes_per_scene=manifest.episodes.eval_per_scene,
        seed=manifest.evaluation.seed,
        success_radius_cells=manifest.episodes.success_radius_cells,
        log=print,
    )
    doc = {
        "kind": "ablation_report",
        "format_version": 1,
        "manifest_hash": manifest.hash(),
        "rows": rows,
    }
    path = _resolve(manifest, args, "ablation_file")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"wrote ablation table to {path}")
    return 0


def _check_hash(doc_hash, expected: str, label: str, problems: list) -> None:
    if doc_hash is not None and doc_hash != expected:
        problems.append(f"{label}: manifest hash mismatch")


def cmd_validate(args) -> int:
    manifest = _load(args)
    expected = manifest.hash()
    problems: list[str] = []
    checked = 0

    scenes = {}
    scenes_dir = _resolve(manifest, args, "scenes_dir")
    for path in sorted(scenes_dir.glob("*.json")) if scenes_dir.is_dir() else []:
        try:
            doc = json.loads(path.read_bytes())
            _check_hash(doc.get("manifest_hash"), expected, path.name, problems)
            scene = deserialize_scene(path.read_bytes())
            scenes[scene.scene_id] = scene
            checked += 1
        except GridnavError as exc:
            problems.append(f"{path.name}: {exc}")

    split_path = _resolve(manifest, args, "split_file")
    if split_path.exists():
        try:
            doc = json.loads(split_path.read_text())
            _check_hash(doc.get("manifest_hash"), expected, split_path.name, problems)
            read_split(split_path)
            checked += 1
        except (GridnavError, ValueError) as exc:
            problems.append(f"{split_path.name}: {exc}")

    episodes_path = _resolve(manifest, args, "episodes_file")
    if episodes_path.exists():
        try:
            episodes = read_episodes(episodes_path)
            with open(episodes_path, "r", encoding="utf-8") as fh:
                header = json.loads(fh.readline())
            _check_hash(header.get("manifest_hash"), expected, episodes_path.name, problems)
            for episode in episodes:
                scene = scenes.get(episode.scene_id)
                if scene is None:
                    problems.append(f"{episode.episode_id}: unknown scene {episode.scene_id}")
                elif not scene.is_floor(episode.start_pose.x, episode.start_pose.y):
                    problems.append(f"{episode.episode_id}: start pose not on floor")
            checked += 1
        except (GridnavError, ValueError) as exc:
            problems.append(f"{episodes_path.name}: {exc}")

    traj_path = _resolve(manifest, args, "trajectories_file")
    if traj_path.exists():
        try:
            trajectories = read_trajectories(traj_path)
            with open(traj_path, "r", encoding="utf-8") as fh:
                header = json.loads(fh.readline())
            _check_hash(header.get("manifest_hash"), expected, traj_path.name, problems)
            for traj in trajectories:
                scene = scenes.get(traj.scene_id)
                if scene is None:
                    problems.append(f"{traj.episode_id}: unknown scene {traj.scene_id}")
                    continue
                try:
                    verify_replay(scene, traj, manifest.episodes.success_radius_cells)
                except ReplayError as exc:
                    problems.append(f"{traj.episode_id}: {exc}")
            checked += 1
        except (GridnavError, ValueError) as exc:
            problems.append(f"{traj_path.name}: {exc}")

    qa_path = _resolve(manifest, args, "qa_file")
    if qa_path.exists():
        try:
            with open(qa_path, "r", encoding="utf-8") as fh:
                lines = [line for line in fh.read().splitlines() if line.strip()]
            header = json.loads(lines[0])
            _check_hash(header.get("manifest_hash"), expected, qa_path.name, problems)
            for line in lines[1:]:
                validate_qa_record(json.loads(line))
            checked += 1
        except (GridnavError, ValueError) as exc:
            problems.append(f"{qa_path.name}: {exc}")

    model_path = _resolve(manifest, args, "model_file")
    if model_path.exists():
        try:
            doc = json.loads(model_path.read_text())
            _check_hash(doc.get("manifest_hash"), expected, model_path.name, problems)
            params, _ = read_model(model_path)
            if params.vocab_fingerprint != default_vocab().fingerprint():
                problems.append(f"{model_path.name}: vocabulary fingerprint mismatch")
            checked += 1
        except (GridnavError, ValueError) as exc:
            problems.append(f"{model_path.name}: {exc}")

    report_path = _resolve(manifest, args, "eval_report_file")
    if report_path.exists():
        try:
            with open(report_path, "r", encoding="utf-8") as fh:
                header = json.loads(fh.readline())
            if header.get("kind") != "eval_report":
                problems.append(f"{report_path.name}: not an evaluation report")
            _check_hash(header.get("manifest_hash"), expected, report_path.name, problems)
            checked += 1
        except ValueError as exc:
            problems.append(f"{report_path.name}: {exc}")

    if problems:
        for problem in problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return 1
    print(f"validated {checked} artifact groups, all consistent with manifest {expected[:12]}")
    return 0


def cmd_serve(args) -> int:
    manifest = _load(args)
    import uvicorn

    from .service import create_app

    app = create_app(
        manifest,
        base_dir=_base_dir(args),
        session_seed=args.seed if args.seed is not None else 0,
        frontend_dir=args.frontend,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridnav",
        description="Object-goal navigation pipeline: scenes, demos, QA "
        "annotation, policy training, evaluation, and teleoperation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="generate the scene pool")
    _add_common(p)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("gen-episodes", help="build the split and demo episodes")
    _add_common(p)
    p.set_defaults(func=cmd_gen_episodes)

    p = sub.add_parser("demo", help="run scripted demonstrations")
    _add_common(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("annotate", help="annotate trajectories into QA records")
    _add_common(p)
    p.add_argument("--backend", choices=("rule", "chat"), default=None)
    p.add_argument("--noise", type=float, default=None, help="detection corruption probability")
    p.add_argument("--workers", type=int, default=4, help="chat backend parallelism")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="fit the linear policy on QA records")
    _add_common(p)
    p.add_argument("--loss", choices=("ce", "adaptive"), default=None)
    p.add_argument("--alpha", type=float, default=None, help="confidence gate sharpness")
    p.add_argument("--beta", type=float, default=None, help="confidence gate midpoint")
    p.add_argument(
        "--features", choices=("pure_text", "cot", "hcot"), default=None
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy on the held-out side")
    _add_common(p)
    p.add_argument("--split", choices=("object_gen", "scene_gen"), default=None)
    p.add_argument("--policy", choices=EVAL_POLICIES, default="model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="feature/loss ablation grid")
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="run the teleoperation HTTP service")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", default=None, help="static frontend directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("validate", help="schema and replay checks over artifacts")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridnavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
