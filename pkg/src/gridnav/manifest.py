"""Experiment manifests: one JSON document that pins every knob and artifact
path of a pipeline run. Artifacts embed the manifest's content hash so a
report can always be traced back to the exact configuration that made it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from . import __version__
from .errors import ManifestError

MANIFEST_FORMAT_VERSION = 1


@dataclass
class ScenePlan:
    count: int = 5
    width: int = 20
    height: int = 14
    room_count: int = 4
    cell_size_m: float = 0.25
    seed: int = 0


@dataclass
class EpisodePlan:
    demos_per_scene: int = 6
    eval_per_scene: int = 10
    success_radius_cells: int = 1
    seed: int = 0


@dataclass
class SplitPlan:
    mode: str = "object_gen"
    seed: int = 0


@dataclass
class AnnotationPlan:
    backend: str = "rule"
    noise_prob: float = 0.0
    noise_seed: int = 0


@dataclass
class TrainingPlan:
    features: str = "hcot"
    loss: str = "ce"
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    alpha: float = 10.0
    beta: float = 0.5
    seed: int = 0


@dataclass
class EvaluationPlan:
    seed: int = 0


@dataclass
class ArtifactPaths:
    """Artifact locations, relative to the manifest file's directory."""

    scenes_dir: str = "scenes"
    split_file: str = "split.json"
    episodes_file: str = "episodes.jsonl"
    trajectories_file: str = "trajectories.jsonl"
    qa_file: str = "qa.jsonl"
    model_file: str = "model.json"
    eval_report_file: str = "eval_report.jsonl"
    ablation_file: str = "ablation.json"


@dataclass
class ExperimentManifest:
    scene: ScenePlan = field(default_factory=ScenePlan)
    episodes: EpisodePlan = field(default_factory=EpisodePlan)
    split: SplitPlan = field(default_factory=SplitPlan)
    annotation: AnnotationPlan = field(default_factory=AnnotationPlan)
    training: TrainingPlan = field(default_factory=TrainingPlan)
    evaluation: EvaluationPlan = field(default_factory=EvaluationPlan)
    paths: ArtifactPaths = field(default_factory=ArtifactPaths)
    tool_version: str = __version__

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["kind"] = "experiment_manifest"
        doc["format_version"] = MANIFEST_FORMAT_VERSION
        return doc

    def hash(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def validate_manifest(manifest: ExperimentManifest) -> None:
    """Cheap invariant checks; raises ManifestError with the first violation."""
    s = manifest.scene
    if s.count < 1:
        raise ManifestError("scene.count must be at least 1")
    if s.width < 7 or s.height < 7:
        raise ManifestError("scene dimensions too small to host rooms")
    if s.room_count < 1:
        raise ManifestError("scene.room_count must be at least 1")
    if s.cell_size_m <= 0:
        raise ManifestError("scene.cell_size_m must be positive")
    if manifest.episodes.demos_per_scene < 1 or manifest.episodes.eval_per_scene < 1:
        raise ManifestError("episode counts must be at least 1")
    if manifest.episodes.success_radius_cells < 0:
        raise ManifestError("success_radius_cells must be nonnegative")
    if manifest.split.mode not in ("object_gen", "scene_gen"):
        raise ManifestError(f"unknown split mode: {manifest.split.mode!r}")
    if manifest.annotation.backend not in ("rule", "chat"):
        raise ManifestError(f"unknown annotation backend: {manifest.annotation.backend!r}")
    if not (0.0 <= manifest.annotation.noise_prob <= 1.0):
        raise ManifestError("annotation.noise_prob must lie in [0, 1]")
    t = manifest.training
    if t.features not in ("pure_text", "cot", "hcot"):
        raise ManifestError(f"unknown feature mode: {t.features!r}")
    if t.loss not in ("ce", "adaptive"):
        raise ManifestError(f"unknown loss: {t.loss!r}")
    if t.alpha <= 0:
        raise ManifestError("training.alpha must be positive")
    if not (0.0 <= t.beta <= 1.0):
        raise ManifestError("training.beta must lie in [0, 1]")
    if t.learning_rate <= 0 or t.batch_size < 1 or t.epochs < 1:
        raise ManifestError("training hyperparameters out of range")
    if not (0.0 <= t.momentum < 1.0):
        raise ManifestError("training.momentum must lie in [0, 1)")


def manifest_from_json(doc: dict) -> ExperimentManifest:
    if doc.get("kind") != "experiment_manifest":
        raise ManifestError("not an experiment manifest document")
    if doc.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ManifestError(
            f"unsupported manifest format_version: {doc.get('format_version')}"
        )
    try:
        manifest = ExperimentManifest(
            scene=ScenePlan(**doc["scene"]),
            episodes=EpisodePlan(**doc["episodes"]),
            split=SplitPlan(**doc["split"]),
            annotation=AnnotationPlan(**doc["annotation"]),
            training=TrainingPlan(**doc["training"]),
            evaluation=EvaluationPlan(**doc["evaluation"]),
            paths=ArtifactPaths(**doc["paths"]),
            tool_version=doc.get("tool_version", __version__),
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"malformed manifest: {exc}") from exc
    validate_manifest(manifest)
    return manifest


def load_manifest(path) -> ExperimentManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    return manifest_from_json(doc)


def write_manifest(path, manifest: ExperimentManifest) -> None:
    validate_manifest(manifest)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.to_json(), sort_keys=True, indent=2) + "\n")
