"""Episode sampling, geodesic distances, and train/eval splits."""

from __future__ import annotations

import json
import zlib
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import UnreachableTargetError, UnsatisfiableEpisodeError
from .sim import AgentPose, HEADING_STEPS
from .world import CategoryVocab, Scene, UNSEEN_CATEGORIES, default_vocab

EPISODE_FORMAT_VERSION = 1
SPLIT_FORMAT_VERSION = 1

NEIGHBORS = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass(frozen=True)
class Episode:
    episode_id: str
    scene_id: str
    start_pose: AgentPose
    target_category: str
    geodesic_l_m: float


def stable_seed(*parts) -> list[int]:
    """Mix strings, ints, and nested seed sequences into a reproducible
    numpy seed sequence."""
    out = []
    for part in parts:
        if isinstance(part, str):
            out.append(zlib.crc32(part.encode("utf-8")))
        elif isinstance(part, (list, tuple)):
            out.extend(stable_seed(*part))
        else:
            out.append(int(part) & 0xFFFFFFFF)
    return out


def success_region(scene: Scene, category: str, radius: int) -> set[tuple[int, int]]:
    """Floor cells within `radius` 4-connected hops of any instance of category."""
    sources = [(o.x, o.y) for o in scene.objects if o.category == category]
    region: set[tuple[int, int]] = set()
    seen = set(sources)
    queue = deque((cell, 0) for cell in sources)
    while queue:
        (x, y), d = queue.popleft()
        region.add((x, y))
        if d >= radius:
            continue
        for dx, dy in NEIGHBORS:
            nxt = (x + dx, y + dy)
            if nxt not in seen and scene.is_floor(*nxt):
                seen.add(nxt)
                queue.append((nxt, d + 1))
    return region


def hop_field_to_region(scene: Scene, region: set[tuple[int, int]]) -> dict[tuple[int, int], int]:
    """Multi-source BFS: hops from every reachable floor cell into the region."""
    field = {cell: 0 for cell in region}
    queue = deque(region)
    while queue:
        x, y = queue.popleft()
        for dx, dy in NEIGHBORS:
            nxt = (x + dx, y + dy)
            if nxt not in field and scene.is_floor(*nxt):
                field[nxt] = field[(x, y)] + 1
                queue.append(nxt)
    return field


def geodesic_distance(
    scene: Scene,
    start: tuple[int, int],
    target_category: str,
    success_radius_cells: int = 1,
) -> float:
    """Meters along the shortest 4-connected path from start to a cell from
    which stopping would satisfy the distance conjunct. Zero when already there."""
    instances = scene.instances_of(target_category)
    if not instances:
        raise UnsatisfiableEpisodeError(
            f"scene {scene.scene_id} has no instance of {target_category!r}"
        )
    if not scene.is_floor(*start):
        raise ValueError(f"start {start} is not a floor cell")
    region = success_region(scene, target_category, success_radius_cells)
    field = hop_field_to_region(scene, region)
    hops = field.get(start)
    if hops is None:
        raise UnreachableTargetError(
            f"no path from {start} to any {target_category!r} in scene {scene.scene_id}"
        )
    return hops * scene.cell_size_m


def sample_episodes(
    scene: Scene,
    categories: list[str],
    count: int,
    seed: int,
    success_radius_cells: int = 1,
    vocab: CategoryVocab | None = None,
) -> list[Episode]:
    """Uniformly sampled solvable episodes, deterministic in the seed.

    Starts already inside the success region are rejected and resampled.
    """
    vocab = vocab or default_vocab()
    for cat in categories:
        vocab.category_index(cat)
        if not scene.instances_of(cat):
            raise UnsatisfiableEpisodeError(
                f"scene {scene.scene_id} has no instance of {cat!r}"
            )
    if count <= 0:
        return []

    rng = np.random.default_rng(stable_seed(seed, scene.scene_id))
    floor = scene.floor_cells()
    fields = {
        cat: hop_field_to_region(scene, success_region(scene, cat, success_radius_cells))
        for cat in categories
    }
    episodes: list[Episode] = []
    attempts = 0
    max_attempts = max(1000, count * 200)
    while len(episodes) < count:
        attempts += 1
        if attempts > max_attempts:
            raise UnsatisfiableEpisodeError(
                f"could not sample {count} episodes in scene {scene.scene_id} "
                f"after {max_attempts} attempts"
            )
        cat = categories[int(rng.integers(0, len(categories)))]
        x, y = floor[int(rng.integers(0, len(floor)))]
        heading = int(rng.integers(0, HEADING_STEPS))
        hops = fields[cat].get((x, y))
        if hops is None or hops == 0:
            continue
        episodes.append(
            Episode(
                episode_id=f"{scene.scene_id}_ep{len(episodes):04d}",
                scene_id=scene.scene_id,
                start_pose=AgentPose(x, y, heading, 0),
                target_category=cat,
                geodesic_l_m=hops * scene.cell_size_m,
            )
        )
    return episodes


@dataclass(frozen=True)
class SplitConfig:
    mode: str  # object_gen | scene_gen
    seen_categories: tuple[str, ...]
    unseen_categories: tuple[str, ...]
    train_scenes: tuple[str, ...]
    test_scenes: tuple[str, ...]

    def train_categories(self) -> tuple[str, ...]:
        """Goal categories allowed in training data."""
        if self.mode == "object_gen":
            return self.seen_categories
        return self.seen_categories + self.unseen_categories

    def eval_categories(self) -> tuple[str, ...]:
        if self.mode == "object_gen":
            return self.unseen_categories
        return self.seen_categories + self.unseen_categories


def validate_split(split: SplitConfig, vocab: CategoryVocab | None = None) -> None:
    vocab = vocab or default_vocab()
    if split.mode not in ("object_gen", "scene_gen"):
        raise ValueError(f"unknown split mode: {split.mode!r}")
    seen = set(split.seen_categories)
    unseen = set(split.unseen_categories)
    if seen & unseen:
        raise ValueError(f"seen/unseen categories overlap: {sorted(seen & unseen)}")
    if seen | unseen != set(vocab.categories):
        raise ValueError("seen + unseen categories must partition the vocabulary")
    if split.mode == "scene_gen":
        overlap = set(split.train_scenes) & set(split.test_scenes)
        if overlap:
            raise ValueError(f"train/test scenes overlap: {sorted(overlap)}")
        if not split.train_scenes or not split.test_scenes:
            raise ValueError("scene_gen split needs scenes on both sides")


def make_splits(
    scenes: list[Scene], vocab: CategoryVocab, mode: str, seed: int
) -> SplitConfig:
    """Build the goal-category or scene generalization split.

    object_gen shares every scene between train and test and holds out the
    five reserved categories; scene_gen shares categories and holds out
    roughly 20 percent of scenes by seeded shuffle.
    """
    if mode not in ("object_gen", "scene_gen"):
        raise ValueError(f"unknown split mode: {mode!r}")
    for cat in UNSEEN_CATEGORIES:
        vocab.category_index(cat)
    ids = [s.scene_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate scene ids")
    seen = tuple(c for c in vocab.categories if c not in UNSEEN_CATEGORIES)

    if mode == "object_gen":
        if not ids:
            raise ValueError("object_gen split needs at least one scene")
        split = SplitConfig(
            mode=mode,
            seen_categories=seen,
            unseen_categories=UNSEEN_CATEGORIES,
            train_scenes=tuple(ids),
            test_scenes=tuple(ids),
        )
    else:
        if len(ids) < 2:
            raise ValueError("scene_gen split needs at least two scenes")
        rng = np.random.default_rng(stable_seed(seed, "scene_split"))
        order = list(ids)
        rng.shuffle(order)
        n_test = max(1, round(len(order) * 0.2))
        split = SplitConfig(
            mode=mode,
            seen_categories=seen,
            unseen_categories=UNSEEN_CATEGORIES,
            train_scenes=tuple(sorted(order[n_test:])),
            test_scenes=tuple(sorted(order[:n_test])),
        )
    validate_split(split, vocab)
    return split


def pose_to_json(pose: AgentPose) -> dict:
    return {"x": pose.x, "y": pose.y, "heading": pose.heading, "pitch": pose.pitch}


def pose_from_json(doc: dict) -> AgentPose:
    return AgentPose(int(doc["x"]), int(doc["y"]), int(doc["heading"]), int(doc["pitch"]))


def episode_to_json(ep: Episode) -> dict:
    return {
        "episode_id": ep.episode_id,
        "scene_id": ep.scene_id,
        "start_pose": pose_to_json(ep.start_pose),
        "target_category": ep.target_category,
        "geodesic_l_m": ep.geodesic_l_m,
    }


def episode_from_json(doc: dict) -> Episode:
    return Episode(
        episode_id=doc["episode_id"],
        scene_id=doc["scene_id"],
        start_pose=pose_from_json(doc["start_pose"]),
        target_category=doc["target_category"],
        geodesic_l_m=float(doc["geodesic_l_m"]),
    )


def write_episodes(path, episodes: list[Episode], manifest_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"kind": "episode_file", "format_version": EPISODE_FORMAT_VERSION}
        if manifest_hash is not None:
            header["manifest_hash"] = manifest_hash
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ep in episodes:
            fh.write(json.dumps(episode_to_json(ep), sort_keys=True) + "\n")


def read_episodes(path) -> list[Episode]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty episode file")
    header = json.loads(lines[0])
    if header.get("kind") != "episode_file":
        raise ValueError(f"{path}: not an episode file")
    if header.get("format_version") != EPISODE_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
    return [episode_from_json(json.loads(line)) for line in lines[1:]]


def write_split(path, split: SplitConfig, manifest_hash: str | None = None) -> None:
    doc = {
        "kind": "split",
        "format_version": SPLIT_FORMAT_VERSION,
        "mode": split.mode,
        "seen_categories": list(split.seen_categories),
        "unseen_categories": list(split.unseen_categories),
        "train_scenes": list(split.train_scenes),
        "test_scenes": list(split.test_scenes),
    }
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_split(path) -> SplitConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "split":
        raise ValueError(f"{path}: not a split file")
    split = SplitConfig(
        mode=doc["mode"],
        seen_categories=tuple(doc["seen_categories"]),
        unseen_categories=tuple(doc["unseen_categories"]),
        train_scenes=tuple(doc["train_scenes"]),
        test_scenes=tuple(doc["test_scenes"]),
    )
    validate_split(split)
    return split
