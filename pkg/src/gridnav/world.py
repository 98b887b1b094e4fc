"""Semantic gridworld scenes: vocabulary, co-occurrence priors, generation, IO.

A scene is a small occupancy grid ('#' wall, '.' floor) partitioned into
rectangular rooms by recursive binary splits, with one-cell doorways punched
between adjacent rooms and category-labelled objects placed on floor cells.
Everything is deterministic in the seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    PriorsParseError,
    PriorsValidationError,
    SceneParseError,
    SceneSizingError,
    SceneValidationError,
    VocabularyError,
)

SCENE_FORMAT_VERSION = 1
PRIORS_FORMAT_VERSION = 1

WALL = "#"
FLOOR = "."

# 21 object categories; the last five are reserved as held-out goal
# categories and never appear as training targets.
OBJECT_CATEGORIES = (
    "chair",
    "table",
    "picture",
    "cabinet",
    "cushion",
    "sofa",
    "sink",
    "stool",
    "towel",
    "tv_monitor",
    "shower",
    "bathtub",
    "fireplace",
    "stove",
    "desk",
    "lamp",
    "counter",
    "bed",
    "toilet",
    "chest_of_drawers",
    "plant",
)

UNSEEN_CATEGORIES = ("counter", "bed", "toilet", "chest_of_drawers", "plant")
SEEN_CATEGORIES = tuple(c for c in OBJECT_CATEGORIES if c not in UNSEEN_CATEGORIES)

ROOM_TYPES = (
    "living_room",
    "kitchen",
    "bedroom",
    "bathroom",
    "dining_room",
    "hallway",
    "office",
    "unknown",
)

# Minimum floor span of a room along each axis, in cells.
MIN_ROOM_SIDE = 3


@dataclass(frozen=True)
class CategoryVocab:
    """Fixed, ordered object-category and room-type vocabularies."""

    categories: tuple[str, ...] = OBJECT_CATEGORIES
    room_types: tuple[str, ...] = ROOM_TYPES

    def __post_init__(self):
        if len(set(self.categories)) != len(self.categories):
            raise VocabularyError("duplicate object categories")
        if len(set(self.room_types)) != len(self.room_types):
            raise VocabularyError("duplicate room types")

    def category_index(self, name: str) -> int:
        try:
            return self.categories.index(name)
        except ValueError:
            raise VocabularyError(f"unknown object category: {name!r}") from None

    def room_index(self, name: str) -> int:
        try:
            return self.room_types.index(name)
        except ValueError:
            raise VocabularyError(f"unknown room type: {name!r}") from None

    def fingerprint(self) -> str:
        """Stable hash of the ordered vocabulary, embedded in model files."""
        payload = "|".join(self.categories) + "||" + "|".join(self.room_types)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def default_vocab() -> CategoryVocab:
    return CategoryVocab()


@dataclass(frozen=True, eq=False)
class CooccurrencePriors:
    """P(object | room type) and symmetric object-object relevance tables."""

    vocab: CategoryVocab
    object_room: np.ndarray  # (n_categories, n_room_types)
    object_object: np.ndarray  # (n_categories, n_categories)

    def p_object_in_room(self, category: str, room_type: str) -> float:
        return float(
            self.object_room[
                self.vocab.category_index(category), self.vocab.room_index(room_type)
            ]
        )

    def relevance(self, category: str, target: str) -> float:
        return float(
            self.object_object[
                self.vocab.category_index(category), self.vocab.category_index(target)
            ]
        )


def _validate_priors(vocab: CategoryVocab, object_room, object_object) -> None:
    n = len(vocab.categories)
    m = len(vocab.room_types)
    if object_room.shape != (n, m):
        raise PriorsValidationError(
            f"object_room table has shape {object_room.shape}, expected {(n, m)}"
        )
    if object_object.shape != (n, n):
        raise PriorsValidationError(
            f"object_object table has shape {object_object.shape}, expected {(n, n)}"
        )
    for mat, name, cols in (
        (object_room, "object_room", vocab.room_types),
        (object_object, "object_object", vocab.categories),
    ):
        bad = np.argwhere((mat < 0.0) | (mat > 1.0))
        if bad.size:
            r, c = bad[0]
            raise PriorsValidationError(
                f"{name}[{vocab.categories[r]}][{cols[c]}] = {mat[r, c]} outside [0, 1]"
            )
    diag = np.diagonal(object_object)
    off = np.argwhere(diag != 1.0)
    if off.size:
        i = int(off[0][0])
        raise PriorsValidationError(
            f"object_object[{vocab.categories[i]}][{vocab.categories[i]}] must be 1.0"
        )
    asym = np.argwhere(object_object != object_object.T)
    if asym.size:
        a, b = asym[0]
        raise PriorsValidationError(
            f"object_object not symmetric at [{vocab.categories[a]}][{vocab.categories[b]}]"
        )


def _parse_priors_text(text: str, vocab: CategoryVocab) -> CooccurrencePriors:
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections[current] = []
            continue
        if current is None:
            raise PriorsParseError(f"line {lineno}: data before any [section] header")
        sections[current].append((lineno, line))

    for required in ("object_room", "object_object"):
        if required not in sections:
            raise PriorsParseError(f"missing [{required}] section")

    def read_table(name: str, columns: tuple[str, ...]) -> np.ndarray:
        rows = sections[name]
        if not rows:
            raise PriorsParseError(f"[{name}] section is empty")
        header_line, header = rows[0]
        cells = next(csv.reader([header]))
        if cells[0] != "category" or tuple(cells[1:]) != columns:
            raise PriorsParseError(
                f"line {header_line}: [{name}] header must be 'category,' + {','.join(columns)}"
            )
        mat = np.full((len(vocab.categories), len(columns)), np.nan)
        for lineno, line in rows[1:]:
            cells = next(csv.reader([line]))
            if len(cells) != len(columns) + 1:
                raise PriorsParseError(
                    f"line {lineno}: expected {len(columns) + 1} fields, got {len(cells)}"
                )
            try:
                row = vocab.category_index(cells[0])
            except VocabularyError:
                raise PriorsParseError(
                    f"line {lineno}: unknown category {cells[0]!r}"
                ) from None
            for col, cell in enumerate(cells[1:]):
                try:
                    mat[row, col] = float(cell)
                except ValueError:
                    raise PriorsParseError(
                        f"line {lineno}: column {columns[col]!r}: not a number: {cell!r}"
                    ) from None
        missing = np.argwhere(np.isnan(mat))
        if missing.size:
            r = int(missing[0][0])
            raise PriorsParseError(
                f"[{name}] is missing a row for category {vocab.categories[r]!r}"
            )
        return mat

    object_room = read_table("object_room", vocab.room_types)
    object_object = read_table("object_object", vocab.categories)
    _validate_priors(vocab, object_room, object_object)
    return CooccurrencePriors(vocab, object_room, object_object)


def load_priors(path, vocab: CategoryVocab | None = None) -> CooccurrencePriors:
    """Load and validate a co-occurrence priors table from a tabular text file."""
    vocab = vocab or default_vocab()
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        raise PriorsParseError(f"{path}: file is empty")
    return _parse_priors_text(text, vocab)


def default_priors(vocab: CategoryVocab | None = None) -> CooccurrencePriors:
    """The priors table shipped with the package."""
    from importlib import resources

    vocab = vocab or default_vocab()
    text = resources.files("gridnav").joinpath("data/priors.csv").read_text("utf-8")
    return _parse_priors_text(text, vocab)


@dataclass(frozen=True)
class Room:
    room_type: str
    x0: int
    y0: int
    x1: int  # inclusive
    y1: int  # inclusive

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def area(self) -> int:
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)


@dataclass(frozen=True)
class PlacedObject:
    instance_id: str
    category: str
    x: int
    y: int


@dataclass(frozen=True)
class Scene:
    scene_id: str
    width: int
    height: int
    cell_size_m: float
    cells: tuple[str, ...]  # rows of '#' / '.', indexed cells[y][x]
    rooms: tuple[Room, ...]
    objects: tuple[PlacedObject, ...]
    doorways: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def is_floor(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height and self.cells[y][x] == FLOOR

    def room_at(self, x: int, y: int) -> Room | None:
        for room in self.rooms:
            if room.contains(x, y):
                return room
        return None

    def instances_of(self, category: str) -> tuple[PlacedObject, ...]:
        return tuple(o for o in self.objects if o.category == category)

    def floor_cells(self) -> list[tuple[int, int]]:
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if self.cells[y][x] == FLOOR
        ]


def validate_scene(scene: Scene, vocab: CategoryVocab | None = None) -> None:
    """Check structural invariants; raise SceneValidationError on the first hit."""
    vocab = vocab or default_vocab()
    if scene.width < 4 or scene.height < 4:
        raise SceneValidationError("scene smaller than 4x4 cannot hold a room")
    if len(scene.cells) != scene.height or any(len(r) != scene.width for r in scene.cells):
        raise SceneValidationError("cell grid does not match declared dimensions")
    for row in scene.cells:
        if set(row) - {WALL, FLOOR}:
            raise SceneValidationError(f"unknown cell glyphs in row {row!r}")
    for x in range(scene.width):
        if scene.cells[0][x] != WALL or scene.cells[scene.height - 1][x] != WALL:
            raise SceneValidationError("border cells must be walls")
    for y in range(scene.height):
        if scene.cells[y][0] != WALL or scene.cells[y][scene.width - 1] != WALL:
            raise SceneValidationError("border cells must be walls")
    if not scene.rooms:
        raise SceneValidationError("scene has no rooms")

    doorway_set = set(map(tuple, scene.doorways))
    for x, y in doorway_set:
        if not scene.is_floor(x, y):
            raise SceneValidationError(f"doorway at ({x},{y}) is not a floor cell")

    membership: dict[tuple[int, int], int] = {}
    for idx, room in enumerate(scene.rooms):
        vocab.room_index(room.room_type)
        if room.x0 > room.x1 or room.y0 > room.y1:
            raise SceneValidationError(f"room {idx} has an empty extent")
        for y in range(room.y0, room.y1 + 1):
            for x in range(room.x0, room.x1 + 1):
                if (x, y) in membership:
                    raise SceneValidationError(
                        f"rooms {membership[(x, y)]} and {idx} overlap at ({x},{y})"
                    )
                if scene.cells[y][x] != FLOOR:
                    raise SceneValidationError(
                        f"room {idx} extent includes non-floor cell ({x},{y})"
                    )
                if (x, y) in doorway_set:
                    raise SceneValidationError(
                        f"doorway ({x},{y}) lies inside room {idx}"
                    )
                membership[(x, y)] = idx

    floor = scene.floor_cells()
    for x, y in floor:
        if (x, y) not in membership and (x, y) not in doorway_set:
            raise SceneValidationError(
                f"floor cell ({x},{y}) belongs to no room and is not a doorway"
            )

    for obj in scene.objects:
        vocab.category_index(obj.category)
        if not scene.is_floor(obj.x, obj.y):
            raise SceneValidationError(
                f"object {obj.instance_id} sits on a non-floor cell ({obj.x},{obj.y})"
            )
        if (obj.x, obj.y) not in membership:
            raise SceneValidationError(
                f"object {obj.instance_id} at ({obj.x},{obj.y}) is not inside a room"
            )
    ids = [o.instance_id for o in scene.objects]
    if len(set(ids)) != len(ids):
        raise SceneValidationError("duplicate object instance ids")

    if floor:
        seen = {floor[0]}
        queue = deque([floor[0]])
        while queue:
            x, y = queue.popleft()
            for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
                nxt = (x + dx, y + dy)
                if nxt not in seen and scene.is_floor(*nxt):
                    seen.add(nxt)
                    queue.append(nxt)
        if len(seen) != len(floor):
            raise SceneValidationError(
                f"floor is not 4-connected: {len(floor) - len(seen)} unreachable cells"
            )


@dataclass
class _Rect:
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def w(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def h(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def area(self) -> int:
        return self.w * self.h


def _split_rect(rect: _Rect, rng) -> tuple[_Rect, _Rect, list[tuple[int, int]]] | None:
    """Split a rect with a one-cell wall; None if both axes are too small."""
    can_x = rect.w >= 2 * MIN_ROOM_SIDE + 1
    can_y = rect.h >= 2 * MIN_ROOM_SIDE + 1
    if not can_x and not can_y:
        return None
    if can_x and (not can_y or rect.w >= rect.h):
        s = int(rng.integers(rect.x0 + MIN_ROOM_SIDE, rect.x1 - MIN_ROOM_SIDE + 1))
        wall = [(s, y) for y in range(rect.y0, rect.y1 + 1)]
        return (
            _Rect(rect.x0, rect.y0, s - 1, rect.y1),
            _Rect(s + 1, rect.y0, rect.x1, rect.y1),
            wall,
        )
    s = int(rng.integers(rect.y0 + MIN_ROOM_SIDE, rect.y1 - MIN_ROOM_SIDE + 1))
    wall = [(x, s) for x in range(rect.x0, rect.x1 + 1)]
    return (
        _Rect(rect.x0, rect.y0, rect.x1, s - 1),
        _Rect(rect.x0, s + 1, rect.x1, rect.y1),
        wall,
    )


def generate_scene(
    seed: int,
    width: int = 16,
    height: int = 16,
    room_count: int = 4,
    vocab: CategoryVocab | None = None,
    priors: CooccurrencePriors | None = None,
    cell_size_m: float = 0.25,
    scene_id: str | None = None,
) -> Scene:
    """Generate a connected multi-room scene, deterministic in the seed."""
    vocab = vocab or default_vocab()
    priors = priors or default_priors(vocab)
    if width < 8 or height < 8:
        raise SceneSizingError(f"grid {width}x{height} is below the 8x8 minimum")
    if not 1 <= room_count <= 12:
        raise SceneSizingError(f"room_count {room_count} outside [1, 12]")

    rng = np.random.default_rng(seed)
    grid = [bytearray(FLOOR.encode() * width) for _ in range(height)]
    for x in range(width):
        grid[0][x] = ord(WALL)
        grid[height - 1][x] = ord(WALL)
    for y in range(height):
        grid[y][0] = ord(WALL)
        grid[y][width - 1] = ord(WALL)

    rects = [_Rect(1, 1, width - 2, height - 2)]
    while len(rects) < room_count:
        order = sorted(range(len(rects)), key=lambda i: (-rects[i].area, rects[i].x0, rects[i].y0))
        split = None
        for i in order:
            split = _split_rect(rects[i], rng)
            if split is not None:
                a, b, wall = split
                rects[i : i + 1] = [a, b]
                for x, y in wall:
                    grid[y][x] = ord(WALL)
                break
        if split is None:
            raise SceneSizingError(
                f"cannot partition {width}x{height} interior into {room_count} rooms "
                f"with minimum side {MIN_ROOM_SIDE}"
            )

    rects.sort(key=lambda r: (r.y0, r.x0))

    # One doorway per pair of rooms that face each other across a wall line.
    doorways: list[tuple[int, int]] = []
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            a, b = rects[i], rects[j]
            shared: list[tuple[int, int]] = []
            if b.x0 - a.x1 == 2 or a.x0 - b.x1 == 2:  # vertical wall between
                wall_x = a.x1 + 1 if b.x0 - a.x1 == 2 else b.x1 + 1
                lo, hi = max(a.y0, b.y0), min(a.y1, b.y1)
                shared = [(wall_x, y) for y in range(lo, hi + 1)]
            elif b.y0 - a.y1 == 2 or a.y0 - b.y1 == 2:  # horizontal wall between
                wall_y = a.y1 + 1 if b.y0 - a.y1 == 2 else b.y1 + 1
                lo, hi = max(a.x0, b.x0), min(a.x1, b.x1)
                shared = [(x, wall_y) for x in range(lo, hi + 1)]
            if shared:
                x, y = shared[int(rng.integers(0, len(shared)))]
                grid[y][x] = ord(FLOOR)
                doorways.append((x, y))

    real_types = [t for t in vocab.room_types if t != "unknown"]
    type_order = list(real_types)
    rng.shuffle(type_order)
    rooms = tuple(
        Room(type_order[i % len(type_order)], r.x0, r.y0, r.x1, r.y1)
        for i, r in enumerate(rects)
    )

    # Objects: per room, sampled in proportion to that room type's priors.
    objects: list[PlacedObject] = []
    counts: dict[str, int] = {}
    cat_indices = np.arange(len(vocab.categories))
    for room in rooms:
        col = priors.object_room[:, vocab.room_index(room.room_type)].astype(float)
        probs = col / col.sum() if col.sum() > 0 else np.full(len(col), 1.0 / len(col))
        n_objects = max(1, min(5, room.area // 9))
        cells = [
            (x, y)
            for y in range(room.y0, room.y1 + 1)
            for x in range(room.x0, room.x1 + 1)
        ]
        picks = rng.choice(len(cells), size=min(n_objects, len(cells)), replace=False)
        for pick in np.atleast_1d(picks):
            cat = vocab.categories[int(rng.choice(cat_indices, p=probs))]
            counts[cat] = counts.get(cat, 0) + 1
            x, y = cells[int(pick)]
            objects.append(PlacedObject(f"{cat}_{counts[cat]}", cat, x, y))

    scene = Scene(
        scene_id=scene_id or f"scn{seed:06d}",
        width=width,
        height=height,
        cell_size_m=cell_size_m,
        cells=tuple(row.decode() for row in grid),
        rooms=rooms,
        objects=tuple(objects),
        doorways=tuple(doorways),
    )
    validate_scene(scene, vocab)
    return scene


def serialize_scene(scene: Scene, manifest_hash: str | None = None) -> bytes:
    """Scene -> canonical JSON bytes. Refuses scenes violating invariants."""
    validate_scene(scene)
    doc = {
        "kind": "scene",
        "format_version": SCENE_FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "width": scene.width,
        "height": scene.height,
        "cell_size_m": scene.cell_size_m,
        "cells": list(scene.cells),
        "rooms": [
            {"room_type": r.room_type, "x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1}
            for r in scene.rooms
        ],
        "doorways": [list(d) for d in scene.doorways],
        "objects": [
            {"instance_id": o.instance_id, "category": o.category, "x": o.x, "y": o.y}
            for o in scene.objects
        ],
    }
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def deserialize_scene(data: bytes) -> Scene:
    """Parse scene bytes; raises SceneParseError / SceneValidationError."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SceneParseError(f"not valid scene JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "scene":
        raise SceneParseError("document is not a scene record")
    version = doc.get("format_version")
    if version != SCENE_FORMAT_VERSION:
        raise SceneParseError(f"unsupported scene format_version: {version!r}")
    try:
        scene = Scene(
            scene_id=doc["scene_id"],
            width=int(doc["width"]),
            height=int(doc["height"]),
            cell_size_m=float(doc["cell_size_m"]),
            cells=tuple(doc["cells"]),
            rooms=tuple(
                Room(r["room_type"], int(r["x0"]), int(r["y0"]), int(r["x1"]), int(r["y1"]))
                for r in doc["rooms"]
            ),
            objects=tuple(
                PlacedObject(o["instance_id"], o["category"], int(o["x"]), int(o["y"]))
                for o in doc["objects"]
            ),
            doorways=tuple((int(d[0]), int(d[1])) for d in doc.get("doorways", [])),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SceneParseError(f"scene record is missing or mistypes a field: {exc}") from exc
    validate_scene(scene)
    return scene
