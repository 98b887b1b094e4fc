"""Shared fixtures: synthetic scenes with exact object placement, plus the
default vocabulary and priors."""

import pytest

from gridnav.world import (
    CategoryVocab,
    PlacedObject,
    Room,
    Scene,
    default_priors,
    default_vocab,
    validate_scene,
)


def make_box_scene(width=13, height=13, objects=(), room_type="living_room",
                   scene_id="scnbox"):
    """One rectangular room with a border wall; objects at explicit cells."""
    rows = []
    for y in range(height):
        if y in (0, height - 1):
            rows.append("#" * width)
        else:
            rows.append("#" + "." * (width - 2) + "#")
    placed = tuple(
        PlacedObject(f"obj{i:02d}", cat, x, y) for i, (cat, x, y) in enumerate(objects)
    )
    scene = Scene(
        scene_id=scene_id,
        width=width,
        height=height,
        cell_size_m=0.25,
        cells=tuple(rows),
        rooms=(Room(room_type, 1, 1, width - 2, height - 2),),
        objects=placed,
        doorways=(),
    )
    validate_scene(scene)
    return scene


def make_two_room_scene(width=15, height=9, objects=(), doorway_y=4,
                        left_type="living_room", right_type="bedroom",
                        scene_id="scntwo"):
    """Two rooms split by a vertical wall with a single doorway cell."""
    wall_x = width // 2
    rows = []
    for y in range(height):
        if y in (0, height - 1):
            rows.append("#" * width)
        else:
            row = ["#"] + ["."] * (width - 2) + ["#"]
            if y != doorway_y:
                row[wall_x] = "#"
            rows.append("".join(row))
    placed = tuple(
        PlacedObject(f"obj{i:02d}", cat, x, y) for i, (cat, x, y) in enumerate(objects)
    )
    scene = Scene(
        scene_id=scene_id,
        width=width,
        height=height,
        cell_size_m=0.25,
        cells=tuple(rows),
        rooms=(
            Room(left_type, 1, 1, wall_x - 1, height - 2),
            Room(right_type, wall_x + 1, 1, width - 2, height - 2),
        ),
        objects=placed,
        doorways=((wall_x, doorway_y),),
    )
    validate_scene(scene)
    return scene


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


@pytest.fixture(scope="session")
def priors(vocab):
    return default_priors(vocab)


@pytest.fixture()
def box_scene():
    return make_box_scene()
