"""Shared fixtures: repo root on sys.path, seeded randomness, random coordinates."""

import os
import random
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from geometry import Interval, Quadrilateral, Rectangle  # noqa: E402


def _rect_bounds(rng, lo=0.0, hi=200.0, min_size=1.0):
    x1 = round(rng.uniform(lo, hi - min_size), 2)
    y1 = round(rng.uniform(lo, hi - min_size), 2)
    x2 = round(rng.uniform(x1 + min_size, hi), 2)
    y2 = round(rng.uniform(y1 + min_size, hi), 2)
    return x1, y1, x2, y2


def random_coordinate(rng, kind):
    """A random coordinate of ``kind``; quadrilaterals are convex and clockwise."""
    if kind == "interval":
        start = round(rng.uniform(0, 150), 2)
        end = round(rng.uniform(start, 200), 2)
        return Interval(start, end, rng.choice(["horizontal", "vertical"]))
    x1, y1, x2, y2 = _rect_bounds(rng, min_size=8.0)
    if kind == "rectangle":
        return Rectangle(x1, y1, x2, y2)
    j = min(x2 - x1, y2 - y1) / 4.0
    d = [round(rng.uniform(0, j), 2) for _ in range(8)]
    return Quadrilateral(
        (
            (x1 + d[0], y1 + d[1]),
            (x2 - d[2], y1 + d[3]),
            (x2 - d[4], y2 - d[5]),
            (x1 + d[6], y2 - d[7]),
        )
    )


@pytest.fixture
def rng():
    return random.Random(20211112)


@pytest.fixture
def make_coordinate():
    return random_coordinate
