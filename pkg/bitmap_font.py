"""Embedded 5x7 monospace bitmap font.

Every letter and digit touches the top and bottom glyph rows, and no glyph has
a blank column between inked ones, so rendered text can be segmented back into
glyphs by projection alone.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

GLYPH_WIDTH = 5
GLYPH_HEIGHT = 7
ADVANCE = GLYPH_WIDTH + 1
FALLBACK = "?"

_GLYPHS: Dict[str, Tuple[str, ...]] = {
    " ": (".....",) * 7,
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
    ".": (".....", ".....", ".....", ".....", ".....", ".##..", ".##.."),
    ",": (".....", ".....", ".....", ".....", ".##..", "..#..", ".#..."),
    "-": (".....", ".....", ".....", ".###.", ".....", ".....", "....."),
    ":": (".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."),
    "/": ("....#", "....#", "...#.", "..#..", ".#...", "#....", "#...."),
    "(": ("...#.", "..#..", ".#...", ".#...", ".#...", "..#..", "...#."),
    ")": (".#...", "..#..", "...#.", "...#.", "...#.", "..#..", ".#..."),
    "?": (".###.", "#...#", "....#", "...#.", "..#..", ".....", "..#.."),
}

CHARSET = "".join(_GLYPHS)


def normalize(char: str) -> str:
    """Map a character onto the font: lowercase folds to uppercase, unknowns to ``?``."""
    upper = char.upper()
    return upper if upper in _GLYPHS else FALLBACK


@lru_cache(maxsize=None)
def glyph(char: str) -> np.ndarray:
    rows = _GLYPHS[normalize(char)]
    mask = np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    mask.flags.writeable = False
    return mask


def text_size(text: str, scale: int = 1) -> Tuple[int, int]:
    """Pixel (width, height) of ``text`` rendered at integer ``scale``."""
    n = len(text)
    width = (n * ADVANCE - 1) * scale if n else 0
    return width, GLYPH_HEIGHT * scale


def text_mask(text: str, scale: int = 1) -> np.ndarray:
    """Boolean ink mask of ``text``; one blank column separates glyphs."""
    if scale < 1:
        raise ValueError(f"font scale must be >= 1, got {scale}")
    width, _ = text_size(text)
    mask = np.zeros((GLYPH_HEIGHT, width), dtype=bool)
    for i, char in enumerate(text):
        mask[:, i * ADVANCE : i * ADVANCE + GLYPH_WIDTH] = glyph(char)
    if scale > 1:
        mask = mask.repeat(scale, axis=0).repeat(scale, axis=1)
    return mask


def paint_mask(pixels: np.ndarray, mask: np.ndarray, x: int, y: int, color: Tuple[int, int, int]) -> None:
    """Paint ``mask`` onto ``pixels`` in place with its top-left at (x, y), clipped to the array."""
    height, width = pixels.shape[:2]
    mh, mw = mask.shape
    x1, y1 = max(x, 0), max(y, 0)
    x2, y2 = min(x + mw, width), min(y + mh, height)
    if x2 <= x1 or y2 <= y1:
        return
    window = mask[y1 - y : y2 - y, x1 - x : x2 - x]
    pixels[y1:y2, x1:x2][window] = color


def render_text(
    pixels: np.ndarray,
    text: str,
    x: int,
    y: int,
    scale: int = 1,
    color: Tuple[int, int, int] = (0, 0, 0),
) -> Tuple[int, int, int, int]:
    """Draw ``text`` in place and return the pixel box (x1, y1, x2, y2) it occupies."""
    mask = text_mask(text, scale)
    paint_mask(pixels, mask, x, y, color)
    return x, y, x + mask.shape[1], y + mask.shape[0]


@lru_cache(maxsize=None)
def templates() -> Dict[str, np.ndarray]:
    """Glyph masks with blank side columns trimmed, keyed by character (space excluded)."""
    result: Dict[str, np.ndarray] = {}
    for char in CHARSET:
        if char == " ":
            continue
        mask = glyph(char)
        cols = np.flatnonzero(mask.any(axis=0))
        result[char] = mask[:, cols[0] : cols[-1] + 1]
    return result
