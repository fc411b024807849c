"""Synthetic pages with exact ground truth.

``ruled_table_page`` renders a docket-style ruled table in the bundled bitmap
font, together with the layout detections and OCR tokens a model and an OCR
engine would produce for it. ``text_page`` renders loose words for the
reorganization round trip and ``random_tokens`` draws plain random boxes.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

import bitmap_font
from geometry import RasterImage, Rectangle
from layout import Layout, TextBlock

ALPHABET = string.ascii_uppercase + string.digits
TABLE_MARGIN = 3


def random_word(rng: random.Random, min_len: int = 1, max_len: int = 4) -> str:
    return "".join(rng.choice(ALPHABET) for _ in range(rng.randint(min_len, max_len)))


def _ink_box(text: str, x: int, y: int, scale: int) -> Tuple[int, int, int, int]:
    mask = bitmap_font.text_mask(text, scale)
    cols = np.flatnonzero(mask.any(axis=0))
    rows = np.flatnonzero(mask.any(axis=1))
    return x + int(cols[0]), y + int(rows[0]), x + int(cols[-1]) + 1, y + int(rows[-1]) + 1


def _word_blocks(text: str, x: int, y: int, scale: int, first_id: int) -> List[TextBlock]:
    """One tight token per space-separated word of a line rendered at (x, y)."""
    blocks = []
    position = 0
    for word in text.split(" "):
        if word:
            wx = x + position * bitmap_font.ADVANCE * scale
            box = _ink_box(word, wx, y, scale)
            blocks.append(TextBlock(Rectangle(*box), text=word, category="word", score=1.0, id=first_id + len(blocks)))
        position += len(word) + 1
    return blocks


@dataclass
class SyntheticTable:
    image: RasterImage
    detections: Layout
    tokens: Layout
    region: Rectangle
    truth: List[List[str]]
    # token id -> (row, column) for every token inside the table
    assignments: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    column_edges: List[int] = field(default_factory=list)
    scale: int = 1

    @property
    def n_rows(self) -> int:
        return len(self.truth)

    @property
    def n_cols(self) -> int:
        return len(self.truth[0]) if self.truth else 0


def ruled_table_page(
    rng: random.Random,
    n_cols: int | None = None,
    n_rows: int | None = None,
    scale: int | None = None,
) -> SyntheticTable:
    """Render one ruled table (2-5 columns, 2-20 rows) below a title line.

    Every cell holds one or two words. The detections hold the padded table
    region, a low-confidence duplicate, a shifted duplicate that suppression
    must remove and a text region for the title; the title line lies outside
    the table region.
    """
    n_cols = n_cols or rng.randint(2, 5)
    n_rows = n_rows or rng.randint(2, 20)
    scale = scale or rng.randint(1, 2)
    pad = 4 * scale
    row_h = bitmap_font.GLYPH_HEIGHT * scale + 2 * pad

    truth = [[" ".join(random_word(rng) for _ in range(rng.randint(1, 2))) for _ in range(n_cols)] for _ in range(n_rows)]
    col_w = [max(bitmap_font.text_size(truth[r][c], scale)[0] for r in range(n_rows)) + 2 * pad for c in range(n_cols)]

    title = random_word(rng, 3, 6)
    title_gap = 12
    tx = rng.randint(10, 60)
    ty = rng.randint(20, 60) + bitmap_font.GLYPH_HEIGHT * scale + title_gap
    edges = [tx]
    for width in col_w:
        edges.append(edges[-1] + width)
    table_h = n_rows * row_h
    page_w = edges[-1] + rng.randint(10, 40)
    page_h = ty + table_h + rng.randint(10, 40)

    pixels = np.full((page_h, page_w, 3), 255, dtype=np.uint8)
    for x in edges:
        pixels[ty : ty + table_h + 1, x] = 0
    for r in range(n_rows + 1):
        pixels[ty + r * row_h, tx : edges[-1] + 1] = 0

    title_y = ty - title_gap - bitmap_font.GLYPH_HEIGHT * scale
    bitmap_font.render_text(pixels, title, tx, title_y, scale)
    tokens = _word_blocks(title, tx, title_y, scale, 0)
    assignments: Dict[int, Tuple[int, int]] = {}
    for r in range(n_rows):
        for c in range(n_cols):
            x, y = edges[c] + pad, ty + r * row_h + pad
            bitmap_font.render_text(pixels, truth[r][c], x, y, scale)
            cell_tokens = _word_blocks(truth[r][c], x, y, scale, len(tokens))
            assignments.update({t.id: (r, c) for t in cell_tokens})
            tokens.extend(cell_tokens)

    region = Rectangle(tx - TABLE_MARGIN, ty - TABLE_MARGIN, edges[-1] + TABLE_MARGIN, ty + table_h + TABLE_MARGIN)
    main_score = round(rng.uniform(0.9, 0.99), 2)
    title_box = tokens[0].block
    detections = Layout(
        (
            TextBlock(region, category="table", score=main_score, id=0),
            TextBlock(region.shift(rng.randint(-5, 5), rng.randint(-5, 5)), category="table", score=round(rng.uniform(0.3, 0.7), 2), id=1),
            TextBlock(region.shift(2, 2), category="table", score=round(main_score - 0.05, 2), id=2),
            TextBlock(title_box.pad(2, 2, 2, 2), category="text", score=0.95, id=3),
        ),
        page_info={"width": page_w, "height": page_h},
    )
    return SyntheticTable(
        image=RasterImage(pixels),
        detections=detections,
        tokens=Layout(tuple(tokens), page_info={"width": page_w, "height": page_h}),
        region=region,
        truth=truth,
        assignments=assignments,
        column_edges=edges,
        scale=scale,
    )


@dataclass
class SyntheticText:
    image: RasterImage
    tokens: Layout
    scale: int


def text_page(rng: random.Random, n_words: int, scale: int = 1, page_size: Tuple[int, int] = (400, 600)) -> SyntheticText:
    """Scatter ``n_words`` words on a white page, one per grid cell so none overlap."""
    width, height = page_size
    cell_w = (6 * bitmap_font.ADVANCE) * scale + 8
    cell_h = bitmap_font.GLYPH_HEIGHT * scale + 8
    slots = [(x, y) for y in range(4, height - cell_h, cell_h) for x in range(4, width - cell_w, cell_w)]
    if n_words > len(slots):
        raise ValueError(f"{n_words} words do not fit on a {width}x{height} page at scale {scale}")
    pixels = np.full((height, width, 3), 255, dtype=np.uint8)
    blocks: List[TextBlock] = []
    for x, y in rng.sample(slots, n_words):
        word = random_word(rng, 1, 6)
        bitmap_font.render_text(pixels, word, x, y, scale)
        blocks.extend(_word_blocks(word, x, y, scale, len(blocks)))
    return SyntheticText(RasterImage(pixels), Layout(tuple(blocks), page_info={"width": width, "height": height}), scale)


def random_tokens(
    rng: random.Random,
    n: int,
    page_size: Tuple[float, float] = (800.0, 1000.0),
    max_size: Tuple[float, float] = (120.0, 60.0),
) -> Layout:
    """``n`` random non-empty boxes with 2-decimal coordinates."""
    width, height = page_size
    blocks = []
    for index in range(n):
        w = round(rng.uniform(1.0, max_size[0]), 2)
        h = round(rng.uniform(1.0, max_size[1]), 2)
        x = round(rng.uniform(0.0, width - w), 2)
        y = round(rng.uniform(0.0, height - h), 2)
        box = Rectangle(x, y, round(x + w, 2), round(y + h, 2))
        blocks.append(TextBlock(box, text=random_word(rng), category="word", id=index))
    return Layout(tuple(blocks))
