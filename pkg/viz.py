"""Layout rendering: box overlays on the page image, and text recreation on a blank canvas."""

from __future__ import annotations

import colorsys
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import cv2
import numpy as np

import bitmap_font
import geometry
from geometry import Interval, Quadrilateral, RasterImage, Rectangle, round_half_up
from layout import Layout, TextBlock

logger = logging.getLogger(__name__)

Color = Tuple[int, int, int]


def default_color(label: str | None) -> Color:
    """Stable colour for a category label: the label's md5 picks the hue."""
    digest = hashlib.md5((label or "").encode("utf-8")).hexdigest()
    hue = int(digest[:8], 16) / 0xFFFFFFFF
    r, g, b = colorsys.hsv_to_rgb(hue, 0.8, 0.85)
    return round_half_up(r * 255), round_half_up(g * 255), round_half_up(b * 255)


@dataclass
class DrawStyle:
    box_color_per_category: Dict[str, Color] = field(default_factory=dict)
    box_width: int = 1
    show_score: bool = False
    show_label: bool = True
    font_size: int = 7
    text_color: Color = (0, 0, 0)
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.box_width < 1:
            raise ValueError(f"box_width must be >= 1, got {self.box_width}")
        if self.font_size < 1:
            raise ValueError(f"font_size must be >= 1, got {self.font_size}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any] | None) -> "DrawStyle":
        data = dict(data or {})
        known = {"box_color_per_category", "box_width", "show_score", "show_label", "font_size", "text_color"}
        colors = {str(k): tuple(int(c) for c in v) for k, v in (data.get("box_color_per_category") or {}).items()}
        return cls(
            box_color_per_category=colors,
            box_width=int(data.get("box_width", 1)),
            show_score=bool(data.get("show_score", False)),
            show_label=bool(data.get("show_label", True)),
            font_size=int(data.get("font_size", 7)),
            text_color=tuple(int(c) for c in data.get("text_color", (0, 0, 0))),
            extras={k: v for k, v in data.items() if k not in known},
        )

    def color_for(self, label: str | None) -> Color:
        if label is not None and label in self.box_color_per_category:
            return self.box_color_per_category[label]
        return default_color(label)

    @property
    def label_scale(self) -> int:
        return max(1, round_half_up(self.font_size / bitmap_font.GLYPH_HEIGHT))


def _label_text(block: TextBlock, style: DrawStyle) -> str:
    parts = []
    if block.category:
        parts.append(block.category)
    if style.show_score and block.score is not None:
        parts.append(f"{block.score:.2f}")
    return " ".join(parts)


def _outline(pixels: np.ndarray, block: TextBlock, color: Color, width: int) -> Tuple[int, int]:
    """Draw the block outline and return the pixel anchor for its label."""
    coord = block.block
    if isinstance(coord, Quadrilateral):
        pts = np.array([[round_half_up(x), round_half_up(y)] for x, y in coord.points], dtype=np.int32)
        cv2.polylines(pixels, [pts], True, color, width, lineType=cv2.LINE_8)
        x1, y1, _, _ = coord.bounds
        return round_half_up(x1), round_half_up(y1)
    if isinstance(coord, Interval):
        height, img_width = pixels.shape[:2]
        coord = geometry.coerce(coord, Rectangle, canvas=(img_width, height))
    p1 = (round_half_up(coord.x1), round_half_up(coord.y1))
    p2 = (round_half_up(coord.x2), round_half_up(coord.y2))
    cv2.rectangle(pixels, p1, p2, color, width, lineType=cv2.LINE_8)
    return p1


def draw_boxes(image: RasterImage, layout: Layout, style: DrawStyle | None = None) -> RasterImage:
    """Overlay every block's outline and category label on a copy of ``image``."""
    style = style or DrawStyle()
    pixels = image.writable_pixels()
    scale = style.label_scale
    for block in layout.flatten():
        color = style.color_for(block.category)
        x, y = _outline(pixels, block, color, style.box_width)
        label = _label_text(block, style) if style.show_label else ""
        if not label:
            continue
        _, label_h = bitmap_font.text_size(label, scale)
        above = y - label_h - 1
        bitmap_font.render_text(pixels, label, x, above if above >= 0 else y + style.box_width + 1, scale, color)
    return RasterImage(pixels)


def draw_texts(layout: Layout, canvas_size: Tuple[int, int], style: DrawStyle | None = None) -> RasterImage:
    """Recreate the page by drawing each block's text stretched over its box on a white canvas.

    Glyphs are fitted to the box height and width, so the aspect ratio of the
    font is not preserved.
    """
    style = style or DrawStyle()
    width, height = canvas_size
    pixels = np.full((int(height), int(width), 3), 255, dtype=np.uint8)
    for block in layout.flatten():
        if not block.text:
            continue
        rect = geometry.coerce(block.block, Rectangle, canvas=(width, height))
        left, top = round_half_up(rect.x1), round_half_up(rect.y1)
        box_w, box_h = round_half_up(rect.x2) - left, round_half_up(rect.y2) - top
        if box_w <= 0 or box_h <= 0:
            logger.debug("skipping text of zero-size block %s", block.id)
            continue
        mask = bitmap_font.text_mask(block.text).astype(np.uint8)
        fitted = cv2.resize(mask, (box_w, box_h), interpolation=cv2.INTER_NEAREST).astype(bool)
        bitmap_font.paint_mask(pixels, fitted, left, top, style.text_color)
    return RasterImage(pixels)
