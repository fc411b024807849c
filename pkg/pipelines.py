"""End-to-end document pipelines built on the layout primitives.

* Visual table extraction: keep confident table detections, find column
  rulings inside each region, cluster rows from the left-most column and drop
  every OCR token into its (row, column) cell.
* Dense-text reorganization: pack token crops tightly onto a fresh canvas so a
  single OCR call reads them all, then map the OCR words back to the page.
"""

from __future__ import annotations

import bisect
import logging
import statistics
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Mapping, Sequence, Tuple

import cv2
import numpy as np

import geometry
from config_models import TableParams
from errors import GeometryError, PipelineError
from geometry import RasterImage, Rectangle, round_half_up
from layout import Layout, TextBlock
from ocr import OcrAgent, true_runs

logger = logging.getLogger(__name__)

Band = Tuple[float, float]
Orientation = Literal["vertical", "horizontal"]
INK_THRESHOLD = 128
MERGE_DISTANCE = 2
# rulings this close to a region edge are the table border
BORDER_MARGIN = MERGE_DISTANCE + 4


def _rect(block: TextBlock, where: str) -> Rectangle:
    try:
        return geometry.coerce(block.block, Rectangle)
    except GeometryError as exc:
        raise PipelineError(f"{where}: {exc}") from exc


def _describe(index: int, block: TextBlock) -> str:
    label = f"token {index}"
    if block.id is not None:
        label += f" (id {block.id})"
    if block.text:
        label += f" {block.text!r}"
    return label


# ------------------------------------------------------------
#  SUPPRESSION
# ------------------------------------------------------------


def nms_blocks(layout: Layout, iou_threshold: float = 0.5) -> Layout:
    """Greedy non-maximum suppression over the layout's blocks.

    Blocks are visited by descending score (stable for ties) and a block is
    kept when its IoU with every already kept block is below ``iou_threshold``.
    Kept blocks stay in their input order.
    """
    blocks = layout.flatten()
    if not blocks:
        return layout.copy_with_updates(elements=())
    for index, block in enumerate(blocks):
        if block.score is None:
            raise PipelineError(f"{_describe(index, block)} has no score to rank by")

    boxes = np.array([_rect(b, _describe(i, b)).bounds for i, b in enumerate(blocks)], dtype=float)
    scores = np.array([b.score for b in blocks], dtype=float)
    x1, y1, x2, y2 = boxes.T
    area = (x2 - x1) * (y2 - y1)

    order = np.argsort(-scores, kind="stable")
    keep: List[int] = []
    while order.size:
        i = int(order[0])
        keep.append(i)
        rest = order[1:]
        w = np.maximum(0.0, np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest]))
        h = np.maximum(0.0, np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest]))
        overlap = w * h
        union = area[i] + area[rest] - overlap
        iou = np.divide(overlap, union, out=np.zeros_like(overlap), where=union > 0)
        order = rest[iou < iou_threshold]

    kept = sorted(keep)
    logger.debug("nms kept %d of %d blocks", len(kept), len(blocks))
    return Layout(tuple(blocks[i] for i in kept), page_info=layout.page_info)


# ------------------------------------------------------------
#  RULINGS AND ROWS
# ------------------------------------------------------------


def detect_rulings(
    image: RasterImage,
    region: Any,
    orientation: Orientation = "vertical",
    min_run_fraction: float = 0.8,
) -> List[float]:
    """Absolute positions of drawn lines inside ``region``.

    Pixels darker than 128 in luma are ink. A column (row, for horizontal
    rulings) holds a ruling when its longest unbroken ink run covers at least
    ``min_run_fraction`` of the region extent. Candidates within 2 px of each
    other merge to their midpoint.
    """
    if orientation not in ("vertical", "horizontal"):
        raise PipelineError(f"orientation must be 'vertical' or 'horizontal', got {orientation!r}")
    if not 0.0 < min_run_fraction <= 1.0:
        raise PipelineError(f"min_run_fraction must be in (0, 1], got {min_run_fraction}")
    x1, y1, x2, y2 = geometry.pixel_box(region, image.width, image.height)
    if x2 <= x1 or y2 <= y1:
        raise PipelineError(f"ruling search region {geometry.as_coordinate(region).bounds} is empty")

    crop = np.ascontiguousarray(image.pixels[y1:y2, x1:x2])
    ink = cv2.cvtColor(crop, cv2.COLOR_RGB2GRAY) < INK_THRESHOLD
    if orientation == "horizontal":
        ink = ink.T
    extent = ink.shape[0]
    needed = min_run_fraction * extent

    # the projection profile bounds the longest run from above
    profile = ink.sum(axis=0)
    candidates = [
        c
        for c in np.flatnonzero(profile >= needed).tolist()
        if max(e - s for s, e in true_runs(ink[:, c])) >= needed
    ]

    offset = x1 if orientation == "vertical" else y1
    positions: List[float] = []
    group: List[int] = []
    for c in candidates:
        if group and c - group[-1] > MERGE_DISTANCE:
            positions.append(offset + (group[0] + group[-1]) / 2.0)
            group = []
        group.append(c)
    if group:
        positions.append(offset + (group[0] + group[-1]) / 2.0)
    logger.debug("found %d %s rulings in %s", len(positions), orientation, (x1, y1, x2, y2))
    return positions


def cluster_rows(tokens: Layout, gap_threshold: float) -> List[Band]:
    """Group tokens into row bands by their vertical centres.

    A new band starts when consecutive centres differ by more than
    ``gap_threshold``; each band spans its tokens' vertical extent.
    """
    rects = sorted((_rect(b, _describe(i, b)) for i, b in enumerate(tokens.flatten())), key=lambda r: r.center[1])
    bands: List[Band] = []
    previous_center: float | None = None
    for rect in rects:
        center = rect.center[1]
        if previous_center is not None and center - previous_center <= gap_threshold:
            top, bottom = bands[-1]
            bands[-1] = (min(top, rect.y1), max(bottom, rect.y2))
        else:
            bands.append((rect.y1, rect.y2))
        previous_center = center
    return bands


def suppress_close_rows(bands: Sequence[Band], min_gap: float = 3.0) -> List[Band]:
    """Merge each band into its predecessor when the gap between them is below ``min_gap``."""
    merged: List[Band] = []
    for top, bottom in sorted(bands):
        if merged and top - merged[-1][1] < min_gap:
            prev_top, prev_bottom = merged[-1]
            merged[-1] = (min(prev_top, top), max(prev_bottom, bottom))
        else:
            merged.append((top, bottom))
    return merged


# ------------------------------------------------------------
#  TABLES
# ------------------------------------------------------------


@dataclass(frozen=True)
class TableStructure:
    """A recovered table grid.

    ``cells[r][c]`` lists the tokens of row ``r`` and column ``c`` sorted left
    to right. ``row_pages`` records the source page of every row, which
    differs between rows only after ``concat_tables``.
    """

    region: Rectangle
    column_separators: Tuple[float, ...]
    row_bands: Tuple[Band, ...]
    cells: Tuple[Tuple[Tuple[TextBlock, ...], ...], ...]
    page: int | None = None
    row_pages: Tuple[int | None, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "column_separators", tuple(float(s) for s in self.column_separators))
        object.__setattr__(self, "row_bands", tuple((float(t), float(b)) for t, b in self.row_bands))
        object.__setattr__(self, "cells", tuple(tuple(tuple(c) for c in row) for row in self.cells))
        object.__setattr__(self, "row_pages", tuple(self.row_pages) or (self.page,) * len(self.row_bands))
        if list(self.column_separators) != sorted(self.column_separators):
            raise PipelineError(f"column separators are not sorted: {self.column_separators}")
        if len(self.cells) != len(self.row_bands) or len(self.row_pages) != len(self.row_bands):
            raise PipelineError(f"table has {len(self.row_bands)} row bands but {len(self.cells)} cell rows")
        for r, row in enumerate(self.cells):
            if len(row) != self.n_cols:
                raise PipelineError(f"row {r} has {len(row)} cells, expected {self.n_cols}")

    @property
    def n_rows(self) -> int:
        return len(self.row_bands)

    @property
    def n_cols(self) -> int:
        return len(self.column_separators) + 1

    def cell_texts(self, delimiter: str = " ") -> List[List[str]]:
        return [[delimiter.join(t.text or "" for t in cell) for cell in row] for row in self.cells]


def _band_index(bands: Sequence[Band], y: float) -> int | None:
    for index, (top, bottom) in enumerate(bands):
        if top <= y <= bottom:
            return index
    return None


def _table_regions(detections: Layout, params: TableParams) -> List[Rectangle]:
    tables = detections.filter(
        lambda b: (b.category or "").lower() == "table" and b.score is not None and b.score >= params.score_min
    )
    kept = nms_blocks(tables, params.iou_threshold)
    regions = [_rect(b, f"table detection {b.id}") for b in kept.flatten()]
    return sorted(regions, key=lambda r: (r.y1, r.x1))


def _extract_one(image: RasterImage, region: Rectangle, tokens: Layout, params: TableParams) -> TableStructure:
    inside = tokens.filter_by(region, center_only=True).flatten()
    centers = [b.center for b in inside]

    rulings = detect_rulings(image, region, "vertical", params.min_run_fraction)
    separators = [s for s in rulings if region.x1 + BORDER_MARGIN < s < region.x2 - BORDER_MARGIN]

    columns = [bisect.bisect_right(separators, cx) for cx, _ in centers]
    # rows come from the left-most column that holds any text
    first = min(columns, default=0)
    left = [b for b, col in zip(inside, columns) if col == first]
    gap = params.row_gap
    if gap is None:
        gap = statistics.median(b.height for b in left) if left else 0.0
    bands = suppress_close_rows(cluster_rows(Layout(tuple(left)), gap), params.row_min_gap)

    cells: List[List[List[TextBlock]]] = [[[] for _ in range(len(separators) + 1)] for _ in bands]
    for block, col, (_, cy) in zip(inside, columns, centers):
        row = _band_index(bands, cy)
        if row is None:
            logger.debug("token %s at y=%.1f falls between row bands; dropped", block.text, cy)
            continue
        cells[row][col].append(block)
    for row_cells in cells:
        for cell in row_cells:
            cell.sort(key=lambda b: b.block.bounds[0])
    return TableStructure(region, separators, bands, cells)


def extract_tables(
    image: RasterImage,
    detections: Layout,
    tokens: Layout,
    params: TableParams | None = None,
) -> List[TableStructure]:
    """Recover the grid of every confidently detected table region, top to bottom."""
    params = params or TableParams()
    regions = _table_regions(detections, params)
    logger.info("extracting %d table regions", len(regions))
    return [_extract_one(image, region, tokens, params) for region in regions]


def concat_tables(tables: Sequence[TableStructure], pages: Sequence[int] | None = None) -> TableStructure:
    """Join a table continued over several pages into one.

    Tables are ordered by ``pages`` (default: each table's own page). Later
    tables' row bands are re-based to continue below the previous table so the
    bands stay sorted and disjoint; ``row_pages`` keeps each row's source page.
    """
    if not tables:
        raise PipelineError("no tables to concatenate")
    if pages is None:
        pages = [t.page if t.page is not None else i for i, t in enumerate(tables)]
    if len(pages) != len(tables):
        raise PipelineError(f"{len(tables)} tables but {len(pages)} page numbers")
    ordered = [t for _, t in sorted(zip(pages, tables), key=lambda pair: pair[0])]
    page_order = sorted(pages)
    if len(ordered) == 1:
        return ordered[0]

    first = ordered[0]
    for page, table in zip(page_order, ordered):
        if table.n_cols != first.n_cols:
            raise PipelineError(
                f"page {page_order[0]} table has {first.n_cols} columns but page {page} table has {table.n_cols}"
            )

    bands: List[Band] = []
    cells: List[Any] = []
    row_pages: List[int | None] = []
    bottom = first.region.y1
    for page, table in zip(page_order, ordered):
        shift = bottom - table.region.y1
        bands.extend((top + shift, bot + shift) for top, bot in table.row_bands)
        cells.extend(table.cells)
        row_pages.extend([page] * table.n_rows)
        bottom = table.region.y2 + shift

    region = Rectangle(
        min(t.region.x1 for t in ordered), first.region.y1, max(t.region.x2 for t in ordered), bottom
    )
    return TableStructure(region, first.column_separators, bands, cells, page=page_order[0], row_pages=row_pages)


# ------------------------------------------------------------
#  REORGANIZATION
# ------------------------------------------------------------


def _box(values: Sequence[float]) -> Rectangle:
    return Rectangle(*(float(v) for v in values))


@dataclass(frozen=True)
class Placement:
    token_index: int
    source: Rectangle
    target: Rectangle

    def to_dict(self) -> Dict[str, Any]:
        return {"token_index": self.token_index, "source": list(self.source.bounds), "target": list(self.target.bounds)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Placement":
        try:
            return cls(int(data["token_index"]), _box(data["source"]), _box(data["target"]))
        except (KeyError, TypeError) as exc:
            raise PipelineError(f"malformed placement {data!r}") from exc


@dataclass(frozen=True)
class ReorgPlan:
    """Bijection between token boxes on the page and packed boxes on a dense canvas."""

    canvas: Tuple[float, float]
    placements: Tuple[Placement, ...]
    max_height: float
    gap: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "placements", tuple(self.placements))
        width, height = self.canvas
        seen = set()
        for p in self.placements:
            if p.token_index in seen:
                raise PipelineError(f"token {p.token_index} is placed twice")
            seen.add(p.token_index)
            if not geometry.is_in(p.target, Rectangle(0, 0, width, height)):
                raise PipelineError(f"token {p.token_index} target {p.target.bounds} leaves the canvas")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "canvas": list(self.canvas),
            "max_height": self.max_height,
            "gap": self.gap,
            "placements": [p.to_dict() for p in self.placements],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReorgPlan":
        try:
            width, height = data["canvas"]
            return cls(
                (float(width), float(height)),
                tuple(Placement.from_dict(p) for p in data["placements"]),
                float(data["max_height"]),
                float(data["gap"]),
            )
        except PipelineError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(f"malformed reorganization plan: {exc}") from exc


def plan_reorganization(tokens: Layout, max_height: float, gap: float = 4.0, canvas_width: float = 1200.0) -> ReorgPlan:
    """Pack tokens left to right, top to bottom, in their given order.

    Lines are ``max_height`` tall and ``gap`` apart; the same gap separates
    tokens on a line. Taller tokens shrink uniformly to ``max_height`` and every
    token is centred vertically in its line.
    """
    if max_height <= 0 or canvas_width <= 0:
        raise PipelineError("max_height and canvas_width must be positive")
    if gap < 0:
        raise PipelineError(f"gap must be >= 0, got {gap}")

    placements: List[Placement] = []
    line, x = 0, 0.0
    pitch = max_height + gap
    for index, block in enumerate(tokens.flatten()):
        source = _rect(block, _describe(index, block))
        if source.height > max_height:
            factor = max_height / source.height
            width, height = source.width * factor, float(max_height)
        else:
            width, height = source.width, source.height
        if width > canvas_width:
            raise PipelineError(f"{_describe(index, block)} is {width:.2f}px wide after scaling; canvas is {canvas_width}")
        if x > 0 and x + width > canvas_width:
            line, x = line + 1, 0.0
        top = line * pitch + (max_height - height) / 2.0
        placements.append(Placement(index, source, Rectangle(x, top, x + width, top + height)))
        x += width + gap

    lines = line + 1 if placements else 0
    plan = ReorgPlan((float(canvas_width), lines * pitch), tuple(placements), float(max_height), float(gap))
    logger.info("packed %d tokens into %d lines", len(placements), lines)
    return plan


def render_reorganized(plan: ReorgPlan, image: RasterImage) -> RasterImage:
    """Paint each source crop into its target box on a white canvas (nearest-neighbour when scaled)."""
    width, height = (round_half_up(v) for v in plan.canvas)
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    for p in plan.placements:
        x1, y1 = round_half_up(p.target.x1), round_half_up(p.target.y1)
        x2, y2 = min(round_half_up(p.target.x2), width), min(round_half_up(p.target.y2), height)
        if x2 <= x1 or y2 <= y1:
            continue
        try:
            crop = geometry.crop_image(p.source, image).writable_pixels()
        except GeometryError:
            logger.debug("token %d lies outside the page image; left blank", p.token_index)
            continue
        if crop.shape[:2] != (y2 - y1, x2 - x1):
            crop = cv2.resize(crop, (x2 - x1, y2 - y1), interpolation=cv2.INTER_NEAREST)
        canvas[y1:y2, x1:x2] = crop
    return RasterImage(canvas)


def remap_ocr_results(plan: ReorgPlan, ocr_layout: Layout) -> Layout:
    """Move OCR words read on the dense canvas back to page coordinates.

    A word belongs to the placement whose target box contains its centre; it is
    expressed relative to that target, rescaled, and conditioned on the source
    box. Words in no target are dropped and counted in
    ``page_info["dropped_words"]``.
    """
    remapped: List[TextBlock] = []
    dropped = 0
    for word in ocr_layout.flatten():
        center = Rectangle(*word.center, *word.center)
        placement = next((p for p in plan.placements if geometry.is_in(center, p.target)), None)
        if placement is None:
            dropped += 1
            continue
        source, target = placement.source, placement.target
        fx = source.width / target.width if target.width > 0 else 1.0
        fy = source.height / target.height if target.height > 0 else 1.0
        remapped.append(word.relative_to(target).scale(fx, fy).condition_on(source))
    if dropped:
        logger.warning("dropped %d OCR words outside every placement", dropped)
    page_info = {**(ocr_layout.page_info or {}), "dropped_words": dropped}
    return Layout(tuple(remapped), page_info=page_info)


# ------------------------------------------------------------
#  REGION HELPERS
# ------------------------------------------------------------


def _region_ids(regions: Layout) -> List[Tuple[int, TextBlock]]:
    result = []
    for index, region in enumerate(regions.flatten()):
        result.append((region.id if region.id is not None else index, region))
    return result


def assign_to_regions(tokens: Layout, regions: Layout) -> Layout:
    """Attach each token to the first region containing its centre.

    Returns the regions (ids filled in from their position when missing)
    followed by the assigned tokens, whose ``parent`` names their region and
    whose ids continue after the largest region id. Tokens outside every region
    are dropped, so ``group_by_parent`` on the result nests tokens per region.
    """
    labelled = _region_ids(regions)
    next_id = max((rid for rid, _ in labelled), default=-1) + 1
    region_blocks = [r.copy_with_updates(id=rid) for rid, r in labelled]

    assigned: List[TextBlock] = []
    dropped = 0
    for token in tokens.flatten():
        owner = next((rid for rid, r in labelled if token.is_in(r, center_only=True)), None)
        if owner is None:
            dropped += 1
            continue
        assigned.append(token.copy_with_updates(id=next_id, parent=owner, next=None))
        next_id += 1
    if dropped:
        logger.debug("%d tokens lie outside every region", dropped)
    return Layout(tuple(region_blocks + assigned), page_info=tokens.page_info)


def ocr_regions(image: RasterImage, regions: Layout, agent: OcrAgent, category: str | None = None) -> Layout:
    """Run ``agent`` on each region crop and lift its words to page coordinates.

    Only regions of ``category`` are read when it is given. Every word's
    ``parent`` is its region's id (its position when the region has none).
    Quadrilateral crops are warped, so their words are placed by the
    quadrilateral's bounding box only.
    """
    words: List[TextBlock] = []
    for rid, region in _region_ids(regions):
        if category is not None and region.category != category:
            continue
        try:
            crop = region.crop_image(image)
        except GeometryError as exc:
            logger.warning("skipping region %s: %s", rid, exc)
            continue
        x1, y1, _, _ = geometry.pixel_box(region, image.width, image.height)
        base = Rectangle(x1, y1, x1, y1)
        for word in agent.detect(crop).flatten():
            words.append(word.condition_on(base).copy_with_updates(id=len(words), parent=rid, next=None))
    return Layout(tuple(words), page_info=regions.page_info)
