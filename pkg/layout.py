"""TextBlock and Layout containers.

A ``TextBlock`` pairs a coordinate with text, a category label, a confidence
score and reading-order metadata. A ``Layout`` is an ordered collection of
TextBlocks and nested Layouts that supports the coordinate transformations in
batch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, Iterator, List, Literal, Tuple, Union

import geometry
from errors import GeometryError, LayoutError
from geometry import Coordinate, RasterImage, Rectangle

logger = logging.getLogger(__name__)

ReadingOrder = Literal["column_rtl", "row_ltr"]
READING_ORDERS: Tuple[str, str] = ("column_rtl", "row_ltr")
TRANSFORMS: Tuple[str, ...] = ("shift", "pad", "scale", "relative_to", "condition_on")


def _optional_int(value: Any, name: str) -> int | None:
    if value is None:
        return None
    try:
        integral = not isinstance(value, bool) and float(value).is_integer()
    except (TypeError, ValueError):
        integral = False
    if not integral:
        raise LayoutError(f"{name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class TextBlock:
    """A layout element: coordinate plus text, type and reading-order features."""

    block: Coordinate
    text: str | None = None
    category: str | None = None
    score: float | None = None
    id: int | None = None
    parent: int | None = None
    next: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.block, geometry.COORDINATE_TYPES):
            raise LayoutError(f"block must be a coordinate, got {type(self.block).__name__}")
        if self.score is not None:
            try:
                score = float(self.score)
            except (TypeError, ValueError):
                raise LayoutError(f"score must be a number, got {self.score!r}") from None
            if not 0.0 <= score <= 1.0:
                raise LayoutError(f"score must be in [0, 1], got {score}")
            object.__setattr__(self, "score", score)
        for name in ("id", "parent", "next"):
            object.__setattr__(self, name, _optional_int(getattr(self, name), name))

    def copy_with_updates(self, **kwargs: Any) -> "TextBlock":
        """Return a copy with provided field updates."""
        return replace(self, **kwargs)

    @property
    def coordinates(self) -> geometry.Bounds:
        return self.block.bounds

    @property
    def width(self) -> float:
        return self.block.width

    @property
    def height(self) -> float:
        return self.block.height

    @property
    def area(self) -> float:
        return self.block.area

    @property
    def center(self) -> geometry.Point:
        return self.block.center

    def shift(self, dx: float = 0.0, dy: float = 0.0) -> "TextBlock":
        return self.copy_with_updates(block=geometry.shift(self.block, dx, dy))

    def pad(
        self,
        top: float = 0.0,
        bottom: float = 0.0,
        left: float = 0.0,
        right: float = 0.0,
        safe_mode: bool = True,
    ) -> "TextBlock":
        return self.copy_with_updates(block=geometry.pad(self.block, top, bottom, left, right, safe_mode))

    def scale(self, fx: float, fy: float | None = None) -> "TextBlock":
        return self.copy_with_updates(block=geometry.scale(self.block, fx, fy))

    def relative_to(self, other: Any) -> "TextBlock":
        return self.copy_with_updates(block=geometry.relative_to(self.block, other))

    def condition_on(self, other: Any) -> "TextBlock":
        return self.copy_with_updates(block=geometry.condition_on(self.block, other))

    def is_in(self, other: Any, center_only: bool = False) -> bool:
        return geometry.is_in(self.block, other, center_only)

    def intersect(self, other: Any) -> "TextBlock":
        return self.copy_with_updates(block=geometry.intersect(self.block, other))

    def union(self, other: Any) -> "TextBlock":
        return self.copy_with_updates(block=geometry.union(self.block, other))

    def crop_image(self, image: RasterImage) -> RasterImage:
        return geometry.crop_image(self.block, image)


Element = Union[TextBlock, "Layout"]


@dataclass(frozen=True)
class Layout:
    """Ordered TextBlocks and nested Layouts.

    ``anchor`` is set on nested layouts built by ``group_by_parent`` and holds
    the parent block the children were grouped under.
    """

    elements: Tuple[Element, ...] = ()
    page_info: Dict[str, Any] | None = None
    anchor: TextBlock | None = None

    def __post_init__(self) -> None:
        elements = tuple(self.elements)
        seen: set[int] = set()
        for index, element in enumerate(elements):
            if not isinstance(element, (TextBlock, Layout)):
                raise LayoutError(f"element {index} is a {type(element).__name__}, not a TextBlock or Layout")
            if isinstance(element, TextBlock) and element.id is not None:
                if element.id in seen:
                    raise LayoutError(f"duplicate block id {element.id} at element {index}")
                seen.add(element.id)
        if self.anchor is not None and not isinstance(self.anchor, TextBlock):
            raise LayoutError("anchor must be a TextBlock")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Element]:
        return iter(self.elements)

    def __getitem__(self, key: int | slice) -> Any:
        if isinstance(key, slice):
            return replace(self, elements=self.elements[key])
        return self.elements[key]

    def copy_with_updates(self, **kwargs: Any) -> "Layout":
        return replace(self, **kwargs)

    # ---- batch transformations -------------------------------------------------

    def apply(self, transform: str, *args: Any, **kwargs: Any) -> "Layout":
        """Apply a named coordinate transformation to every block, recursively."""
        if transform not in TRANSFORMS:
            raise LayoutError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")

        def _one(element: Element) -> Element:
            if isinstance(element, Layout):
                return element.apply(transform, *args, **kwargs)
            return getattr(element, transform)(*args, **kwargs)

        anchor = _one(self.anchor) if self.anchor is not None else None
        return replace(self, elements=tuple(_one(e) for e in self.elements), anchor=anchor)

    def shift(self, dx: float = 0.0, dy: float = 0.0) -> "Layout":
        return self.apply("shift", dx, dy)

    def pad(
        self,
        top: float = 0.0,
        bottom: float = 0.0,
        left: float = 0.0,
        right: float = 0.0,
        safe_mode: bool = True,
    ) -> "Layout":
        return self.apply("pad", top, bottom, left, right, safe_mode)

    def scale(self, fx: float, fy: float | None = None) -> "Layout":
        return self.apply("scale", fx, fy)

    def relative_to(self, other: Any) -> "Layout":
        return self.apply("relative_to", other)

    def condition_on(self, other: Any) -> "Layout":
        return self.apply("condition_on", other)

    # ---- selection -------------------------------------------------------------

    def filter(self, predicate: Callable[[TextBlock], bool]) -> "Layout":
        """Keep blocks satisfying ``predicate``; nested layouts left empty are dropped."""
        kept: List[Element] = []
        for element in self.elements:
            if isinstance(element, Layout):
                sub = element.filter(predicate)
                if sub.elements:
                    kept.append(sub)
            elif predicate(element):
                kept.append(element)
        return replace(self, elements=tuple(kept))

    def filter_by(self, region: Any, center_only: bool = False) -> "Layout":
        """Keep blocks lying inside ``region``."""
        return self.filter(lambda b: b.is_in(region, center_only=center_only))

    def flatten(self) -> List[TextBlock]:
        """All blocks depth-first; a nested layout's anchor precedes its children."""
        blocks: List[TextBlock] = []
        if self.anchor is not None:
            blocks.append(self.anchor)
        for element in self.elements:
            if isinstance(element, Layout):
                blocks.extend(element.flatten())
            else:
                blocks.append(element)
        return blocks

    def get_texts(self) -> List[str]:
        return [b.text for b in self.flatten() if b.text is not None]

    def bounding_box(self) -> Rectangle | None:
        """Box enclosing every block, or None for an empty layout."""
        blocks = self.flatten()
        if not blocks:
            return None
        try:
            rects = [geometry.coerce(b.block, Rectangle) for b in blocks]
        except GeometryError as exc:
            raise LayoutError(f"cannot bound a layout holding an unbounded interval: {exc}") from exc
        return Rectangle(
            min(r.x1 for r in rects),
            min(r.y1 for r in rects),
            max(r.x2 for r in rects),
            max(r.y2 for r in rects),
        )

    # ---- reading order ---------------------------------------------------------

    def sort_reading_order(self, mode: ReadingOrder = "row_ltr") -> "Layout":
        """Reorder elements geometrically and rewrite ``next`` to the new order.

        ``column_rtl``: right-to-left by x-centre, ties top-to-bottom.
        ``row_ltr``: top-to-bottom by y-centre, ties left-to-right.
        Remaining ties fall back to id.
        """
        if mode not in READING_ORDERS:
            raise LayoutError(f"unknown reading order {mode!r}; expected one of {READING_ORDERS}")

        def _key(element: Element) -> Tuple[float, float, bool, int]:
            cx, cy = _element_center(element)
            ident = element.id if isinstance(element, TextBlock) else (element.anchor.id if element.anchor else None)
            tie = (ident is None, ident or 0)
            if mode == "column_rtl":
                return (-cx, cy) + tie
            return (cy, cx) + tie

        ordered = sorted(self.elements, key=_key)
        relinked: List[Element] = []
        for position, element in enumerate(ordered):
            if isinstance(element, TextBlock):
                following = next((e for e in ordered[position + 1 :] if isinstance(e, TextBlock)), None)
                element = element.copy_with_updates(next=following.id if following is not None else None)
            relinked.append(element)
        return replace(self, elements=tuple(relinked))

    def group_by_parent(self) -> "Layout":
        """Nest each parent block's children under it as an anchored sub-layout.

        Children keep absolute coordinates. Blocks without a parent and without
        children stay at the top level.
        """
        blocks = [e for e in self.elements if isinstance(e, TextBlock)]
        by_id = {b.id: b for b in blocks if b.id is not None}
        children: Dict[int, List[TextBlock]] = {}
        for block in blocks:
            if block.parent is None:
                continue
            if block.parent not in by_id:
                raise LayoutError(f"block {block.id} references missing parent {block.parent}")
            children.setdefault(block.parent, []).append(block)
        if not children:
            return self

        def _group(block: TextBlock) -> Element:
            if block.id in children:
                return Layout(tuple(_group(c) for c in children[block.id]), anchor=block)
            return block

        grouped: List[Element] = []
        for element in self.elements:
            if isinstance(element, TextBlock) and element.parent is not None:
                continue
            grouped.append(_group(element) if isinstance(element, TextBlock) else element)

        result = replace(self, elements=tuple(grouped))
        if len(result.flatten()) != len(self.flatten()):
            raise LayoutError("parent references form a cycle")
        logger.debug("grouped %d blocks under %d parents", len(blocks), len(children))
        return result


def _axis_center(lows: List[float], highs: List[float]) -> float:
    lows = [v for v in lows if math.isfinite(v)]
    highs = [v for v in highs if math.isfinite(v)]
    if not lows or not highs:
        return 0.0
    return (min(lows) + max(highs)) / 2.0


def _element_center(element: Element) -> geometry.Point:
    """Centre used for ordering; an axis without finite extent counts as 0."""
    blocks = [element] if isinstance(element, TextBlock) else element.flatten()
    bounds = [b.block.bounds for b in blocks]
    cx = _axis_center([b[0] for b in bounds], [b[2] for b in bounds])
    cy = _axis_center([b[1] for b in bounds], [b[3] for b in bounds])
    return cx, cy
