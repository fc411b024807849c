"""Coordinate types and their transformation / operation algebra.

Three coordinate geometries are supported:

* ``Interval``      - a 1D span on one axis (a slab across the page)
* ``Rectangle``     - an axis-aligned box
* ``Quadrilateral`` - four corner points, clockwise from the top-left

Binary operations promote operands along ``Interval < Rectangle < Quadrilateral``.
Quadrilaterals take part in ``intersect``/``union``/``is_in`` through their
axis-aligned bounding boxes. All values are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, ClassVar, Literal, Tuple, Type, Union

import cv2
import numpy as np
from shapely.geometry import LinearRing

from errors import GeometryError

Axis = Literal["horizontal", "vertical"]
AXES: Tuple[str, str] = ("horizontal", "vertical")

Point = Tuple[float, float]
Bounds = Tuple[float, float, float, float]


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero for positives."""
    return int(math.floor(value + 0.5))


def _as_float(value: Any, name: str) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError) as exc:
        raise GeometryError(f"{name} must be a number, got {value!r}") from exc
    if math.isnan(result):
        raise GeometryError(f"{name} must not be NaN")
    return result


# ------------------------------------------------------------
#  RASTER IMAGE
# ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RasterImage:
    """In-memory 8-bit RGB page image, stored as a read-only (H, W, 3) array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise GeometryError(f"expected an (H, W, 3) RGB array, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height

    @classmethod
    def blank(cls, width: int, height: int, color: Tuple[int, int, int] = (255, 255, 255)) -> "RasterImage":
        if width < 0 or height < 0:
            raise GeometryError(f"image size must be non-negative, got {width}x{height}")
        arr = np.empty((int(height), int(width), 3), dtype=np.uint8)
        arr[:, :] = color
        return cls(arr)

    @classmethod
    def from_bytes(cls, width: int, height: int, buffer: bytes) -> "RasterImage":
        """Build an image from a row-major RGB byte buffer."""
        expected = int(width) * int(height) * 3
        if len(buffer) != expected:
            raise GeometryError(f"buffer holds {len(buffer)} bytes, expected {expected} for {width}x{height} RGB")
        arr = np.frombuffer(buffer, dtype=np.uint8).reshape(int(height), int(width), 3)
        return cls(arr)

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()

    def writable_pixels(self) -> np.ndarray:
        """Return a writable copy of the pixel array."""
        return np.array(self.pixels, copy=True)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None  # type: ignore[assignment]


# ------------------------------------------------------------
#  COORDINATE TYPES
# ------------------------------------------------------------


class _Coordinate:
    """Shared operation surface; the algebra itself lives in module functions."""

    rank: ClassVar[int]
    block_type: ClassVar[str]

    @property
    def bounds(self) -> Bounds:
        raise NotImplementedError

    @property
    def origin(self) -> Point:
        raise NotImplementedError

    @property
    def width(self) -> float:
        x1, _, x2, _ = self.bounds
        return x2 - x1

    @property
    def height(self) -> float:
        _, y1, _, y2 = self.bounds
        return y2 - y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        x1, y1, x2, y2 = self.bounds
        return (x1 + x2) / 2.0, (y1 + y2) / 2.0

    def shift(self, dx: float = 0.0, dy: float = 0.0) -> "Coordinate":
        return shift(self, dx, dy)  # type: ignore[arg-type]

    def pad(
        self,
        top: float = 0.0,
        bottom: float = 0.0,
        left: float = 0.0,
        right: float = 0.0,
        safe_mode: bool = True,
    ) -> "Coordinate":
        return pad(self, top, bottom, left, right, safe_mode)  # type: ignore[arg-type]

    def scale(self, fx: float, fy: float | None = None) -> "Coordinate":
        return scale(self, fx, fy)  # type: ignore[arg-type]

    def is_in(self, other: Any, center_only: bool = False) -> bool:
        return is_in(self, other, center_only)

    def intersect(self, other: Any) -> "Coordinate":
        return intersect(self, other)

    def union(self, other: Any) -> "Coordinate":
        return union(self, other)

    def relative_to(self, other: Any) -> "Coordinate":
        return relative_to(self, other)

    def condition_on(self, other: Any) -> "Coordinate":
        return condition_on(self, other)

    def crop_image(self, image: RasterImage) -> RasterImage:
        return crop_image(self, image)  # type: ignore[arg-type]

    def coerce(self, target: Any, canvas: Tuple[float, float] | None = None) -> "Coordinate":
        return coerce(self, target, canvas)  # type: ignore[arg-type]


@dataclass(frozen=True)
class Interval(_Coordinate):
    """A span on one axis; unbounded on the other axis unless a canvas is known."""

    start: float
    end: float
    axis: Axis = "horizontal"
    canvas_width: float | None = None
    canvas_height: float | None = None

    rank: ClassVar[int] = 0
    block_type: ClassVar[str] = "interval"

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _as_float(self.start, "start"))
        object.__setattr__(self, "end", _as_float(self.end, "end"))
        if self.axis not in AXES:
            raise GeometryError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.start > self.end:
            raise GeometryError(f"interval start {self.start} is after end {self.end}")
        for name in ("canvas_width", "canvas_height"):
            value = getattr(self, name)
            if value is None:
                continue
            value = _as_float(value, name)
            if value < 0:
                raise GeometryError(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def free_extent(self) -> float | None:
        """Canvas extent along the axis this interval does not constrain."""
        return self.canvas_height if self.axis == "horizontal" else self.canvas_width

    @property
    def axis_extent(self) -> float | None:
        return self.canvas_width if self.axis == "horizontal" else self.canvas_height

    @property
    def bounds(self) -> Bounds:
        extent = self.free_extent
        lo, hi = (0.0, extent) if extent is not None else (-math.inf, math.inf)
        if self.axis == "horizontal":
            return self.start, lo, self.end, hi
        return lo, self.start, hi, self.end

    @property
    def origin(self) -> Point:
        return (self.start, 0.0) if self.axis == "horizontal" else (0.0, self.start)

    @property
    def length(self) -> float:
        return self.end - self.start

    def with_canvas(self, width: float | None, height: float | None) -> "Interval":
        return replace(self, canvas_width=width, canvas_height=height)


@dataclass(frozen=True)
class Rectangle(_Coordinate):
    """Axis-aligned box given by its top-left (x1, y1) and bottom-right (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    rank: ClassVar[int] = 1
    block_type: ClassVar[str] = "rectangle"

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, _as_float(getattr(self, name), name))
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise GeometryError(f"inverted rectangle ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @classmethod
    def from_bounds(cls, bounds: Bounds) -> "Rectangle":
        return cls(*bounds)

    @property
    def bounds(self) -> Bounds:
        return self.x1, self.y1, self.x2, self.y2

    @property
    def origin(self) -> Point:
        return self.x1, self.y1

    @property
    def corners(self) -> Tuple[Point, Point, Point, Point]:
        return (self.x1, self.y1), (self.x2, self.y1), (self.x2, self.y2), (self.x1, self.y2)


@dataclass(frozen=True)
class Quadrilateral(_Coordinate):
    """Four corner points (8 degrees of freedom), clockwise from the top-left."""

    points: Tuple[Point, Point, Point, Point]

    rank: ClassVar[int] = 2
    block_type: ClassVar[str] = "quadrilateral"

    def __post_init__(self) -> None:
        try:
            arr = np.asarray(self.points, dtype=float)
        except (TypeError, ValueError) as exc:
            raise GeometryError(f"quadrilateral points must be numbers, got {self.points!r}") from exc
        if arr.shape != (4, 2):
            raise GeometryError(f"a quadrilateral needs exactly 4 (x, y) points, got {self.points!r}")
        if np.isnan(arr).any():
            raise GeometryError("quadrilateral points must not be NaN")
        pts = tuple((float(x), float(y)) for x, y in arr.tolist())
        object.__setattr__(self, "points", pts)
        if not self.is_degenerate and not LinearRing(pts).is_simple:
            raise GeometryError(f"quadrilateral {pts} is self-intersecting")

    @classmethod
    def from_bounds(cls, bounds: Bounds) -> "Quadrilateral":
        return cls(Rectangle.from_bounds(bounds).corners)

    @property
    def is_degenerate(self) -> bool:
        x1, y1, x2, y2 = self.bounds
        return x1 == x2 or y1 == y2

    @property
    def is_clockwise(self) -> bool:
        """Clockwise on screen (y grows downward)."""
        return LinearRing(self.points).is_ccw

    @property
    def bounds(self) -> Bounds:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return min(xs), min(ys), max(xs), max(ys)

    @property
    def origin(self) -> Point:
        x1, y1, _, _ = self.bounds
        return x1, y1

    def to_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


Coordinate = Union[Interval, Rectangle, Quadrilateral]
COORDINATE_TYPES: Tuple[Type[_Coordinate], ...] = (Interval, Rectangle, Quadrilateral)
_BY_NAME = {cls.block_type: cls for cls in COORDINATE_TYPES}


def as_coordinate(obj: Any) -> Coordinate:
    """Accept a coordinate or anything carrying one in a ``block`` attribute."""
    if isinstance(obj, COORDINATE_TYPES):
        return obj  # type: ignore[return-value]
    inner = getattr(obj, "block", None)
    if isinstance(inner, COORDINATE_TYPES):
        return inner  # type: ignore[return-value]
    raise GeometryError(f"expected a coordinate, got {type(obj).__name__}")


def _finite_bounds(block: Coordinate) -> Bounds:
    bounds = block.bounds
    if not all(math.isfinite(v) for v in bounds):
        raise GeometryError(
            f"{block.block_type} is unbounded on its free axis; give it canvas extents first"
        )
    return bounds


def _from_bounds(rank: int, bounds: Bounds) -> Coordinate:
    if rank >= Quadrilateral.rank:
        return Quadrilateral.from_bounds(bounds)
    return Rectangle.from_bounds(bounds)


def _same_axis(a: Coordinate, b: Coordinate) -> bool:
    return isinstance(a, Interval) and isinstance(b, Interval) and a.axis == b.axis


def _merged_canvas(a: Interval, b: Interval) -> Tuple[float | None, float | None]:
    width = a.canvas_width if a.canvas_width is not None else b.canvas_width
    height = a.canvas_height if a.canvas_height is not None else b.canvas_height
    return width, height


# ------------------------------------------------------------
#  TRANSFORMATIONS
# ------------------------------------------------------------


def shift(block: Coordinate, dx: float = 0.0, dy: float = 0.0) -> Coordinate:
    """Translate by (dx, dy); an Interval only moves along its own axis."""
    if isinstance(block, Interval):
        d = dx if block.axis == "horizontal" else dy
        return replace(block, start=block.start + d, end=block.end + d)
    if isinstance(block, Rectangle):
        return Rectangle(block.x1 + dx, block.y1 + dy, block.x2 + dx, block.y2 + dy)
    if isinstance(block, Quadrilateral):
        return Quadrilateral(tuple((x + dx, y + dy) for x, y in block.points))
    raise GeometryError(f"cannot shift {type(block).__name__}")


def pad(
    block: Coordinate,
    top: float = 0.0,
    bottom: float = 0.0,
    left: float = 0.0,
    right: float = 0.0,
    safe_mode: bool = True,
) -> Coordinate:
    """Move edges outward; negative amounts shrink. ``safe_mode`` clamps at 0 and the canvas."""
    if isinstance(block, Interval):
        lo_pad, hi_pad = (left, right) if block.axis == "horizontal" else (top, bottom)
        start, end = block.start - lo_pad, block.end + hi_pad
        if safe_mode:
            start = max(start, 0.0)
            if block.axis_extent is not None:
                end = min(end, block.axis_extent)
        if start > end:
            raise GeometryError(f"padding inverts the interval ({start} > {end})")
        return replace(block, start=start, end=end)

    if isinstance(block, Rectangle):
        x1, y1 = block.x1 - left, block.y1 - top
        x2, y2 = block.x2 + right, block.y2 + bottom
        if safe_mode:
            x1, y1 = max(x1, 0.0), max(y1, 0.0)
        if x1 > x2 or y1 > y2:
            raise GeometryError(f"padding inverts the rectangle ({x1}, {y1}, {x2}, {y2})")
        return Rectangle(x1, y1, x2, y2)

    if isinstance(block, Quadrilateral):
        x_moves = (-left, right, right, -left)
        y_moves = (-top, -top, bottom, bottom)
        points = []
        for (x, y), mx, my in zip(block.points, x_moves, y_moves):
            x, y = x + mx, y + my
            if safe_mode:
                x, y = max(x, 0.0), max(y, 0.0)
            points.append((x, y))
        padded = Quadrilateral(tuple(points))
        if not block.is_degenerate and not padded.is_degenerate and padded.is_clockwise != block.is_clockwise:
            raise GeometryError(f"padding inverts the quadrilateral {padded.points}")
        return padded

    raise GeometryError(f"cannot pad {type(block).__name__}")


def scale(block: Coordinate, fx: float, fy: float | None = None) -> Coordinate:
    """Multiply coordinates about the origin (0, 0)."""
    fy = fx if fy is None else fy
    if fx <= 0 or fy <= 0:
        raise GeometryError(f"scale factors must be positive, got ({fx}, {fy})")
    if isinstance(block, Interval):
        f = fx if block.axis == "horizontal" else fy
        return replace(
            block,
            start=block.start * f,
            end=block.end * f,
            canvas_width=None if block.canvas_width is None else block.canvas_width * fx,
            canvas_height=None if block.canvas_height is None else block.canvas_height * fy,
        )
    if isinstance(block, Rectangle):
        return Rectangle(block.x1 * fx, block.y1 * fy, block.x2 * fx, block.y2 * fy)
    if isinstance(block, Quadrilateral):
        return Quadrilateral(tuple((x * fx, y * fy) for x, y in block.points))
    raise GeometryError(f"cannot scale {type(block).__name__}")


def relative_to(block: Any, base: Any) -> Coordinate:
    """Express ``block`` in the frame whose origin is the top-left of ``base``."""
    ox, oy = as_coordinate(base).origin
    return shift(as_coordinate(block), -ox, -oy)


def condition_on(block: Any, base: Any) -> Coordinate:
    """Inverse of ``relative_to``: lift a block from the frame of ``base`` to absolute."""
    ox, oy = as_coordinate(base).origin
    return shift(as_coordinate(block), ox, oy)


# ------------------------------------------------------------
#  OPERATIONS
# ------------------------------------------------------------


def _axis_contained(lo: float, hi: float, outer_lo: float, outer_hi: float, center_only: bool) -> bool:
    if center_only and math.isfinite(lo) and math.isfinite(hi):
        mid = (lo + hi) / 2.0
        return outer_lo <= mid <= outer_hi
    return outer_lo <= lo and hi <= outer_hi


def is_in(inner: Any, outer: Any, center_only: bool = False) -> bool:
    """Closed containment of ``inner``'s box (or centre) in ``outer``'s box."""
    ix1, iy1, ix2, iy2 = as_coordinate(inner).bounds
    ox1, oy1, ox2, oy2 = as_coordinate(outer).bounds
    return _axis_contained(ix1, ix2, ox1, ox2, center_only) and _axis_contained(
        iy1, iy2, oy1, oy2, center_only
    )


def intersect(a: Any, b: Any) -> Coordinate:
    """Axis-aligned intersection; an empty overlap yields a zero-area block."""
    a, b = as_coordinate(a), as_coordinate(b)
    if _same_axis(a, b):
        lo, hi = max(a.start, b.start), min(a.end, b.end)  # type: ignore[union-attr]
        width, height = _merged_canvas(a, b)  # type: ignore[arg-type]
        return Interval(lo, max(lo, hi), a.axis, width, height)  # type: ignore[union-attr]

    ax1, ay1, ax2, ay2 = a.bounds
    bx1, by1, bx2, by2 = b.bounds
    x1, y1 = max(ax1, bx1), max(ay1, by1)
    x2, y2 = max(x1, min(ax2, bx2)), max(y1, min(ay2, by2))
    return _from_bounds(max(a.rank, b.rank, Rectangle.rank), (x1, y1, x2, y2))


def union(a: Any, b: Any) -> Coordinate:
    """Smallest axis-aligned region enclosing both operands."""
    a, b = as_coordinate(a), as_coordinate(b)
    if _same_axis(a, b):
        width, height = _merged_canvas(a, b)  # type: ignore[arg-type]
        return Interval(min(a.start, b.start), max(a.end, b.end), a.axis, width, height)  # type: ignore[union-attr]

    ax1, ay1, ax2, ay2 = _finite_bounds(a)
    bx1, by1, bx2, by2 = _finite_bounds(b)
    bounds = (min(ax1, bx1), min(ay1, by1), max(ax2, bx2), max(ay2, by2))
    return _from_bounds(max(a.rank, b.rank, Rectangle.rank), bounds)


def iou(a: Any, b: Any) -> float:
    """Intersection over union, with the union taken as areaA + areaB - overlap."""
    a, b = as_coordinate(a), as_coordinate(b)
    overlap = intersect(a, b).area
    total = _finite_area(a) + _finite_area(b) - overlap
    return overlap / total if total > 0 else 0.0


def _finite_area(block: Coordinate) -> float:
    x1, y1, x2, y2 = _finite_bounds(block)
    return (x2 - x1) * (y2 - y1)


def coerce(block: Any, target: Any, canvas: Tuple[float, float] | None = None) -> Coordinate:
    """Convert between coordinate types.

    ``target`` is a coordinate class or its ``block_type`` name. ``canvas`` is
    ``(width, height)`` and bounds an Interval's free axis when promoting it.
    """
    block = as_coordinate(block)
    cls = _BY_NAME.get(target) if isinstance(target, str) else target
    if cls not in COORDINATE_TYPES:
        raise GeometryError(f"unknown coordinate type {target!r}")
    if isinstance(block, cls):
        return block
    if cls is Interval:
        raise GeometryError(f"cannot coerce a {block.block_type} down to an interval")

    if isinstance(block, Interval):
        width = canvas[0] if canvas is not None else block.canvas_width
        height = canvas[1] if canvas is not None else block.canvas_height
        free = height if block.axis == "horizontal" else width
        if free is None:
            raise GeometryError("promoting an interval needs canvas extents for its free axis")
        if block.axis == "horizontal":
            rect = Rectangle(block.start, 0.0, block.end, float(free))
        else:
            rect = Rectangle(0.0, block.start, float(free), block.end)
    elif isinstance(block, Quadrilateral):
        rect = Rectangle.from_bounds(block.bounds)
    else:
        rect = block  # type: ignore[assignment]

    if cls is Rectangle:
        return rect
    return Quadrilateral(rect.corners)


# ------------------------------------------------------------
#  IMAGE CROPPING
# ------------------------------------------------------------


def pixel_box(block: Any, width: int, height: int) -> Tuple[int, int, int, int]:
    """Integer pixel bounds of ``block`` clamped to a ``width`` x ``height`` image.

    Starts are floored and ends ceiled; the result may be empty (x2 <= x1).
    """
    bx1, by1, bx2, by2 = as_coordinate(block).bounds
    x1 = int(math.floor(min(max(bx1, 0.0), width)))
    y1 = int(math.floor(min(max(by1, 0.0), height)))
    x2 = int(math.ceil(max(min(bx2, width), 0.0)))
    y2 = int(math.ceil(max(min(by2, height), 0.0)))
    return x1, y1, x2, y2


def _quad_output_size(points: np.ndarray) -> Tuple[int, int]:
    p1, p2, p3, p4 = points
    width = (np.linalg.norm(p2 - p1) + np.linalg.norm(p3 - p4)) / 2.0
    height = (np.linalg.norm(p4 - p1) + np.linalg.norm(p3 - p2)) / 2.0
    return round_half_up(float(width)), round_half_up(float(height))


def crop_image(block: Any, image: RasterImage) -> RasterImage:
    """Cut the block's region out of ``image``.

    Intervals and rectangles are cropped axis-aligned after clamping to the
    image. Quadrilaterals are warped to an upright rectangle through the
    homography of their four corners, sampled bilinearly.
    """
    block = as_coordinate(block)
    if image.width == 0 or image.height == 0:
        raise GeometryError("cannot crop an empty image")
    x1, y1, x2, y2 = pixel_box(block, image.width, image.height)
    if x2 <= x1 or y2 <= y1:
        raise GeometryError(f"{block.block_type} {block.bounds} does not overlap the {image.width}x{image.height} image")

    if isinstance(block, Quadrilateral):
        src = block.to_array().astype(np.float32)
        out_w, out_h = _quad_output_size(src)
        if out_w <= 0 or out_h <= 0:
            raise GeometryError(f"quadrilateral {block.points} has an empty crop region")
        dst = np.array([[0, 0], [out_w, 0], [out_w, out_h], [0, out_h]], dtype=np.float32)
        matrix = cv2.getPerspectiveTransform(src, dst)
        warped = cv2.warpPerspective(
            image.writable_pixels(),
            matrix,
            (out_w, out_h),
            flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_CONSTANT,
            borderValue=(255, 255, 255),
        )
        return RasterImage(warped)

    return RasterImage(image.pixels[y1:y2, x1:x2])


def block_type_of(name: str) -> Type[_Coordinate]:
    try:
        return _BY_NAME[name]
    except KeyError as exc:
        raise GeometryError(f"unknown block_type {name!r}") from exc

