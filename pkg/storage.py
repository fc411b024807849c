"""Serialization of layouts (JSON, CSV), COCO loading and image files."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Literal, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

import geometry
from errors import GeometryError, LayoutError, StorageError
from geometry import Interval, Quadrilateral, RasterImage, Rectangle
from layout import Element, Layout, TextBlock

if TYPE_CHECKING:
    from pipelines import ReorgPlan, TableStructure

logger = logging.getLogger(__name__)

CocoKind = Literal["dataset", "results"]
CSV_COLUMNS: List[str] = ["id", "category", "score", "text", "x_1", "y_1", "x_2", "y_2", "parent", "next"]
_OPTIONAL_FIELDS = ("text", "category", "score", "id", "parent", "next")


def _load_json_bytes(data: bytes | str) -> Any:
    # utf-8-sig tolerates BOM-prefixed files from some editors.
    text = data.decode("utf-8-sig") if isinstance(data, (bytes, bytearray)) else data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise StorageError(f"invalid JSON: {exc}") from exc


def _num(value: float) -> float | int:
    rounded = round(float(value), 2)
    return int(rounded) if rounded.is_integer() else rounded


# ------------------------------------------------------------
#  LAYOUT JSON
# ------------------------------------------------------------


def _coordinate_to_dict(block: geometry.Coordinate) -> Dict[str, Any]:
    data: Dict[str, Any] = {"block_type": block.block_type}
    if isinstance(block, Interval):
        data.update(start=_num(block.start), end=_num(block.end), axis=block.axis)
        if block.canvas_width is not None:
            data["canvas_width"] = _num(block.canvas_width)
        if block.canvas_height is not None:
            data["canvas_height"] = _num(block.canvas_height)
    elif isinstance(block, Rectangle):
        data.update(x_1=_num(block.x1), y_1=_num(block.y1), x_2=_num(block.x2), y_2=_num(block.y2))
    else:
        data["points"] = [[_num(x), _num(y)] for x, y in block.points]
    return data


def _block_to_dict(block: TextBlock) -> Dict[str, Any]:
    data = _coordinate_to_dict(block.block)
    for name in _OPTIONAL_FIELDS:
        value = getattr(block, name)
        if value is not None:
            data[name] = value
    return data


def _element_to_dict(element: Element) -> Dict[str, Any]:
    if isinstance(element, TextBlock):
        return _block_to_dict(element)
    data: Dict[str, Any] = {"block_type": "layout"}
    if element.anchor is not None:
        data["anchor"] = _block_to_dict(element.anchor)
    data["page_info"] = element.page_info
    data["elements"] = [_element_to_dict(e) for e in element.elements]
    return data


def layout_to_dict(layout: Layout) -> Dict[str, Any]:
    return {"page_info": layout.page_info, "elements": [_element_to_dict(e) for e in layout.elements]}


def export_json(layout: Layout) -> bytes:
    """Canonical JSON: fixed key order, coordinates rounded to 2 decimals."""
    return json.dumps(layout_to_dict(layout), separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _require(data: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise StorageError(f"{where}: missing field {key!r}")
    return data[key]


def _coordinate_from_dict(data: Mapping[str, Any], where: str) -> geometry.Coordinate:
    block_type = _require(data, "block_type", where)
    if block_type == "interval":
        return Interval(
            _require(data, "start", where),
            _require(data, "end", where),
            data.get("axis", "horizontal"),
            data.get("canvas_width"),
            data.get("canvas_height"),
        )
    if block_type == "rectangle":
        return Rectangle(*(_require(data, k, where) for k in ("x_1", "y_1", "x_2", "y_2")))
    if block_type == "quadrilateral":
        return Quadrilateral(_require(data, "points", where))
    raise StorageError(f"{where}: unknown block_type {block_type!r}")


def _block_from_dict(data: Mapping[str, Any], where: str) -> TextBlock:
    try:
        return TextBlock(_coordinate_from_dict(data, where), **{k: data.get(k) for k in _OPTIONAL_FIELDS})
    except StorageError:
        raise
    except (GeometryError, LayoutError, TypeError, ValueError) as exc:
        raise StorageError(f"{where}: {exc}") from exc


def _element_from_dict(data: Any, where: str) -> Element:
    if not isinstance(data, Mapping):
        raise StorageError(f"{where}: expected an object, got {type(data).__name__}")
    if data.get("block_type") == "layout":
        return _layout_from_dict(data, where)
    return _block_from_dict(data, where)


def _layout_from_dict(data: Mapping[str, Any], where: str) -> Layout:
    elements = _require(data, "elements", where or "layout")
    if not isinstance(elements, list):
        raise StorageError(f"{where or 'layout'}: 'elements' must be a list")
    prefix = f"{where}." if where else ""
    parsed = [_element_from_dict(e, f"{prefix}elements[{i}]") for i, e in enumerate(elements)]
    anchor = data.get("anchor")
    try:
        return Layout(
            tuple(parsed),
            page_info=data.get("page_info"),
            anchor=_block_from_dict(anchor, f"{prefix}anchor") if anchor is not None else None,
        )
    except LayoutError as exc:
        raise StorageError(f"{where or 'layout'}: {exc}") from exc


def layout_from_dict(data: Any) -> Layout:
    if not isinstance(data, Mapping):
        raise StorageError("layout JSON must be an object with 'page_info' and 'elements'")
    return _layout_from_dict(data, "")


def load_json(data: bytes | str) -> Layout:
    """Inverse of ``export_json``."""
    return layout_from_dict(_load_json_bytes(data))


# ------------------------------------------------------------
#  CSV
# ------------------------------------------------------------


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return str(_num(value))
    return str(value)


def _bounding_cells(block: geometry.Coordinate) -> List[str]:
    cells = []
    for value in block.bounds:
        cells.append("" if not np.isfinite(value) else _csv_cell(float(value)))
    return cells


def export_csv(layout: Layout) -> bytes:
    """One row per block, nesting flattened depth-first, non-rectangles as their bounding box.

    A ``page_id`` column is appended when ``page_info`` carries a ``page_number``.
    """
    page_number = (layout.page_info or {}).get("page_number")
    header = CSV_COLUMNS + (["page_id"] if page_number is not None else [])
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    for block in layout.flatten():
        row = [
            _csv_cell(block.id),
            _csv_cell(block.category),
            "" if block.score is None else str(block.score),
            _csv_cell(block.text),
            *_bounding_cells(block.block),
            _csv_cell(block.parent),
            _csv_cell(block.next),
        ]
        if page_number is not None:
            row.append(_csv_cell(page_number))
        writer.writerow(row)
    return buffer.getvalue().encode("utf-8")


def export_table_csv(tables: Sequence["TableStructure"], cell_delimiter: str = " ") -> bytes:
    """One row per table row: table index, row index, then the cell texts.

    Tokens within a cell are joined with ``cell_delimiter``.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    for table_index, table in enumerate(tables):
        for row_index, cells in enumerate(table.cell_texts(cell_delimiter)):
            writer.writerow([table_index, row_index, *cells])
    return buffer.getvalue().encode("utf-8")


# ------------------------------------------------------------
#  COCO
# ------------------------------------------------------------


@dataclass
class CategoryMap:
    """Category id -> label."""

    entries: Dict[int, str] = field(default_factory=dict)

    @classmethod
    def from_coco(cls, categories: Sequence[Mapping[str, Any]]) -> "CategoryMap":
        entries: Dict[int, str] = {}
        for item in categories:
            cat_id = int(_require(item, "id", "category"))
            if cat_id in entries:
                raise StorageError(f"duplicate category id {cat_id}")
            entries[cat_id] = str(_require(item, "name", f"category {cat_id}"))
        return cls(entries)

    @classmethod
    def from_dict(cls, data: Mapping[Any, str]) -> "CategoryMap":
        return cls({int(k): str(v) for k, v in data.items()})

    def label(self, category_id: int) -> str:
        try:
            return self.entries[category_id]
        except KeyError as exc:
            known = ", ".join(str(k) for k in sorted(self.entries))
            raise StorageError(f"unknown category_id {category_id} (known ids: {known})") from exc

    def merged(self, other: "CategoryMap | None") -> "CategoryMap":
        if other is None:
            return self
        return CategoryMap({**self.entries, **other.entries})


def load_categories(data: bytes | str) -> CategoryMap:
    """Read a COCO categories list, or an object holding one under ``categories``."""
    payload = _load_json_bytes(data)
    if isinstance(payload, Mapping) and "categories" in payload:
        payload = payload["categories"]
    if not isinstance(payload, list):
        raise StorageError("categories file must be a list or an object with a 'categories' list")
    return CategoryMap.from_coco(payload)


def _whole(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer():
        raise StorageError(f"{name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class DetectionRecord:
    """One prediction from a COCO results file; bbox is (x, y, width, height)."""

    image_id: int
    category_id: int
    bbox: tuple
    score: float = 1.0

    def __post_init__(self) -> None:
        if len(self.bbox) != 4:
            raise StorageError(f"bbox must have 4 values, got {self.bbox!r}")
        x, y, w, h = (float(v) for v in self.bbox)
        if w < 0 or h < 0:
            raise StorageError(f"negative bbox extent in {self.bbox!r} (image {self.image_id})")
        if not 0.0 <= float(self.score) <= 1.0:
            raise StorageError(f"score {self.score} outside [0, 1] (image {self.image_id})")
        object.__setattr__(self, "bbox", (x, y, w, h))
        object.__setattr__(self, "score", float(self.score))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], where: str = "record") -> "DetectionRecord":
        try:
            return cls(
                image_id=_whole(_require(data, "image_id", where), f"{where}.image_id"),
                category_id=_whole(_require(data, "category_id", where), f"{where}.category_id"),
                bbox=tuple(_require(data, "bbox", where)),
                score=float(data.get("score", 1.0)),
            )
        except StorageError:
            raise
        except (TypeError, ValueError) as exc:
            raise StorageError(f"{where}: {exc}") from exc

    def to_rectangle(self) -> Rectangle:
        x, y, w, h = self.bbox
        return Rectangle(x, y, x + w, y + h)


def _label(category_id: int, categories: CategoryMap | None) -> str:
    return categories.label(category_id) if categories is not None else str(category_id)


def _load_results(payload: Any, categories: CategoryMap | None) -> Dict[int, Layout]:
    if not isinstance(payload, list):
        raise StorageError("COCO results must be a flat array of detections")
    blocks: Dict[int, List[TextBlock]] = {}
    for index, item in enumerate(payload):
        record = DetectionRecord.from_dict(item, f"result[{index}]")
        per_image = blocks.setdefault(record.image_id, [])
        per_image.append(
            TextBlock(
                record.to_rectangle(),
                category=_label(record.category_id, categories),
                score=record.score,
                id=len(per_image),
            )
        )
    return {image_id: Layout(tuple(items), page_info={"image_id": image_id}) for image_id, items in blocks.items()}


def _load_dataset(payload: Any, categories: CategoryMap | None) -> Dict[int, Layout]:
    if not isinstance(payload, Mapping):
        raise StorageError("COCO dataset must be an object with images/annotations/categories")
    for key in ("images", "annotations", "categories"):
        if not isinstance(payload.get(key), list):
            raise StorageError(f"COCO dataset is missing the {key!r} array")
    category_map = CategoryMap.from_coco(payload["categories"]).merged(categories)

    page_infos: Dict[int, Dict[str, Any]] = {}
    for image in payload["images"]:
        image_id = int(_require(image, "id", "image"))
        page_infos[image_id] = {
            "image_id": image_id,
            "file_name": image.get("file_name"),
            "width": image.get("width"),
            "height": image.get("height"),
        }

    blocks: Dict[int, List[TextBlock]] = {image_id: [] for image_id in page_infos}
    for index, ann in enumerate(payload["annotations"]):
        where = f"annotation[{index}]"
        record = DetectionRecord.from_dict({**ann, "score": ann.get("score", 1.0)}, where)
        if record.image_id not in blocks:
            raise StorageError(f"{where}: unknown image_id {record.image_id}")
        blocks[record.image_id].append(
            TextBlock(
                record.to_rectangle(),
                category=category_map.label(record.category_id),
                score=ann.get("score"),
                id=ann.get("id"),
            )
        )
    return {
        image_id: Layout(tuple(items), page_info=page_infos[image_id]) for image_id, items in blocks.items()
    }


def load_coco(
    annotations: bytes | str,
    kind: CocoKind = "results",
    categories: CategoryMap | None = None,
) -> Dict[int, Layout]:
    """Load a COCO dataset or results file into one Layout per image id."""
    payload = _load_json_bytes(annotations)
    if kind == "results":
        layouts = _load_results(payload, categories)
    elif kind == "dataset":
        layouts = _load_dataset(payload, categories)
    else:
        raise StorageError(f"unknown COCO kind {kind!r}")
    logger.debug("loaded COCO %s for %d images", kind, len(layouts))
    return layouts


# ------------------------------------------------------------
#  IMAGES
# ------------------------------------------------------------


def load_image(path: str | Path) -> RasterImage:
    """Read a PNG or JPEG file as 8-bit RGB (grayscale and palette images are expanded)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "JPEG"):
                raise StorageError(f"{path}: unsupported image format {img.format}")
            return RasterImage(np.asarray(img.convert("RGB")))
    except (UnidentifiedImageError, OSError) as exc:
        raise StorageError(f"{path}: cannot read image ({exc})") from exc


def save_image(image: RasterImage, path: str | Path) -> None:
    """Write ``image`` as PNG."""
    path = Path(path)
    if path.suffix.lower() != ".png":
        raise StorageError(f"{path}: only PNG output is supported")
    if image.width == 0 or image.height == 0:
        raise StorageError(f"{path}: cannot save an empty {image.width}x{image.height} image")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.writable_pixels()).save(path, format="PNG")


# ------------------------------------------------------------
#  REORGANIZATION PLANS
# ------------------------------------------------------------


def save_plan(plan: "ReorgPlan") -> bytes:
    return json.dumps(plan.to_dict(), indent=2).encode("utf-8")


def load_plan(data: bytes | str) -> "ReorgPlan":
    from pipelines import ReorgPlan

    payload = _load_json_bytes(data)
    if not isinstance(payload, Mapping):
        raise StorageError("plan JSON must be an object")
    return ReorgPlan.from_dict(payload)
