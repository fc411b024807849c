"""Tests for storage.py: layout JSON/CSV, COCO ingestion, images and plans."""

import csv
import io
import json

import numpy as np
import pytest
from PIL import Image

import storage
from errors import StorageError
from geometry import Interval, Quadrilateral, RasterImage, Rectangle
from layout import Layout, TextBlock
from pipelines import Placement, ReorgPlan, TableStructure


def _random_coordinate(rng):
    kind = rng.choice(["interval", "rectangle", "quadrilateral"])
    a, b = sorted(round(rng.uniform(0, 500), 2) for _ in range(2))
    c, d = sorted(round(rng.uniform(0, 500), 2) for _ in range(2))
    if kind == "interval":
        canvas = rng.choice([None, 600])
        return Interval(a, b, rng.choice(["horizontal", "vertical"]), canvas, canvas)
    if kind == "rectangle":
        return Rectangle(a, c, b, d)
    return Quadrilateral(((a, c), (b, c), (b, d), (a, d)))


def _random_layout(rng, depth=0):
    elements = []
    ids = iter(rng.sample(range(1000), 12))
    for _ in range(rng.randint(0, 5)):
        if depth == 0 and rng.random() < 0.2:
            nested = _random_layout(rng, depth=1)
            anchor = TextBlock(Rectangle(0, 0, 1, 1), id=next(ids) + 5000) if rng.random() < 0.5 else None
            elements.append(nested.copy_with_updates(anchor=anchor))
            continue
        elements.append(
            TextBlock(
                _random_coordinate(rng),
                text=rng.choice([None, "", "ünïcode", "a,b", "plain"]),
                category=rng.choice([None, "text", "table"]),
                score=rng.choice([None, 0.0, 0.5, 0.97, 1.0]),
                id=rng.choice([None, next(ids)]),
                parent=rng.choice([None, 3]),
                next=rng.choice([None, 4]),
            )
        )
    page_info = rng.choice([None, {"page_number": 1}, {"width": 600, "height": 800}])
    return Layout(tuple(elements), page_info=page_info)


# ------------------------------------------------------------
#  JSON
# ------------------------------------------------------------


def test_export_empty_layout():
    assert storage.export_json(Layout()) == b'{"page_info":null,"elements":[]}'


def test_export_key_order_and_rounding():
    block = TextBlock(Rectangle(1.234, 2, 3.005, 4), text="hi", category="text", score=0.5, id=1)
    data = json.loads(storage.export_json(Layout((block,))))
    element = data["elements"][0]
    assert list(element) == ["block_type", "x_1", "y_1", "x_2", "y_2", "text", "category", "score", "id"]
    assert element["x_1"] == 1.23
    assert element["y_1"] == 2 and isinstance(element["y_1"], int)


def test_json_round_trip(rng):
    for _ in range(1000):
        layout = _random_layout(rng)
        assert storage.load_json(storage.export_json(layout)) == layout


def test_json_round_trip_of_nested_layout():
    child = TextBlock(Rectangle(2, 2, 4, 4), text="cell", id=2, parent=1)
    nested = Layout((child,), anchor=TextBlock(Rectangle(0, 0, 10, 10), category="table", id=1))
    layout = Layout((nested,), page_info={"image_id": 7})
    data = json.loads(storage.export_json(layout))
    assert data["elements"][0]["block_type"] == "layout"
    assert data["elements"][0]["anchor"]["id"] == 1
    assert storage.load_json(storage.export_json(layout)) == layout


def test_load_json_names_bad_element():
    payload = {"page_info": None, "elements": [{"block_type": "circle", "r": 2}]}
    with pytest.raises(StorageError, match=r"elements\[0\].*circle"):
        storage.load_json(json.dumps(payload))


def test_load_json_reports_missing_field():
    payload = {"elements": [{"block_type": "rectangle", "x_1": 0, "y_1": 0, "y_2": 1}]}
    with pytest.raises(StorageError, match="x_2"):
        storage.load_json(json.dumps(payload))


@pytest.mark.parametrize("score", ["high", [0.5], {"value": 1}])
def test_load_json_names_element_with_bad_score(score):
    good = {"block_type": "rectangle", "x_1": 0, "y_1": 0, "x_2": 1, "y_2": 1}
    payload = {"elements": [good, {**good, "score": score}]}
    with pytest.raises(StorageError, match=r"^elements\[1\]: "):
        storage.load_json(json.dumps(payload))


def test_load_json_names_element_with_bad_coordinate():
    payload = {"elements": [{"block_type": "rectangle", "x_1": "left", "y_1": 0, "x_2": 1, "y_2": 1}]}
    with pytest.raises(StorageError, match=r"^elements\[0\]: "):
        storage.load_json(json.dumps(payload))


def test_load_json_rejects_invalid_geometry_and_text():
    with pytest.raises(StorageError):
        storage.load_json('{"elements": [{"block_type": "rectangle", "x_1": 5, "y_1": 0, "x_2": 1, "y_2": 1}]}')
    with pytest.raises(StorageError):
        storage.load_json("not json")


def test_load_json_accepts_bom():
    text = "\ufeff" + storage.export_json(Layout()).decode("utf-8")
    assert storage.load_json(text.encode("utf-8")) == Layout()


# ------------------------------------------------------------
#  CSV
# ------------------------------------------------------------


def test_export_csv_header_only():
    assert storage.export_csv(Layout()) == b"id,category,score,text,x_1,y_1,x_2,y_2,parent,next\r\n"


def test_export_csv_rows():
    quad = Quadrilateral(((2, 1), (10, 3), (9, 12), (1, 10)))
    layout = Layout(
        (
            TextBlock(Rectangle(0, 0, 10.5, 5), text="a,b", category="text", score=0.9, id=1, next=2),
            TextBlock(quad, id=2, parent=1),
            TextBlock(Interval(3, 4), id=3),
        )
    )
    rows = list(csv.reader(io.StringIO(storage.export_csv(layout).decode("utf-8"))))
    assert rows[1] == ["1", "text", "0.9", "a,b", "0", "0", "10.5", "5", "", "2"]
    assert rows[2] == ["2", "", "", "", "1", "1", "10", "12", "1", ""]
    assert rows[3] == ["3", "", "", "", "3", "", "4", "", "", ""]


def test_export_csv_adds_page_id():
    layout = Layout((TextBlock(Rectangle(0, 0, 1, 1), id=0),), page_info={"page_number": 4})
    rows = list(csv.reader(io.StringIO(storage.export_csv(layout).decode("utf-8"))))
    assert rows[0][-1] == "page_id"
    assert rows[1][-1] == "4"


def test_export_table_csv():
    token = lambda text, x: TextBlock(Rectangle(x, 0, x + 5, 5), text=text)  # noqa: E731
    table = TableStructure(
        Rectangle(0, 0, 100, 20),
        (50.0,),
        ((0, 10), (10, 20)),
        (((token("a", 1), token("b", 8)), (token("c", 60),)), ((), (token("d", 60),))),
    )
    assert storage.export_table_csv([table]) == b"0,0,a b,c\r\n0,1,,d\r\n"
    assert storage.export_table_csv([table], cell_delimiter="|").startswith(b"0,0,a|b,c")


# ------------------------------------------------------------
#  COCO
# ------------------------------------------------------------

CATEGORIES = [{"id": 1, "name": "text"}, {"id": 4, "name": "table"}]


def test_load_coco_results_example():
    records = [{"image_id": 1, "category_id": 4, "bbox": [10, 20, 30, 40], "score": 0.9}]
    layouts = storage.load_coco(json.dumps(records), categories=storage.CategoryMap.from_coco(CATEGORIES))
    block = layouts[1][0]
    assert block.block == Rectangle(10, 20, 40, 60)
    assert (block.category, block.score, block.id) == ("table", 0.9, 0)
    assert layouts[1].page_info == {"image_id": 1}


def test_load_coco_results_without_categories_uses_ids():
    records = [{"image_id": 3, "category_id": 4, "bbox": [0, 0, 1, 1], "score": 0.5}]
    assert storage.load_coco(json.dumps(records))[3][0].category == "4"


def test_load_coco_unknown_category():
    records = [{"image_id": 1, "category_id": 9, "bbox": [0, 0, 1, 1], "score": 0.5}]
    with pytest.raises(StorageError, match="unknown category_id 9"):
        storage.load_coco(json.dumps(records), categories=storage.CategoryMap.from_coco(CATEGORIES))


@pytest.mark.parametrize(
    "record",
    [
        {"image_id": 1, "category_id": 1, "bbox": [0, 0, -1, 1], "score": 0.5},
        {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 1.5},
        {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1], "score": 0.5},
        {"category_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5},
    ],
)
def test_load_coco_rejects_bad_records(record):
    with pytest.raises(StorageError):
        storage.load_coco(json.dumps([record]))


@pytest.mark.parametrize(
    "field, value",
    [("image_id", "one"), ("image_id", 1.5), ("category_id", [1]), ("category_id", None), ("image_id", True)],
)
def test_load_coco_names_record_with_bad_ids(field, value):
    good = {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5}
    records = [good, {**good, field: value}]
    with pytest.raises(StorageError, match=rf"result\[1\]\.{field}"):
        storage.load_coco(json.dumps(records))


def test_load_coco_names_record_with_bad_score():
    records = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": "sure"}]
    with pytest.raises(StorageError, match=r"result\[0\]"):
        storage.load_coco(json.dumps(records))


def test_load_coco_dataset():
    dataset = {
        "images": [{"id": 1, "file_name": "a.png", "width": 100, "height": 200}, {"id": 2, "file_name": "b.png"}],
        "annotations": [
            {"id": 10, "image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10]},
            {"id": 11, "image_id": 1, "category_id": 4, "bbox": [5, 5, 20, 20], "score": 0.7},
            {"id": 12, "image_id": 2, "category_id": 1, "bbox": [1, 2, 3, 4]},
        ],
        "categories": CATEGORIES,
    }
    layouts = storage.load_coco(json.dumps(dataset), kind="dataset")
    assert sorted(layouts) == [1, 2]
    assert layouts[1].page_info == {"image_id": 1, "file_name": "a.png", "width": 100, "height": 200}
    assert [(b.id, b.category, b.score) for b in layouts[1]] == [(10, "text", None), (11, "table", 0.7)]
    assert layouts[2][0].block == Rectangle(1, 2, 4, 6)


def test_load_coco_dataset_unknown_image():
    dataset = {
        "images": [],
        "annotations": [{"image_id": 5, "category_id": 1, "bbox": [0, 0, 1, 1]}],
        "categories": CATEGORIES,
    }
    with pytest.raises(StorageError, match="unknown image_id 5"):
        storage.load_coco(json.dumps(dataset), kind="dataset")


def test_load_coco_preserves_box_areas(rng):
    records = []
    for _ in range(200):
        w, h = round(rng.uniform(0, 300), 2), round(rng.uniform(0, 300), 2)
        records.append({"image_id": 1, "category_id": 1, "bbox": [rng.randint(0, 500), rng.randint(0, 500), w, h], "score": 0.5})
    blocks = storage.load_coco(json.dumps(records))[1]
    for record, block in zip(records, blocks):
        assert block.area == pytest.approx(record["bbox"][2] * record["bbox"][3])


def test_categories_file_forms():
    as_list = storage.load_categories(json.dumps(CATEGORIES))
    as_object = storage.load_categories(json.dumps({"categories": CATEGORIES}))
    assert as_list == as_object
    assert as_list.label(4) == "table"
    with pytest.raises(StorageError):
        storage.load_categories(json.dumps([{"id": 1, "name": "a"}, {"id": 1, "name": "b"}]))


# ------------------------------------------------------------
#  IMAGES AND PLANS
# ------------------------------------------------------------


def test_image_round_trip(tmp_path):
    pixels = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    path = tmp_path / "nested" / "page.png"
    storage.save_image(RasterImage(pixels), path)
    assert storage.load_image(path) == RasterImage(pixels)


def test_save_rejects_empty_image_and_other_formats(tmp_path):
    with pytest.raises(StorageError):
        storage.save_image(RasterImage.blank(0, 0), tmp_path / "empty.png")
    with pytest.raises(StorageError):
        storage.save_image(RasterImage.blank(2, 2), tmp_path / "page.bmp")


def test_load_grayscale_png_expands_to_rgb(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.array([[0, 64], [128, 255]], dtype=np.uint8)).save(path)
    image = storage.load_image(path)
    assert image.size == (2, 2)
    assert image.pixels[1, 0].tolist() == [128, 128, 128]


def test_load_image_errors(tmp_path):
    with pytest.raises(StorageError):
        storage.load_image(tmp_path / "missing.png")
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(StorageError):
        storage.load_image(bad)


def test_plan_round_trip():
    plan = ReorgPlan(
        (100.0, 24.0),
        (Placement(0, Rectangle(5, 5, 25, 45), Rectangle(0, 0, 10, 20)),),
        20.0,
        4.0,
    )
    assert storage.load_plan(storage.save_plan(plan)) == plan
