"""Tests for pipelines.py: suppression, rulings, table extraction and reorganization."""

import numpy as np
import pytest

import bitmap_font
import geometry
from config_models import TableParams
from errors import PipelineError
from geometry import RasterImage, Rectangle
from layout import Layout, TextBlock
from ocr import TemplateOcrAgent
from pipelines import (
    Placement,
    ReorgPlan,
    TableStructure,
    assign_to_regions,
    cluster_rows,
    concat_tables,
    detect_rulings,
    extract_tables,
    nms_blocks,
    ocr_regions,
    plan_reorganization,
    remap_ocr_results,
    render_reorganized,
    suppress_close_rows,
)
from synthetic import _word_blocks, random_tokens, ruled_table_page, text_page


def _scored(x1, y1, x2, y2, score, **kwargs):
    return TextBlock(Rectangle(x1, y1, x2, y2), score=score, **kwargs)


# ------------------------------------------------------------
#  NMS
# ------------------------------------------------------------


def test_nms_examples():
    layout = Layout(
        (
            _scored(0, 0, 10, 10, 0.6, id=0),
            _scored(1, 0, 11, 10, 0.9, id=1),
            _scored(50, 50, 60, 60, 0.5, id=2),
        )
    )
    assert [b.id for b in nms_blocks(layout)] == [1, 2]
    assert [b.id for b in nms_blocks(layout, iou_threshold=0.95)] == [0, 1, 2]


def test_nms_ties_keep_the_earlier_block():
    layout = Layout((_scored(0, 0, 10, 10, 0.7, id=5), _scored(0, 0, 10, 10, 0.7, id=6)))
    assert [b.id for b in nms_blocks(layout)] == [5]


def test_nms_empty_and_missing_score():
    assert len(nms_blocks(Layout())) == 0
    with pytest.raises(PipelineError, match="no score"):
        nms_blocks(Layout((TextBlock(Rectangle(0, 0, 1, 1), id=3),)))


def _reference_nms(blocks, threshold):
    order = sorted(range(len(blocks)), key=lambda i: -blocks[i].score)
    kept = []
    for i in order:
        if all(geometry.iou(blocks[i].block, blocks[k].block) < threshold for k in kept):
            kept.append(i)
    return sorted(kept)


def test_nms_matches_reference_greedy(rng):
    for _ in range(500):
        blocks = []
        for index in range(rng.randint(1, 8)):
            x, y = rng.randint(0, 40), rng.randint(0, 40)
            blocks.append(_scored(x, y, x + rng.randint(1, 30), y + rng.randint(1, 30), rng.choice([0.1, 0.5, 0.5, 0.8, 0.95]), id=index))
        threshold = rng.choice([0.3, 0.5, 0.7])
        kept = nms_blocks(Layout(tuple(blocks)), threshold).flatten()
        assert [b.id for b in kept] == _reference_nms(blocks, threshold)
        for a in kept:
            for b in kept:
                if a.id != b.id:
                    assert geometry.iou(a.block, b.block) < threshold


# ------------------------------------------------------------
#  RULINGS AND ROWS
# ------------------------------------------------------------


def _canvas(width=200, height=100):
    return np.full((height, width, 3), 255, dtype=np.uint8)


def test_blank_region_has_no_rulings():
    assert detect_rulings(RasterImage(_canvas()), Rectangle(0, 0, 200, 100)) == []


def test_vertical_rulings_positions():
    pixels = _canvas()
    pixels[:, 50] = 0
    pixels[:, 120] = 0
    pixels[:, 160:162] = 0
    image = RasterImage(pixels)
    assert detect_rulings(image, Rectangle(0, 0, 200, 100)) == [50.0, 120.0, 160.5]
    assert detect_rulings(image, Rectangle(40, 0, 130, 100)) == [50.0, 120.0]


def test_broken_line_is_not_a_ruling():
    pixels = _canvas()
    pixels[0:45, 80] = 0
    pixels[55:100, 80] = 0
    image = RasterImage(pixels)
    assert detect_rulings(image, Rectangle(0, 0, 200, 100)) == []
    assert detect_rulings(image, Rectangle(0, 0, 200, 100), min_run_fraction=0.4) == [80.0]


def test_horizontal_rulings():
    pixels = _canvas()
    pixels[30, :] = 0
    pixels[70, 10:30] = 0
    assert detect_rulings(RasterImage(pixels), Rectangle(0, 0, 200, 100), "horizontal") == [30.0]


def test_ruling_arguments_are_validated():
    image = RasterImage(_canvas())
    with pytest.raises(PipelineError):
        detect_rulings(image, Rectangle(300, 300, 400, 400))
    with pytest.raises(PipelineError):
        detect_rulings(image, Rectangle(0, 0, 10, 10), "diagonal")
    with pytest.raises(PipelineError):
        detect_rulings(image, Rectangle(0, 0, 10, 10), min_run_fraction=0)


def test_cluster_rows_example():
    tokens = Layout(
        (
            TextBlock(Rectangle(0, 35, 10, 45)),
            TextBlock(Rectangle(0, 5, 10, 15)),
            TextBlock(Rectangle(20, 9, 30, 19)),
        )
    )
    assert cluster_rows(tokens, 5) == [(5, 19), (35, 45)]
    assert cluster_rows(tokens, 30) == [(5, 45)]
    assert cluster_rows(Layout(), 5) == []


def test_suppress_close_rows():
    assert suppress_close_rows([(30, 40), (0, 10), (11, 20)]) == [(0, 20), (30, 40)]
    assert suppress_close_rows([(0, 10), (13, 20)]) == [(0, 10), (13, 20)]


def test_suppressed_rows_keep_minimum_gap(rng):
    for _ in range(200):
        bands = []
        for _ in range(rng.randint(0, 10)):
            top = rng.uniform(0, 200)
            bands.append((top, top + rng.uniform(0, 20)))
        merged = suppress_close_rows(bands, 3.0)
        for (_, bottom), (top, _) in zip(merged, merged[1:]):
            assert top - bottom >= 3.0


# ------------------------------------------------------------
#  TABLES
# ------------------------------------------------------------


def test_extract_tables_recovers_synthetic_tables(rng):
    for _ in range(100):
        page = ruled_table_page(rng)
        tables = extract_tables(page.image, page.detections, page.tokens)
        assert len(tables) == 1
        table = tables[0]
        assert table.region == page.region
        assert table.n_cols == page.n_cols
        assert table.n_rows == page.n_rows
        assert table.cell_texts() == page.truth
        assert list(table.column_separators) == [float(x) for x in page.column_edges[1:-1]]
        for r, row in enumerate(table.cells):
            for c, cell in enumerate(row):
                assert all(page.assignments[t.id] == (r, c) for t in cell)
        # the title word sits above the table
        assert sum(len(cell) for row in table.cells for cell in row) == len(page.tokens) - 1


def test_extract_tables_without_table_detections(rng):
    page = ruled_table_page(rng, n_cols=2, n_rows=3)
    assert extract_tables(page.image, Layout(), page.tokens) == []
    low = page.detections.filter(lambda b: b.id == 1)
    assert extract_tables(page.image, low, page.tokens) == []


def test_missing_rulings_give_a_single_column(rng):
    page = ruled_table_page(rng, n_cols=3, n_rows=4, scale=1)
    blank = RasterImage.blank(page.image.width, page.image.height)
    tables = extract_tables(blank, page.detections, page.tokens)
    assert tables[0].n_cols == 1
    assert tables[0].n_rows == 4
    assert [row[0] for row in tables[0].cell_texts()] == [" ".join(row) for row in page.truth]


def _ruled_grid():
    """Three ruled columns (x = 10, 50, 90, 130) and two ruled rows."""
    pixels = np.full((110, 140, 3), 255, dtype=np.uint8)
    for x in (10, 50, 90, 130):
        pixels[10:101, x] = 0
    for y in (10, 55, 100):
        pixels[y, 10:131] = 0
    detections = Layout((TextBlock(Rectangle(8, 8, 132, 102), category="table", score=0.9),))
    return RasterImage(pixels), detections


def _cell_words(dx):
    return Layout(
        (
            TextBlock(Rectangle(15 + dx, 25, 30 + dx, 35), text="a"),
            TextBlock(Rectangle(55 + dx, 25, 70 + dx, 35), text="b"),
            TextBlock(Rectangle(15 + dx, 70, 30 + dx, 80), text="c"),
            TextBlock(Rectangle(55 + dx, 70, 70 + dx, 80), text="d"),
        )
    )


def test_empty_last_column_keeps_its_separator():
    image, detections = _ruled_grid()
    (table,) = extract_tables(image, detections, _cell_words(0))
    assert table.column_separators == (50.0, 90.0)
    assert table.n_cols == 3
    assert table.cell_texts() == [["a", "b", ""], ["c", "d", ""]]


def test_empty_first_column_keeps_its_separator():
    image, detections = _ruled_grid()
    (table,) = extract_tables(image, detections, _cell_words(40))
    assert table.n_cols == 3
    assert table.row_bands == ((25.0, 35.0), (70.0, 80.0))
    assert table.cell_texts() == [["", "a", "b"], ["", "c", "d"]]


def test_row_gap_parameter_overrides_median(rng):
    page = ruled_table_page(rng, n_cols=2, n_rows=5, scale=1)
    merged = extract_tables(page.image, page.detections, page.tokens, TableParams(row_gap=1000.0))
    assert merged[0].n_rows == 1


def _table(region, bands, texts, page=None, separators=(50.0,)):
    cells = tuple(
        tuple(tuple(TextBlock(Rectangle(1, 1, 2, 2), text=t) for t in ([cell] if cell else [])) for cell in row)
        for row in texts
    )
    return TableStructure(region, separators, bands, cells, page=page)


def test_table_structure_validation():
    with pytest.raises(PipelineError):
        _table(Rectangle(0, 0, 10, 10), ((0, 5),), [["a"]])
    with pytest.raises(PipelineError):
        TableStructure(Rectangle(0, 0, 10, 10), (5.0, 2.0), (), ())


def test_concat_tables_rebases_rows():
    first = _table(Rectangle(0, 0, 100, 50), ((0, 10), (10, 20)), [["a", "b"], ["c", ""]], page=1)
    second = _table(Rectangle(0, 100, 100, 130), ((100, 110),), [["d", "e"]], page=2)
    joined = concat_tables([second, first])
    assert joined.row_bands == ((0, 10), (10, 20), (50, 60))
    assert joined.row_pages == (1, 1, 2)
    assert joined.region == Rectangle(0, 0, 100, 80)
    assert joined.cell_texts() == [["a", "b"], ["c", ""], ["d", "e"]]
    assert concat_tables([first]) is first


def test_concat_tables_rejects_column_mismatch():
    first = _table(Rectangle(0, 0, 100, 50), ((0, 10),), [["a", "b"]], page=1)
    other = _table(Rectangle(0, 0, 100, 50), ((0, 10),), [["a", "b", "c"]], page=3, separators=(30.0, 60.0))
    with pytest.raises(PipelineError, match="page 3"):
        concat_tables([first, other])
    with pytest.raises(PipelineError):
        concat_tables([])
    with pytest.raises(PipelineError):
        concat_tables([first], pages=[1, 2])


# ------------------------------------------------------------
#  REORGANIZATION
# ------------------------------------------------------------


def test_plan_packs_lines():
    tokens = Layout((TextBlock(Rectangle(0, 0, 20, 10)), TextBlock(Rectangle(40, 40, 50, 60))))
    plan = plan_reorganization(tokens, max_height=20, gap=4, canvas_width=30)
    assert [p.target for p in plan.placements] == [Rectangle(0, 5, 20, 15), Rectangle(0, 24, 10, 44)]
    assert plan.canvas == (30.0, 48.0)


def test_plan_wraps_at_canvas_width():
    tokens = Layout(tuple(TextBlock(Rectangle(50 * i, 0, 50 * i + 40, 20)) for i in range(3)))
    plan = plan_reorganization(tokens, max_height=20, gap=0, canvas_width=100)
    assert [p.target.origin for p in plan.placements] == [(0, 0), (40, 0), (0, 20)]
    assert plan.canvas == (100.0, 40.0)


def test_plan_shrinks_tall_tokens():
    plan = plan_reorganization(Layout((TextBlock(Rectangle(0, 0, 10, 30)),)), max_height=20, gap=0)
    target = plan.placements[0].target
    assert target.height == 20
    assert target.width == pytest.approx(20 / 3)


def test_plan_rejects_oversized_token():
    with pytest.raises(PipelineError, match="'wide'"):
        plan_reorganization(Layout((TextBlock(Rectangle(0, 0, 500, 10), text="wide"),)), max_height=10, canvas_width=100)


def test_plan_of_empty_layout():
    plan = plan_reorganization(Layout(), max_height=10)
    assert plan.placements == ()
    assert plan.canvas[1] == 0
    assert render_reorganized(plan, RasterImage.blank(5, 5)).height == 0


def test_plan_properties_and_remap_inverse(rng):
    for _ in range(200):
        tokens = random_tokens(rng, rng.randint(1, 40))
        plan = plan_reorganization(tokens, max_height=32, gap=4, canvas_width=1200)
        canvas = Rectangle(0, 0, *plan.canvas)
        targets = [p.target for p in plan.placements]
        assert len(targets) == len(tokens)
        for p in plan.placements:
            assert geometry.is_in(p.target, canvas)
            assert p.target.height <= 32
            assert p.target.width / p.target.height == pytest.approx(p.source.width / p.source.height)
        for i, a in enumerate(targets):
            for b in targets[i + 1 :]:
                assert geometry.intersect(a, b).area == 0
        words = Layout(tuple(TextBlock(t, text=str(i)) for i, t in enumerate(targets)))
        remapped = remap_ocr_results(plan, words)
        assert remapped.page_info["dropped_words"] == 0
        for word, token in zip(remapped, tokens):
            assert np.allclose(word.block.bounds, token.block.bounds, atol=1e-6)


def test_render_blits_crops():
    ys, xs = np.mgrid[0:40, 0:40]
    image = RasterImage(np.stack([xs * 6, ys * 6, (xs * ys) % 256], axis=-1).astype(np.uint8))
    tokens = Layout((TextBlock(Rectangle(5, 5, 15, 12)), TextBlock(Rectangle(20, 10, 26, 17))))
    plan = plan_reorganization(tokens, max_height=7, gap=2, canvas_width=40)
    out = render_reorganized(plan, image)
    assert out.size == (40, 9)
    assert np.array_equal(out.pixels[0:7, 0:10], image.pixels[5:12, 5:15])
    assert np.array_equal(out.pixels[0:7, 12:18], image.pixels[10:17, 20:26])
    assert np.all(out.pixels[7:] == 255)
    assert np.all(out.pixels[:, 10:12] == 255)


def test_remap_drops_words_outside_every_target():
    plan = ReorgPlan((100.0, 20.0), (Placement(0, Rectangle(50, 50, 70, 70), Rectangle(0, 0, 10, 10)),), 10.0, 2.0)
    words = Layout((TextBlock(Rectangle(2, 2, 4, 4), text="in"), TextBlock(Rectangle(50, 2, 60, 8), text="out")))
    remapped = remap_ocr_results(plan, words)
    assert remapped.get_texts() == ["in"]
    assert remapped[0].block == Rectangle(54, 54, 58, 58)
    assert remapped.page_info["dropped_words"] == 1


@pytest.mark.parametrize("scale", [1, 2])
def test_reorganized_page_reads_back_through_ocr(rng, scale):
    page = text_page(rng, 30, scale=scale)
    plan = plan_reorganization(page.tokens, max_height=7 * scale, gap=6 * scale, canvas_width=600)
    dense = render_reorganized(plan, page.image)
    words = TemplateOcrAgent(scale=scale).detect(dense)
    remapped = remap_ocr_results(plan, words)
    assert remapped.get_texts() == page.tokens.get_texts()
    for word, token in zip(remapped, page.tokens):
        assert np.allclose(word.block.bounds, token.block.bounds)


def test_invalid_plans_raise():
    with pytest.raises(PipelineError, match="leaves the canvas"):
        ReorgPlan((10.0, 10.0), (Placement(0, Rectangle(0, 0, 5, 5), Rectangle(8, 8, 13, 13)),), 5.0, 0.0)
    with pytest.raises(PipelineError, match="placed twice"):
        ReorgPlan(
            (10.0, 10.0),
            (Placement(0, Rectangle(0, 0, 1, 1), Rectangle(0, 0, 1, 1)), Placement(0, Rectangle(0, 0, 1, 1), Rectangle(2, 2, 3, 3))),
            5.0,
            0.0,
        )
    with pytest.raises(PipelineError):
        ReorgPlan.from_dict({"canvas": [10, 10], "placements": [{"token_index": 0}], "max_height": 5, "gap": 0})
    with pytest.raises(PipelineError):
        ReorgPlan.from_dict({"placements": []})


# ------------------------------------------------------------
#  REGIONS
# ------------------------------------------------------------


def test_assign_to_regions_then_group():
    regions = Layout(
        (
            TextBlock(Rectangle(0, 0, 100, 50), category="table", id=10),
            TextBlock(Rectangle(0, 60, 100, 100), category="text", id=20),
        )
    )
    tokens = Layout(
        (
            TextBlock(Rectangle(5, 5, 15, 10), text="a", id=0),
            TextBlock(Rectangle(5, 70, 15, 80), text="b", id=1),
            TextBlock(Rectangle(200, 200, 210, 210), text="lost", id=2),
            TextBlock(Rectangle(20, 5, 30, 10), text="c", id=3),
        )
    )
    assigned = assign_to_regions(tokens, regions)
    assert [(b.id, b.parent, b.text) for b in assigned] == [
        (10, None, None),
        (20, None, None),
        (21, 10, "a"),
        (22, 20, "b"),
        (23, 10, "c"),
    ]
    grouped = assigned.group_by_parent()
    assert [g.anchor.id for g in grouped] == [10, 20]
    assert grouped[0].get_texts() == ["a", "c"]


def test_ocr_regions_lifts_words_to_page_coordinates():
    pixels = np.full((60, 200, 3), 255, dtype=np.uint8)
    bitmap_font.render_text(pixels, "AB", 10, 10)
    bitmap_font.render_text(pixels, "CD 12", 100, 30)
    regions = Layout(
        (
            TextBlock(Rectangle(5, 5, 60, 25), category="text", id=1),
            TextBlock(Rectangle(95, 25, 190, 45), category="text", id=2),
            TextBlock(Rectangle(0, 50, 200, 60), category="figure", id=3),
        )
    )
    words = ocr_regions(RasterImage(pixels), regions, TemplateOcrAgent(), category="text")
    expected = _word_blocks("AB", 10, 10, 1, 0) + _word_blocks("CD 12", 100, 30, 1, 1)
    assert words.get_texts() == ["AB", "CD", "12"]
    assert [w.block for w in words] == [b.block for b in expected]
    assert [w.parent for w in words] == [1, 2, 2]
    assert [w.id for w in words] == [0, 1, 2]
