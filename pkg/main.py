"""Command-line entry point for layoutkit.

Every subcommand reads files and writes files; messages go to stderr only.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, TypeVar

import ocr
import pipelines
import registry
import storage
import viz
from config_models import CliConfig, ReorgParams, TableParams
from errors import LayoutError, LayoutkitError, StorageError
from geometry import RasterImage
from layout import READING_ORDERS, Layout

logger = logging.getLogger("layoutkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_SETTINGS = Path("settings.json")
T = TypeVar("T")


class UsageError(Exception):
    """Bad command-line usage (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------
#  ARGUMENTS
# ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="layoutkit", description="Document image layout analysis toolkit.")
    parser.add_argument("--config", type=Path, default=None, help="Settings JSON (default: ./settings.json if present).")
    parser.add_argument("--registry-root", type=Path, default=None, help="Model registry directory.")
    parser.add_argument("--output-dir", type=Path, default=None, help="Directory relative output paths resolve under.")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None)
    parser.add_argument("--jobs", type=int, default=None, help="Worker threads for multi-page inputs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="Look up a model's detections for one or more images.")
    p.add_argument("--model", required=True, help="lp://<dataset>/<model>[/<resource>]")
    p.add_argument("--image-id", type=int, nargs="+", required=True)
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.add_argument("--out", required=True, help="Layout JSON; use {image_id} when several ids are given.")

    p = sub.add_parser("viz", help="Render a layout over its page or as recreated text.")
    p.add_argument("--mode", choices=["boxes", "texts"], required=True)
    p.add_argument("--layout", type=Path, required=True)
    p.add_argument("--image", type=Path, default=None)
    p.add_argument("--show-score", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("tables", help="Extract ruled tables from pages.")
    p.add_argument("--image", type=Path, nargs="+", required=True)
    p.add_argument("--detections", type=Path, nargs="+", required=True, help="Layout JSON or COCO results per page.")
    p.add_argument("--ocr", type=Path, nargs="+", required=True, help="Tesseract TSV per page.")
    p.add_argument("--categories", type=Path, default=None, help="COCO categories for results files.")
    p.add_argument("--image-id", type=int, default=None, help="Image id to read from COCO results files.")
    p.add_argument("--concat", action="store_true", help="Join the tables of all pages into one.")
    p.add_argument("--delimiter", default=" ", help="Joins the tokens of a cell.")
    p.add_argument("--out", required=True)

    p = sub.add_parser("reorg", help="Pack token crops onto a dense canvas for one OCR pass.")
    p.add_argument("--layout", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--max-height", type=float, default=None)
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--canvas-width", type=float, default=None)
    p.add_argument("--reading-order", choices=[*READING_ORDERS, "none"], default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--plan", required=True)

    p = sub.add_parser("remap", help="Move OCR words from the dense canvas back to the page.")
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--ocr", type=Path, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("convert", help="Convert between COCO, layout JSON and CSV.")
    p.add_argument("--from", dest="src_format", choices=["coco", "json"], required=True)
    p.add_argument("--to", dest="dst_format", choices=["json", "csv"], required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--kind", choices=["results", "dataset"], default="results")
    p.add_argument("--categories", type=Path, default=None)
    p.add_argument("--out", required=True, help="Use {image_id} when the COCO input holds several images.")
    return parser


# ------------------------------------------------------------
#  HELPERS
# ------------------------------------------------------------


class Context:
    """Resolved configuration for one invocation."""

    def __init__(self, args: argparse.Namespace, config: CliConfig) -> None:
        self.args = args
        self.config = config
        self.output_dir = Path(args.output_dir or config.output_dir)
        self.jobs = args.jobs if args.jobs is not None else config.jobs
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")

    def out_path(self, value: str | Path, **fields: Any) -> Path:
        path = Path(str(value).format(**fields)) if fields else Path(value)
        return path if path.is_absolute() else self.output_dir / path

    def registry_root(self) -> Path:
        if self.args.registry_root is not None:
            return self.args.registry_root
        env = os.getenv(registry.REGISTRY_ENV)
        if env:
            return Path(env)
        if self.config.registry_root:
            return Path(self.config.registry_root)
        return registry.BUNDLED_ROOT

    def fan_out(self, func: Callable[[Any], T], items: Sequence[Any]) -> List[T]:
        if self.jobs == 1 or len(items) < 2:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(func, items))


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    logger.info("wrote %s", path)


def _check_out_template(template: str, count: int) -> None:
    if count > 1 and "{image_id}" not in template:
        raise UsageError("--out needs an {image_id} placeholder when several images are written")


def _load_detections(path: Path, categories: storage.CategoryMap | None, image_id: int | None) -> Layout:
    data = path.read_bytes()
    if not data.lstrip(b"\xef\xbb\xbf \t\r\n").startswith(b"["):
        return storage.load_json(data)
    layouts = storage.load_coco(data, kind="results", categories=categories)
    if image_id is None:
        if len(layouts) > 1:
            raise StorageError(f"{path} holds {len(layouts)} images; pick one with --image-id")
        return next(iter(layouts.values()), Layout())
    return layouts.get(image_id, Layout())


def _canvas_size(layout: Layout, image: RasterImage | None) -> tuple[int, int]:
    if image is not None:
        return image.size
    info = layout.page_info or {}
    if info.get("width") and info.get("height"):
        return int(info["width"]), int(info["height"])
    box = layout.bounding_box()
    if box is None:
        raise LayoutError("cannot size an empty layout without --image or page_info width/height")
    return math.ceil(box.x2), math.ceil(box.y2)


# ------------------------------------------------------------
#  SUBCOMMANDS
# ------------------------------------------------------------


def cmd_detect(ctx: Context) -> None:
    args = ctx.args
    _check_out_template(args.out, len(args.image_id))
    index = registry.load_index(ctx.registry_root())
    uri = registry.parse_model_uri(args.model)

    def _one(image_id: int) -> None:
        layout = registry.detect(index, uri, image_id, args.score_threshold)
        _write(ctx.out_path(args.out, image_id=image_id), storage.export_json(layout))

    ctx.fan_out(_one, args.image_id)


def cmd_viz(ctx: Context) -> None:
    args = ctx.args
    layout = storage.load_json(args.layout.read_bytes())
    image = storage.load_image(args.image) if args.image else None
    style = viz.DrawStyle.from_dict({**ctx.config.viz, **({"show_score": True} if args.show_score else {})})
    if args.mode == "boxes":
        if image is None:
            raise UsageError("--mode boxes needs --image")
        rendered = viz.draw_boxes(image, layout, style)
    else:
        rendered = viz.draw_texts(layout, _canvas_size(layout, image), style)
    out = ctx.out_path(args.out)
    storage.save_image(rendered, out)
    logger.info("wrote %s", out)


def cmd_tables(ctx: Context) -> None:
    args = ctx.args
    if not len(args.image) == len(args.detections) == len(args.ocr):
        raise UsageError("--image, --detections and --ocr need one entry per page")
    params: TableParams = ctx.config.tables
    categories = storage.load_categories(args.categories.read_bytes()) if args.categories else None

    def _page(number: int) -> List[pipelines.TableStructure]:
        index = number - 1
        image = storage.load_image(args.image[index])
        detections = _load_detections(args.detections[index], categories, args.image_id)
        tokens = ocr.parse_tesseract_tsv(args.ocr[index].read_bytes())
        tables = pipelines.extract_tables(image, detections, tokens, params)
        logger.info("page %d: %d tables", number, len(tables))
        return [replace(t, page=number, row_pages=()) for t in tables]

    per_page = ctx.fan_out(_page, list(range(1, len(args.image) + 1)))
    tables = [t for page_tables in per_page for t in page_tables]
    if args.concat and tables:
        tables = [pipelines.concat_tables(tables, [t.page for t in tables])]
    _write(ctx.out_path(args.out), storage.export_table_csv(tables, args.delimiter))


def cmd_reorg(ctx: Context) -> None:
    args = ctx.args
    defaults: ReorgParams = ctx.config.reorg
    tokens = storage.load_json(args.layout.read_bytes())
    image = storage.load_image(args.image)
    order = args.reading_order or defaults.reading_order
    if order != "none":
        tokens = tokens.sort_reading_order(order)
    plan = pipelines.plan_reorganization(
        tokens,
        max_height=args.max_height if args.max_height is not None else defaults.max_height,
        gap=args.gap if args.gap is not None else defaults.gap,
        canvas_width=args.canvas_width if args.canvas_width is not None else defaults.canvas_width,
    )
    dense = pipelines.render_reorganized(plan, image)
    out = ctx.out_path(args.out)
    storage.save_image(dense, out)
    _write(ctx.out_path(args.plan), storage.save_plan(plan))


def cmd_remap(ctx: Context) -> None:
    args = ctx.args
    plan = storage.load_plan(args.plan.read_bytes())
    words = ocr.parse_tesseract_tsv(args.ocr.read_bytes())
    restored = pipelines.remap_ocr_results(plan, words)
    _write(ctx.out_path(args.out), storage.export_json(restored))


def cmd_convert(ctx: Context) -> None:
    args = ctx.args
    data = args.input.read_bytes()
    export = storage.export_json if args.dst_format == "json" else storage.export_csv
    if args.src_format == "json":
        _write(ctx.out_path(args.out), export(storage.load_json(data)))
        return
    categories = storage.load_categories(args.categories.read_bytes()) if args.categories else None
    layouts = storage.load_coco(data, kind=args.kind, categories=categories)
    _check_out_template(args.out, len(layouts))
    for image_id in sorted(layouts):
        _write(ctx.out_path(args.out, image_id=image_id), export(layouts[image_id]))


COMMANDS: Dict[str, Callable[[Context], None]] = {
    "detect": cmd_detect,
    "viz": cmd_viz,
    "tables": cmd_tables,
    "reorg": cmd_reorg,
    "remap": cmd_remap,
    "convert": cmd_convert,
}


# ------------------------------------------------------------
#  ENTRY POINT
# ------------------------------------------------------------


_HANDLER_FLAG = "_layoutkit_handler"


def _configure_logging(level: str) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, _HANDLER_FLAG, False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    setattr(handler, _HANDLER_FLAG, True)
    root.addHandler(handler)
    root.setLevel(level)


def _load_config(path: Path | None) -> CliConfig:
    if path is None:
        return CliConfig.load(DEFAULT_SETTINGS if DEFAULT_SETTINGS.exists() else None)
    if not path.exists():
        raise UsageError(f"settings file not found: {path}")
    return CliConfig.load(path)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    _configure_logging(args.log_level or "INFO")
    try:
        config = _load_config(args.config)
        if args.log_level is None:
            _configure_logging(config.log_level)
        COMMANDS[args.command](Context(args, config))
    except UsageError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (LayoutkitError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
