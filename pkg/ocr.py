"""OCR agents, Tesseract TSV ingestion and text-accuracy metrics.

Every agent exposes ``detect(image) -> Layout`` returning word-level blocks
(Rectangle, text, score in [0, 1]), so engines are interchangeable in the
pipelines.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Protocol, Sequence, Tuple, runtime_checkable

import cv2
import numpy as np
from PIL import Image

import bitmap_font
import geometry
from errors import GeometryError, OcrError
from geometry import RasterImage, Rectangle, round_half_up
from layout import Layout, TextBlock

logger = logging.getLogger(__name__)

TSV_COLUMNS: Tuple[str, ...] = (
    "level",
    "page_num",
    "block_num",
    "par_num",
    "line_num",
    "word_num",
    "left",
    "top",
    "width",
    "height",
    "conf",
    "text",
)
PAGE_LEVEL, LINE_LEVEL, WORD_LEVEL = 1, 4, 5
_LEVEL_NAMES = {2: "block", 3: "paragraph", LINE_LEVEL: "line", WORD_LEVEL: "word"}


@runtime_checkable
class OcrAgent(Protocol):
    def detect(self, image: RasterImage) -> Layout:
        ...


# ------------------------------------------------------------
#  TESSERACT TSV
# ------------------------------------------------------------


@dataclass(frozen=True)
class TsvRow:
    level: int
    page_num: int
    block_num: int
    par_num: int
    line_num: int
    word_num: int
    left: int
    top: int
    width: int
    height: int
    conf: float
    text: str

    @classmethod
    def from_fields(cls, fields: Sequence[str], line_no: int) -> "TsvRow":
        if len(fields) == len(TSV_COLUMNS) - 1:
            fields = [*fields, ""]
        if len(fields) != len(TSV_COLUMNS):
            raise OcrError(f"TSV line {line_no}: expected {len(TSV_COLUMNS)} columns, got {len(fields)}")
        try:
            ints = [int(v) for v in fields[:10]]
            conf = float(fields[10])
        except ValueError as exc:
            raise OcrError(f"TSV line {line_no}: {exc}") from exc
        row = cls(*ints, conf, fields[11])
        if not PAGE_LEVEL <= row.level <= WORD_LEVEL:
            raise OcrError(f"TSV line {line_no}: level {row.level} outside 1..5")
        if row.width < 0 or row.height < 0:
            raise OcrError(f"TSV line {line_no}: negative extent {row.width}x{row.height}")
        return row

    @property
    def line_key(self) -> Tuple[int, int, int, int]:
        return self.page_num, self.block_num, self.par_num, self.line_num

    def to_rectangle(self) -> Rectangle:
        return Rectangle(self.left, self.top, self.left + self.width, self.top + self.height)


def _read_rows(data: bytes | str) -> List[TsvRow]:
    text = data.decode("utf-8-sig") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.reader(io.StringIO(text), delimiter="\t", quoting=csv.QUOTE_NONE)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TSV_COLUMNS:
        raise OcrError(f"TSV header must be {' '.join(TSV_COLUMNS)}")
    rows = []
    for line_no, fields in enumerate(reader, start=2):
        if not fields:
            continue
        rows.append(TsvRow.from_fields(fields, line_no))
    return rows


def parse_tesseract_tsv(data: bytes | str, min_level: int = WORD_LEVEL, with_lines: bool = False) -> Layout:
    """Turn Tesseract's 12-column TSV into a Layout of ``min_level`` blocks.

    Word rows (level 5) with a negative confidence are structural and skipped.
    With ``with_lines`` the line rows are emitted as well, carrying the joined
    text of their words, and each word's ``parent`` is its line's id.
    """
    if not PAGE_LEVEL <= min_level <= WORD_LEVEL:
        raise OcrError(f"min_level must be within 1..5, got {min_level}")
    rows = _read_rows(data)

    page_info: Dict[str, Any] | None = None
    for row in rows:
        if row.level == PAGE_LEVEL:
            page_info = {"page_number": row.page_num, "width": row.width, "height": row.height}
            break

    words = [r for r in rows if r.level == WORD_LEVEL and r.conf >= 0]
    emit_lines = with_lines and min_level == WORD_LEVEL
    line_ids: Dict[Tuple[int, int, int, int], int] = {}
    line_texts: Dict[Tuple[int, int, int, int], List[str]] = {}
    if emit_lines:
        for word in words:
            line_texts.setdefault(word.line_key, []).append(word.text)

    blocks: List[TextBlock] = []
    for row in rows:
        if emit_lines and row.level == LINE_LEVEL:
            line_ids[row.line_key] = len(blocks)
            text = " ".join(line_texts.get(row.line_key, []))
            blocks.append(TextBlock(row.to_rectangle(), text=text, category="line", id=len(blocks)))
            continue
        if row.level != min_level:
            continue
        if row.level == WORD_LEVEL and row.conf < 0:
            continue
        score = row.conf / 100.0 if row.conf >= 0 else None
        if score is not None and score > 1.0:
            raise OcrError(f"confidence {row.conf} above 100 for {row.text!r}")
        blocks.append(
            TextBlock(
                row.to_rectangle(),
                text=row.text,
                category=_LEVEL_NAMES.get(row.level),
                score=score,
                id=len(blocks),
                parent=line_ids.get(row.line_key) if row.level == WORD_LEVEL else None,
            )
        )
    logger.debug("parsed %d TSV rows into %d blocks", len(rows), len(blocks))
    return Layout(tuple(blocks), page_info=page_info)


def export_tesseract_tsv(layout: Layout, page_size: Tuple[int, int] | None = None, page_number: int = 1) -> bytes:
    """Write word blocks as Tesseract TSV, one level-5 row per block with text.

    Coordinates are rounded to whole pixels. Blocks without a score are written
    with confidence 100.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\", lineterminator="\n")
    writer.writerow(TSV_COLUMNS)
    if page_size is not None:
        writer.writerow([PAGE_LEVEL, page_number, 0, 0, 0, 0, 0, 0, page_size[0], page_size[1], -1, ""])
    word_num = 0
    for block in layout.flatten():
        if block.text is None:
            continue
        try:
            x1, y1, x2, y2 = geometry.coerce(block.block, Rectangle).bounds
        except GeometryError as exc:
            raise OcrError(f"block {block.id}: {exc}") from exc
        left, top = round_half_up(x1), round_half_up(y1)
        word_num += 1
        conf = 100 if block.score is None else round(block.score * 100, 2)
        writer.writerow(
            [WORD_LEVEL, page_number, 1, 1, 1, word_num, left, top,
             round_half_up(x2) - left, round_half_up(y2) - top, conf, block.text]
        )
    return buffer.getvalue().encode("utf-8")


# ------------------------------------------------------------
#  METRICS
# ------------------------------------------------------------


def char_jaccard(predicted: str, truth: str) -> float:
    """Multiset intersection over multiset union of characters (1.0 when both are empty)."""
    a, b = Counter(predicted), Counter(truth)
    union = sum((a | b).values())
    if union == 0:
        return 1.0
    return sum((a & b).values()) / union


def levenshtein(predicted: str, truth: str) -> int:
    """Unit-cost edit distance."""
    if len(predicted) < len(truth):
        predicted, truth = truth, predicted
    previous = list(range(len(truth) + 1))
    for i, pc in enumerate(predicted, start=1):
        current = [i]
        for j, tc in enumerate(truth, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (pc != tc)))
        previous = current
    return previous[-1]


@dataclass(frozen=True)
class OcrScore:
    count: int
    mean_jaccard: float
    mean_levenshtein: float


def score_ocr(pairs: Iterable[Tuple[str, str]]) -> OcrScore:
    """Average both metrics over (predicted, truth) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise OcrError("cannot score an empty set of OCR results")
    jaccard = sum(char_jaccard(p, t) for p, t in pairs) / len(pairs)
    edits = sum(levenshtein(p, t) for p, t in pairs) / len(pairs)
    return OcrScore(len(pairs), jaccard, edits)


# ------------------------------------------------------------
#  AGENTS
# ------------------------------------------------------------


class TesseractAgent:
    """Runs the local ``tesseract`` binary through pytesseract."""

    def __init__(self, lang: str = "eng", config: str = "", tesseract_cmd: str | None = None) -> None:
        self.lang = lang
        self.config = config
        self.tesseract_cmd = tesseract_cmd

    def detect(self, image: RasterImage) -> Layout:
        try:
            import pytesseract
        except ImportError as exc:
            raise OcrError("pytesseract is not installed") from exc
        if self.tesseract_cmd:
            pytesseract.pytesseract.tesseract_cmd = self.tesseract_cmd
        try:
            tsv = pytesseract.image_to_data(Image.fromarray(image.writable_pixels()), lang=self.lang, config=self.config)
        except pytesseract.TesseractNotFoundError as exc:
            raise OcrError("tesseract binary not found") from exc
        return parse_tesseract_tsv(tsv)


def true_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Half-open (start, end) index ranges of consecutive True values in a 1D mask."""
    padded = np.concatenate(([0], np.asarray(mask, dtype=np.int8), [0]))
    diff = np.diff(padded)
    return list(zip(np.flatnonzero(diff == 1).tolist(), np.flatnonzero(diff == -1).tolist()))


class TemplateOcrAgent:
    """Deterministic reader for text rendered with the bundled bitmap font.

    Lines are found by row projection and glyphs by column projection; each
    glyph is matched against the font at the agent's integer ``scale``. A
    column gap of at least ``word_gap`` glyph columns separates words. Lines are
    expected to hold at least one letter or digit so they span the full glyph
    height.
    """

    def __init__(self, scale: int = 1, ink_threshold: int = 128, word_gap: int = 5) -> None:
        if scale < 1:
            raise OcrError(f"scale must be >= 1, got {scale}")
        self.scale = scale
        self.ink_threshold = ink_threshold
        self.word_gap = word_gap

    def _match(self, cell: np.ndarray) -> str:
        best, best_distance = bitmap_font.FALLBACK, None
        for char, template in bitmap_font.templates().items():
            if template.shape != cell.shape:
                continue
            distance = int(np.count_nonzero(template != cell))
            if best_distance is None or distance < best_distance:
                best, best_distance = char, distance
        return best

    def _read_line(self, ink: np.ndarray, y0: int) -> List[Tuple[str, Tuple[int, int, int, int]]]:
        line_h = bitmap_font.GLYPH_HEIGHT * self.scale
        strip = np.zeros((line_h, ink.shape[1]), dtype=bool)
        rows = ink[y0 : y0 + line_h]
        strip[: rows.shape[0]] = rows

        words: List[List[Tuple[int, int]]] = []
        for start, end in true_runs(strip.any(axis=0)):
            if words and start - words[-1][-1][1] < self.word_gap * self.scale:
                words[-1].append((start, end))
            else:
                words.append([(start, end)])

        result = []
        for glyphs in words:
            text = "".join(self._match(strip[:, s:e][:: self.scale, :: self.scale]) for s, e in glyphs)
            x1, x2 = glyphs[0][0], glyphs[-1][1]
            ys = np.flatnonzero(strip[:, x1:x2].any(axis=1))
            result.append((text, (x1, y0 + int(ys[0]), x2, y0 + int(ys[-1]) + 1)))
        return result

    def detect(self, image: RasterImage) -> Layout:
        page_info = {"width": image.width, "height": image.height}
        if image.width == 0 or image.height == 0:
            return Layout(page_info=page_info)
        gray = cv2.cvtColor(image.writable_pixels(), cv2.COLOR_RGB2GRAY)
        ink = gray < self.ink_threshold
        line_h = bitmap_font.GLYPH_HEIGHT * self.scale

        blocks: List[TextBlock] = []
        for top, bottom in true_runs(ink.any(axis=1)):
            for y0 in range(top, bottom, line_h):
                for text, box in self._read_line(ink, y0):
                    blocks.append(TextBlock(Rectangle(*box), text=text, category="word", score=1.0, id=len(blocks)))
        logger.debug("template agent read %d words", len(blocks))
        return Layout(tuple(blocks), page_info=page_info)
