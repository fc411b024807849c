"""Configuration models for the layoutkit command line and pipelines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def load_json_file(path: Path) -> Any:
    # Use utf-8-sig to tolerate BOM-prefixed files from some editors.
    with path.open("r", encoding="utf-8-sig") as fp:
        return json.load(fp)


def _optional_float(value: Any) -> float | None:
    return None if value is None else float(value)


@dataclass
class TableParams:
    """Thresholds of the visual table extractor."""

    score_min: float = 0.8
    iou_threshold: float = 0.5
    min_run_fraction: float = 0.8
    row_gap: float | None = None
    row_min_gap: float = 3.0
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.min_run_fraction <= 1.0:
            raise ValueError(f"min_run_fraction must be in (0, 1], got {self.min_run_fraction}")
        if self.row_gap is not None and self.row_gap < 0:
            raise ValueError(f"row_gap must be >= 0, got {self.row_gap}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any] | None) -> "TableParams":
        """Create an instance while stashing unknown fields in extras."""
        data = data or {}
        known = {"score_min", "iou_threshold", "min_run_fraction", "row_gap", "row_min_gap"}
        return cls(
            score_min=float(data.get("score_min", 0.8)),
            iou_threshold=float(data.get("iou_threshold", 0.5)),
            min_run_fraction=float(data.get("min_run_fraction", 0.8)),
            row_gap=_optional_float(data.get("row_gap")),
            row_min_gap=float(data.get("row_min_gap", 3.0)),
            extras={k: v for k, v in data.items() if k not in known},
        )


@dataclass
class ReorgParams:
    """Token packing for dense-text reorganization."""

    max_height: float = 32.0
    gap: float = 4.0
    canvas_width: float = 1200.0
    reading_order: str = "row_ltr"
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_height <= 0 or self.canvas_width <= 0:
            raise ValueError("max_height and canvas_width must be positive")
        if self.gap < 0:
            raise ValueError(f"gap must be >= 0, got {self.gap}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any] | None) -> "ReorgParams":
        """Create an instance while stashing unknown fields in extras."""
        data = data or {}
        known = {"max_height", "gap", "canvas_width", "reading_order"}
        return cls(
            max_height=float(data.get("max_height", 32.0)),
            gap=float(data.get("gap", 4.0)),
            canvas_width=float(data.get("canvas_width", 1200.0)),
            reading_order=str(data.get("reading_order", "row_ltr")),
            extras={k: v for k, v in data.items() if k not in known},
        )


@dataclass
class CliConfig:
    """Settings shared by every subcommand; flags override these values."""

    registry_root: str | None = None
    output_dir: str = "."
    log_level: str = "INFO"
    jobs: int = 1
    tables: TableParams = field(default_factory=TableParams)
    reorg: ReorgParams = field(default_factory=ReorgParams)
    viz: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.log_level = self.log_level.upper()
        if self.log_level not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}, got {self.log_level!r}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any] | None) -> "CliConfig":
        """Create an instance while stashing unknown fields in extras."""
        data = data or {}
        known = {"registry_root", "output_dir", "log_level", "jobs", "tables", "reorg", "viz"}
        return cls(
            registry_root=data.get("registry_root"),
            output_dir=str(data.get("output_dir", ".")),
            log_level=str(data.get("log_level", "INFO")),
            jobs=int(data.get("jobs", 1)),
            tables=TableParams.from_dict(data.get("tables")),
            reorg=ReorgParams.from_dict(data.get("reorg")),
            viz=dict(data.get("viz") or {}),
            extras={k: v for k, v in data.items() if k not in known},
        )

    @classmethod
    def load(cls, path: Path | None) -> "CliConfig":
        """Read a JSON settings file; ``None`` means built-in defaults."""
        if path is None:
            return cls()
        data = load_json_file(path)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: settings must be a JSON object")
        return cls.from_dict(data)
