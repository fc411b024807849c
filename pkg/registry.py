"""Model zoo without inference.

``lp://<dataset>/<model-architecture>[/<resource>]`` URIs name layout detection
models. Each registered model is backed by a COCO results file of precomputed
detections, so ``detect`` answers with the detections stored for an image id.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

from dotenv import load_dotenv

import storage
from errors import RegistryError, StorageError
from layout import Layout
from storage import CategoryMap

load_dotenv()

logger = logging.getLogger(__name__)

SCHEME = "lp://"
DEFAULT_RESOURCE = "config"
INDEX_FILE = "index.json"
REGISTRY_ENV = "LAYOUTKIT_REGISTRY"
BUNDLED_ROOT = Path(__file__).resolve().parent / "model_zoo"


@dataclass(frozen=True)
class ModelUri:
    dataset: str
    model_arch: str
    resource: str = DEFAULT_RESOURCE

    def __str__(self) -> str:
        return f"{SCHEME}{self.dataset}/{self.model_arch}/{self.resource}"


def parse_model_uri(uri: str) -> ModelUri:
    """Split ``lp://dataset/arch[/resource]``; the resource defaults to ``config``."""
    if not isinstance(uri, str) or not uri.startswith(SCHEME):
        raise RegistryError(f"model uri must start with {SCHEME!r}: {uri!r}")
    segments = uri[len(SCHEME) :].split("/")
    if not 2 <= len(segments) <= 3:
        raise RegistryError(f"model uri needs lp://<dataset>/<model>[/<resource>]: {uri!r}")
    if any(not s or any(c.isspace() for c in s) for s in segments):
        raise RegistryError(f"model uri has an empty or blank segment: {uri!r}")
    return ModelUri(*segments)


@dataclass
class RegistryEntry:
    uri: ModelUri
    results_path: Path
    categories: CategoryMap
    results: Dict[int, Layout] = field(default_factory=dict)
    notes: str = ""


@dataclass
class RegistryIndex:
    root: Path
    entries: Dict[ModelUri, RegistryEntry] = field(default_factory=dict)

    def available(self) -> List[str]:
        return sorted(str(u) for u in self.entries)

    def entry(self, uri: str | ModelUri) -> RegistryEntry:
        key = parse_model_uri(uri) if isinstance(uri, str) else uri
        try:
            return self.entries[key]
        except KeyError:
            raise RegistryError(
                f"model {key} is not registered; available: {', '.join(self.available())}"
            ) from None


def default_root() -> Path:
    """Registry directory from ``LAYOUTKIT_REGISTRY`` (env or .env), else the bundled one."""
    override = os.getenv(REGISTRY_ENV)
    return Path(override) if override else BUNDLED_ROOT


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8-sig"))
    except FileNotFoundError as exc:
        raise RegistryError(f"registry file missing: {path}") from exc
    except json.JSONDecodeError as exc:
        raise RegistryError(f"{path}: invalid JSON ({exc})") from exc


def _resolve(root: Path, value: Any, key: str, uri: str) -> Path:
    if not isinstance(value, str) or not value:
        raise RegistryError(f"{uri}: {key} must be a non-empty path")
    path = (root / value).resolve()
    if not path.is_file():
        raise RegistryError(f"{uri}: {key} {path} does not exist")
    return path


def load_index(root: str | Path | None = None) -> RegistryIndex:
    """Read ``index.json`` under ``root`` and load every registered results file."""
    root = Path(root) if root is not None else default_root()
    raw = _read_json(root / INDEX_FILE)
    if not isinstance(raw, dict):
        raise RegistryError(f"{root / INDEX_FILE}: expected an object keyed by model uri")

    index = RegistryIndex(root=root)
    for uri_text, item in raw.items():
        uri = parse_model_uri(uri_text)
        if not isinstance(item, dict):
            raise RegistryError(f"{uri_text}: entry must be an object")
        results_path = _resolve(root, item.get("results_path"), "results_path", uri_text)
        categories_path = _resolve(root, item.get("categories_path"), "categories_path", uri_text)
        try:
            categories = storage.load_categories(categories_path.read_bytes())
            results = storage.load_coco(results_path.read_bytes(), kind="results", categories=categories)
        except StorageError as exc:
            raise RegistryError(f"{uri_text}: {exc}") from exc
        if uri in index.entries:
            raise RegistryError(f"model {uri} registered twice")
        index.entries[uri] = RegistryEntry(uri, results_path, categories, results, str(item.get("notes", "")))
    logger.info("loaded %d models from %s", len(index.entries), root)
    return index


def detect(index: RegistryIndex, uri: str | ModelUri, image_id: int, score_threshold: float = 0.0) -> Layout:
    """Detections stored for ``image_id`` with score >= ``score_threshold``."""
    entry = index.entry(uri)
    page_info = {"image_id": image_id, "model": str(entry.uri)}
    stored = entry.results.get(image_id)
    if stored is None:
        logger.info("%s has no detections for image %s", entry.uri, image_id)
        return Layout(page_info=page_info)
    kept = stored.filter(lambda b: b.score is not None and b.score >= score_threshold)
    return kept.copy_with_updates(page_info=page_info)
