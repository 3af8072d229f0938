"""Shared declarative-config plumbing: YAML round trips, strict key checking,
and content hashing used for artifact traceability."""

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping


class ConfigError(ValueError):
    """A declarative config failed validation; ``problems`` itemizes why."""

    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def load_yaml(path: str | Path) -> dict:
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be a mapping, got {type(doc).__name__}"])
    return doc


def dump_yaml(doc: Mapping[str, Any], path: str | Path) -> None:
    import yaml

    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(dict(doc), fh, sort_keys=False, default_flow_style=False)


def reject_unknown_keys(doc: Mapping[str, Any], allowed: Iterable[str], context: str) -> list[str]:
    """Return one problem string per key not in ``allowed`` (no typo tolerance)."""
    allowed = set(allowed)
    return [f"{context}: unknown key '{k}'" for k in doc if k not in allowed]


def canonical_json(doc: Any) -> str:
    """Stable serialization used for hashing: sorted keys, no float repr games."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(obj: Any):
    import numpy as np

    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not hashable as config content: {type(obj).__name__}")


def content_hash(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()
