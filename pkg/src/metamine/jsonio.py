"""Canonical JSON reading and writing.

All JSON the package emits goes through canonical_dumps so that equal
objects serialize to identical bytes: sorted keys, two-space indent,
UTF-8 text, no NaN/Infinity, one trailing newline.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import InputFormatError


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(canonical_dumps(obj), encoding="utf-8")


def read_json(path: str | Path) -> Any:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFormatError("UnreadableFile", f"cannot read {p}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError("MalformedJson", f"{p} is not valid JSON: {exc}") from exc


def content_id(obj: Any) -> str:
    """Short stable identifier: first 12 hex digits of the canonical sha256."""
    return hashlib.sha256(canonical_dumps(obj).encode("utf-8")).hexdigest()[:12]


def expect_object(value: Any, what: str) -> dict:
    if not isinstance(value, dict):
        raise InputFormatError("NotAnObject", f"{what} must be a JSON object, got {type(value).__name__}")
    return value


def expect_field(obj: dict, key: str, what: str) -> Any:
    if key not in obj:
        raise InputFormatError("MissingField", f"{what} is missing required field {key!r}")
    return obj[key]
