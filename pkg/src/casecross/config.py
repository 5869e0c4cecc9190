"""Line-oriented ``key = value`` configuration files."""
from __future__ import annotations

import os

from .errors import ParseError


def read_config(source) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped.

    Keys keep file order. A repeated key is an error.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    out: dict[str, str] = {}
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(f"config line {n}: expected 'key = value', got {raw!r}")
        if key in out:
            raise ParseError(f"config line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def as_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParseError(f"not a boolean: {text!r}")


def as_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]
