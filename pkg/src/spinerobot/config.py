"""Flat key-value configuration files.

All user-facing configuration lives in a single text file with lines of the
form ``section.key = value``.  Values are plain SI-unit scalars, comma
separated vectors, or bare strings.  Blank lines and ``#`` comments are
ignored.  Later assignments override earlier ones, which lets a calibration
run append a refined value to the end of an existing file.
"""

from __future__ import annotations

import math
from pathlib import Path


def parse_value(text: str):
    """Parse a raw value string into float, tuple of floats, int or str."""
    text = text.strip()
    if "," in text:
        return tuple(float(p) for p in text.split(","))
    try:
        f = float(text)
    except ValueError:
        return text
    if math.isfinite(f) and f == int(f) and "." not in text and "e" not in text.lower():
        return int(f)
    return f


def format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path: str | Path) -> dict:
    """Read a flat config file into a {\"section.key\": value} dict."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = parse_value(value)
    return out


def dump_config(entries: dict, path: str | Path, header: str | None = None) -> None:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{k} = {format_value(v)}" for k, v in entries.items())
    Path(path).write_text("\n".join(lines) + "\n")


def append_config(entries: dict, path: str | Path, comment: str | None = None) -> None:
    """Append key-value pairs to an existing config file (creates if missing)."""
    chunk = []
    if comment:
        chunk.append(f"# {comment}")
    chunk.extend(f"{k} = {format_value(v)}" for k, v in entries.items())
    p = Path(path)
    existing = p.read_text() if p.exists() else ""
    if existing and not existing.endswith("\n"):
        existing += "\n"
    p.write_text(existing + "\n".join(chunk) + "\n")


def section(cfg: dict, prefix: str) -> dict:
    """Extract keys under ``prefix.`` with the prefix stripped."""
    dot = prefix + "."
    return {k[len(dot):]: v for k, v in cfg.items() if k.startswith(dot)}
