"""key=value text files used for manifests, metrics and config."""

from __future__ import annotations

from pathlib import Path

from .container import atomic_write_bytes


def format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def write_kv(path, items: dict) -> None:
    lines = []
    for key, value in items.items():
        if "=" in key or "\n" in key:
            raise ValueError(f"bad key {key!r}")
        lines.append(f"{key}={format_value(value)}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def read_kv(path) -> dict[str, str]:
    """Parse key=value lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
