"""Line-delimited JSON trial logs.

One record per line: a header first, one tick line per control step, and a
trailer.  Every float is rounded to 9 significant digits before writing, so
serialize -> parse -> serialize is byte-identical and logs from identical
seeds compare equal as files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, IO

SCHEMA_VERSION = 1


class LogFormatError(ValueError):
    pass


def round_float(x: float) -> float:
    """Value after formatting to 9 significant digits (idempotent)."""
    return float(f"{x:.9g}")


def round_tree(obj: Any) -> Any:
    """Recursively round every float in a JSON-ready structure."""
    if isinstance(obj, float):
        return round_float(obj)
    if isinstance(obj, dict):
        return {k: round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_tree(v) for v in obj]
    return obj


def dump_line(record: dict) -> str:
    return json.dumps(round_tree(record), separators=(",", ":"), allow_nan=True)


@dataclass
class TrialLog:
    header: dict
    ticks: list[dict]
    trailer: dict | None

    def serialize(self) -> bytes:
        lines = [dump_line(self.header)]
        lines += [dump_line(t) for t in self.ticks]
        if self.trailer is not None:
            lines.append(dump_line(self.trailer))
        return ("\n".join(lines) + "\n").encode("utf-8")


class LogWriter:
    """Incremental JSONL writer; flushes periodically so aborts keep a prefix."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh: IO[str] = open(self.path, "w", encoding="utf-8", newline="\n")
        self._lines = 0

    def write(self, record: dict) -> None:
        self._fh.write(dump_line(record) + "\n")
        self._lines += 1
        if self._lines % 200 == 0:
            self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def parse_log(path: str | Path) -> TrialLog:
    """Parse a trial log; malformed lines report their byte offset."""
    path = Path(path)
    header: dict | None = None
    ticks: list[dict] = []
    trailer: dict | None = None
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if stripped:
                try:
                    rec = json.loads(stripped)
                except json.JSONDecodeError as e:
                    raise LogFormatError(
                        f"{path}: malformed record on line {lineno} at byte offset {offset}: {e}"
                    ) from e
                kind = rec.get("type")
                if kind == "header":
                    if header is not None:
                        raise LogFormatError(f"{path}: duplicate header on line {lineno}")
                    header = rec
                elif kind == "tick":
                    ticks.append(rec)
                elif kind == "end":
                    trailer = rec
                else:
                    raise LogFormatError(
                        f"{path}: unknown record type {kind!r} on line {lineno} at byte offset {offset}")
            offset += len(raw)
    if header is None:
        raise LogFormatError(f"{path}: missing header record")
    if header.get("version") != SCHEMA_VERSION:
        raise LogFormatError(
            f"{path}: log schema version {header.get('version')!r} != {SCHEMA_VERSION}")
    return TrialLog(header, ticks, trailer)
