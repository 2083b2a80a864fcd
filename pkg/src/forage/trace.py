"""Episode trace container and its JSON-Lines serialisation.

A trace file holds one JSON object per line: the header first, then the
events in emission order, then the footer. ``.gz`` files are read and
written transparently.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

TRACE_VERSION = 1

MOVE = "move"
DISCOVER = "discover"
COLLECT = "collect"
STEP = "step"
EVENT_TYPES = (MOVE, DISCOVER, COLLECT, STEP)


class TraceError(ValueError):
    """Malformed or incompatible trace content."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class TraceVersionError(TraceError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


@dataclass
class EpisodeTrace:
    header: dict
    events: list[dict] = field(default_factory=list)
    footer: dict | None = None

    def emit(self, event: dict) -> None:
        self.events.append(event)

    def of_type(self, kind: str) -> Iterator[dict]:
        return (e for e in self.events if e["type"] == kind)

    @property
    def steps(self) -> list[dict]:
        return list(self.of_type(STEP))

    @property
    def t_end(self) -> int:
        return self.footer["t_end"]

    @property
    def horizon(self) -> int:
        return self.header["horizon"]

    @property
    def k(self) -> int:
        return self.header["k"]

    def agents(self, team: str | None = None) -> list[dict]:
        return [a for a in self.header["agents"] if team is None or a["team"] == team]

    def lines(self) -> Iterator[str]:
        yield dumps(self.header)
        for e in self.events:
            yield dumps(e)
        if self.footer is not None:
            yield dumps(self.footer)

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.lines())


def _open(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "b")
    return open(path, mode + "b")


def write_trace(trace: EpisodeTrace, path: str | Path) -> Path:
    path = Path(path)
    data = trace.to_text().encode()
    if path.suffix == ".gz":
        # mtime=0 and no embedded filename keep gzip output byte-identical
        with open(path, "wb") as raw, gzip.GzipFile(
            filename="", mode="wb", fileobj=raw, mtime=0
        ) as fh:
            fh.write(data)
    else:
        path.write_bytes(data)
    return path


def parse_trace(lines) -> EpisodeTrace:
    header = None
    events: list[dict] = []
    footer = None
    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict) or "type" not in obj:
            raise TraceError("record without a 'type' field", lineno)
        kind = obj["type"]
        if header is None:
            if kind != "header":
                raise TraceError("first record must be the header", lineno)
            if obj.get("trace_version") != TRACE_VERSION:
                raise TraceVersionError(
                    f"unsupported trace_version {obj.get('trace_version')!r}"
                    f" (expected {TRACE_VERSION})",
                    lineno,
                )
            header = obj
        elif footer is not None:
            raise TraceError("record after footer", lineno)
        elif kind == "footer":
            footer = obj
        elif kind in EVENT_TYPES:
            events.append(obj)
        else:
            raise TraceError(f"unknown record type {kind!r}", lineno)
    if header is None:
        raise TraceError("empty trace")
    if footer is None:
        raise TraceError("truncated trace: no footer", lineno + 1)
    return EpisodeTrace(header, events, footer)


def read_trace(path: str | Path) -> EpisodeTrace:
    path = Path(path)
    try:
        with _open(path, "r") as fh:
            raw = fh.read()
    except (EOFError, gzip.BadGzipFile, zlib.error) as exc:
        raise TraceError(f"{path}: damaged gzip stream ({exc})") from None
    try:
        text = raw.decode()
    except UnicodeDecodeError:
        raise TraceError(f"{path}: not UTF-8 text") from None
    return parse_trace(text.splitlines())
