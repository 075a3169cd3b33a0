"""JSONL readers/writers and atomic file output."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator

from .errors import AffectFuseError, MalformedInput, UnsortedInput
from .taxonomy import Observation, parse_emotion


def dumps(obj) -> str:
    """Canonical single-line JSON: fixed key order as given, no extra whitespace."""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _iter_json_lines(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInput(lineno, f"invalid JSON ({exc.msg})", path) from None


def read_observations(path, *, require_sorted: bool = True) -> list[Observation]:
    """Parse an observation JSONL file; any bad line raises ``MalformedInput`` with its number."""
    out = []
    prev = None
    for lineno, rec in _iter_json_lines(path):
        try:
            obs = Observation.from_record(rec)
        except AffectFuseError as exc:
            raise MalformedInput(lineno, str(exc), path) from None
        if require_sorted and prev is not None and obs.timestamp < prev:
            raise MalformedInput(lineno, str(UnsortedInput(len(out), obs.timestamp, prev)), path)
        prev = obs.timestamp
        out.append(obs)
    return out


def read_ground_truth(path) -> list[tuple[int, str, str]]:
    """``(ts, student, emotion)`` rows of a ground-truth JSONL file."""
    rows = []
    for lineno, rec in _iter_json_lines(path):
        if not isinstance(rec, dict) or set(rec) != {"ts", "student", "emotion"}:
            raise MalformedInput(lineno, "expected fields ts, student, emotion", path)
        ts, student = rec["ts"], rec["student"]
        if isinstance(ts, bool) or not isinstance(ts, int) or ts < 0:
            raise MalformedInput(lineno, f"bad ts {ts!r}", path)
        if not isinstance(student, str) or not student:
            raise MalformedInput(lineno, "student must be a non-empty string", path)
        try:
            emo = parse_emotion(rec["emotion"])
        except AffectFuseError as exc:
            raise MalformedInput(lineno, str(exc), path) from None
        rows.append((ts, student, emo.value))
    return rows


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, records: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(dumps(r) + "\n" for r in records))
