"""From an observation stream to per-student timelines and classroom rollups.

Windows are ``[start, start + width)`` with starts on multiples of ``stride``;
each student's grid begins at ``floor(first_ts / stride) * stride`` of that
student's first observation, which keeps students independent of each other.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import ConfigError, UnsortedInput
from .fusion import EmotionScores, FusionConfig, fuse
from .mapping import MappingTable
from .taxonomy import CUES, EMOTIONS, CueKind, EmotionLabel, Observation

DEFAULT_WINDOW_MS = 5000
ENGAGED = frozenset({EmotionLabel.INTERESTED, EmotionLabel.NEUTRAL})


@dataclass(frozen=True)
class WindowSpec:
    width: int = DEFAULT_WINDOW_MS
    stride: int = DEFAULT_WINDOW_MS

    def __post_init__(self):
        for name in ("width", "stride"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise ConfigError(f"window {name} must be a positive integer, got {v!r}")
        if self.stride > self.width:
            raise ConfigError(f"stride {self.stride} exceeds width {self.width}")

    @property
    def tumbling(self) -> bool:
        return self.stride == self.width

    def origin(self, ts: int) -> int:
        return ts // self.stride * self.stride

    def starts_containing(self, ts: int, origin: int) -> range:
        """Grid starts ``s >= origin`` with ``s <= ts < s + width``."""
        first = (ts - self.width) // self.stride + 1
        lo = max(first * self.stride, origin)
        return range(lo, ts // self.stride * self.stride + 1, self.stride)


def check_sorted(observations: Sequence[Observation]) -> None:
    prev = None
    for i, obs in enumerate(observations):
        if prev is not None and obs.timestamp < prev:
            raise UnsortedInput(i, obs.timestamp, prev)
        prev = obs.timestamp


def window_stream(observations: Sequence[Observation],
                  spec: WindowSpec = WindowSpec()) -> dict[str, list[tuple[int, list[Observation]]]]:
    """Group a time-ordered stream into non-empty windows per student.

    Returns ``{student_id: [(window_start, observations), ...]}`` with students
    in lexicographic order and windows ascending.
    """
    check_sorted(observations)
    groups: dict[str, dict[int, list[Observation]]] = {}
    origins: dict[str, int] = {}
    for obs in observations:
        sid = obs.student_id
        if sid not in origins:
            origins[sid] = spec.origin(obs.timestamp)
            groups[sid] = {}
        for start in spec.starts_containing(obs.timestamp, origins[sid]):
            groups[sid].setdefault(start, []).append(obs)
    return {sid: sorted(groups[sid].items()) for sid in sorted(groups)}


def representative_per_cue(window_observations: Iterable[Observation]) -> dict[CueKind, str]:
    """Modal label per cue; count ties go to the label seen most recently."""
    stats: dict[CueKind, dict[str, list]] = defaultdict(dict)
    for seq, obs in enumerate(window_observations):
        rec = stats[obs.cue].setdefault(obs.label, [0, -1, -1])
        rec[0] += 1
        rec[1] = max(rec[1], obs.timestamp)
        rec[2] = seq
    out = {}
    for cue in CUES:
        if cue in stats:
            out[cue] = max(stats[cue].items(), key=lambda kv: tuple(kv[1]))[0]
    return out


@dataclass(frozen=True)
class TimelineEntry:
    window_start: int
    emotion: Optional[EmotionLabel]
    scores: EmotionScores
    n_observations: int = 0

    def to_record(self, student_id: str) -> dict:
        return {
            "student": student_id,
            "window_start": self.window_start,
            "emotion": self.emotion.value if self.emotion is not None else None,
            "scores": self.scores.to_json_obj(),
            "cues": [c.value for c in CUES if c in self.scores.contributing_cues],
            "observations": self.n_observations,
        }


@dataclass(frozen=True)
class StudentTimeline:
    student_id: str
    entries: tuple[TimelineEntry, ...]

    def records(self) -> Iterator[dict]:
        for e in self.entries:
            yield e.to_record(self.student_id)


_EMPTY_SCORES = EmotionScores({}, frozenset())


def fuse_window(window_start: int, window_observations: Sequence[Observation],
                config: FusionConfig, table: MappingTable) -> TimelineEntry:
    if not window_observations:
        return TimelineEntry(window_start, None, _EMPTY_SCORES, 0)
    emotion, scores = fuse(representative_per_cue(window_observations), config, table)
    return TimelineEntry(window_start, emotion, scores, len(window_observations))


def build_timelines(observations: Sequence[Observation], config: FusionConfig,
                    table: MappingTable, spec: WindowSpec = WindowSpec()) -> list[StudentTimeline]:
    """Batch path: every grid window from a student's first to last non-empty one.

    Windows without observations in between appear as no-evidence entries.
    """
    timelines = []
    for sid, windows in window_stream(observations, spec).items():
        by_start = dict(windows)
        first, last = windows[0][0], windows[-1][0]
        entries = tuple(
            fuse_window(start, by_start.get(start, ()), config, table)
            for start in range(first, last + 1, spec.stride)
        )
        timelines.append(StudentTimeline(sid, entries))
    return timelines


@dataclass(frozen=True)
class ClassroomReport:
    window_start: int
    counts: Mapping[EmotionLabel, int]
    engagement_fraction: float
    no_evidence_count: int

    @property
    def students(self) -> int:
        return sum(self.counts.values()) + self.no_evidence_count

    def to_record(self) -> dict:
        return {
            "window_start": self.window_start,
            "counts": {e.value: self.counts[e] for e in EMOTIONS},
            "engagement_fraction": self.engagement_fraction,
            "no_evidence_count": self.no_evidence_count,
            "students": self.students,
        }


def classroom_rollup(window_start: int, decisions: Mapping[str, Optional[EmotionLabel]],
                     engaged: frozenset = ENGAGED) -> ClassroomReport:
    """Aggregate one window's fused decisions; ``None`` marks a no-evidence student.

    With no evidenced students the engagement fraction is defined as 0.
    """
    counts = {e: 0 for e in EMOTIONS}
    missing = 0
    for sid in sorted(decisions):
        d = decisions[sid]
        if d is None:
            missing += 1
        else:
            counts[EmotionLabel(d)] += 1
    evidenced = sum(counts.values())
    engaged_n = sum(counts[e] for e in engaged)
    fraction = engaged_n / evidenced if evidenced else 0.0
    return ClassroomReport(window_start, counts, fraction, missing)


def rollups_from_timelines(timelines: Iterable[StudentTimeline],
                           engaged: frozenset = ENGAGED) -> list[ClassroomReport]:
    """One report per window start in which any student had observations."""
    per_window: dict[int, dict[str, Optional[EmotionLabel]]] = defaultdict(dict)
    for tl in timelines:
        for e in tl.entries:
            if e.n_observations:
                per_window[e.window_start][tl.student_id] = e.emotion
    return [classroom_rollup(start, per_window[start], engaged) for start in sorted(per_window)]


@dataclass
class _StudentState:
    origin: int
    next_start: int
    last_nonempty: int
    pending: dict = field(default_factory=dict)


class StreamingFuser:
    """Incremental counterpart of :func:`build_timelines` + :func:`rollups_from_timelines`.

    Feed observations in timestamp order with :meth:`push`; a window is
    finalised as soon as an observation at or past its end arrives. Output is
    bit-identical to the batch path.
    """

    def __init__(self, config: FusionConfig, table: MappingTable,
                 spec: WindowSpec = WindowSpec(), engaged: frozenset = ENGAGED):
        self.config = config
        self.table = table
        self.spec = spec
        self.engaged = engaged
        self._students: dict[str, _StudentState] = {}
        self._entries: dict[str, list[TimelineEntry]] = defaultdict(list)
        self._window_decisions: dict[int, dict[str, Optional[EmotionLabel]]] = defaultdict(dict)
        self._rollups: list[ClassroomReport] = []
        self._last_ts: Optional[int] = None
        self._count = 0

    def push(self, obs: Observation) -> None:
        if self._last_ts is not None and obs.timestamp < self._last_ts:
            raise UnsortedInput(self._count, obs.timestamp, self._last_ts)
        self._last_ts = obs.timestamp
        self._count += 1
        self._advance(obs.timestamp)
        st = self._students.get(obs.student_id)
        if st is None:
            origin = self.spec.origin(obs.timestamp)
            st = _StudentState(origin, origin, origin)
            self._students[obs.student_id] = st
        for start in self.spec.starts_containing(obs.timestamp, st.origin):
            st.pending.setdefault(start, []).append(obs)
            st.last_nonempty = max(st.last_nonempty, start)

    def extend(self, observations: Iterable[Observation]) -> None:
        for obs in observations:
            self.push(obs)

    def _finalize_student(self, sid: str, st: _StudentState, horizon: Optional[int]) -> None:
        width, stride = self.spec.width, self.spec.stride
        while st.next_start <= st.last_nonempty and (horizon is None or st.next_start + width <= horizon):
            start = st.next_start
            window = st.pending.pop(start, [])
            entry = fuse_window(start, window, self.config, self.table)
            self._entries[sid].append(entry)
            if entry.n_observations:
                self._window_decisions[start][sid] = entry.emotion
            st.next_start += stride

    def _emit_rollups(self, horizon: Optional[int]) -> None:
        for start in sorted(self._window_decisions):
            if horizon is not None and start + self.spec.width > horizon:
                break
            self._rollups.append(
                classroom_rollup(start, self._window_decisions.pop(start), self.engaged)
            )

    def _advance(self, horizon: Optional[int]) -> None:
        for sid, st in self._students.items():
            self._finalize_student(sid, st, horizon)
        self._emit_rollups(horizon)

    def flush(self) -> tuple[list[StudentTimeline], list[ClassroomReport]]:
        """Close every open window and return all timelines and rollups so far."""
        self._advance(None)
        timelines = [StudentTimeline(sid, tuple(self._entries[sid]))
                     for sid in sorted(self._entries)]
        return timelines, list(self._rollups)

    @property
    def rollups(self) -> list[ClassroomReport]:
        """Reports for windows already closed."""
        return list(self._rollups)


def render_timelines(timelines: Sequence[StudentTimeline]) -> str:
    header = ["student", "window_start", "emotion"] + [e.value for e in EMOTIONS]
    rows = []
    for tl in timelines:
        for e in tl.entries:
            rows.append([tl.student_id, str(e.window_start),
                         e.emotion.value if e.emotion is not None else "-"]
                        + [f"{e.scores.scores[x]:.4f}" for x in EMOTIONS])
    return _table(header, rows)


def render_rollups(reports: Sequence[ClassroomReport]) -> str:
    header = ["window_start"] + [e.value for e in EMOTIONS] + ["no_evidence", "engagement"]
    rows = [[str(r.window_start)] + [str(r.counts[e]) for e in EMOTIONS]
            + [str(r.no_evidence_count), f"{r.engagement_fraction:.4f}"] for r in reports]
    return _table(header, rows)


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(header)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                  for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([fmt(header)] + [fmt(r) for r in rows]) + "\n"
