"""Closed label vocabularies and the observation record.

Every label has one canonical lowercase spelling, used by all file formats.
Within each space labels are ordered alphabetically; that order is the
deterministic tie-break wherever an argmax over a label space is taken.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import InvalidObservation, UnknownLabel


class EmotionLabel(str, enum.Enum):
    BORED = "bored"
    CONFUSED = "confused"
    FRUSTRATED = "frustrated"
    INTERESTED = "interested"
    NEUTRAL = "neutral"

    def __str__(self) -> str:
        return self.value


class CueKind(str, enum.Enum):
    """Signal channels. Enumeration order is the canonical accumulation order."""

    FACIAL = "facial"
    SPEECH = "speech"
    EYE = "eye"
    POSTURE = "posture"

    def __str__(self) -> str:
        return self.value


EMOTIONS: tuple[EmotionLabel, ...] = tuple(EmotionLabel)
CUES: tuple[CueKind, ...] = tuple(CueKind)

_EMOTION_NAMES = tuple(e.value for e in EMOTIONS)
_SPACES: dict[CueKind, tuple[str, ...]] = {
    CueKind.FACIAL: _EMOTION_NAMES,
    CueKind.SPEECH: _EMOTION_NAMES,
    CueKind.EYE: ("looking_at_screen", "looking_away"),
    CueKind.POSTURE: ("slouching", "upright", "writing"),
}

DISTRIBUTION_TOL = 1e-6


def parse_emotion(text: str) -> EmotionLabel:
    """Case-insensitive parse of an emotion name.

    >>> parse_emotion("Frustrated")
    <EmotionLabel.FRUSTRATED: 'frustrated'>
    """
    if isinstance(text, EmotionLabel):
        return text
    try:
        return EmotionLabel(str(text).strip().lower())
    except ValueError:
        raise UnknownLabel(f"unknown emotion {text!r}") from None


def parse_cue(text: str) -> CueKind:
    if isinstance(text, CueKind):
        return text
    try:
        return CueKind(str(text).strip().lower())
    except ValueError:
        raise UnknownLabel(f"unknown cue {text!r}") from None


def label_space(cue: CueKind | str) -> tuple[str, ...]:
    """Fixed, ordered label list of a cue."""
    return _SPACES[parse_cue(cue)]


def parse_cue_label(cue: CueKind | str, text: str) -> str:
    """Validate ``text`` against the label space of ``cue``; returns the canonical spelling."""
    cue = parse_cue(cue)
    label = str(text).strip().lower()
    if label not in _SPACES[cue]:
        raise UnknownLabel(f"{text!r} is not a {cue.value} label")
    return label


def label_index(cue: CueKind | str, label: str) -> int:
    cue = parse_cue(cue)
    try:
        return _SPACES[cue].index(label)
    except ValueError:
        raise UnknownLabel(f"{label!r} is not a {cue.value} label") from None


@dataclass(frozen=True)
class CueLabel:
    cue: CueKind
    label: str

    def __post_init__(self):
        object.__setattr__(self, "cue", parse_cue(self.cue))
        object.__setattr__(self, "label", parse_cue_label(self.cue, self.label))

    def __str__(self) -> str:
        return self.label


def distribution_argmax(cue: CueKind | str, dist: Mapping[str, float]) -> str:
    """Label with the greatest mass; ties go to the earliest label in the space."""
    best, best_p = None, -math.inf
    for label in label_space(cue):
        p = dist.get(label, 0.0)
        if p > best_p:
            best, best_p = label, p
    return best


def check_distribution(cue: CueKind | str, dist: Mapping[str, float]) -> dict[str, float]:
    """Validate a distribution over a cue's space and return it densified in space order.

    Missing labels get zero mass. Raises ``UnknownLabel`` for foreign keys and
    ``ValueError`` for negative or non-normalised mass.
    """
    space = label_space(cue)
    for key in dist:
        if key not in space:
            raise UnknownLabel(f"{key!r} is not a {parse_cue(cue).value} label")
    dense = {label: float(dist.get(label, 0.0)) for label in space}
    if any(not math.isfinite(p) or p < 0 for p in dense.values()):
        raise ValueError("distribution has negative or non-finite mass")
    total = math.fsum(dense.values())
    if abs(total - 1.0) > DISTRIBUTION_TOL:
        raise ValueError(f"distribution sums to {total!r}, expected 1")
    return dense


@dataclass(frozen=True)
class Observation:
    """One timestamped cue output for one student."""

    timestamp: int
    student_id: str
    cue: CueKind
    label: str
    confidence: Optional[Mapping[str, float]] = field(default=None, compare=True)

    def __post_init__(self):
        if isinstance(self.timestamp, bool) or not isinstance(self.timestamp, int):
            raise InvalidObservation(f"timestamp must be an integer, got {self.timestamp!r}")
        if self.timestamp < 0:
            raise InvalidObservation(f"timestamp must be >= 0, got {self.timestamp}")
        if not isinstance(self.student_id, str) or not self.student_id:
            raise InvalidObservation("student_id must be a non-empty string")
        object.__setattr__(self, "cue", parse_cue(self.cue))
        object.__setattr__(self, "label", parse_cue_label(self.cue, self.label))
        if self.confidence is not None:
            try:
                dense = check_distribution(self.cue, self.confidence)
            except ValueError as exc:
                raise InvalidObservation(f"bad confidence: {exc}") from None
            top = distribution_argmax(self.cue, dense)
            if top != self.label:
                raise InvalidObservation(
                    f"confidence argmax {top!r} disagrees with label {self.label!r}"
                )
            object.__setattr__(self, "confidence", dense)

    @property
    def cue_label(self) -> CueLabel:
        return CueLabel(self.cue, self.label)

    def to_record(self) -> dict:
        rec = {"ts": self.timestamp, "student": self.student_id,
               "cue": self.cue.value, "label": self.label}
        if self.confidence is not None:
            rec["confidence"] = dict(self.confidence)
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "Observation":
        if not isinstance(rec, Mapping):
            raise InvalidObservation("observation must be a JSON object")
        unknown = set(rec) - {"ts", "student", "cue", "label", "confidence"}
        if unknown:
            raise InvalidObservation(f"unknown field(s): {', '.join(sorted(unknown))}")
        missing = {"ts", "student", "cue", "label"} - set(rec)
        if missing:
            raise InvalidObservation(f"missing field(s): {', '.join(sorted(missing))}")
        conf = rec.get("confidence")
        if conf is not None and not isinstance(conf, Mapping):
            raise InvalidObservation("confidence must be an object")
        return cls(rec["ts"], rec["student"], rec["cue"], rec["label"], conf)
