"""Cue-output to emotion-set mapping, plus the FER 7-class remap."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, UnknownLabel
from .taxonomy import (
    CUES,
    EMOTIONS,
    CueKind,
    EmotionLabel,
    label_space,
    parse_cue,
    parse_cue_label,
    parse_emotion,
)

E = EmotionLabel

_DEFAULT_NON_EMOTION = {
    CueKind.EYE: {
        "looking_at_screen": (E.CONFUSED, E.FRUSTRATED, E.INTERESTED),
        "looking_away": (E.BORED,),
    },
    CueKind.POSTURE: {
        "slouching": (E.BORED, E.FRUSTRATED),
        "upright": (E.NEUTRAL, E.INTERESTED),
        "writing": (E.INTERESTED,),
    },
}


class Fer7Label(str, enum.Enum):
    HAPPY = "happy"
    SAD = "sad"
    ANGRY = "angry"
    AFRAID = "afraid"
    SURPRISE = "surprise"
    DISGUST = "disgust"
    NEUTRAL = "neutral"


_FER7_TO_EMOTION = {
    Fer7Label.HAPPY: E.INTERESTED,
    Fer7Label.SURPRISE: E.INTERESTED,
    Fer7Label.SAD: E.BORED,
    Fer7Label.ANGRY: E.FRUSTRATED,
    Fer7Label.DISGUST: E.FRUSTRATED,
    Fer7Label.AFRAID: E.CONFUSED,
    Fer7Label.NEUTRAL: E.NEUTRAL,
}


def remap_fer7(label: Fer7Label | str) -> EmotionLabel:
    """Collapse a 7-class FER label onto the five classroom emotions."""
    try:
        fer = Fer7Label(str(label.value if isinstance(label, Fer7Label) else label).lower())
    except ValueError:
        raise UnknownLabel(f"unknown FER label {label!r}") from None
    return _FER7_TO_EMOTION[fer]


@dataclass(frozen=True)
class Finding:
    kind: str  # "missing entry" | "empty set" | "unreachable emotion" | config-specific kinds
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


class MappingTable:
    """Immutable map from (cue, cue label) to a set of emotions.

    A table may be constructed incomplete (e.g. from a user file); fusion
    refuses to use it until :func:`validate_mapping` reports no findings.
    """

    def __init__(self, entries: Mapping[tuple[CueKind | str, str], Iterable[EmotionLabel | str]]):
        table = {}
        for (cue, label), emotions in entries.items():
            cue = parse_cue(cue)
            label = parse_cue_label(cue, label)
            table[(cue, label)] = frozenset(parse_emotion(e) for e in emotions)
        self._entries = MappingProxyType(table)
        self._findings = None
        self._mask = None

    @property
    def entries(self) -> Mapping[tuple[CueKind, str], frozenset]:
        return self._entries

    def __eq__(self, other):
        return isinstance(other, MappingTable) and dict(self._entries) == dict(other._entries)

    def __hash__(self):
        return hash(frozenset(self._entries.items()))

    def __repr__(self):
        return f"MappingTable({len(self._entries)} entries)"

    def get(self, cue: CueKind | str, label: str) -> frozenset | None:
        return self._entries.get((parse_cue(cue), label))

    @property
    def findings(self) -> list[Finding]:
        if self._findings is None:
            self._findings = _scan(self)
        return list(self._findings)

    @property
    def is_valid(self) -> bool:
        return not self.findings

    def ensure_valid(self) -> None:
        if not self.is_valid:
            raise ConfigError(
                "invalid mapping table: " + "; ".join(str(f) for f in self.findings)
            )

    def membership_mask(self) -> np.ndarray:
        """Boolean array ``[cue, label, emotion]``; label axis padded to the widest space."""
        if self._mask is None:
            self.ensure_valid()
            width = max(len(label_space(c)) for c in CUES)
            mask = np.zeros((len(CUES), width, len(EMOTIONS)), dtype=np.bool_)
            for ci, cue in enumerate(CUES):
                for li, label in enumerate(label_space(cue)):
                    for ei, emo in enumerate(EMOTIONS):
                        mask[ci, li, ei] = emo in self._entries[(cue, label)]
            mask.flags.writeable = False
            self._mask = mask
        return self._mask

    def to_json_obj(self) -> dict:
        out = {}
        for cue in CUES:
            labels = {}
            for label in label_space(cue):
                emos = self._entries.get((cue, label))
                if emos is not None:
                    labels[label] = [e.value for e in EMOTIONS if e in emos]
            if labels:
                out[cue.value] = labels
        return out

    @classmethod
    def from_json_obj(cls, obj) -> "MappingTable":
        """Build from ``{cue: {label: [emotion, ...]}}``. Unknown keys raise ``ConfigError``."""
        if not isinstance(obj, Mapping):
            raise ConfigError("mapping config must be a JSON object")
        entries = {}
        for cue_name, labels in obj.items():
            try:
                cue = parse_cue(cue_name)
            except UnknownLabel as exc:
                raise ConfigError(str(exc)) from None
            if not isinstance(labels, Mapping):
                raise ConfigError(f"mapping for cue {cue_name!r} must be an object")
            for label, emotions in labels.items():
                if not isinstance(emotions, list):
                    raise ConfigError(f"{cue_name}.{label}: expected an array of emotions")
                try:
                    label = parse_cue_label(cue, label)
                    entries[(cue, label)] = [parse_emotion(e) for e in emotions]
                except UnknownLabel as exc:
                    raise ConfigError(f"{cue_name}.{label}: {exc}") from None
        return cls(entries)

    @classmethod
    def from_json(cls, text: str) -> "MappingTable":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"mapping config is not valid JSON: {exc}") from None
        return cls.from_json_obj(obj)

    @classmethod
    def load(cls, path) -> "MappingTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def shipped_mapping_path():
    """Path of the packaged JSON copy of :func:`default_mapping`."""
    from importlib.resources import files

    return files("affectfuse").joinpath("data", "default_mapping.json")


def default_mapping() -> MappingTable:
    entries = {}
    for cue in (CueKind.FACIAL, CueKind.SPEECH):
        for emo in EMOTIONS:
            entries[(cue, emo.value)] = (emo,)
    for cue, labels in _DEFAULT_NON_EMOTION.items():
        for label, emos in labels.items():
            entries[(cue, label)] = emos
    return MappingTable(entries)


def _scan(table: MappingTable) -> list[Finding]:
    findings = []
    reachable = set()
    for cue in CUES:
        for label in label_space(cue):
            emos = table.entries.get((cue, label))
            if emos is None:
                findings.append(Finding("missing entry", f"{cue.value}.{label}"))
            elif not emos:
                findings.append(Finding("empty set", f"{cue.value}.{label}"))
            else:
                reachable |= emos
    for emo in EMOTIONS:
        if emo not in reachable:
            findings.append(Finding("unreachable emotion", emo.value))
    return findings


def validate_mapping(table: MappingTable) -> list[Finding]:
    """All problems that make ``table`` unusable for fusion; empty means valid."""
    return table.findings


def map_cue_output(cue: CueKind | str, label: str, table: MappingTable) -> frozenset:
    """Emotion set evidenced by one cue output."""
    cue = parse_cue(cue)
    label = parse_cue_label(cue, label)
    table.ensure_valid()
    return table.entries[(cue, label)]


def candidate_labels(emotion: EmotionLabel | str, cue: CueKind | str, table: MappingTable) -> tuple[str, ...]:
    """Labels of ``cue`` whose mapped set contains ``emotion`` (the inverse map), in space order."""
    emotion = parse_emotion(emotion)
    cue = parse_cue(cue)
    return tuple(l for l in label_space(cue) if emotion in table.entries.get((cue, l), ()))
