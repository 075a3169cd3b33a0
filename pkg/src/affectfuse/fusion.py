"""Weighted-majority decision fusion.

Every present cue ``i`` with output ``j`` adds ``W_i * w_ij`` to the score of
each emotion in ``Map(i, j)``; the fused emotion is the arg-max, ties broken by
a fixed emotion order. Cues are always accumulated in :data:`CUES` order so
results are bit-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Union

import numpy as np

from . import _kernels
from .errors import BadDistribution, ConfigError, InsufficientCues, NoEvidence, UnknownLabel
from .mapping import Finding, MappingTable
from .taxonomy import (
    CUES,
    EMOTIONS,
    DISTRIBUTION_TOL,
    CueKind,
    EmotionLabel,
    label_index,
    label_space,
    parse_cue,
    parse_cue_label,
    parse_emotion,
)

E = EmotionLabel

DEFAULT_CUE_WEIGHTS = {
    CueKind.FACIAL: 0.65,
    CueKind.SPEECH: 0.73,
    CueKind.EYE: 0.90,  # placeholder: no eye-tracking accuracy is available to derive it from
    CueKind.POSTURE: 0.96,
}
DEFAULT_TIE_BREAK = (E.NEUTRAL, E.INTERESTED, E.BORED, E.CONFUSED, E.FRUSTRATED)


@dataclass(frozen=True)
class MissingCuePolicy:
    """``skip``, ``renormalize`` or ``require`` (with ``min_cues`` in 1..4)."""

    kind: str = "skip"
    min_cues: int = 0

    @classmethod
    def skip(cls):
        return cls("skip")

    @classmethod
    def renormalize(cls):
        return cls("renormalize")

    @classmethod
    def require(cls, min_cues: int):
        return cls("require", min_cues)

    def to_json_obj(self):
        if self.kind == "require":
            return {"require": self.min_cues}
        return self.kind

    @classmethod
    def from_json_obj(cls, obj) -> "MissingCuePolicy":
        if obj in ("skip", "renormalize"):
            return cls(obj)
        if isinstance(obj, Mapping) and set(obj) == {"require"}:
            k = obj["require"]
            if isinstance(k, bool) or not isinstance(k, int):
                raise ConfigError("require policy needs an integer min_cues")
            return cls.require(k)
        raise ConfigError(f"unknown missing_cue_policy {obj!r}")


@dataclass(frozen=True)
class FusionConfig:
    cue_weights: Mapping[CueKind, float]
    sub_weights: Mapping[tuple[CueKind, str], float]
    tie_break: tuple[EmotionLabel, ...] = DEFAULT_TIE_BREAK
    missing_cue_policy: MissingCuePolicy = field(default_factory=MissingCuePolicy)

    def __post_init__(self):
        object.__setattr__(
            self, "cue_weights",
            MappingProxyType({parse_cue(c): float(w) for c, w in self.cue_weights.items()}),
        )
        subs = {}
        for (c, l), w in self.sub_weights.items():
            c = parse_cue(c)
            subs[(c, parse_cue_label(c, l))] = float(w)
        object.__setattr__(self, "sub_weights", MappingProxyType(subs))
        object.__setattr__(self, "tie_break", tuple(parse_emotion(e) for e in self.tie_break))

    def __hash__(self):
        return hash((tuple(sorted(self.cue_weights.items())),
                     tuple(sorted(self.sub_weights.items())),
                     self.tie_break, self.missing_cue_policy))

    def __eq__(self, other):
        if not isinstance(other, FusionConfig):
            return NotImplemented
        return (dict(self.cue_weights) == dict(other.cue_weights)
                and dict(self.sub_weights) == dict(other.sub_weights)
                and self.tie_break == other.tie_break
                and self.missing_cue_policy == other.missing_cue_policy)

    def scaled(self, cue_factor: float = 1.0, sub_factor: float = 1.0) -> "FusionConfig":
        """Copy with every cue weight and/or sub-weight multiplied by a constant."""
        return replace(
            self,
            cue_weights={c: w * cue_factor for c, w in self.cue_weights.items()},
            sub_weights={k: w * sub_factor for k, w in self.sub_weights.items()},
        )

    def with_cue_weights(self, **weights: float) -> "FusionConfig":
        merged = dict(self.cue_weights)
        merged.update({parse_cue(c): w for c, w in weights.items()})
        return replace(self, cue_weights=merged)

    # array views consumed by the batch kernels
    def cue_weight_array(self) -> np.ndarray:
        return np.array([self.cue_weights[c] for c in CUES], dtype=np.float64)

    def sub_weight_array(self) -> np.ndarray:
        width = max(len(label_space(c)) for c in CUES)
        arr = np.zeros((len(CUES), width), dtype=np.float64)
        for ci, cue in enumerate(CUES):
            for li, label in enumerate(label_space(cue)):
                arr[ci, li] = self.sub_weights[(cue, label)]
        return arr

    def tie_order_array(self) -> np.ndarray:
        return np.array([EMOTIONS.index(e) for e in self.tie_break], dtype=np.int64)

    def to_json_obj(self) -> dict:
        return {
            "cue_weights": {c.value: self.cue_weights[c] for c in CUES if c in self.cue_weights},
            "sub_weights": {
                c.value: {l: self.sub_weights[(c, l)] for l in label_space(c)
                          if (c, l) in self.sub_weights}
                for c in CUES
            },
            "tie_break": [e.value for e in self.tie_break],
            "missing_cue_policy": self.missing_cue_policy.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj) -> "FusionConfig":
        """Parse a config object; omitted keys (and omitted entries) take defaults."""
        if not isinstance(obj, Mapping):
            raise ConfigError("fusion config must be a JSON object")
        unknown = set(obj) - {"cue_weights", "sub_weights", "tie_break", "missing_cue_policy"}
        if unknown:
            raise ConfigError(f"unknown fusion config key(s): {', '.join(sorted(unknown))}")
        base = default_config()
        cue_w = dict(base.cue_weights)
        sub_w = dict(base.sub_weights)
        try:
            if "cue_weights" in obj:
                if not isinstance(obj["cue_weights"], Mapping):
                    raise ConfigError("cue_weights must be an object")
                for c, w in obj["cue_weights"].items():
                    cue_w[parse_cue(c)] = _number(w, f"cue_weights.{c}")
            if "sub_weights" in obj:
                if not isinstance(obj["sub_weights"], Mapping):
                    raise ConfigError("sub_weights must be an object")
                for c, labels in obj["sub_weights"].items():
                    cue = parse_cue(c)
                    if not isinstance(labels, Mapping):
                        raise ConfigError(f"sub_weights.{c} must be an object")
                    for l, w in labels.items():
                        sub_w[(cue, parse_cue_label(cue, l))] = _number(w, f"sub_weights.{c}.{l}")
            tie = base.tie_break
            if "tie_break" in obj:
                if not isinstance(obj["tie_break"], list):
                    raise ConfigError("tie_break must be an array")
                tie = tuple(parse_emotion(e) for e in obj["tie_break"])
        except UnknownLabel as exc:
            raise ConfigError(str(exc)) from None
        policy = base.missing_cue_policy
        if "missing_cue_policy" in obj:
            policy = MissingCuePolicy.from_json_obj(obj["missing_cue_policy"])
        return cls(cue_w, sub_w, tie, policy)

    @classmethod
    def from_json(cls, text: str) -> "FusionConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"fusion config is not valid JSON: {exc}") from None
        return cls.from_json_obj(obj)

    @classmethod
    def load(cls, path) -> "FusionConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def shipped_config_path():
    """Path of the packaged JSON copy of :func:`default_config`."""
    from importlib.resources import files

    return files("affectfuse").joinpath("data", "default_fusion.json")


def default_config() -> FusionConfig:
    subs = {(c, l): 1.0 for c in CUES for l in label_space(c)}
    return FusionConfig(dict(DEFAULT_CUE_WEIGHTS), subs, DEFAULT_TIE_BREAK, MissingCuePolicy.skip())


def validate_config(config: FusionConfig) -> list[Finding]:
    findings = []
    for cue in CUES:
        w = config.cue_weights.get(cue)
        if w is None:
            findings.append(Finding("missing cue weight", cue.value))
        elif not math.isfinite(w) or w < 0:
            findings.append(Finding("invalid cue weight", f"{cue.value} = {w!r}"))
    if not any(w > 0 for w in config.cue_weights.values() if math.isfinite(w)):
        findings.append(Finding("no positive cue weight", "at least one cue weight must be > 0"))
    for cue in CUES:
        for label in label_space(cue):
            w = config.sub_weights.get((cue, label))
            if w is None:
                findings.append(Finding("missing sub-weight", f"{cue.value}.{label}"))
            elif not math.isfinite(w) or w < 0:
                findings.append(Finding("invalid sub-weight", f"{cue.value}.{label} = {w!r}"))
    if sorted(config.tie_break) != sorted(EMOTIONS) or len(config.tie_break) != len(EMOTIONS):
        findings.append(Finding("bad tie_break", "must be a permutation of all five emotions"))
    policy = config.missing_cue_policy
    if policy.kind not in ("skip", "renormalize", "require"):
        findings.append(Finding("bad missing_cue_policy", policy.kind))
    elif policy.kind == "require" and not 1 <= policy.min_cues <= len(CUES):
        findings.append(Finding("bad missing_cue_policy", f"require({policy.min_cues}) outside 1..4"))
    return findings


def _ensure_valid(config: FusionConfig) -> None:
    findings = validate_config(config)
    if findings:
        raise ConfigError("invalid fusion config: " + "; ".join(map(str, findings)))


@dataclass(frozen=True)
class EmotionScores:
    scores: Mapping[EmotionLabel, float]
    contributing_cues: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(
            self, "scores", MappingProxyType({e: float(self.scores.get(e, 0.0)) for e in EMOTIONS})
        )
        object.__setattr__(self, "contributing_cues", frozenset(parse_cue(c) for c in self.contributing_cues))

    def __getitem__(self, emotion) -> float:
        return self.scores[parse_emotion(emotion)]

    def __eq__(self, other):
        if not isinstance(other, EmotionScores):
            return NotImplemented
        return dict(self.scores) == dict(other.scores) and self.contributing_cues == other.contributing_cues

    def __hash__(self):
        return hash((tuple(self.scores.values()), self.contributing_cues))

    def as_array(self) -> np.ndarray:
        return np.array([self.scores[e] for e in EMOTIONS], dtype=np.float64)

    def to_json_obj(self) -> dict:
        return {e.value: self.scores[e] for e in EMOTIONS}


WindowOutputs = Mapping[Union[CueKind, str], str]


def _present_cues(window_outputs: Mapping) -> dict[CueKind, object]:
    out = {}
    for c, v in window_outputs.items():
        out[parse_cue(c)] = v
    return out


def _effective_cue_weights(present, config: FusionConfig) -> dict[CueKind, float]:
    policy = config.missing_cue_policy
    n = len(present)
    if policy.kind == "require" and n < policy.min_cues:
        raise InsufficientCues(n, policy.min_cues)
    weights = {c: config.cue_weights[c] for c in CUES if c in present}
    if policy.kind == "renormalize":
        total = 0.0
        for c in CUES:
            total += config.cue_weights[c]
        psum = 0.0
        for c in CUES:
            if c in present:
                psum += config.cue_weights[c]
        if psum > 0.0:
            factor = total / psum
            weights = {c: w * factor for c, w in weights.items()}
    return weights


def accumulate_scores(window_outputs: WindowOutputs, config: FusionConfig,
                      table: MappingTable) -> EmotionScores:
    """Weighted vote of at most one hard label per cue."""
    _ensure_valid(config)
    table.ensure_valid()
    present = _present_cues(window_outputs)
    labels = {c: parse_cue_label(c, l) for c, l in present.items()}
    weights = _effective_cue_weights(present, config)
    scores = {e: 0.0 for e in EMOTIONS}
    for cue in CUES:
        if cue not in labels:
            continue
        label = labels[cue]
        contrib = weights[cue] * config.sub_weights[(cue, label)]
        for e in EMOTIONS:
            if e in table.entries[(cue, label)]:
                scores[e] += contrib
    return EmotionScores(scores, frozenset(labels))


def fuse_distributions(window_outputs: Mapping[Union[CueKind, str], Mapping[str, float]],
                       config: FusionConfig, table: MappingTable) -> EmotionScores:
    """Soft-label generalisation: each cue contributes ``W_i * sum_j p_j * w_ij`` to mapped emotions.

    One-hot inputs reproduce :func:`accumulate_scores` bit for bit.
    """
    _ensure_valid(config)
    table.ensure_valid()
    present = _present_cues(window_outputs)
    dists = {}
    for cue, dist in present.items():
        space = label_space(cue)
        for key in dist:
            if key not in space:
                raise UnknownLabel(f"{key!r} is not a {cue.value} label")
        dense = [float(dist.get(l, 0.0)) for l in space]
        if any(not math.isfinite(p) or p < 0 for p in dense):
            raise BadDistribution(f"{cue.value}: negative or non-finite mass")
        if abs(math.fsum(dense) - 1.0) > DISTRIBUTION_TOL:
            raise BadDistribution(f"{cue.value}: mass sums to {math.fsum(dense)!r}")
        dists[cue] = dense
    weights = _effective_cue_weights(present, config)
    scores = {e: 0.0 for e in EMOTIONS}
    for cue in CUES:
        if cue not in dists:
            continue
        vote = {e: 0.0 for e in EMOTIONS}
        for label, p in zip(label_space(cue), dists[cue]):
            mapped = table.entries[(cue, label)]
            for e in EMOTIONS:
                if e in mapped:
                    vote[e] += p * config.sub_weights[(cue, label)]
        for e in EMOTIONS:
            scores[e] += weights[cue] * vote[e]
    return EmotionScores(scores, frozenset(dists))


def decide(scores: EmotionScores, tie_break=DEFAULT_TIE_BREAK) -> EmotionLabel:
    """Emotion with the greatest score; bit-equal maxima resolved by ``tie_break`` order."""
    if not scores.contributing_cues and not any(scores.scores.values()):
        raise NoEvidence("no cue contributed to this window")
    best = max(scores.scores.values())
    for e in tie_break:
        e = parse_emotion(e)
        if scores.scores[e] == best:
            return e
    raise ConfigError("tie_break does not cover the winning emotion")


def fuse(window_outputs: WindowOutputs, config: FusionConfig,
         table: MappingTable) -> tuple[Optional[EmotionLabel], EmotionScores]:
    """Score and decide one window; the label is ``None`` when there is no evidence."""
    try:
        scores = accumulate_scores(window_outputs, config, table)
    except InsufficientCues:
        return None, EmotionScores({}, frozenset())
    try:
        return decide(scores, config.tie_break), scores
    except NoEvidence:
        return None, scores


def fuse_batch(labels: np.ndarray, config: FusionConfig, table: MappingTable,
               *, use_numba=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised fusion of many windows.

    ``labels`` is ``[n, 4]`` of label indices in each cue's space, ``-1`` where
    the cue is absent. Returns ``(decisions[n], scores[n, 5])``; decision ``-1``
    means no evidence (including too few cues under ``require``). Scores are
    bit-identical to :func:`accumulate_scores` window by window.
    """
    _ensure_valid(config)
    policy = config.missing_cue_policy
    scores, present = _kernels.score_windows(
        labels, config.cue_weight_array(), config.sub_weight_array(),
        table.membership_mask(), policy.kind == "renormalize", use_numba=use_numba,
    )
    min_present = policy.min_cues if policy.kind == "require" else 1
    decisions = _kernels.decide_windows(scores, present, config.tie_order_array(),
                                        min_present, use_numba=use_numba)
    if policy.kind == "require":
        scores[present < min_present] = 0.0
    return decisions, scores


def encode_outputs(window_outputs: WindowOutputs) -> np.ndarray:
    """One row of label indices (``-1`` for absent cues) in :data:`CUES` order."""
    present = _present_cues(window_outputs)
    return np.array([label_index(c, present[c]) if c in present else -1 for c in CUES],
                    dtype=np.int64)
