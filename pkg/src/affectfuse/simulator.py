"""Synthetic classrooms with known ground truth.

Each student follows an independent Markov chain over the five emotions, one
step per tick. Every tick, each cue makes one emission attempt: it drops out
with probability ``d``; otherwise it reports a label whose mapped emotion set
contains the true emotion with probability ``a`` (uniformly among such
labels), or a label from the complement.

Randomness comes from :mod:`affectfuse.rng`. Per student and tick, 13 uniforms
are consumed in a fixed order: the chain step, then ``(dropout, accuracy,
pick)`` for facial, speech, eye and posture. Dropped cues still consume their
draws, so sessions are reproducible across implementations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, UnknownLabel
from .fusion import FusionConfig, MissingCuePolicy, fuse_batch
from .mapping import MappingTable, candidate_labels
from .metrics import ConfusionMatrix, summarize
from .rng import SplitMix64, student_key
from .sessions import WindowSpec, build_timelines
from .taxonomy import CUES, EMOTIONS, CueKind, EmotionLabel, Observation, label_space, parse_cue, parse_emotion

log = logging.getLogger(__name__)

DEFAULT_STEP_MS = 5000
DEFAULT_STAY = 0.85
ROW_TOL = 1e-9

DEFAULT_ACCURACY = {
    CueKind.FACIAL: 0.6507,
    CueKind.SPEECH: 0.7315,
    CueKind.EYE: 0.90,  # placeholder, no measured eye-tracking accuracy
    CueKind.POSTURE: 0.9596,
}
DEFAULT_DROPOUT = {
    CueKind.FACIAL: 0.2,
    CueKind.SPEECH: 0.5,  # students speak in few windows
    CueKind.EYE: 0.2,
    CueKind.POSTURE: 0.2,
}


def _check_distribution_row(row, where: str) -> None:
    if any(not math.isfinite(p) or p < 0 for p in row):
        raise ConfigError(f"{where} has negative or non-finite entries")
    total = math.fsum(row)
    if abs(total - 1.0) > ROW_TOL:
        raise ConfigError(f"{where} sums to {total!r}, expected 1")


@dataclass(frozen=True)
class GroundTruthProcess:
    transition: np.ndarray
    initial: np.ndarray
    step: int = DEFAULT_STEP_MS

    def __post_init__(self):
        trans = np.array(self.transition, dtype=np.float64)
        init = np.array(self.initial, dtype=np.float64)
        n = len(EMOTIONS)
        if trans.shape != (n, n):
            raise ConfigError(f"transition must be {n}x{n}, got shape {trans.shape}")
        if init.shape != (n,):
            raise ConfigError(f"initial must have {n} entries, got shape {init.shape}")
        for i, row in enumerate(trans):
            _check_distribution_row(row, f"transition row {i}")
        _check_distribution_row(init, "initial distribution")
        if isinstance(self.step, bool) or not isinstance(self.step, int) or self.step <= 0:
            raise ConfigError(f"step must be a positive integer, got {self.step!r}")
        trans.flags.writeable = False
        init.flags.writeable = False
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "initial", init)


def default_process(stay: float = DEFAULT_STAY, step: int = DEFAULT_STEP_MS) -> GroundTruthProcess:
    n = len(EMOTIONS)
    trans = np.full((n, n), (1.0 - stay) / (n - 1))
    np.fill_diagonal(trans, stay)
    return GroundTruthProcess(trans, np.full(n, 1.0 / n), step)


@dataclass(frozen=True)
class EmissionModel:
    """Per-cue noisy channel.

    A cue is driven either by an ``accuracy`` or by a ``confusion`` matrix
    (rows = true cue label, columns = emitted label, rows stochastic). With a
    confusion matrix the true cue label is drawn uniformly from the labels
    whose mapped set contains the true emotion.
    """

    accuracy: Mapping[CueKind, float] = field(default_factory=lambda: dict(DEFAULT_ACCURACY))
    dropout: Mapping[CueKind, float] = field(default_factory=lambda: dict(DEFAULT_DROPOUT))
    confusion: Mapping[CueKind, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        acc = {parse_cue(c): float(a) for c, a in self.accuracy.items()}
        drop = {parse_cue(c): float(d) for c, d in self.dropout.items()}
        conf = {}
        for c, m in self.confusion.items():
            c = parse_cue(c)
            arr = np.array(m, dtype=np.float64)
            n = len(label_space(c))
            if arr.shape != (n, n):
                raise ConfigError(f"{c.value} confusion must be {n}x{n}, got shape {arr.shape}")
            for i, row in enumerate(arr):
                _check_distribution_row(row, f"{c.value} confusion row {i}")
            arr.flags.writeable = False
            conf[c] = arr
        for cue in CUES:
            if cue not in acc and cue not in conf:
                raise ConfigError(f"no accuracy or confusion matrix for cue {cue.value}")
            if cue in acc and not 0.0 <= acc[cue] <= 1.0:
                raise ConfigError(f"{cue.value} accuracy {acc[cue]!r} outside [0, 1]")
            d = drop.setdefault(cue, 0.0)
            if not 0.0 <= d <= 1.0:
                raise ConfigError(f"{cue.value} dropout {d!r} outside [0, 1]")
        object.__setattr__(self, "accuracy", acc)
        object.__setattr__(self, "dropout", drop)
        object.__setattr__(self, "confusion", conf)

    @classmethod
    def from_counts(cls, matrices: Mapping[CueKind, ConfusionMatrix], **kwargs) -> "EmissionModel":
        """Build confusion-driven channels from evaluation matrices (rows predicted, columns actual)."""
        conf = {}
        for cue, m in matrices.items():
            cue = parse_cue(cue)
            if m.label_space != label_space(cue):
                raise ConfigError(f"{cue.value} matrix is over {m.label_space}")
            counts = m.counts.T.astype(np.float64)
            sums = counts.sum(axis=1, keepdims=True)
            if (sums == 0).any():
                raise ConfigError(f"{cue.value} matrix has an actual label with no samples")
            conf[cue] = counts / sums
        return cls(accuracy=kwargs.pop("accuracy", {}), confusion=conf, **kwargs)

    def cue_arrays(self):
        """``(mode, accuracy, dropout, confusion_cdf)`` arrays in cue order for the kernels."""
        width = max(len(label_space(c)) for c in CUES)
        mode = np.zeros(len(CUES), dtype=np.int64)
        acc = np.zeros(len(CUES))
        drop = np.zeros(len(CUES))
        cdf = np.ones((len(CUES), width, width))
        for ci, cue in enumerate(CUES):
            drop[ci] = self.dropout[cue]
            if cue in self.confusion:
                mode[ci] = _kernels.MODE_CONFUSION
                m = self.confusion[cue]
                cdf[ci, : m.shape[0], : m.shape[1]] = np.cumsum(m, axis=1)
            else:
                acc[ci] = self.accuracy[cue]
        return mode, acc, drop, cdf


def default_emission() -> EmissionModel:
    return EmissionModel(dict(DEFAULT_ACCURACY), dict(DEFAULT_DROPOUT))


def _candidate_arrays(table: MappingTable):
    width = max(len(label_space(c)) for c in CUES)
    shape = (len(CUES), len(EMOTIONS))
    cand = np.zeros(shape + (width,), dtype=np.int64)
    comp = np.zeros(shape + (width,), dtype=np.int64)
    cand_n = np.zeros(shape, dtype=np.int64)
    comp_n = np.zeros(shape, dtype=np.int64)
    for ci, cue in enumerate(CUES):
        space = label_space(cue)
        for ei, emo in enumerate(EMOTIONS):
            inside = [space.index(l) for l in candidate_labels(emo, cue, table)]
            outside = [i for i in range(len(space)) if i not in inside]
            cand[ci, ei, : len(inside)] = inside
            comp[ci, ei, : len(outside)] = outside
            cand_n[ci, ei] = len(inside)
            comp_n[ci, ei] = len(outside)
    return cand, cand_n, comp, comp_n


def _sample_cdf(cdf_row, n: int, u: float) -> int:
    for k in range(n - 1):
        if u < cdf_row[k]:
            return k
    return n - 1


def emit_label(true_emotion: EmotionLabel, cue: CueKind, model: EmissionModel,
               table: MappingTable, rng: SplitMix64) -> Optional[str]:
    """One emission attempt; consumes exactly three draws from ``rng``."""
    emotion = parse_emotion(true_emotion)
    cue = parse_cue(cue)
    u_drop, u_acc, u_pick = rng.random(), rng.random(), rng.random()
    if u_drop < model.dropout[cue]:
        return None
    space = label_space(cue)
    cand = candidate_labels(emotion, cue, table)
    comp = tuple(l for l in space if l not in cand)
    if cue in model.confusion:
        true_label = space[int(u_acc * len(space))] if not cand else cand[int(u_acc * len(cand))]
        cdf = np.cumsum(model.confusion[cue], axis=1)[space.index(true_label)]
        return space[_sample_cdf(cdf, len(space), u_pick)]
    if not cand:
        log.debug("no %s label maps to %s; emitting uniformly", cue.value, emotion.value)
        return space[int(u_pick * len(space))]
    if not comp or u_acc < model.accuracy[cue]:
        return cand[int(u_pick * len(cand))]
    return comp[int(u_pick * len(comp))]


def emit(true_emotion: EmotionLabel, cue: CueKind, model: EmissionModel, table: MappingTable,
         rng: SplitMix64, *, timestamp: int = 0, student_id: str = "s000") -> Optional[Observation]:
    label = emit_label(true_emotion, cue, model, table, rng)
    if label is None:
        return None
    return Observation(timestamp, student_id, parse_cue(cue), label)


def student_ids(n: int) -> tuple[str, ...]:
    width = max(3, len(str(n - 1)))
    return tuple(f"s{i:0{width}d}" for i in range(n))


@dataclass(frozen=True)
class SimulatedSession:
    seed: int
    student_ids: tuple[str, ...]
    ticks: int
    step: int
    truth: np.ndarray   # [student, tick] emotion index
    labels: np.ndarray  # [student, tick, cue] label index, -1 = dropped

    @property
    def students(self) -> int:
        return len(self.student_ids)

    def tick_timestamp(self, t: int) -> int:
        return t * self.step + self.step // 2

    def observations(self) -> list[Observation]:
        """Emitted stream ordered by timestamp, then student, then cue."""
        out = []
        for t in range(self.ticks):
            ts = self.tick_timestamp(t)
            for s, sid in enumerate(self.student_ids):
                for ci, cue in enumerate(CUES):
                    j = self.labels[s, t, ci]
                    if j >= 0:
                        out.append(Observation(ts, sid, cue, label_space(cue)[j]))
        return out

    def ground_truth_records(self) -> list[dict]:
        return [
            {"ts": self.tick_timestamp(t), "student": sid, "emotion": EMOTIONS[self.truth[s, t]].value}
            for t in range(self.ticks) for s, sid in enumerate(self.student_ids)
        ]


def _check_counts(students: int, ticks: int) -> None:
    for name, v in (("students", students), ("ticks", ticks)):
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")


def generate(students: int, ticks: int, process: GroundTruthProcess = None,
             model: EmissionModel = None, table: MappingTable = None, seed: int = 0,
             *, use_numba=None) -> SimulatedSession:
    from .mapping import default_mapping

    _check_counts(students, ticks)
    process = process or default_process()
    model = model or default_emission()
    table = table or default_mapping()
    table.ensure_valid()
    keys = np.array([student_key(seed, s) for s in range(students)], dtype=np.uint64)
    cand, cand_n, comp, comp_n = _candidate_arrays(table)
    nlab = np.array([len(label_space(c)) for c in CUES], dtype=np.int64)
    mode, acc, drop, conf_cdf = model.cue_arrays()
    truth, labels = _kernels.generate_arrays(
        keys, ticks, np.cumsum(process.initial), np.cumsum(process.transition, axis=1),
        cand, cand_n, comp, comp_n, nlab, mode, acc, drop, conf_cdf, use_numba=use_numba,
    )
    fallback = int(((labels >= 0) & (cand_n[np.arange(len(CUES)), truth[..., None]] == 0)
                    & (mode == _kernels.MODE_ACCURACY)).sum())
    if fallback:
        log.info("%d emission(s) used the uniform fallback (emotion not reachable from cue)", fallback)
    truth.flags.writeable = False
    labels.flags.writeable = False
    return SimulatedSession(int(seed), student_ids(students), int(ticks), process.step, truth, labels)


def generate_reference(students: int, ticks: int, process: GroundTruthProcess,
                       model: EmissionModel, table: MappingTable, seed: int) -> SimulatedSession:
    """Scalar re-implementation on top of :func:`emit_label`, for cross-checking the kernels."""
    _check_counts(students, ticks)
    init_cdf = np.cumsum(process.initial)
    trans_cdf = np.cumsum(process.transition, axis=1)
    n = len(EMOTIONS)
    truth = np.empty((students, ticks), dtype=np.int64)
    labels = np.empty((students, ticks, len(CUES)), dtype=np.int64)
    for s in range(students):
        rng = SplitMix64(student_key(seed, s))
        state = 0
        for t in range(ticks):
            row = init_cdf if t == 0 else trans_cdf[state]
            state = _sample_cdf(row, n, rng.random())
            truth[s, t] = state
            for ci, cue in enumerate(CUES):
                label = emit_label(EMOTIONS[state], cue, model, table, rng)
                labels[s, t, ci] = -1 if label is None else label_space(cue).index(label)
    return SimulatedSession(int(seed), student_ids(students), int(ticks), process.step, truth, labels)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class CueEvaluation:
    """Decisions of one pipeline (a single cue or the fusion) against ground truth.

    ``matrix`` holds the windows that produced a decision; ``accuracy`` is over
    all ground-truth windows, counting no-evidence windows as misses.
    """

    matrix: ConfusionMatrix
    no_evidence: int

    @property
    def windows(self) -> int:
        return self.matrix.total + self.no_evidence

    @property
    def accuracy(self) -> float:
        return int(np.trace(self.matrix.counts)) / self.windows if self.windows else 0.0

    @property
    def coverage(self) -> float:
        return self.matrix.total / self.windows if self.windows else 0.0

    def to_json_obj(self) -> dict:
        obj = {
            "accuracy": self.accuracy,
            "coverage": self.coverage,
            "windows": self.windows,
            "no_evidence": self.no_evidence,
            "matrix": self.matrix.to_json_obj(),
        }
        if self.matrix.total:
            obj["summary"] = summarize(self.matrix).to_json_obj()
        return obj


@dataclass(frozen=True)
class EvaluationReport:
    cues: Mapping[CueKind, CueEvaluation]
    fused: CueEvaluation

    @property
    def matrices(self) -> dict[str, ConfusionMatrix]:
        out = {c.value: self.cues[c].matrix for c in CUES}
        out["fused"] = self.fused.matrix
        return out

    def to_json_obj(self) -> dict:
        return {
            "cues": {c.value: self.cues[c].to_json_obj() for c in CUES},
            "fused": self.fused.to_json_obj(),
        }

    def render(self) -> str:
        lines = [f"{'pipeline':<10} {'accuracy':>9} {'coverage':>9} {'windows':>8}"]
        rows = [(c.value, self.cues[c]) for c in CUES] + [("fused", self.fused)]
        for name, ev in rows:
            lines.append(f"{name:<10} {ev.accuracy:>9.4f} {ev.coverage:>9.4f} {ev.windows:>8d}")
        for name, ev in rows:
            lines.append("")
            lines.append(f"[{name}] rows = predicted, columns = actual")
            lines.append(ev.matrix.render())
        return "\n".join(lines) + "\n"


def _tally(decisions: np.ndarray, truth: np.ndarray) -> CueEvaluation:
    m = ConfusionMatrix([e.value for e in EMOTIONS])
    ok = decisions >= 0
    m.record_many(decisions[ok], truth[ok])
    return CueEvaluation(m, int((~ok).sum()))


def baseline_config(config: FusionConfig) -> FusionConfig:
    """Single-cue baselines ignore the missing-cue policy (a lone cue is always 'missing' the rest)."""
    from dataclasses import replace

    return replace(config, missing_cue_policy=MissingCuePolicy.skip())


def evaluate(session: SimulatedSession, config: FusionConfig, table: MappingTable,
             *, use_numba=None) -> EvaluationReport:
    """Per-cue-alone and fused accuracy, one tick per fusion window."""
    labels = session.labels.reshape(-1, len(CUES))
    truth = session.truth.reshape(-1)
    fused, _ = fuse_batch(labels, config, table, use_numba=use_numba)
    base = baseline_config(config)
    cues = {}
    for ci, cue in enumerate(CUES):
        only = np.full_like(labels, -1)
        only[:, ci] = labels[:, ci]
        decisions, _ = fuse_batch(only, base, table, use_numba=use_numba)
        cues[cue] = _tally(decisions, truth)
    return EvaluationReport(cues, _tally(fused, truth))


def evaluate_streams(observations: Sequence[Observation], ground_truth: Sequence[tuple[int, str, str]],
                     config: FusionConfig, table: MappingTable, step: int) -> EvaluationReport:
    """Evaluate recorded streams through the windowing pipeline.

    Every ground-truth row ``(ts, student, emotion)`` is one window of width
    ``step``. Raises ``ConfigError`` when an observed student has no ground truth.
    """
    known = {sid for _, sid, _ in ground_truth}
    for obs in observations:
        if obs.student_id not in known:
            raise ConfigError(f"student {obs.student_id!r} has observations but no ground truth")
    spec = WindowSpec(step, step)
    truth_idx = np.array([EMOTIONS.index(EmotionLabel(e)) for _, _, e in ground_truth], dtype=np.int64)

    def decisions_for(stream, cfg):
        lookup = {}
        for tl in build_timelines(stream, cfg, table, spec):
            for e in tl.entries:
                lookup[(tl.student_id, e.window_start)] = e.emotion
        out = np.full(len(ground_truth), -1, dtype=np.int64)
        for i, (ts, sid, _) in enumerate(ground_truth):
            emo = lookup.get((sid, ts // step * step))
            if emo is not None:
                out[i] = EMOTIONS.index(emo)
        return out

    base = baseline_config(config)
    cues = {cue: _tally(decisions_for([o for o in observations if o.cue == cue], base), truth_idx)
            for cue in CUES}
    return EvaluationReport(cues, _tally(decisions_for(observations, config), truth_idx))


# ---------------------------------------------------------------------------
# parameter files


@dataclass(frozen=True)
class SimulationParams:
    students: int = 30
    ticks: int = 120
    seed: int = 0
    process: GroundTruthProcess = field(default_factory=default_process)
    emission: EmissionModel = field(default_factory=default_emission)

    def to_json_obj(self) -> dict:
        emission = {}
        for c in CUES:
            if c in self.emission.confusion:
                emission[c.value] = self.emission.confusion[c].tolist()
            else:
                emission[c.value] = self.emission.accuracy[c]
        return {
            "students": self.students,
            "ticks": self.ticks,
            "seed": self.seed,
            "step_ms": self.process.step,
            "transition": self.process.transition.tolist(),
            "initial": self.process.initial.tolist(),
            "emission": emission,
            "dropout": {c.value: self.emission.dropout[c] for c in CUES},
        }


_PARAM_KEYS = {"students", "ticks", "seed", "step_ms", "transition", "initial", "emission", "dropout"}


def params_from_json_obj(obj, **overrides) -> SimulationParams:
    """Parse a parameters object; omitted keys take defaults, ``overrides`` (flags) win."""
    if not isinstance(obj, Mapping):
        raise ConfigError("simulation parameters must be a JSON object")
    unknown = set(obj) - _PARAM_KEYS
    if unknown:
        raise ConfigError(f"unknown simulation parameter(s): {', '.join(sorted(unknown))}")
    merged = dict(obj)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    base = SimulationParams()
    students = merged.get("students", base.students)
    ticks = merged.get("ticks", base.ticks)
    seed = merged.get("seed", base.seed)
    _check_counts(students, ticks)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    step = merged.get("step_ms", DEFAULT_STEP_MS)
    if isinstance(step, bool) or not isinstance(step, int) or step <= 0:
        raise ConfigError(f"step_ms must be a positive integer, got {step!r}")
    default_proc = default_process(step=step)
    process = GroundTruthProcess(
        merged.get("transition", default_proc.transition),
        merged.get("initial", default_proc.initial),
        step,
    )
    accuracy = dict(DEFAULT_ACCURACY)
    confusion = {}
    try:
        for c, v in (merged.get("emission") or {}).items():
            cue = parse_cue(c)
            if isinstance(v, list):
                confusion[cue] = v
                accuracy.pop(cue, None)
            elif isinstance(v, (int, float)) and not isinstance(v, bool):
                accuracy[cue] = float(v)
            else:
                raise ConfigError(f"emission.{c} must be a number or a matrix")
        dropout = dict(DEFAULT_DROPOUT)
        for c, v in (merged.get("dropout") or {}).items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"dropout.{c} must be a number")
            dropout[parse_cue(c)] = float(v)
    except UnknownLabel as exc:
        raise ConfigError(str(exc)) from None
    model = EmissionModel(accuracy, dropout, confusion)
    return SimulationParams(int(students), int(ticks), int(seed), process, model)


def load_params(path, **overrides) -> SimulationParams:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"parameters file is not valid JSON: {exc}") from None
    return params_from_json_obj(obj, **overrides)
