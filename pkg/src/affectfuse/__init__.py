"""Decision-level fusion of per-cue affect classifier outputs for online classrooms."""

__version__ = "0.1.0"

from .errors import (
    AffectFuseError,
    BadDistribution,
    ConfigError,
    EmptyMatrix,
    InsufficientCues,
    MalformedInput,
    NoEvidence,
    SpaceMismatch,
    UnknownLabel,
    UnsortedInput,
)
from .fusion import (
    EmotionScores,
    FusionConfig,
    MissingCuePolicy,
    accumulate_scores,
    decide,
    default_config,
    fuse,
    fuse_batch,
    fuse_distributions,
    validate_config,
)
from .mapping import Fer7Label, MappingTable, default_mapping, map_cue_output, remap_fer7, validate_mapping
from .metrics import ConfusionMatrix, merge, summarize
from .sessions import (
    ClassroomReport,
    StreamingFuser,
    StudentTimeline,
    WindowSpec,
    build_timelines,
    classroom_rollup,
    representative_per_cue,
    window_stream,
)
from .simulator import (
    EmissionModel,
    GroundTruthProcess,
    SimulatedSession,
    default_emission,
    default_process,
    emit,
    evaluate,
    generate,
)
from .taxonomy import CUES, EMOTIONS, CueKind, CueLabel, EmotionLabel, Observation, label_space, parse_emotion
