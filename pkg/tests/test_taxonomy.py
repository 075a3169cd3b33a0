import pytest

from affectfuse import CUES, EMOTIONS, CueLabel, EmotionLabel, Observation, label_space, parse_emotion
from affectfuse.errors import InvalidObservation, UnknownLabel
from affectfuse.taxonomy import distribution_argmax, parse_cue, parse_cue_label


@pytest.mark.parametrize("text, expected", [
    ("Frustrated", EmotionLabel.FRUSTRATED),
    ("neutral", EmotionLabel.NEUTRAL),
    ("  BORED ", EmotionLabel.BORED),
])
def test_parse_emotion(text, expected):
    assert parse_emotion(text) is expected


@pytest.mark.parametrize("text", ["distracted", "happy", "", "interested!"])
def test_parse_emotion_rejects_other_labels(text):
    with pytest.raises(UnknownLabel):
        parse_emotion(text)


def test_exactly_five_emotions_and_four_cues():
    assert [e.value for e in EMOTIONS] == ["bored", "confused", "frustrated", "interested", "neutral"]
    assert [c.value for c in CUES] == ["facial", "speech", "eye", "posture"]


@pytest.mark.parametrize("cue, expected", [
    ("posture", ("slouching", "upright", "writing")),
    ("eye", ("looking_at_screen", "looking_away")),
    ("facial", ("bored", "confused", "frustrated", "interested", "neutral")),
    ("speech", ("bored", "confused", "frustrated", "interested", "neutral")),
])
def test_label_space(cue, expected):
    assert label_space(cue) == expected
    assert label_space(cue) == label_space(cue)
    assert list(expected) == sorted(expected)


@pytest.mark.parametrize("cue", CUES)
def test_round_trip_every_label(cue):
    for label in label_space(cue):
        assert parse_cue_label(cue, str(CueLabel(cue, label))) == label
        assert parse_cue(cue.value) is cue
    if cue.value in ("facial", "speech"):
        for e in EMOTIONS:
            assert parse_emotion(str(e)) is e


def test_cross_space_labels_rejected():
    with pytest.raises(UnknownLabel):
        CueLabel("eye", "slouching")
    with pytest.raises(UnknownLabel):
        CueLabel("facial", "looking_away")


def test_observation_invariants():
    obs = Observation(10, "a", "eye", "looking_away", {"looking_away": 0.7, "looking_at_screen": 0.3})
    assert obs.cue_label == CueLabel("eye", "looking_away")
    with pytest.raises(InvalidObservation):
        Observation(-1, "a", "eye", "looking_away")
    with pytest.raises(InvalidObservation):
        Observation(0, "", "eye", "looking_away")
    with pytest.raises(InvalidObservation):  # argmax disagrees
        Observation(0, "a", "eye", "looking_away", {"looking_away": 0.2, "looking_at_screen": 0.8})
    with pytest.raises(InvalidObservation):  # does not sum to one
        Observation(0, "a", "eye", "looking_away", {"looking_away": 0.7})


def test_confidence_tie_broken_by_label_order():
    dist = {"looking_at_screen": 0.5, "looking_away": 0.5}
    assert distribution_argmax("eye", dist) == "looking_at_screen"
    Observation(0, "a", "eye", "looking_at_screen", dist)
    with pytest.raises(InvalidObservation):
        Observation(0, "a", "eye", "looking_away", dist)


def test_observation_record_round_trip():
    obs = Observation(5, "s1", "posture", "writing")
    assert Observation.from_record(obs.to_record()) == obs
    with pytest.raises(InvalidObservation):
        Observation.from_record({"ts": 1, "student": "a", "cue": "eye", "label": "looking_away", "x": 1})
