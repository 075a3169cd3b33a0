import json
import logging
import math

import numpy as np
import pytest

from affectfuse import default_config
from affectfuse.errors import ConfigError
from affectfuse.mapping import MappingTable, candidate_labels
from affectfuse.metrics import ConfusionMatrix
from affectfuse.rng import SplitMix64, mix64, student_key
from affectfuse.simulator import (
    EmissionModel,
    GroundTruthProcess,
    default_emission,
    default_process,
    emit,
    emit_label,
    evaluate,
    evaluate_streams,
    generate,
    generate_reference,
    params_from_json_obj,
)
from affectfuse.taxonomy import CUES, EMOTIONS, CueKind, EmotionLabel as E, label_space

PERFECT = EmissionModel({c: 1.0 for c in CUES}, {c: 0.0 for c in CUES})


def test_default_emission_values():
    m = default_emission()
    assert m.accuracy == {CueKind.POSTURE: 0.9596, CueKind.FACIAL: 0.6507,
                          CueKind.SPEECH: 0.7315, CueKind.EYE: 0.90}
    assert m.dropout == {CueKind.FACIAL: 0.2, CueKind.EYE: 0.2, CueKind.POSTURE: 0.2, CueKind.SPEECH: 0.5}


def test_splitmix_reference_vector():
    # published SplitMix64 outputs for seed 0
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert student_key(0, 0) == mix64(0x9E3779B97F4A7C15)


def test_perfect_facial_emission(table):
    rng = SplitMix64(1)
    for _ in range(200):
        assert emit_label(E.FRUSTRATED, CueKind.FACIAL, PERFECT, table, rng) == "frustrated"


def test_interested_eye_always_looking_at_screen(table):
    # enumeration oracle: every eye label whose mapped set contains 'interested'
    cand = [l for l in label_space("eye") if E.INTERESTED in table.entries[(CueKind.EYE, l)]]
    assert cand == ["looking_at_screen"]
    rng = SplitMix64(2)
    outs = {emit_label(E.INTERESTED, CueKind.EYE, PERFECT, table, rng) for _ in range(500)}
    assert outs == {"looking_at_screen"}


def test_confused_posture_uniform_fallback(table, caplog):
    cand = [l for l in label_space("posture") if E.CONFUSED in table.entries[(CueKind.POSTURE, l)]]
    assert cand == [] == list(candidate_labels(E.CONFUSED, CueKind.POSTURE, table))
    rng = SplitMix64(3)
    n = 30000
    with caplog.at_level(logging.DEBUG, logger="affectfuse.simulator"):
        outs = [emit_label(E.CONFUSED, CueKind.POSTURE, PERFECT, table, rng) for _ in range(n)]
    assert "emitting uniformly" in caplog.text
    for label in label_space("posture"):
        p = outs.count(label) / n
        assert abs(p - 1 / 3) < 3 * math.sqrt((1 / 3) * (2 / 3) / n)


def test_emit_returns_observation(table):
    rng = SplitMix64(4)
    o = emit(E.BORED, "facial", PERFECT, table, rng, timestamp=2500, student_id="s001")
    assert (o.timestamp, o.student_id, o.cue, o.label) == (2500, "s001", CueKind.FACIAL, "bored")
    always_drop = EmissionModel({c: 1.0 for c in CUES}, {c: 1.0 for c in CUES})
    assert emit(E.BORED, "facial", always_drop, table, rng) is None


def test_emit_consumes_three_draws_even_when_dropped(table):
    always_drop = EmissionModel({c: 1.0 for c in CUES}, {c: 1.0 for c in CUES})
    a, b = SplitMix64(9), SplitMix64(9)
    emit_label(E.BORED, "eye", always_drop, table, a)
    for _ in range(3):
        b.random()
    assert a.state == b.state


def test_absorbing_chain():
    eye = np.eye(5)
    init = np.zeros(5)
    init[EMOTIONS.index(E.BORED)] = 1.0
    s = generate(5, 40, GroundTruthProcess(eye, init), seed=3)
    assert (s.truth == EMOTIONS.index(E.BORED)).all()


def test_determinism():
    a, b = generate(6, 20, seed=42), generate(6, 20, seed=42)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.truth, b.truth)
    assert a.observations() == b.observations()
    c = generate(6, 20, seed=43)
    assert not np.array_equal(a.labels, c.labels)


def test_students_are_independent_streams():
    small, big = generate(3, 15, seed=5), generate(8, 15, seed=5)
    assert np.array_equal(small.labels, big.labels[:3])


@pytest.mark.parametrize("use_numba", [True, False])
def test_kernel_matches_reference(table, use_numba):
    model = EmissionModel({c: 0.6 for c in CUES}, {c: 0.3 for c in CUES})
    ref = generate_reference(5, 40, default_process(), model, table, 99)
    got = generate(5, 40, default_process(), model, table, 99, use_numba=use_numba)
    assert np.array_equal(ref.truth, got.truth) and np.array_equal(ref.labels, got.labels)


def test_observation_layout():
    s = generate(2, 3, seed=1)
    stream = s.observations()
    assert all(o.timestamp == t * 5000 + 2500 for o in stream for t in [o.timestamp // 5000])
    keys = [(o.timestamp, o.student_id, CUES.index(o.cue)) for o in stream]
    assert keys == sorted(keys)
    assert s.student_ids == ("s000", "s001")


def test_emission_marginal_within_3_sigma(table):
    a = 0.7
    model = EmissionModel({c: a for c in CUES}, {c: 0.0 for c in CUES})
    s = generate(500, 200, model=model, seed=11)
    for ci, cue in enumerate(CUES):
        hits = n = 0
        for ei, emo in enumerate(EMOTIONS):
            cand = {label_space(cue).index(l) for l in candidate_labels(emo, cue, table)}
            if not cand or len(cand) == len(label_space(cue)):
                continue
            sel = s.labels[..., ci][s.truth == ei]
            n += sel.size
            hits += int(np.isin(sel, list(cand)).sum())
        assert n >= 50_000
        sigma = math.sqrt(a * (1 - a) / n)
        assert abs(hits / n - a) < 3 * sigma, cue


def test_stationarity_within_3_sigma():
    s = generate(500, 200, seed=12)
    stays = (s.truth[:, 1:] == s.truth[:, :-1])
    n = stays.size
    p = 0.85
    assert abs(stays.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_confusion_mode_emission(table):
    # a deterministic channel: facial always reports 'bored'
    conf = np.zeros((5, 5))
    conf[:, EMOTIONS.index(E.BORED)] = 1.0
    model = EmissionModel({c: 1.0 for c in CUES[1:]}, {c: 0.0 for c in CUES}, {"facial": conf})
    s = generate(3, 20, model=model, seed=1)
    assert (s.labels[..., 0] == EMOTIONS.index(E.BORED)).all()


def test_from_counts_transposes():
    m = ConfusionMatrix(label_space("eye"), [[9, 2], [1, 8]])  # rows predicted, columns actual
    model = EmissionModel.from_counts({"eye": m}, accuracy={c: 0.5 for c in CUES[:2] + CUES[3:]})
    np.testing.assert_allclose(model.confusion[CueKind.EYE], [[0.9, 0.1], [0.2, 0.8]])


def test_perfect_session_evaluates_to_one(table, config):
    s = generate(10, 50, model=PERFECT, seed=5)
    report = evaluate(s, config, table)
    assert report.fused.accuracy == 1.0 and report.fused.no_evidence == 0


def test_evaluate_streams_matches_evaluate(table, config):
    s = generate(6, 40, seed=8)
    truth = [(r["ts"], r["student"], r["emotion"]) for r in s.ground_truth_records()]
    a = evaluate(s, config, table).to_json_obj()
    b = evaluate_streams(s.observations(), truth, config, table, s.step).to_json_obj()
    assert a == b


def test_evaluate_streams_unknown_student(table, config):
    s = generate(2, 3, model=PERFECT, seed=8)
    truth = [(r["ts"], r["student"], r["emotion"]) for r in s.ground_truth_records()
             if r["student"] != "s001"]
    with pytest.raises(ConfigError, match="s001"):
        evaluate_streams(s.observations(), truth, config, table, s.step)


@pytest.mark.parametrize("obj,match", [
    ({"transition": [[0.5, 0.5, 0, 0, 0]] + [[0.2] * 5] * 4}, None),
    ({"transition": [[0.2] * 5, [0.3] * 5, [0.2] * 5, [0.2] * 5, [0.2] * 5]}, "row 1"),
    ({"initial": [0.5, 0.5, 0.5, 0, 0]}, "initial"),
    ({"students": 0}, "students"),
    ({"ticks": -1}, "ticks"),
    ({"emission": {"facial": 1.5}}, "accuracy"),
    ({"dropout": {"eye": -0.1}}, "dropout"),
    ({"emission": {"gaze": 0.5}}, "gaze"),
    ({"colour": 1}, "colour"),
])
def test_params_validation(obj, match):
    if match is None:
        params_from_json_obj(obj)
        return
    with pytest.raises(ConfigError, match=match):
        params_from_json_obj(obj)


def test_params_round_trip():
    p = params_from_json_obj({"seed": 3, "emission": {"eye": [[0.9, 0.1], [0.3, 0.7]]}})
    again = params_from_json_obj(json.loads(json.dumps(p.to_json_obj())))
    assert again.to_json_obj() == p.to_json_obj()
    assert params_from_json_obj({"seed": 3}, seed=9).seed == 9


def test_shipped_simulation_params():
    from importlib.resources import files
    obj = json.loads(files("affectfuse").joinpath("data", "default_simulation.json").read_text())
    p = params_from_json_obj(obj)
    assert (p.students, p.ticks, p.seed) == (50, 200, 7)
    assert p.emission.accuracy == default_emission().accuracy
