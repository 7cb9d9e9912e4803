"""Streaming runner: change detection, decision weighting, record handling."""

import dataclasses
import json

import numpy as np
import pytest

from scriptdrift import evm, runner
from scriptdrift.seeding import derive_rng
from scriptdrift.testgen import TestSpec as StreamSpec
from scriptdrift.testgen import TestStream as Stream


def test_detector_validates_construction():
    with pytest.raises(runner.RunnerError):
        runner.ChangeDetector(batch_size=0)
    with pytest.raises(runner.RunnerError):
        runner.ChangeDetector(prior_window=8, batch_size=16)


def test_detector_freezes_baseline_after_prior_window():
    det = runner.ChangeDetector(prior_window=20, batch_size=16)
    for _ in range(16):
        det.observe(0.5)
    assert det.baseline_mean is None  # 16 < 20, still collecting
    for _ in range(16):
        det.observe(0.5)
    assert det.baseline_mean == 0.5  # rounded up to the 32-sample boundary
    assert det.baseline_sigma == pytest.approx(1e-12)


def test_detector_alarms_at_first_full_shifted_batch():
    det = runner.ChangeDetector(prior_window=64, batch_size=16)
    for _ in range(64):
        det.observe(0.2)
    assert not det.detected
    for _ in range(15):
        det.observe(0.8)
    assert not det.detected  # batch not complete yet
    det.observe(0.8)
    assert det.detected
    assert det.detection_position == 79


def test_detector_ignores_quiet_streams():
    rng = derive_rng(53, "quiet")
    det = runner.ChangeDetector()
    for v in rng.normal(0.2, 0.05, size=512):
        det.observe(float(v))
    assert not det.detected


def test_detector_position_is_frozen_after_alarm():
    det = runner.ChangeDetector(prior_window=16, batch_size=16)
    for _ in range(16):
        det.observe(0.1)
    for _ in range(16):
        det.observe(0.9)
    assert det.detection_position == 31
    for _ in range(64):
        det.observe(0.9)
    assert det.detection_position == 31


def test_weight_ramps_linearly_after_detection():
    assert runner._weight(5, None, 0.25, 32) == 0.25
    assert runner._weight(10, 10, 0.25, 32) == 0.25
    assert runner._weight(11, 10, 0.25, 4) == pytest.approx(0.25 + 0.75 * 0.25)
    assert runner._weight(14, 10, 0.25, 4) == 1.0
    assert runner._weight(99, 10, 0.25, 4) == 1.0


def _scripted(scores, threshold=0.75, length=None, intro=None):
    length = len(scores) if length is None else length
    ids = [f"s{i:05d}" for i in range(len(scores))]
    probs = {
        sid: [(1.0 - v) / 2.0, (1.0 - v) / 2.0, v] for sid, v in zip(ids, scores)
    }
    agent = runner.ScriptedAgent(probs, ["w0", "w1"], threshold)
    spec = StreamSpec(0.5, 0.5, "Writer", "Easy", "Flat", max(2, length), seed=0)
    stream = Stream(
        spec=spec,
        sample_ids=ids,
        introduction_index=intro,
        is_novel=None if intro is None else [i >= intro for i in range(len(ids))],
    )
    return agent, stream


def test_run_emits_one_record_per_position_even_with_ragged_tail():
    scores = [0.1] * 70
    agent, stream = _scripted(scores)
    result = runner.run_test(agent, stream)
    assert len(result) == 70
    assert [r.position for r in result.records] == list(range(70))
    assert result.detection_position is None
    assert not any(r.world_changed for r in result.records)
    assert not any(r.decision for r in result.records)


def test_run_detection_updates_after_the_batch_is_recorded():
    scores = [0.2] * 64 + [0.9] * 64
    agent, stream = _scripted(scores, intro=64)
    result = runner.run_test(agent, stream)
    assert result.detection_position == 79
    flags = [r.world_changed for r in result.records]
    # The alarming batch's own records are written before the update lands.
    assert not any(flags[:80])
    assert all(flags[80:])


def test_run_decision_rule_uses_weighted_score():
    # threshold 0.75 -> cut 0.25; raw 0.4 is damped to 0.1 before detection
    # and crosses the cut only once the ramp has run its course.
    scores = [0.0] * 64 + [0.4] * 64
    agent, stream = _scripted(scores, intro=64)
    result = runner.run_test(agent, stream, ramp=8)
    records = result.records
    assert result.detection_position == 79
    assert all(not r.decision for r in records[:80])
    assert records[80].weighted_score == pytest.approx(0.4 * (0.25 + 0.75 / 8))
    assert all(r.decision for r in records[87:])
    assert all(r.raw_score == pytest.approx(0.4) for r in records[64:])


def test_run_prefix_is_independent_of_the_future():
    scores = list(np.linspace(0.05, 0.95, 96))
    agent, full_stream = _scripted(scores)
    agent2, _ = _scripted(scores[:48])
    spec = full_stream.spec
    prefix_stream = Stream(spec=spec, sample_ids=full_stream.sample_ids[:48])
    full = runner.run_test(agent, full_stream)
    prefix = runner.run_test(agent2, prefix_stream)
    for a, b in zip(prefix.records, full.records[:48]):
        assert a.to_dict() == b.to_dict()


def test_run_top_field_ranks_all_labels_and_novel():
    agent, stream = _scripted([0.6, 0.0])
    result = runner.run_test(agent, stream, top_k=3)
    assert result.records[0].top == ["novel", "w0", "w1"]
    # Tie between w0 and w1 resolves to label order; novel 0.0 ranks last.
    assert result.records[1].top == ["w0", "w1", "novel"]
    assert result.labels == ["w0", "w1"]


def test_run_rejects_misshapen_probabilities():
    agent, stream = _scripted([0.1] * 4)
    agent.probs_by_id = {k: v[:2] for k, v in agent.probs_by_id.items()}
    with pytest.raises(runner.RunnerError, match="shape"):
        runner.run_test(agent, stream)


def test_transcript_novelty_rules():
    alphabet = frozenset("abc")
    assert runner.transcript_novelty("a#b", alphabet)
    assert runner.transcript_novelty("axb", alphabet)
    assert not runner.transcript_novelty("abba", alphabet)
    assert not runner.transcript_novelty("", alphabet)


class _TranscribingAgent(runner.ScriptedAgent):
    def __init__(self, probs_by_id, labels, threshold, transcripts, alphabet):
        super().__init__(probs_by_id, labels, threshold)
        self._transcripts = transcripts
        self.alphabet = alphabet

    def transcript_for(self, sample_id):
        return self._transcripts.get(sample_id)


def test_run_records_transcript_novelty():
    agent, stream = _scripted([0.1, 0.2, 0.3])
    scripted = _TranscribingAgent(
        agent.probs_by_id,
        ["w0", "w1"],
        0.75,
        {"s00000": "ab", "s00001": "a#b"},
        frozenset("ab"),
    )
    result = runner.run_test(scripted, stream)
    assert result.records[0].transcript == "ab"
    assert result.records[0].transcript_novel is False
    assert result.records[1].transcript_novel is True
    assert result.records[2].transcript is None
    assert result.records[2].transcript_novel is None


def test_run_requires_alphabet_when_transcripts_flow():
    agent, stream = _scripted([0.1])
    scripted = _TranscribingAgent(
        agent.probs_by_id, ["w0", "w1"], 0.75, {"s00000": "ab"}, None
    )
    with pytest.raises(runner.RunnerError, match="alphabet"):
        runner.run_test(scripted, stream)


def test_records_round_trip_through_jsonl(tmp_path):
    scores = [0.2] * 64 + [0.9] * 32
    agent, stream = _scripted(scores, intro=64)
    result = runner.run_test(agent, stream)
    path = tmp_path / "run.jsonl"
    runner.save_records(result, path)
    header, records = runner.load_records(path)
    assert header["labels"] == ["w0", "w1"]
    assert header["detection_position"] == result.detection_position
    assert header["spec"] == stream.spec.to_dict()
    assert len(records) == len(result.records)
    for a, b in zip(records, result.records):
        assert a.to_dict() == b.to_dict()


def test_load_records_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.jsonl"
    path.write_text('{"format": "nope"}\n', encoding="utf-8")
    with pytest.raises(runner.RunnerError):
        runner.load_records(path)


def test_ingest_external_predictions(tmp_path):
    path = tmp_path / "preds.jsonl"
    path.write_text(
        '{"id": "a", "transcript": "xy"}\n'
        "\n"
        '{"id": "b", "transcript": "q#"}\n',
        encoding="utf-8",
    )
    assert runner.ingest_external_predictions(path) == {"a": "xy", "b": "q#"}

    bad = tmp_path / "bad.jsonl"
    bad.write_text("{oops\n", encoding="utf-8")
    with pytest.raises(runner.RunnerError, match="bad.jsonl:1"):
        runner.ingest_external_predictions(bad)

    missing = tmp_path / "missing.jsonl"
    missing.write_text('{"id": "a"}\n', encoding="utf-8")
    with pytest.raises(runner.RunnerError, match="transcript"):
        runner.ingest_external_predictions(missing)

    dupe = tmp_path / "dupe.jsonl"
    dupe.write_text(
        '{"id": "a", "transcript": "x"}\n{"id": "a", "transcript": "y"}\n',
        encoding="utf-8",
    )
    with pytest.raises(runner.RunnerError, match="duplicate"):
        runner.ingest_external_predictions(dupe)


def _calibrated_world(rng):
    """A fitted, calibrated two-writer model plus feature pools."""
    train = {
        "w0": rng.normal(loc=(0, 0), scale=0.1, size=(40, 2)),
        "w1": rng.normal(loc=(6, 0), scale=0.1, size=(40, 2)),
    }
    model = evm.fit(
        train, evm.EvmHyperparams(tail_size=40, distance="euclidean"),
        extractor_id="raw",
    )
    known_val = np.vstack(
        [rng.normal(loc=c, scale=0.1, size=(30, 2)) for c in ((0, 0), (6, 0))]
    )
    novel_val = rng.normal(loc=(30, 30), scale=0.1, size=(30, 2))
    km_known = evm.class_scores(model, known_val).max(axis=1)
    km_novel = evm.class_scores(model, novel_val).max(axis=1)
    calib = evm.calibrate_threshold(km_known, km_novel)
    return dataclasses.replace(model, novelty_threshold=calib.threshold), rng


def test_agent_bundle_refuses_uncalibrated_model():
    rng = derive_rng(53, "bundle0")
    model, _ = _calibrated_world(rng)
    bare = dataclasses.replace(model, novelty_threshold=None)
    with pytest.raises(runner.RunnerError, match="threshold"):
        runner.AgentBundle(bare, features={})


def test_agent_bundle_refuses_mismatched_appearance_extractor():
    rng = derive_rng(53, "bundle1")
    model, _ = _calibrated_world(rng)
    other = dataclasses.replace(model, extractor_id="m-mean-hog")
    with pytest.raises(runner.RunnerError, match="extractor"):
        runner.AgentBundle(model, features={}, appearance_model=other)


def test_agent_bundle_names_missing_features():
    rng = derive_rng(53, "bundle2")
    model, _ = _calibrated_world(rng)
    bundle = runner.AgentBundle(model, features={"here": np.zeros(2)})
    with pytest.raises(runner.RunnerError, match="absent"):
        bundle.predict_ids(["here", "absent"])


def test_model_backed_stream_run_detects_and_flags():
    rng = derive_rng(53, "endtoend")
    model, rng = _calibrated_world(rng)

    intro, length = 64, 128
    features = {}
    ids = []
    for i in range(length):
        sid = f"s{i:05d}"
        ids.append(sid)
        if i < intro:
            center = (0, 0) if i % 2 == 0 else (6, 0)
            features[sid] = rng.normal(loc=center, scale=0.1, size=2)
        else:
            features[sid] = rng.normal(loc=(30, 30), scale=0.1, size=2)
    bundle = runner.AgentBundle(model, features=features)
    spec = StreamSpec(0.5, 1.0, "Writer", "Easy", "Flat", length, seed=1)
    stream = Stream(
        spec=spec,
        sample_ids=ids,
        introduction_index=intro,
        is_novel=[i >= intro for i in range(length)],
    )
    result = runner.run_test(bundle, stream, batch_size=8, prior_window=32, ramp=8)

    assert result.detection_position is not None
    assert intro <= result.detection_position <= intro + 15
    # Knowns stay quiet; fully ramped novels are flagged.
    for rec in result.records[:intro]:
        assert not rec.decision
    ramped = result.detection_position + 8
    for rec in result.records[ramped:]:
        assert rec.decision
    assert {rec.top[0] for rec in result.records[ramped:]} == {"novel"}
