"""Streaming evaluation: per-sample open-set predictions under a change
detector that re-weights novelty scores once the world appears to have
changed.

The detector is a one-sided CUSUM on batch means of the raw novelty score:
a baseline (mean, sigma) freezes after the prior window, and each later
batch adds its slack-adjusted excess to a cumulative statistic; crossing the
alarm level declares the change at that batch's last position. Records are
emitted strictly causally: a record at position p depends only on samples at
positions <= p, so truncating a stream reproduces its prefix exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evm
from .testgen import TestStream

__all__ = [
    "RunnerError",
    "ChangeDetector",
    "PredictionRecord",
    "RunResult",
    "AgentBundle",
    "ScriptedAgent",
    "transcript_novelty",
    "ingest_external_predictions",
    "run_test",
    "save_records",
    "load_records",
]

NOVEL_LABEL = "novel"
NOVEL_CHAR_MARKER = "#"


class RunnerError(ValueError):
    pass


class ChangeDetector:
    """One-sided CUSUM over batch means of a score stream.

    Scores arrive one at a time; the statistic only updates when a full
    batch completes. The first `prior_window` samples (rounded up to a batch
    boundary) form the baseline and are never tested.
    """

    def __init__(
        self,
        prior_window: int = 64,
        batch_size: int = 16,
        slack_sigmas: float = 0.5,
        alarm_sigmas: float = 5.0,
    ):
        if batch_size < 1 or prior_window < batch_size:
            raise RunnerError("need prior_window >= batch_size >= 1")
        self.prior_window = prior_window
        self.batch_size = batch_size
        self.slack_sigmas = slack_sigmas
        self.alarm_sigmas = alarm_sigmas
        self.baseline_mean = None
        self.baseline_sigma = None
        self.statistic = 0.0
        self.detection_position = None
        self._seen = 0
        self._batch = []
        self._baseline = []

    @property
    def detected(self) -> bool:
        return self.detection_position is not None

    def observe(self, score: float) -> None:
        self._batch.append(float(score))
        self._seen += 1
        if len(self._batch) < self.batch_size:
            return
        batch = self._batch
        self._batch = []
        if self.baseline_mean is None:
            self._baseline.extend(batch)
            if len(self._baseline) >= self.prior_window:
                base = np.asarray(self._baseline)
                self.baseline_mean = float(base.mean())
                # Slack and alarm are expressed in units of the per-sample
                # baseline std. Batch means are 1/sqrt(B) quieter, so the
                # alarm sits far above the noise floor: it needs a genuine
                # shift, not a lucky batch, which keeps the pre-change false
                # alarm rate negligible.
                self.baseline_sigma = max(float(base.std()), 1e-12)
            return
        if self.detected:
            return
        sigma = self.baseline_sigma
        excess = float(np.mean(batch)) - self.baseline_mean - self.slack_sigmas * sigma
        self.statistic = max(0.0, self.statistic + excess)
        if self.statistic >= self.alarm_sigmas * sigma:
            self.detection_position = self._seen - 1


def _weight(position: int, detection_position, w_pre: float, ramp: int) -> float:
    """Pre-detection damping, rising linearly to 1.0 after the alarm."""
    if detection_position is None or position <= detection_position:
        return w_pre
    frac = min(1.0, (position - detection_position) / ramp)
    return w_pre + (1.0 - w_pre) * frac


@dataclass
class PredictionRecord:
    id: str
    position: int
    probs: list
    top: list
    raw_score: float
    weighted_score: float
    decision: bool
    world_changed: bool
    transcript: str | None = None
    transcript_novel: bool | None = None

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "position": self.position,
            "probs": [float(p) for p in self.probs],
            "top": list(self.top),
            "raw_score": float(self.raw_score),
            "weighted_score": float(self.weighted_score),
            "decision": bool(self.decision),
            "world_changed": bool(self.world_changed),
        }
        if self.transcript is not None:
            out["transcript"] = self.transcript
            out["transcript_novel"] = bool(self.transcript_novel)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "PredictionRecord":
        return cls(
            id=payload["id"],
            position=payload["position"],
            probs=payload["probs"],
            top=payload["top"],
            raw_score=payload["raw_score"],
            weighted_score=payload["weighted_score"],
            decision=payload["decision"],
            world_changed=payload["world_changed"],
            transcript=payload.get("transcript"),
            transcript_novel=payload.get("transcript_novel"),
        )


@dataclass
class RunResult:
    stream: TestStream
    records: list
    detection_position: int | None
    labels: list

    def __len__(self):
        return len(self.records)


class AgentBundle:
    """A calibrated open-set writer model plus optional side channels.

    `features` maps sample id to its feature vector (already extracted with
    the model's extractor). `transcripts` optionally carries an external
    recognizer's predicted text per id; `alphabet` is the known character
    set those predictions are checked against. An uncalibrated writer model
    is refused: the stream decision rule needs the novelty threshold.
    """

    def __init__(
        self,
        writer_model: evm.EvmModel,
        features: dict,
        appearance_model: evm.EvmModel | None = None,
        transcripts: dict | None = None,
        alphabet=None,
    ):
        if writer_model.novelty_threshold is None:
            raise RunnerError("writer model has no novelty threshold; calibrate first")
        if appearance_model is not None and (
            appearance_model.extractor_id != writer_model.extractor_id
        ):
            raise RunnerError("appearance model uses a different feature extractor")
        self.writer_model = writer_model
        self.features = features
        self.appearance_model = appearance_model
        self.transcripts = transcripts
        self.alphabet = frozenset(alphabet) if alphabet is not None else None

    @property
    def labels(self) -> list:
        return self.writer_model.labels

    @property
    def threshold(self) -> float:
        return self.writer_model.novelty_threshold

    def predict_ids(self, ids) -> np.ndarray:
        try:
            x = np.vstack([np.asarray(self.features[i], dtype=np.float64) for i in ids])
        except KeyError as exc:
            raise RunnerError(f"no features for stream sample {exc.args[0]!r}") from None
        return evm.predict(self.writer_model, x)

    def transcript_for(self, sample_id: str):
        if self.transcripts is None:
            return None
        return self.transcripts.get(sample_id)


class ScriptedAgent:
    """Canned probability vectors, for harnesses and detector studies."""

    def __init__(self, probs_by_id: dict, labels, threshold: float):
        self.probs_by_id = probs_by_id
        self._labels = list(labels)
        self.threshold = threshold
        self.transcripts = None
        self.alphabet = None

    @property
    def labels(self) -> list:
        return list(self._labels)

    def predict_ids(self, ids) -> np.ndarray:
        return np.vstack([np.asarray(self.probs_by_id[i], dtype=np.float64) for i in ids])

    def transcript_for(self, sample_id: str):
        return None


def transcript_novelty(prediction: str, alphabet) -> bool:
    """True when the predicted text signals a character outside the known
    alphabet, either via the explicit novel-character marker or directly."""
    return any(ch == NOVEL_CHAR_MARKER or ch not in alphabet for ch in prediction)


def ingest_external_predictions(path) -> dict:
    """Load line-delimited {id, transcript} records from an external HTR."""
    path = Path(path)
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RunnerError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(payload, dict) or "id" not in payload or "transcript" not in payload:
                raise RunnerError(f"{path}:{lineno}: need id and transcript fields")
            if payload["id"] in out:
                raise RunnerError(f"{path}:{lineno}: duplicate prediction for id {payload['id']!r}")
            out[payload["id"]] = payload["transcript"]
    return out


def run_test(
    agent,
    stream: TestStream,
    batch_size: int = 16,
    prior_window: int = 64,
    slack_sigmas: float = 0.5,
    alarm_sigmas: float = 5.0,
    w_pre: float = 0.25,
    ramp: int = 32,
    top_k: int = 3,
) -> RunResult:
    """Run one agent over one stream, producing a record per position.

    The decision rule flags a sample novel when its weighted novelty score
    reaches 1 - threshold. The detector only ever updates after a batch's
    records are already emitted, which keeps every record a pure function of
    the stream prefix up to its own position.
    """
    detector = ChangeDetector(
        prior_window=prior_window,
        batch_size=batch_size,
        slack_sigmas=slack_sigmas,
        alarm_sigmas=alarm_sigmas,
    )
    labels = agent.labels
    cut = 1.0 - agent.threshold
    records = []
    ids = stream.sample_ids
    for start in range(0, len(ids), batch_size):
        batch_ids = ids[start : start + batch_size]
        probs = agent.predict_ids(batch_ids)
        if probs.shape != (len(batch_ids), len(labels) + 1):
            raise RunnerError(
                f"agent returned shape {probs.shape}, expected "
                f"({len(batch_ids)}, {len(labels) + 1})"
            )
        raw = probs[:, -1]
        slot_names = labels + ["novel"]
        order = np.argsort(-probs, axis=1, kind="stable")
        for j, sid in enumerate(batch_ids):
            pos = start + j
            w = _weight(pos, detector.detection_position, w_pre, ramp)
            weighted = float(raw[j]) * w
            transcript = agent.transcript_for(sid)
            t_novel = None
            if transcript is not None:
                if agent.alphabet is None:
                    raise RunnerError("transcript predictions need an alphabet")
                t_novel = transcript_novelty(transcript, agent.alphabet)
            records.append(
                PredictionRecord(
                    id=sid,
                    position=pos,
                    probs=[float(p) for p in probs[j]],
                    top=[slot_names[t] for t in order[j, :top_k]],
                    raw_score=float(raw[j]),
                    weighted_score=weighted,
                    decision=weighted >= cut,
                    world_changed=detector.detected,
                    transcript=transcript,
                    transcript_novel=t_novel,
                )
            )
        # Detector sees the batch only after its records exist (no lookahead
        # inside a batch), and only full batches update the statistic.
        if len(batch_ids) == batch_size:
            for score in raw:
                detector.observe(float(score))
    return RunResult(
        stream=stream,
        records=records,
        detection_position=detector.detection_position,
        labels=list(labels),
    )


def save_records(result: RunResult, path) -> None:
    """One JSON object per line: spec header, then the records in order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": "scriptdrift-run",
            "version": 1,
            "spec": result.stream.spec.to_dict(),
            "detection_position": result.detection_position,
            "labels": list(result.labels),
        }
        fh.write(json.dumps(header))
        fh.write("\n")
        for rec in result.records:
            fh.write(json.dumps(rec.to_dict()))
            fh.write("\n")


def load_records(path):
    """Returns (header dict, [PredictionRecord])."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "scriptdrift-run":
            raise RunnerError(f"{path}: not a run record file")
        records = [PredictionRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    return header, records
