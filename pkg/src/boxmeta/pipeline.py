"""Detector-output post-processing: score filtering, NMS, dropout joining.

The unit of work is one image worth of candidate boxes. Candidates with
dropout_run 0 are the base inference; runs 1..J are repeated stochastic
forward passes of the same anchors and only ever enter via attach_dropout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError, FormatError
from .geometry import BBox, iou

DEFAULT_TAU = 0.45


@dataclass(frozen=True)
class CandidateBox:
    """One raw detector output: localization, score, class probabilities."""

    box: BBox
    score: float
    probs: tuple[float, ...]
    anchor_id: int
    dropout_run: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if not self.probs:
            raise ValueError("probs must be non-empty")
        if any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ValueError(f"class probabilities must lie in [0, 1], got {self.probs}")
        if abs(sum(self.probs) - 1.0) > 1e-3:
            raise ValueError(f"class probabilities must sum to 1 within 1e-3, got {sum(self.probs)}")
        if self.dropout_run < 0:
            raise ValueError(f"dropout_run must be >= 0, got {self.dropout_run}")

    @property
    def predicted_class(self) -> int:
        """1-based argmax of the class probabilities; ties go to the lowest index."""
        best = 0
        for k in range(1, len(self.probs)):
            if self.probs[k] > self.probs[best]:
                best = k
        return best + 1


@dataclass(frozen=True)
class GroundTruthBox:
    """Annotated object: localization plus 1-based class index."""

    box: BBox
    class_index: int

    def __post_init__(self) -> None:
        if self.class_index < 1:
            raise ValueError(f"class_index must be >= 1, got {self.class_index}")


@dataclass
class SurvivorRecord:
    """An NMS survivor together with everything attributed to it.

    suppressed holds the base candidates this survivor removed (highest score
    first); dropout_obs holds the survivor's own repeated forward passes,
    ordered by dropout_run.
    """

    survivor: CandidateBox
    suppressed: list[CandidateBox] = field(default_factory=list)
    dropout_obs: list[CandidateBox] = field(default_factory=list)
    image_id: str = ""

    @property
    def n(self) -> int:
        """Cluster size: the survivor plus every box it suppressed."""
        return 1 + len(self.suppressed)


def score_filter(candidates: list[CandidateBox], threshold: float) -> list[CandidateBox]:
    """Keep candidates with score >= threshold (inclusive), preserving order.

    Operates on base inferences only; dropout repeats never pass through the
    score filter or NMS.
    """
    if any(c.dropout_run != 0 for c in candidates):
        raise ValueError("score_filter expects dropout_run == 0 candidates only")
    return [c for c in candidates if c.score >= threshold]


def nms(filtered: list[CandidateBox], tau: float = DEFAULT_TAU, image_id: str = "") -> list[SurvivorRecord]:
    """Greedy class-gated non-maximum suppression with suppression attribution.

    Repeatedly picks the highest-scoring unclaimed candidate (score ties
    broken by lower input index) as a survivor and removes every unclaimed
    candidate of the same predicted class with IoU >= tau against it. Each
    suppressed box is attributed to exactly the survivor that removed it.
    """
    order = sorted(range(len(filtered)), key=lambda i: (-filtered[i].score, i))
    classes = [c.predicted_class for c in filtered]
    claimed = [False] * len(filtered)
    records: list[SurvivorRecord] = []
    for pos, i in enumerate(order):
        if claimed[i]:
            continue
        claimed[i] = True
        suppressed: list[CandidateBox] = []
        for j in order[pos + 1:]:
            if claimed[j] or classes[j] != classes[i]:
                continue
            if iou(filtered[i].box, filtered[j].box) >= tau:
                claimed[j] = True
                suppressed.append(filtered[j])
        records.append(
            SurvivorRecord(survivor=filtered[i], suppressed=suppressed, image_id=image_id)
        )
    return records


def attach_dropout(
    records: list[SurvivorRecord], all_candidates: list[CandidateBox]
) -> list[SurvivorRecord]:
    """Join each survivor with its dropout repeats by anchor_id.

    all_candidates is the full per-image dump; entries with dropout_run 0 are
    ignored. A duplicated (anchor_id, dropout_run) pair is a format error.
    """
    by_anchor: dict[int, list[CandidateBox]] = {}
    seen: set[tuple[int, int]] = set()
    for c in all_candidates:
        if c.dropout_run == 0:
            continue
        key = (c.anchor_id, c.dropout_run)
        if key in seen:
            raise FormatError(
                f"duplicate dropout observation for anchor {c.anchor_id}, run {c.dropout_run}"
            )
        seen.add(key)
        by_anchor.setdefault(c.anchor_id, []).append(c)
    out: list[SurvivorRecord] = []
    for rec in records:
        obs = sorted(
            by_anchor.get(rec.survivor.anchor_id, []), key=lambda c: c.dropout_run
        )
        out.append(replace(rec, dropout_obs=obs))
    return out


def threshold_schedule(kind: str) -> list[float]:
    """Score-threshold sweep schedules.

    linear: 0.01 followed by k/40 for k = 1..32 (33 values, ascending).
    log: 10^-1 down to 10^-12 (12 values, descending).
    """
    if kind == "linear":
        return [0.01] + [k / 40.0 for k in range(1, 33)]
    if kind == "log":
        return [float(f"1e-{k}") for k in range(1, 13)]
    raise ConfigError(f"unknown threshold schedule {kind!r}; expected 'linear' or 'log'")
