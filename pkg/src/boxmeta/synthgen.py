"""Synthetic detector-output generator for benchmarking the toolkit.

Each image gets ground-truth objects; every object emits a cluster of
jittered candidate boxes whose scores track their actual IoU with the
source object. Clutter clusters are placed away from any object, carry no
IoU signal in their scores, and are smaller on average, so real clusters
look confident and crowded while clutter looks sparse and weak. Optional
dropout passes re-jitter every base candidate J times.

Everything derives from per-image child seeds, so generation is
deterministic for a fixed seed and parallelizable across images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import BBox, iou
from .pipeline import CandidateBox, GroundTruthBox

_CLUTTER_MAX_IOU = 0.1
_CLUTTER_DRAWS = 25
_LOGIT_PEAK = 2.5
_LOGIT_NOISE = 0.35


@dataclass(frozen=True)
class SceneConfig:
    """Knobs of the generator; defaults give a balanced desk-scale benchmark."""

    num_images: int = 300
    rows: float = 256.0
    cols: float = 512.0
    num_classes: int = 3
    objects_min: int = 1
    objects_max: int = 6
    side_min: float = 30.0
    side_max: float = 120.0
    cluster_mean: float = 4.0
    clutter_cluster_mean: float = 1.0
    clutter_rate: float = 2.0
    jitter_sigma: float = 6.0
    score_slope: float = 0.8
    score_offset: float = 0.1
    score_noise: float = 0.2
    dropout_passes: int = 0
    dropout_jitter: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_images < 1:
            raise ConfigError(f"num_images must be >= 1, got {self.num_images}")
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigError(f"image extent must be positive, got {self.rows} x {self.cols}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if not 1 <= self.objects_min <= self.objects_max:
            raise ConfigError(
                f"need 1 <= objects_min <= objects_max, got {self.objects_min}..{self.objects_max}"
            )
        if not 0 < self.side_min <= self.side_max:
            raise ConfigError(
                f"need 0 < side_min <= side_max, got {self.side_min}..{self.side_max}"
            )
        if self.side_max > min(self.rows, self.cols):
            raise ConfigError("side_max must not exceed the image extent")
        if self.cluster_mean < 0 or self.clutter_cluster_mean < 0 or self.clutter_rate < 0:
            raise ConfigError("cluster means and clutter rate must be >= 0")
        if self.jitter_sigma < 0 or self.score_noise < 0 or self.dropout_jitter < 0:
            raise ConfigError("jitter and noise sigmas must be >= 0")
        if self.dropout_passes < 0:
            raise ConfigError(f"dropout_passes must be >= 0, got {self.dropout_passes}")


def _jitter(box: BBox, sigma: float, rng: np.random.Generator) -> BBox:
    r = np.sort(rng.normal((box.r_min, box.r_max), sigma))
    c = np.sort(rng.normal((box.c_min, box.c_max), sigma))
    return BBox(float(r[0]), float(r[1]), float(c[0]), float(c[1]))


def _peaked_probs(class_index: int, num_classes: int, rng: np.random.Generator) -> tuple[float, ...]:
    logits = rng.normal(0.0, _LOGIT_NOISE, num_classes)
    logits[class_index - 1] += _LOGIT_PEAK
    exp = np.exp(logits - logits.max())
    return tuple(float(p) for p in exp / exp.sum())


def _score(config: SceneConfig, box: BBox, source: BBox | None, rng: np.random.Generator) -> float:
    signal = config.score_slope * iou(box, source) if source is not None else 0.0
    raw = signal + config.score_offset + rng.normal(0.0, config.score_noise)
    return float(np.clip(raw, 0.0, 1.0))


def _random_box(config: SceneConfig, rng: np.random.Generator) -> BBox:
    h = float(rng.uniform(config.side_min, config.side_max))
    w = float(rng.uniform(config.side_min, config.side_max))
    r0 = float(rng.uniform(0.0, config.rows - h))
    c0 = float(rng.uniform(0.0, config.cols - w))
    return BBox(r0, r0 + h, c0, c0 + w)


def _generate_image(
    config: SceneConfig, rng: np.random.Generator
) -> tuple[list[GroundTruthBox], list[CandidateBox]]:
    gts: list[GroundTruthBox] = []
    n_objects = int(rng.integers(config.objects_min, config.objects_max + 1))
    for _ in range(n_objects):
        gts.append(
            GroundTruthBox(
                box=_random_box(config, rng),
                class_index=int(rng.integers(1, config.num_classes + 1)),
            )
        )

    # (box source or None, class) per cluster; members share both
    candidates: list[CandidateBox] = []
    sources: list[BBox | None] = []
    classes: list[int] = []
    anchor = 0
    for gt in gts:
        cluster_size = int(rng.poisson(config.cluster_mean)) + 1
        for _ in range(cluster_size):
            box = _jitter(gt.box, config.jitter_sigma, rng)
            candidates.append(
                CandidateBox(
                    box=box,
                    score=_score(config, box, gt.box, rng),
                    probs=_peaked_probs(gt.class_index, config.num_classes, rng),
                    anchor_id=anchor,
                )
            )
            sources.append(gt.box)
            classes.append(gt.class_index)
            anchor += 1

    n_clutter = int(rng.poisson(config.clutter_rate))
    for _ in range(n_clutter):
        base = _random_box(config, rng)
        for _ in range(_CLUTTER_DRAWS):
            if all(iou(base, gt.box) < _CLUTTER_MAX_IOU for gt in gts):
                break
            base = _random_box(config, rng)
        clutter_class = int(rng.integers(1, config.num_classes + 1))
        cluster_size = int(rng.poisson(config.clutter_cluster_mean)) + 1
        for _ in range(cluster_size):
            box = _jitter(base, config.jitter_sigma, rng)
            candidates.append(
                CandidateBox(
                    box=box,
                    score=_score(config, box, None, rng),
                    probs=_peaked_probs(clutter_class, config.num_classes, rng),
                    anchor_id=anchor,
                )
            )
            sources.append(None)
            classes.append(clutter_class)
            anchor += 1

    repeats: list[CandidateBox] = []
    for run in range(1, config.dropout_passes + 1):
        for i, base_candidate in enumerate(candidates):
            box = _jitter(base_candidate.box, config.dropout_jitter, rng)
            repeats.append(
                CandidateBox(
                    box=box,
                    score=_score(config, box, sources[i], rng),
                    probs=_peaked_probs(classes[i], config.num_classes, rng),
                    anchor_id=base_candidate.anchor_id,
                    dropout_run=run,
                )
            )
    return gts, candidates + repeats


def generate(
    config: SceneConfig,
) -> tuple[dict[str, list[GroundTruthBox]], dict[str, list[CandidateBox]]]:
    """Build the scene: ground truths and the candidate dump, per image."""
    config.validate()
    children = np.random.SeedSequence(config.seed).spawn(config.num_images)
    gts_by_image: dict[str, list[GroundTruthBox]] = {}
    candidates_by_image: dict[str, list[CandidateBox]] = {}
    for i, child in enumerate(children):
        image_id = f"img_{i:05d}"
        gts, candidates = _generate_image(config, np.random.default_rng(child))
        gts_by_image[image_id] = gts
        candidates_by_image[image_id] = candidates
    return gts_by_image, candidates_by_image
