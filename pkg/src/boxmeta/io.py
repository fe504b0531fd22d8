"""CSV schemas and report writers.

All files are plain CSV with exact headers; readers reject unknown or
missing columns and report malformed values with their line number. Floats
are written with shortest-repr full precision, so write/read round-trips
are exact and repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import MetricTable
from .errors import FormatError, SchemaError
from .evaluation import SweepReport
from .features import feature_names
from .geometry import BBox
from .pipeline import CandidateBox, GroundTruthBox

_CANDIDATE_FIXED = ("image_id", "anchor_id", "dropout_run", "r_min", "r_max", "c_min", "c_max", "score")
_GROUNDTRUTH_HEADER = ("image_id", "r_min", "r_max", "c_min", "c_max", "class")


def _fmt(value: float) -> str:
    return repr(float(value))


def _open_write(path: str | Path):
    return open(path, "w", encoding="utf-8", newline="")


def _parse_float(text: str, path, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise FormatError(f"{path}:{line}: column {column}: not a number: {text!r}") from exc


def _parse_int(text: str, path, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise FormatError(f"{path}:{line}: column {column}: not an integer: {text!r}") from exc


def write_candidates(
    path: str | Path,
    candidates_by_image: dict[str, list[CandidateBox]],
    num_classes: int,
) -> None:
    header = list(_CANDIDATE_FIXED) + [f"p_{k}" for k in range(1, num_classes + 1)]
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for image_id, candidates in candidates_by_image.items():
            for c in candidates:
                writer.writerow(
                    [
                        image_id,
                        c.anchor_id,
                        c.dropout_run,
                        _fmt(c.box.r_min),
                        _fmt(c.box.r_max),
                        _fmt(c.box.c_min),
                        _fmt(c.box.c_max),
                        _fmt(c.score),
                    ]
                    + [_fmt(p) for p in c.probs]
                )


def read_candidates(path: str | Path) -> tuple[dict[str, list[CandidateBox]], int]:
    """Load a candidate dump; returns (candidates per image, class count)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        fixed = tuple(header[: len(_CANDIDATE_FIXED)])
        if fixed != _CANDIDATE_FIXED:
            raise SchemaError(
                f"{path}: candidate header must start with {','.join(_CANDIDATE_FIXED)}, "
                f"got {','.join(header)}"
            )
        prob_columns = header[len(_CANDIDATE_FIXED) :]
        expected = [f"p_{k}" for k in range(1, len(prob_columns) + 1)]
        if not prob_columns or prob_columns != expected:
            raise SchemaError(
                f"{path}: expected probability columns p_1..p_C after score, "
                f"got {','.join(prob_columns) or '(none)'}"
            )
        num_classes = len(prob_columns)
        by_image: dict[str, list[CandidateBox]] = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{line}: expected {len(header)} fields, got {len(row)}"
                )
            image_id = row[0]
            anchor = _parse_int(row[1], path, line, "anchor_id")
            run = _parse_int(row[2], path, line, "dropout_run")
            coords = [
                _parse_float(row[3 + i], path, line, _CANDIDATE_FIXED[3 + i])
                for i in range(4)
            ]
            score = _parse_float(row[7], path, line, "score")
            probs = tuple(
                _parse_float(row[8 + k], path, line, f"p_{k + 1}")
                for k in range(num_classes)
            )
            try:
                candidate = CandidateBox(
                    box=BBox(*coords),
                    score=score,
                    probs=probs,
                    anchor_id=anchor,
                    dropout_run=run,
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from exc
            by_image.setdefault(image_id, []).append(candidate)
    return by_image, num_classes


def write_groundtruth(path: str | Path, gts_by_image: dict[str, list[GroundTruthBox]]) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_GROUNDTRUTH_HEADER)
        for image_id, gts in gts_by_image.items():
            for gt in gts:
                writer.writerow(
                    [
                        image_id,
                        _fmt(gt.box.r_min),
                        _fmt(gt.box.r_max),
                        _fmt(gt.box.c_min),
                        _fmt(gt.box.c_max),
                        gt.class_index,
                    ]
                )


def read_groundtruth(
    path: str | Path, num_classes: int | None = None
) -> dict[str, list[GroundTruthBox]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if tuple(header) != _GROUNDTRUTH_HEADER:
            raise SchemaError(
                f"{path}: ground-truth header must be {','.join(_GROUNDTRUTH_HEADER)}, "
                f"got {','.join(header)}"
            )
        by_image: dict[str, list[GroundTruthBox]] = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{line}: expected {len(header)} fields, got {len(row)}"
                )
            coords = [
                _parse_float(row[1 + i], path, line, _GROUNDTRUTH_HEADER[1 + i])
                for i in range(4)
            ]
            class_index = _parse_int(row[5], path, line, "class")
            if num_classes is not None and not 1 <= class_index <= num_classes:
                raise FormatError(
                    f"{path}:{line}: class {class_index} outside 1..{num_classes}"
                )
            try:
                gt = GroundTruthBox(box=BBox(*coords), class_index=class_index)
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from exc
            by_image.setdefault(row[0], []).append(gt)
    return by_image


def write_table(path: str | Path, table: MetricTable) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id"] + table.feature_names + ["true_iou", "is_tp"])
        for i in range(len(table)):
            writer.writerow(
                [table.image_ids[i]]
                + [_fmt(v) for v in table.features[i]]
                + [_fmt(table.true_iou[i]), int(table.is_tp[i])]
            )


def read_table(path: str | Path) -> MetricTable:
    """Load a feature table, validating the header against the canonical order."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if len(header) < 4 or header[0] != "image_id" or header[-2:] != ["true_iou", "is_tp"]:
            raise SchemaError(
                f"{path}: table header must be image_id,<features>,true_iou,is_tp"
            )
        names = header[1:-2]
        num_classes = sum(1 for n in names if n.startswith("prob_"))
        if num_classes == 0:
            raise SchemaError(f"{path}: no prob_k columns found in the header")
        dropout = any(n.endswith("_mc") for n in names)
        expected = feature_names(num_classes, dropout)
        if names != expected:
            raise SchemaError(
                f"{path}: feature columns do not match the canonical order for "
                f"C={num_classes}, dropout={'on' if dropout else 'off'}"
            )
        image_ids: list[str] = []
        rows: list[list[float]] = []
        true_iou: list[float] = []
        is_tp: list[bool] = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{line}: expected {len(header)} fields, got {len(row)}"
                )
            image_ids.append(row[0])
            values = [
                _parse_float(row[1 + i], path, line, names[i]) for i in range(len(names))
            ]
            if not all(np.isfinite(values)):
                raise FormatError(f"{path}:{line}: non-finite feature value")
            rows.append(values)
            iou_value = _parse_float(row[-2], path, line, "true_iou")
            if not 0.0 <= iou_value <= 1.0:
                raise FormatError(f"{path}:{line}: true_iou {iou_value} outside [0, 1]")
            tp_raw = row[-1]
            if tp_raw not in ("0", "1"):
                raise FormatError(f"{path}:{line}: is_tp must be 0 or 1, got {tp_raw!r}")
            tp = tp_raw == "1"
            if tp != (iou_value >= 0.5):
                raise FormatError(
                    f"{path}:{line}: is_tp={tp_raw} contradicts true_iou={iou_value}"
                )
            true_iou.append(iou_value)
            is_tp.append(tp)
    features = (
        np.asarray(rows, dtype=float)
        if rows
        else np.empty((0, len(names)), dtype=float)
    )
    return MetricTable(
        feature_names=list(names),
        image_ids=image_ids,
        features=features,
        true_iou=np.asarray(true_iou, dtype=float),
        is_tp=np.asarray(is_tp, dtype=bool),
        num_classes=num_classes,
        dropout_enabled=dropout,
    )


def write_correlations(path: str | Path, rows: list[tuple[str, str, float, float, bool]]) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "family", "pearson_r", "abs_r", "degenerate"])
        for name, family, r, abs_r, degenerate in rows:
            writer.writerow([name, family, _fmt(r), _fmt(abs_r), int(degenerate)])


def write_eval_report(path: str | Path, rows: list[tuple[str, str, str, float]]) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["family", "feature_set", "metric", "value"])
        for family, feature_set, metric, value in rows:
            writer.writerow([family, feature_set, metric, _fmt(value)])


def write_sweep_csv(path: str | Path, report: SweepReport) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "family", "feature_set", "metric", "mean", "std"])
        for c in report.cells:
            writer.writerow(
                [_fmt(c.threshold), c.family, c.feature_set, c.metric, _fmt(c.mean), _fmt(c.std)]
            )


def write_map_csv(path: str | Path, report: SweepReport) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "map_at_50"])
        for threshold, value in report.detector_map:
            writer.writerow([_fmt(threshold), _fmt(value)])


def write_warnings(path: str | Path, report: SweepReport) -> None:
    with _open_write(path) as fh:
        for message in report.warnings:
            fh.write(message + "\n")


def write_scatter(path: str | Path, true_iou: np.ndarray, predicted: np.ndarray) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true_iou", "predicted_iou"])
        for t, p in zip(true_iou, predicted):
            writer.writerow([_fmt(t), _fmt(p)])


def sweep_text_tables(report: SweepReport) -> str:
    """Aligned text tables, one section per metric, cells mean(+-std).

    Row order follows the cell order (threshold-major); columns are the
    feature sets in first-seen order. Values use 6 significant digits.
    """
    sections: list[str] = [
        f"runs={report.runs} base_seed={report.base_seed}",
    ]
    metrics = list(dict.fromkeys(c.metric for c in report.cells))
    feature_sets = list(dict.fromkeys(c.feature_set for c in report.cells))
    for metric in metrics:
        cells = [c for c in report.cells if c.metric == metric]
        pairs = list(dict.fromkeys((c.threshold, c.family) for c in cells))
        lookup = {(c.threshold, c.family, c.feature_set): c for c in cells}
        header = ["threshold", "family"] + feature_sets
        lines = [header]
        for threshold, family in pairs:
            line = [f"{threshold:.6g}", family]
            for feature_set in feature_sets:
                cell = lookup.get((threshold, family, feature_set))
                if cell is None:
                    line.append("-")
                else:
                    line.append(f"{cell.mean:.6g}(+-{cell.std:.6g})")
            lines.append(line)
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        rendered = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            for row in lines
        ]
        sections.append(f"\nmetric: {metric}\n" + "\n".join(rendered))
    if report.warnings:
        sections.append("\nwarnings:\n" + "\n".join(report.warnings))
    return "\n".join(sections) + "\n"
