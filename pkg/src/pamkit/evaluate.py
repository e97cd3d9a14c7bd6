"""Detector evaluation at the one-minute-file level.

Segment scores are max-pooled per file, the exact precision-recall curve is
built over distinct scores, AP is its step-interpolated area, and best F1 is
optimized over a log-spaced threshold grid per species.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, ParamError
from .store import ScoreRecord

log = logging.getLogger(__name__)

THRESHOLD_LO = 1e-7
THRESHOLD_HI = 1.0
THRESHOLD_COUNT = 200


@dataclass(frozen=True)
class FileLabel:
    file_id: str
    species: str
    present: bool


@dataclass(frozen=True)
class SpeciesEval:
    species: str
    ap: float
    best_f1: float
    best_threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_positive_files: int

    def to_record(self) -> dict:
        return {
            "species": self.species,
            "ap": round(self.ap, 6),
            "best_f1": round(self.best_f1, 6),
            "best_threshold": self.best_threshold,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "n_positive_files": self.n_positive_files,
        }


@dataclass
class EvalReport:
    per_species: list[SpeciesEval]
    config_digest: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_digest": self.config_digest,
                "species": [s.to_record() for s in self.per_species],
            },
            sort_keys=True,
            indent=2,
        )

    def to_csv(self) -> str:
        lines = ["species,ap,best_f1,best_threshold,tp,fp,tn,fn,n_positive_files"]
        for s in self.per_species:
            lines.append(
                f"{s.species},{s.ap:.6f},{s.best_f1:.6f},{s.best_threshold:.9g},"
                f"{s.tp},{s.fp},{s.tn},{s.fn},{s.n_positive_files}"
            )
        return "\n".join(lines) + "\n"


def pool_max(scores: Sequence[float]) -> float:
    """File-level score: the maximum across the file's segment scores."""
    if len(scores) == 0:
        raise EmptyInputError("cannot pool an empty score list")
    return float(max(scores))


def threshold_grid(lo: float = THRESHOLD_LO, hi: float = THRESHOLD_HI,
                   n: int = THRESHOLD_COUNT) -> np.ndarray:
    """n geometrically spaced thresholds, endpoints inclusive."""
    if not (0.0 < lo < hi):
        raise ParamError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if n < 2:
        raise ParamError("need at least two grid points")
    grid = np.geomspace(lo, hi, n)
    grid[0], grid[-1] = lo, hi
    return grid


def _counts_at(scores: np.ndarray, present: np.ndarray, threshold: float) -> tuple[int, int, int, int]:
    pred = scores >= threshold
    tp = int(np.sum(pred & present))
    fp = int(np.sum(pred & ~present))
    fn = int(np.sum(~pred & present))
    tn = int(np.sum(~pred & ~present))
    return tp, fp, tn, fn


def _validate_keys(file_scores: Mapping[str, float], labels: Mapping[str, bool]) -> None:
    if set(file_scores) != set(labels):
        missing = set(labels) ^ set(file_scores)
        raise ParamError(f"score/label key sets differ, e.g. {sorted(missing)[:3]}")


def pr_curve(
    file_scores: Mapping[str, float],
    labels: Mapping[str, bool],
) -> list[tuple[float, float]]:
    """(recall, precision) at each distinct score, descending score order.

    Precision with zero predicted positives is 1 by convention; at least one
    positive file is required for the curve to exist.
    """
    _validate_keys(file_scores, labels)
    files = sorted(file_scores)
    scores = np.array([file_scores[f] for f in files], dtype=np.float64)
    present = np.array([bool(labels[f]) for f in files])
    n_pos = int(present.sum())
    if n_pos == 0:
        raise ParamError("no positive files; curve undefined")

    points: list[tuple[float, float]] = []
    for t in sorted(set(scores.tolist()), reverse=True):
        tp, fp, _, _ = _counts_at(scores, present, t)
        precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
        recall = tp / n_pos
        points.append((recall, precision))
    return points


def average_precision(curve: Sequence[tuple[float, float]]) -> float:
    """Step-interpolated area: sum of (R_k - R_{k-1}) * P_k, R_0 = 0."""
    ap = 0.0
    prev_recall = 0.0
    for recall, precision in curve:
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def best_f1(
    file_scores: Mapping[str, float],
    labels: Mapping[str, bool],
    grid: np.ndarray | None = None,
) -> tuple[float, float, tuple[int, int, int, int]]:
    """Max F1 over the grid and the smallest threshold achieving it.

    Returns (best_f1, best_threshold, (tp, fp, tn, fn) at that threshold).
    """
    _validate_keys(file_scores, labels)
    if grid is None:
        grid = threshold_grid()
    files = sorted(file_scores)
    scores = np.array([file_scores[f] for f in files], dtype=np.float64)
    present = np.array([bool(labels[f]) for f in files])
    if not present.any():
        raise ParamError("no positive files; F1 undefined")

    best = -1.0
    best_t = float(grid[0])
    best_counts = (0, 0, 0, 0)
    for t in np.asarray(grid, dtype=np.float64):
        tp, fp, tn, fn = _counts_at(scores, present, float(t))
        precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
        recall = tp / (tp + fn)
        f1 = 0.0 if (precision + recall) == 0 else 2 * precision * recall / (precision + recall)
        if f1 > best:  # strict: ties keep the smallest threshold
            best = f1
            best_t = float(t)
            best_counts = (tp, fp, tn, fn)
    return best, best_t, best_counts


def evaluate(
    score_records: Iterable[ScoreRecord],
    labels: Iterable[FileLabel],
    species_list: Sequence[str],
    grid: np.ndarray | None = None,
    config_digest: str = "",
) -> EvalReport:
    """Full protocol: pool_max per file, then PR/AP and best F1 per species.

    Labeled files with no score record count as score 0 (logged); species
    without a single positive file are skipped with a warning.
    """
    by_species_scores: dict[str, dict[str, float]] = {}
    for rec in score_records:
        by_species_scores.setdefault(rec.species, {})[rec.file_id] = pool_max(rec.scores)
    by_species_labels: dict[str, dict[str, bool]] = {}
    for fl in labels:
        by_species_labels.setdefault(fl.species, {})[fl.file_id] = fl.present

    results: list[SpeciesEval] = []
    for species in species_list:
        if species not in by_species_labels:
            log.warning("species %s absent from labels; skipped", species)
            continue
        lab = by_species_labels[species]
        n_pos = sum(1 for v in lab.values() if v)
        if n_pos == 0:
            log.warning("species %s has no positive files; skipped", species)
            continue
        scores = dict(by_species_scores.get(species, {}))
        for file_id in lab:
            if file_id not in scores:
                log.info("file %s has no %s scores; scored 0", file_id, species)
                scores[file_id] = 0.0
        extra = set(scores) - set(lab)
        for file_id in extra:
            del scores[file_id]

        curve = pr_curve(scores, lab)
        ap = average_precision(curve)
        f1, threshold, (tp, fp, tn, fn) = best_f1(scores, lab, grid)
        results.append(
            SpeciesEval(
                species=species,
                ap=ap,
                best_f1=f1,
                best_threshold=threshold,
                tp=tp,
                fp=fp,
                tn=tn,
                fn=fn,
                n_positive_files=n_pos,
            )
        )
    return EvalReport(per_species=results, config_digest=config_digest)


def write_report(report: EvalReport, json_path: str | Path,
                 csv_path: str | Path | None = None) -> None:
    Path(json_path).write_text(report.to_json() + "\n")
    if csv_path is not None:
        Path(csv_path).write_text(report.to_csv())
