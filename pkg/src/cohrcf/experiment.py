"""Cross-validated sweeps, silhouette comparison and CSV reports."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from cohrcf import cluster, data, pipeline, sim
from cohrcf._accel import backend_name
from cohrcf.errors import InvariantViolation
from cohrcf.metrics import f1, mae, precision_recall

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "ReportRow",
    "mae",
    "precision_recall",
    "f1",
    "run_experiment",
    "check_report",
    "emit_report",
    "write_metadata",
    "SilhouetteRow",
    "silhouette_comparison",
    "emit_silhouette",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("measure", "K", "N", "sparsity", "fold", "mae", "precision", "recall", "f1")
SILHOUETTE_COLUMNS = ("k", "arm", "n_clusters", "n_points", "negative_count", "mean_silhouette")


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str = ""
    seed: int = 0
    folds: int = 5
    k_values: tuple = tuple(range(10, 56, 5))
    n_values: tuple = tuple(range(10, 101, 10))
    sparsity_levels: tuple = (0.18, 0.1, 0.05, 1.0)
    measures: tuple = sim.KINDS
    som: cluster.SomConfig = field(default_factory=cluster.SomConfig)
    hidden_per_user: int = 10
    relevance_threshold: int = 4
    min_ratings: int = 20
    welch_segment: int = 32
    welch_overlap: float = 0.5

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.k_values or min(self.k_values) < 1:
            raise ValueError("K values must be >= 1")
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("N values must be >= 1")
        if not self.sparsity_levels or any(not 0 < s <= 1 for s in self.sparsity_levels):
            raise ValueError("sparsity levels are keep-fractions in (0, 1]")
        if not 1 <= self.relevance_threshold <= 5:
            raise ValueError("relevance threshold must lie in 1..5")
        if self.hidden_per_user < 1:
            raise ValueError("hidden per user must be >= 1")
        for kind in self.measures:
            sim.SimilarityMeasure(kind)

    def measure(self, kind: str) -> sim.SimilarityMeasure:
        if kind == "cohr":
            return sim.SimilarityMeasure(
                kind, {"segment_cap": self.welch_segment, "overlap": self.welch_overlap}
            )
        return sim.SimilarityMeasure(kind)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["som"] = dataclasses.asdict(self.som)
        return d


@dataclass(frozen=True)
class ReportRow:
    measure: str
    K: int
    N: int
    sparsity: float
    fold: object  # fold index or "mean"
    mae: float
    precision: float
    recall: float
    f1: float


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def means(self) -> list:
        return [r for r in self.rows if r.fold == "mean"]

    def mean(self, measure, K, N, sparsity) -> ReportRow:
        for r in self.rows:
            if (r.fold == "mean" and r.measure == measure and r.K == K and r.N == N
                    and r.sparsity == sparsity):
                return r
        raise KeyError((measure, K, N, sparsity))


def _mean_row(fold_rows):
    first = fold_rows[0]
    avg = {
        name: float(np.mean([getattr(r, name) for r in fold_rows]))
        for name in ("mae", "precision", "recall", "f1")
    }
    return ReportRow(first.measure, first.K, first.N, first.sparsity, "mean", **avg)


def run_experiment(config: ExperimentConfig, matrix: data.RatingMatrix | None = None,
                   progress=None) -> ExperimentReport:
    """Evaluate every (sparsity, measure, K, N) grid point with k-fold CV.

    Fold ``i`` uses seed ``config.seed + i``.  Clustering and hidden ratings
    depend only on (sparsity, fold, K), so they are shared by every measure
    and N at that grid point.  ``matrix`` skips loading ``config.data_path``.
    """
    started = time.perf_counter()
    if matrix is None:
        matrix = data.clean_min_ratings(data.load_movielens(config.data_path), config.min_ratings)
    results = {}
    fold_seeds = [config.seed + i for i in range(config.folds)]
    for keep in config.sparsity_levels:
        sm = data.sparsify(matrix, keep, config.seed)
        plan = data.make_folds(sm, config.folds, config.seed)
        for K in config.k_values:
            for i, fold_users in enumerate(plan.folds):
                params = pipeline.PipelineParams(
                    k=K, som=config.som, hidden_per_user=config.hidden_per_user,
                    relevance_threshold=config.relevance_threshold, seed=fold_seeds[i],
                )
                ctx = pipeline.prepare_fold(sm, fold_users, params)
                for kind in config.measures:
                    measure = config.measure(kind)
                    for N in config.n_values:
                        res = ctx.score(N, measure)
                        results[(keep, kind, K, N, i)] = ReportRow(
                            kind, K, N, keep, i, res.mae, res.precision, res.recall, res.f1
                        )
                if progress is not None:
                    progress(keep, K, i)
                log.info("sparsity=%s K=%d fold=%d done", keep, K, i)
    report = ExperimentReport()
    for keep in config.sparsity_levels:
        for kind in config.measures:
            for K in config.k_values:
                for N in config.n_values:
                    folds = [results[(keep, kind, K, N, i)] for i in range(config.folds)]
                    report.rows.extend(folds)
                    report.rows.append(_mean_row(folds))
    report.metadata = {
        "config": config.to_dict(),
        "fold_seeds": fold_seeds,
        "n_users": matrix.n_users,
        "n_items": matrix.n_items,
        "n_ratings": matrix.n_ratings,
        "backend": backend_name(),
        "wall_clock_seconds": time.perf_counter() - started,
    }
    check_report(report)
    return report


def check_report(report: ExperimentReport) -> None:
    """Raise :class:`InvariantViolation` if any row breaks the report contract."""
    groups = {}
    for r in report.rows:
        if not r.mae >= 0:
            raise InvariantViolation(f"negative MAE in {r}")
        for name in ("precision", "recall", "f1"):
            if not 0.0 <= getattr(r, name) <= 1.0:
                raise InvariantViolation(f"{name} outside [0, 1] in {r}")
        groups.setdefault((r.measure, r.K, r.N, r.sparsity), []).append(r)
    for key, rows in groups.items():
        means = [r for r in rows if r.fold == "mean"]
        folds = [r for r in rows if r.fold != "mean"]
        if len(means) != 1:
            raise InvariantViolation(f"expected one mean row for {key}")
        expect = _mean_row(folds)
        for name in ("mae", "precision", "recall", "f1"):
            if abs(getattr(means[0], name) - getattr(expect, name)) > 1e-12:
                raise InvariantViolation(f"mean {name} does not match folds for {key}")


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def emit_report(report: ExperimentReport, path) -> None:
    """CSV: header plus one line per row, floats to 4 decimals."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in report.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])


def write_metadata(metadata: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# --------------------------------------------------------------------------
# clustering quality


@dataclass(frozen=True)
class SilhouetteRow:
    k: int
    arm: str  # "kmeans" or "som+kmeans"
    n_clusters: int
    n_points: int
    negative_count: int
    mean_silhouette: float
    seconds: float


def silhouette_comparison(m: data.RatingMatrix, k_values=(10, 20, 30, 40), seed: int = 0,
                          som: cluster.SomConfig | None = None) -> list:
    """Silhouettes of users under direct k-means and under SOM then k-means.

    Both arms are scored on the user profiles, the SOM arm through each user's
    BMU cluster.  Wall-clock of each clustering is recorded (not the scoring).
    """
    X = m.dense.astype(np.float64)
    rows = []
    for k in k_values:
        if not 2 <= k <= m.n_users:
            raise ValueError(f"k={k} must lie in [2, {m.n_users}]")
        t0 = time.perf_counter()
        direct = cluster.cluster_direct(X, k, seed)
        t1 = time.perf_counter()
        _, two_stage = cluster.cluster_with_som(X, k, som, seed)
        t2 = time.perf_counter()
        for arm, model, secs in (("kmeans", direct, t1 - t0), ("som+kmeans", two_stage, t2 - t1)):
            s = cluster.silhouette(X, model.labels)
            rows.append(SilhouetteRow(
                k, arm, model.k, len(s), int(np.count_nonzero(s < 0)), float(s.mean()), secs
            ))
            log.info("k=%d %s: %d negative, mean %.4f, %.2fs", k, arm, rows[-1].negative_count,
                     rows[-1].mean_silhouette, secs)
    return rows


def emit_silhouette(rows, path) -> None:
    """CSV without timings so reruns are byte-identical; timings go in metadata."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SILHOUETTE_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in SILHOUETTE_COLUMNS])
