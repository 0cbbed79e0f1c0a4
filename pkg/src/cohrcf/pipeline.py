"""Learning and prediction phases for one cross-validation fold.

Training users are clustered (SOM, then k-means over the SOM prototypes).
Each test user loses some ratings, is assigned to a cluster from what is
left, and every hidden rating is predicted from the user's own ratings on the
top-N items most similar to the target inside that cluster.  Item columns run
over the cluster's training users in ascending user order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from cohrcf import cluster, metrics, sim, spectral
from cohrcf.data import HiddenRatings, RatingMatrix, hide_ratings
from cohrcf.errors import DataError, DegenerateEstimate, NoHiddenRatings

log = logging.getLogger(__name__)

MIDPOINT = 3.0
MIN_RATING, MAX_RATING = 1.0, 5.0

# stage tags for per-fold seed derivation
_SOM_STAGE, _HIDE_STAGE = 1, 2


def stage_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence([seed, stage]).generate_state(1)[0])


@dataclass(frozen=True)
class PipelineParams:
    k: int = 10
    n: int = 100
    measure: sim.SimilarityMeasure = field(default_factory=lambda: sim.SimilarityMeasure("cohr"))
    som: cluster.SomConfig = field(default_factory=cluster.SomConfig)
    hidden_per_user: int = 10
    relevance_threshold: float = 4
    seed: int = 0


@dataclass(frozen=True)
class TopNList:
    target_item: int
    neighbors: tuple  # ((item, similarity), ...) best first

    @property
    def items(self) -> np.ndarray:
        return np.array([i for i, _ in self.neighbors], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s for _, s in self.neighbors], dtype=np.float64)

    def __len__(self):
        return len(self.neighbors)


class ClusterItemIndex:
    """Item columns of one cluster over its members in ascending user order.

    Items nobody in the cluster rated are left out.  Segment spectra for the
    coherence measure are computed once per estimator setting and cached.
    """

    def __init__(self, cluster_id: int, user_order, items, columns):
        self.cluster = int(cluster_id)
        self.user_order = np.asarray(user_order, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.columns = np.asarray(columns, dtype=np.float64)
        self._row = {int(i): r for r, i in enumerate(self.items)}
        self._spectra = {}
        self._rankings = {}

    def __contains__(self, item):
        return int(item) in self._row

    def __len__(self):
        return len(self.items)

    @property
    def item_columns(self) -> dict:
        return {int(i): self.columns[r] for i, r in self._row.items()}

    def column(self, item) -> np.ndarray:
        return self.columns[self._row[int(item)]]

    def rows(self, items) -> np.ndarray:
        return np.array([self._row[int(i)] for i in items], dtype=np.int64)

    def spectra(self, params: spectral.WelchParams) -> np.ndarray:
        if params not in self._spectra:
            self._spectra[params] = spectral.segment_spectra(self.columns, params)
        return self._spectra[params]


def build_cluster_index(m: RatingMatrix, model: cluster.ClusterModel, cluster_id: int) -> ClusterItemIndex:
    users = model.members(cluster_id)
    if users.size == 0:
        raise DataError(f"cluster {cluster_id} has no members")
    sub = m.dense[users].astype(np.float64)
    items = np.flatnonzero(np.any(sub != 0, axis=0))
    return ClusterItemIndex(cluster_id, users, items, sub[:, items].T.copy())


def _similarities(index: ClusterItemIndex, target: int, rows: np.ndarray,
                  measure: sim.SimilarityMeasure) -> np.ndarray:
    if measure.kind == "cohr":
        try:
            params = measure.welch_for(len(index.user_order))
        except DegenerateEstimate:
            # cluster too small for two segments: no usable evidence
            return np.zeros(rows.size)
        spec = index.spectra(params)
        return spectral.cohr_sim_many(spec[index.rows([target])[0]], spec[rows])
    return sim.similarity_many(measure, index.column(target), index.columns[rows])


def _ranking(index: ClusterItemIndex, target: int, measure: sim.SimilarityMeasure):
    """All positive-similarity items of the cluster, best first (cached)."""
    key = (int(target), measure)
    if key not in index._rankings:
        rows = np.flatnonzero(index.items != target)
        s = _similarities(index, target, rows, measure)
        keep = s > 0
        cand, s = index.items[rows][keep], s[keep]
        order = np.lexsort((cand, -s))
        index._rankings[key] = tuple((int(cand[j]), float(s[j])) for j in order)
    return index._rankings[key]


def item_topn(index: ClusterItemIndex, target: int, n: int, measure: sim.SimilarityMeasure,
              candidates=None) -> TopNList:
    """The ``n`` candidates most similar to ``target`` within the cluster.

    Ties are broken by ascending item id; the target itself and items with
    similarity <= 0 are never returned.  ``candidates`` defaults to every item
    in the index.
    """
    if target not in index:
        raise KeyError(f"item {target} is not rated in cluster {index.cluster}")
    if candidates is None:
        ranked = _ranking(index, target, measure)
        return TopNList(int(target), ranked[:n])
    cand = np.array(sorted({int(c) for c in candidates} - {int(target)}), dtype=np.int64)
    if cand.size == 0:
        return TopNList(int(target), ())
    s = _similarities(index, target, index.rows(cand), measure)
    keep = s > 0
    cand, s = cand[keep], s[keep]
    order = np.lexsort((cand, -s))[:n]
    return TopNList(int(target), tuple((int(cand[j]), float(s[j])) for j in order))


def predict_cold(target_item: int, index: ClusterItemIndex | None) -> float:
    """Mean of the cluster's nonzero ratings for the item, else the midpoint."""
    if index is None or target_item not in index:
        return MIDPOINT
    col = index.column(target_item)
    rated = col[col != 0]
    return float(rated.mean()) if rated.size else MIDPOINT


def predict(active_user_ratings, target_item: int, topn: TopNList,
            index: ClusterItemIndex | None = None) -> float:
    """Similarity-weighted mean of the user's ratings on the top-N neighbours.

    Only neighbours the user has rated take part.  With none of them rated,
    the cluster mean for the item is used instead.  Clamped to [1, 5].
    """
    if topn.target_item != target_item:
        raise ValueError("top-N list was built for a different item")
    if len(topn):
        r = np.asarray(active_user_ratings, dtype=np.float64)[topn.items]
        w = topn.weights
        rated = r != 0
        den = w[rated].sum()
        if den > 0:
            p = float(np.dot(r[rated], w[rated]) / den)
            return min(max(p, MIN_RATING), MAX_RATING)
    return min(max(predict_cold(target_item, index), MIN_RATING), MAX_RATING)


# --------------------------------------------------------------------------
# fold orchestration


@dataclass(frozen=True)
class FoldResult:
    mae: float
    precision: float
    recall: float
    f1: float
    predictions: tuple  # ((user, item, predicted, actual), ...)

    @property
    def n_predictions(self) -> int:
        return len(self.predictions)


class FoldContext:
    """Everything about a fold that does not depend on the measure or N."""

    def __init__(self, matrix: RatingMatrix, masked: RatingMatrix, hidden: HiddenRatings,
                 som: cluster.SomMap, model: cluster.ClusterModel, test_clusters: dict,
                 params: PipelineParams):
        self.matrix = matrix
        self.masked = masked
        self.hidden = hidden
        self.som = som
        self.model = model
        self.test_clusters = test_clusters
        self.params = params
        self._indexes = {}

    def index(self, cluster_id: int) -> ClusterItemIndex:
        if cluster_id not in self._indexes:
            self._indexes[cluster_id] = build_cluster_index(self.matrix, self.model, cluster_id)
        return self._indexes[cluster_id]

    def score(self, n: int, measure: sim.SimilarityMeasure,
              relevance_threshold: float | None = None) -> FoldResult:
        threshold = self.params.relevance_threshold if relevance_threshold is None else relevance_threshold
        dense = self.masked.dense
        out = []
        for u, item, actual in self.hidden.entries:
            idx = self.index(self.test_clusters[u])
            if item in idx:
                topn = item_topn(idx, item, n, measure)
                p = predict(dense[u], item, topn, idx)
            else:
                p = predict_cold(item, idx)
            out.append((u, item, p, actual))
        pairs = [(p, a) for _, _, p, a in out]
        precision, recall = metrics.precision_recall(pairs, threshold)
        return FoldResult(
            metrics.mae(pairs), precision, recall, metrics.f1(precision, recall), tuple(out)
        )


def prepare_fold(matrix: RatingMatrix, test_users, params: PipelineParams) -> FoldContext:
    """Cluster the training users, hide test ratings and assign test users."""
    test_users = np.unique(np.asarray(test_users, dtype=np.int64))
    train = np.setdiff1d(np.arange(matrix.n_users), test_users)
    if train.size == 0:
        raise DataError("fold has no training users")
    som, model = cluster.cluster_with_som(
        matrix.dense[train], params.k, params.som, stage_seed(params.seed, _SOM_STAGE),
        point_ids=train,
    )
    masked, hidden = hide_ratings(
        matrix, test_users, params.hidden_per_user, stage_seed(params.seed, _HIDE_STAGE)
    )
    if len(hidden) == 0:
        raise NoHiddenRatings("no ratings could be hidden for the test users")
    dense = masked.dense
    test_clusters = {int(u): cluster.assign_cluster(dense[u], model) for u in test_users}
    log.debug("fold prepared: %d train, %d test, k=%d, %d hidden",
              train.size, test_users.size, model.k, len(hidden))
    return FoldContext(matrix, masked, hidden, som, model, test_clusters, params)


def evaluate_fold(matrix: RatingMatrix, test_users, params: PipelineParams) -> FoldResult:
    """Run the whole fold: cluster, hide, assign, rank neighbours, predict, score."""
    return prepare_fold(matrix, test_users, params).score(params.n, params.measure)
