"""User clustering: self-organizing map, k-means and silhouette scores.

The SOM is trained online on a rectangular grid.  Every step draws one input,
finds the best matching unit (BMU) and pulls every neuron toward the input by
``min(sigma(t) * h, 1)`` where ``h`` is a Gaussian of the lateral grid
distance to the BMU and ``sigma(t)`` decays exponentially during the ordering
phase and stays fixed during the tuning phase.  The decaying radius doubles as
the learning factor.

k-means is plain Lloyd iteration with Euclidean distance.  In the two-stage
pipeline it clusters the weight vectors of the occupied neurons and each user
inherits the cluster of its BMU.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cohrcf._accel import njit, pick
from cohrcf.errors import DimensionMismatch, EmptyInput, InvalidK

# --------------------------------------------------------------------------
# distance kernels


@njit
def _sq_dists_numba(a, b):
    n, d = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                acc += diff * diff
            out[i, j] = acc
    return out


def _sq_dists_numpy(a, b, chunk=32):
    out = np.empty((a.shape[0], b.shape[0]))
    for lo in range(0, a.shape[0], chunk):
        diff = a[lo : lo + chunk, None, :] - b[None, :, :]
        out[lo : lo + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


_sq_dists_impl = pick(_sq_dists_numba, _sq_dists_numpy)


def sq_distances(a, b) -> np.ndarray:
    """Exact pairwise squared Euclidean distances between rows of ``a`` and ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {a.shape} and {b.shape}")
    return _sq_dists_impl(a, b)


def euclidean_distance(x, w) -> float:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise DimensionMismatch(f"dimension mismatch: {x.shape} vs {w.shape}")
    return float(np.sqrt(np.sum((x - w) ** 2)))


# --------------------------------------------------------------------------
# self-organizing map


@dataclass(frozen=True)
class SomConfig:
    grid_rows: int = 10
    grid_cols: int = 10
    sigma0: float = 5.0
    tau: float | None = None
    ordering_steps: int = 1000
    tuning_steps: int = 2000
    tuning_sigma: float = 1.0

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("SOM grid must have at least one neuron")
        if not self.sigma0 >= self.tuning_sigma > 0:
            raise ValueError("require sigma0 >= tuning_sigma > 0")
        if self.ordering_steps < 1 or self.tuning_steps < 1:
            raise ValueError("phase step counts must be >= 1")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def n_neurons(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def decay(self) -> float:
        """Decay constant; by default sigma hits ``tuning_sigma`` as ordering ends."""
        if self.tau is not None:
            return self.tau
        ratio = self.sigma0 / self.tuning_sigma
        return math.inf if ratio == 1.0 else self.ordering_steps / math.log(ratio)

    def sigma_at(self, t: int) -> float:
        if t < self.ordering_steps:
            return max(sigma_schedule(t, self.sigma0, self.decay), self.tuning_sigma)
        return self.tuning_sigma

    def sigmas(self) -> np.ndarray:
        return np.array(
            [self.sigma_at(t) for t in range(self.ordering_steps + self.tuning_steps)]
        )

    def grid_coords(self) -> np.ndarray:
        j = np.arange(self.n_neurons)
        return np.stack([j // self.grid_cols, j % self.grid_cols], axis=1).astype(np.float64)


@dataclass(frozen=True, eq=False)
class SomMap:
    config: SomConfig
    weights: np.ndarray  # (n_neurons, D), row-major over the grid

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    @property
    def grid(self) -> np.ndarray:
        c = self.config
        return self.weights.reshape(c.grid_rows, c.grid_cols, -1)


def neighborhood(lateral_distance, sigma: float):
    """Gaussian neighbourhood ``exp(-d^2 / (2 sigma^2))``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(lateral_distance, dtype=np.float64)
    out = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


def sigma_schedule(t, sigma0: float, tau: float) -> float:
    """``sigma0 * exp(-t / tau)``."""
    if sigma0 <= 0 or tau <= 0 or t < 0:
        raise ValueError("require sigma0 > 0, tau > 0, t >= 0")
    return sigma0 * math.exp(-t / tau)


def som_update(w, x, t: int, winner_lateral_distance: float, config: SomConfig) -> np.ndarray:
    """One neuron's weight after a single training step."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != x.shape:
        raise DimensionMismatch(f"dimension mismatch: {w.shape} vs {x.shape}")
    sigma = config.sigma_at(t)
    step = min(sigma * neighborhood(winner_lateral_distance, sigma), 1.0)
    return w + step * (x - w)


@njit
def _som_train_numba(weights, data, picks, sigmas, lateral_sq):
    n_neurons, dim = weights.shape
    for t in range(picks.shape[0]):
        x = data[picks[t]]
        best = 0
        best_d = np.inf
        for j in range(n_neurons):
            acc = 0.0
            for k in range(dim):
                diff = x[k] - weights[j, k]
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best = j
        s = sigmas[t]
        for j in range(n_neurons):
            f = s * np.exp(-lateral_sq[best, j] / (2.0 * s * s))
            if f > 1.0:
                f = 1.0
            for k in range(dim):
                weights[j, k] += f * (x[k] - weights[j, k])


def _som_train_numpy(weights, data, picks, sigmas, lateral_sq):
    for t in range(picks.shape[0]):
        x = data[picks[t]]
        diff = x - weights
        best = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
        s = sigmas[t]
        f = np.minimum(s * np.exp(-lateral_sq[best] / (2.0 * s * s)), 1.0)
        weights += f[:, None] * diff


_som_train = pick(_som_train_numba, _som_train_numpy)


def train_som(data, config: SomConfig | None = None, seed: int = 0) -> SomMap:
    """Train a SOM on the rows of ``data``.

    Weights start uniform in each dimension's [min, max] range.  Ordering and
    tuning phases run back to back; each step samples one row uniformly.
    """
    config = config or SomConfig()
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise EmptyInput("SOM training data is empty")
    rng = np.random.default_rng(seed)
    lo, hi = data.min(axis=0), data.max(axis=0)
    weights = lo + rng.random((config.n_neurons, data.shape[1])) * (hi - lo)
    picks = rng.integers(0, data.shape[0], size=config.ordering_steps + config.tuning_steps)
    coords = config.grid_coords()
    lateral_sq = np.ascontiguousarray(sq_distances(coords, coords))
    _som_train(weights, data, picks, config.sigmas(), lateral_sq)
    return SomMap(config, weights)


def best_matching_units(som: SomMap, data) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[1] != som.dimension:
        raise DimensionMismatch(f"input dimension {data.shape[1]} != SOM dimension {som.dimension}")
    return np.argmin(sq_distances(data, som.weights), axis=1)


def best_matching_unit(som: SomMap, x) -> int:
    """Index of the neuron nearest ``x``; ties go to the lowest row-major index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("expected a single input vector")
    return int(best_matching_units(som, x)[0])


def map_to_input_space(som: SomMap, data):
    """Prototypes of occupied neurons and the inputs attached to each.

    Returns
    -------
    prototypes : ndarray, shape (n_occupied, D)
        Weight vectors of neurons that are BMU for at least one input, in
        neuron order.
    membership : dict
        Neuron index -> list of input row indices, same order as ``prototypes``.
    """
    bmus = best_matching_units(som, data)
    membership = {}
    for row, j in enumerate(bmus):
        membership.setdefault(int(j), []).append(row)
    membership = dict(sorted(membership.items()))
    prototypes = som.weights[list(membership)]
    return prototypes, membership


# --------------------------------------------------------------------------
# k-means


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Centroids plus the cluster of every clustered point.

    ``labels[i]`` is the cluster of point ``point_ids[i]``.  For the SOM
    pipeline the points are users and ``neuron_to_cluster`` records the
    cluster of each occupied neuron.  ``member_counts`` / ``member_sums`` hold
    each cluster's total rating count and rating sum, used for cold-start
    assignment.
    """

    k: int
    centroids: np.ndarray
    labels: np.ndarray
    point_ids: np.ndarray = None
    neuron_to_cluster: dict = field(default_factory=dict)
    sse_history: tuple = ()
    member_counts: np.ndarray = None
    member_sums: np.ndarray = None

    def __post_init__(self):
        if self.point_ids is None:
            object.__setattr__(self, "point_ids", np.arange(len(self.labels)))

    @property
    def assignment(self) -> dict:
        return {int(p): int(c) for p, c in zip(self.point_ids, self.labels)}

    def members(self, cluster: int) -> np.ndarray:
        return np.sort(self.point_ids[self.labels == cluster])

    @property
    def sse(self) -> float:
        return self.sse_history[-1] if self.sse_history else float("nan")


def _distinct_rows(points):
    _, first = np.unique(points, axis=0, return_index=True)
    return np.sort(first)


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """Lloyd's k-means.

    Initial centroids are ``k`` distinct points drawn without replacement.
    An empty cluster is re-seeded with the point lying farthest from its own
    centroid.  Iteration stops once no centroid moves by ``tol`` or more.
    ``sse_history`` holds the within-cluster SSE after every update.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise EmptyInput("no points to cluster")
    distinct = _distinct_rows(points)
    if k < 1 or k > distinct.size:
        raise InvalidK(f"k={k} must lie in [1, {distinct.size}] (number of distinct points)")
    rng = np.random.default_rng(seed)
    centroids = points[np.sort(rng.choice(distinct, size=k, replace=False))].copy()
    history = []
    for _ in range(max_iter):
        d = sq_distances(points, centroids)
        labels = np.argmin(d, axis=1)
        own = d[np.arange(len(points)), labels]
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            donors = counts[labels] > 1
            far = int(np.argmax(np.where(donors, own, -1.0)))
            counts[labels[far]] -= 1
            counts[c] = 1
            labels[far] = c
            own[far] = 0.0
            centroids[c] = points[far]
        new = np.zeros_like(centroids)
        np.add.at(new, labels, points)
        new /= counts[:, None]
        shift = np.sqrt(np.max(np.sum((new - centroids) ** 2, axis=1)))
        centroids = new
        history.append(float(np.sum((points - centroids[labels]) ** 2)))
        if shift < tol:
            break
    return ClusterModel(k, centroids, labels, sse_history=tuple(history))


# --------------------------------------------------------------------------
# silhouettes


def silhouette(points, labels) -> np.ndarray:
    """Per-point silhouette ``(b - a) / max(a, b)``; singleton clusters score 0."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if points.shape[0] != labels.shape[0]:
        raise DimensionMismatch("one label per point required")
    uniq, idx = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise InvalidK("silhouette needs at least 2 clusters")
    dist = np.sqrt(np.maximum(sq_distances(points, points), 0.0))
    onehot = np.zeros((len(points), uniq.size))
    onehot[np.arange(len(points)), idx] = 1.0
    sums = dist @ onehot
    counts = onehot.sum(axis=0)
    own_n = counts[idx]
    rows = np.arange(len(points))
    a = np.where(own_n > 1, sums[rows, idx] / np.maximum(own_n - 1, 1), 0.0)
    means = sums / counts
    means[rows, idx] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own_n == 1] = 0.0
    return np.clip(s, -1.0, 1.0)


# --------------------------------------------------------------------------
# two-stage clustering and assignment


def _member_stats(data, labels, k):
    data = np.asarray(data)
    counts = np.bincount(labels, weights=np.count_nonzero(data, axis=1), minlength=k)
    sums = np.bincount(labels, weights=data.sum(axis=1), minlength=k)
    return counts.astype(np.int64), sums


def cluster_with_som(data, k: int, som_config: SomConfig | None = None, seed: int = 0,
                     point_ids=None, max_iter: int = 300, tol: float = 1e-6):
    """SOM on ``data`` followed by k-means over the occupied prototypes.

    ``k`` is capped at the number of distinct prototypes.  Returns the trained
    map and a :class:`ClusterModel` whose labels cover every row of ``data``.
    """
    data = np.asarray(data, dtype=np.float64)
    som = train_som(data, som_config, seed)
    prototypes, membership = map_to_input_space(som, data)
    k_eff = min(k, _distinct_rows(prototypes).size)
    proto_model = kmeans(prototypes, k_eff, seed, max_iter, tol)
    neuron_to_cluster = {j: int(c) for j, c in zip(membership, proto_model.labels)}
    labels = np.empty(len(data), dtype=np.int64)
    for j, rows in membership.items():
        labels[rows] = neuron_to_cluster[j]
    counts, sums = _member_stats(data, labels, k_eff)
    model = ClusterModel(
        k_eff,
        proto_model.centroids,
        labels,
        point_ids=np.arange(len(data)) if point_ids is None else np.asarray(point_ids),
        neuron_to_cluster=neuron_to_cluster,
        sse_history=proto_model.sse_history,
        member_counts=counts,
        member_sums=sums,
    )
    return som, model


def cluster_direct(data, k: int, seed: int = 0, point_ids=None,
                   max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """k-means straight on the user profiles (the single-stage baseline)."""
    data = np.asarray(data, dtype=np.float64)
    model = kmeans(data, k, seed, max_iter, tol)
    counts, sums = _member_stats(data, model.labels, model.k)
    return ClusterModel(
        model.k,
        model.centroids,
        model.labels,
        point_ids=np.arange(len(data)) if point_ids is None else np.asarray(point_ids),
        sse_history=model.sse_history,
        member_counts=counts,
        member_sums=sums,
    )


def assign_cluster(user_vector, model: ClusterModel) -> int:
    """Cluster for a (possibly masked) user profile.

    Users with at least one rating go to the nearest centroid.  An all-zero
    profile goes to the cluster with the fewest total member ratings, then the
    smallest rating sum, then the lowest index.
    """
    x = np.asarray(user_vector, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.centroids.shape[1]:
        raise DimensionMismatch(
            f"user vector of length {x.size} vs centroid dimension {model.centroids.shape[1]}"
        )
    if np.any(x != 0) or model.member_counts is None:
        return int(np.argmin(sq_distances(x[None, :], model.centroids)[0]))
    order = np.lexsort((np.arange(model.k), model.member_sums, model.member_counts))
    return int(order[0])


# --------------------------------------------------------------------------
# checkpoint files: a header line, then whitespace-separated values


def write_som(som: SomMap, path) -> None:
    c = som.config
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"SOM {c.grid_rows} {c.grid_cols} {som.dimension}\n")
        fh.write(
            f"{c.sigma0!r} {c.decay!r} {c.ordering_steps} {c.tuning_steps} {c.tuning_sigma!r}\n"
        )
        for row in som.weights:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_som(path) -> SomMap:
    with open(path, encoding="ascii") as fh:
        tag, rows, cols, dim = fh.readline().split()
        if tag != "SOM":
            raise ValueError(f"{path}: not a SOM checkpoint")
        sigma0, tau, ordering, tuning, tuning_sigma = fh.readline().split()
        config = SomConfig(
            int(rows), int(cols), float(sigma0), float(tau), int(ordering), int(tuning),
            float(tuning_sigma),
        )
        weights = np.loadtxt(fh, ndmin=2).reshape(config.n_neurons, int(dim))
    return SomMap(config, weights)


def write_cluster_model(model: ClusterModel, path) -> None:
    dim = model.centroids.shape[1]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"CLUSTERS {model.k} {dim} {len(model.labels)} {len(model.neuron_to_cluster)}\n")
        for row in model.centroids:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for p, c in zip(model.point_ids, model.labels):
            fh.write(f"{int(p)} {int(c)}\n")
        for j, c in model.neuron_to_cluster.items():
            fh.write(f"{j} {c}\n")
        if model.member_counts is not None:
            fh.write(" ".join(str(int(v)) for v in model.member_counts) + "\n")
            fh.write(" ".join(repr(float(v)) for v in model.member_sums) + "\n")


def read_cluster_model(path) -> ClusterModel:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    tag, k, dim, n_points, n_neurons = lines[0].split()
    if tag != "CLUSTERS":
        raise ValueError(f"{path}: not a cluster checkpoint")
    k, n_points, n_neurons = int(k), int(n_points), int(n_neurons)
    pos = 1
    centroids = np.array([[float(v) for v in ln.split()] for ln in lines[pos : pos + k]])
    centroids = centroids.reshape(k, int(dim))
    pos += k
    pairs = np.array([ln.split() for ln in lines[pos : pos + n_points]], dtype=np.int64)
    pairs = pairs.reshape(n_points, 2)
    pos += n_points
    neurons = {}
    for ln in lines[pos : pos + n_neurons]:
        j, c = ln.split()
        neurons[int(j)] = int(c)
    pos += n_neurons
    counts = sums = None
    if pos + 1 < len(lines):
        counts = np.array(lines[pos].split(), dtype=np.int64)
        sums = np.array(lines[pos + 1].split(), dtype=np.float64)
    return ClusterModel(
        k, centroids, pairs[:, 1], point_ids=pairs[:, 0], neuron_to_cluster=neurons,
        member_counts=counts, member_sums=sums,
    )
