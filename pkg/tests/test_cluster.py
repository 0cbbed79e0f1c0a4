import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_samples

from cohrcf import cluster
from cohrcf.errors import DimensionMismatch, EmptyInput, InvalidK


def blobs(seed, n=20, dim=5, gap=10.0, spread=0.5):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, spread, size=(n, dim))
    b = rng.normal(gap, spread, size=(n, dim))
    return np.vstack([a, b]), np.repeat([0, 1], n)


def test_euclidean_distance():
    assert cluster.euclidean_distance([1, 2], [1, 2]) == 0
    assert cluster.euclidean_distance([0, 0], [3, 4]) == 5
    x, w = np.random.default_rng(0).normal(size=(2, 9))
    assert cluster.euclidean_distance(x, w) == cluster.euclidean_distance(w, x)
    with pytest.raises(DimensionMismatch):
        cluster.euclidean_distance([1], [1, 2])


def test_sq_distances_matches_direct():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(7, 4)), rng.normal(size=(5, 4))
    direct = np.array([[np.sum((p - q) ** 2) for q in b] for p in a])
    np.testing.assert_allclose(cluster.sq_distances(a, b), direct, rtol=1e-12)


def test_neighborhood():
    assert cluster.neighborhood(0.0, 2.0) == 1.0
    assert cluster.neighborhood(1.5, 1.5) == pytest.approx(0.6065306597126334)
    d = np.linspace(0, 10, 50)
    assert np.all(np.diff(cluster.neighborhood(d, 2.0)) < 0)
    with pytest.raises(ValueError):
        cluster.neighborhood(1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 50), st.floats(0.1, 10))
def test_neighborhood_range(d, sigma):
    v = cluster.neighborhood(d, sigma)
    assert 0.0 <= v <= 1.0


def test_sigma_schedule():
    assert cluster.sigma_schedule(0, 5.0, 100.0) == 5.0
    assert cluster.sigma_schedule(100, 5.0, 100.0) == pytest.approx(5.0 * 0.36787944117144233)
    s = [cluster.sigma_schedule(t, 5.0, 10.0) for t in range(50)]
    assert all(a > b > 0 for a, b in zip(s, s[1:]))


def test_default_decay_reaches_tuning_sigma():
    cfg = cluster.SomConfig()
    assert cfg.sigma_at(0) == 5.0
    assert cluster.sigma_schedule(cfg.ordering_steps, cfg.sigma0, cfg.decay) == pytest.approx(1.0)
    assert cfg.sigma_at(cfg.ordering_steps + 5) == 1.0


def test_som_config_validation():
    with pytest.raises(ValueError):
        cluster.SomConfig(sigma0=0.5, tuning_sigma=1.0)
    with pytest.raises(ValueError):
        cluster.SomConfig(grid_rows=0)


def test_som_update():
    cfg = cluster.SomConfig(sigma0=1.0, tuning_sigma=1.0, ordering_steps=1, tuning_steps=1)
    w = np.array([1.0, 2.0])
    np.testing.assert_array_equal(cluster.som_update(w, w, 0, 0.0, cfg), w)
    # sigma * T = 1 at the winner: full step
    np.testing.assert_array_equal(cluster.som_update([0.0], [2.0], 0, 0.0, cfg), [2.0])
    # sigma = 0.5, T = 0.5 -> 0.25 of the way
    half = cluster.SomConfig(sigma0=0.5, tuning_sigma=0.5, ordering_steps=1, tuning_steps=1)
    d = math.sqrt(2 * 0.25 * math.log(2))  # exp(-d^2 / (2 * 0.25)) = 0.5
    np.testing.assert_allclose(cluster.som_update([0.0], [2.0], 0, d, half), [0.5])
    # the step factor is clamped at 1 when sigma0 > 1
    big = cluster.SomConfig(sigma0=5.0)
    np.testing.assert_array_equal(cluster.som_update([0.0], [2.0], 0, 0.0, big), [2.0])
    with pytest.raises(DimensionMismatch):
        cluster.som_update([0.0], [1.0, 2.0], 0, 0.0, cfg)


def test_best_matching_unit():
    cfg = cluster.SomConfig(grid_rows=1, grid_cols=2)
    som = cluster.SomMap(cfg, np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert cluster.best_matching_unit(som, [0.9, 0.9]) == 1
    assert cluster.best_matching_unit(som, [0.5, 0.5]) == 0  # tie -> lower index
    w = np.random.default_rng(0).normal(size=(6, 3))
    som6 = cluster.SomMap(cluster.SomConfig(grid_rows=2, grid_cols=3), w)
    assert cluster.best_matching_unit(som6, w[3]) == 3
    with pytest.raises(DimensionMismatch):
        cluster.best_matching_unit(som, [1.0, 2.0, 3.0])


def test_train_som_fixed_point():
    x = np.array([[3.0, 1.0, 4.0]] * 5)
    som = cluster.train_som(x, cluster.SomConfig(grid_rows=3, grid_cols=3), seed=0)
    bmu = cluster.best_matching_unit(som, x[0])
    assert cluster.euclidean_distance(som.weights[bmu], x[0]) < 1e-6


def test_train_som_separates_blobs():
    x, truth = blobs(0)
    som = cluster.train_som(x, cluster.SomConfig(grid_rows=4, grid_cols=4), seed=1)
    bmus = cluster.best_matching_units(som, x)
    assert set(bmus[truth == 0]).isdisjoint(bmus[truth == 1])


def test_train_som_deterministic():
    x = np.random.default_rng(3).normal(size=(30, 6))
    cfg = cluster.SomConfig(grid_rows=3, grid_cols=3, ordering_steps=50, tuning_steps=50)
    a = cluster.train_som(x, cfg, seed=5)
    b = cluster.train_som(x, cfg, seed=5)
    assert np.array_equal(a.weights, b.weights)
    assert np.all(np.isfinite(a.weights))
    assert a.grid.shape == (3, 3, 6)
    with pytest.raises(EmptyInput):
        cluster.train_som(np.zeros((0, 3)), cfg)


def test_map_to_input_space():
    cfg = cluster.SomConfig(grid_rows=2, grid_cols=2)
    w = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]])
    som = cluster.SomMap(cfg, w)
    protos, members = cluster.map_to_input_space(som, w + 0.1)
    assert len(protos) == 4 and members == {0: [0], 1: [1], 2: [2], 3: [3]}
    protos, members = cluster.map_to_input_space(som, np.zeros((5, 2)))
    assert len(protos) == 1 and members == {0: [0, 1, 2, 3, 4]}
    x = np.random.default_rng(0).uniform(0, 10, size=(17, 2))
    _, members = cluster.map_to_input_space(som, x)
    assert sum(len(v) for v in members.values()) == 17


def test_kmeans_exact_fit():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    model = cluster.kmeans(pts, 3, seed=0)
    assert model.sse == 0.0
    assert sorted(model.labels.tolist()) == [0, 1, 2]


def test_kmeans_errors():
    pts = np.array([[0.0], [0.0], [1.0]])
    with pytest.raises(InvalidK):
        cluster.kmeans(pts, 0)
    with pytest.raises(InvalidK):
        cluster.kmeans(pts, 3)  # only two distinct points


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_recovers_blobs(seed):
    x, truth = blobs(seed)
    labels = cluster.kmeans(x, 2, seed=seed).labels
    assert len(set(zip(labels, truth))) == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_kmeans_sse_never_increases(seed, k):
    x = np.random.default_rng(seed).normal(size=(40, 3))
    model = cluster.kmeans(x, k, seed=seed)
    h = np.array(model.sse_history)
    assert np.all(np.diff(h) <= 1e-9 * max(1.0, h[0]))
    assert np.bincount(model.labels, minlength=k).min() > 0


def test_kmeans_reseeds_empty_clusters():
    # duplicates make empty clusters likely after the first assignment
    x = np.vstack([np.zeros((10, 2)), np.ones((10, 2)), [[5.0, 5.0]], [[5.0, 6.0]]])
    for seed in range(10):
        model = cluster.kmeans(x, 4, seed=seed)
        assert np.bincount(model.labels, minlength=4).min() > 0


def test_silhouette_against_sklearn():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(60, 4))
    labels = rng.integers(0, 4, size=60)
    labels[0] = 5  # a singleton cluster
    np.testing.assert_allclose(
        cluster.silhouette(x, labels), silhouette_samples(x, labels), atol=1e-10
    )


def test_silhouette_separated_blobs():
    x, truth = blobs(0, gap=50.0, spread=0.2)
    assert np.all(cluster.silhouette(x, truth) > 0.9)


def test_silhouette_misplaced_point():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0], [0.5, 0.5]])
    labels = np.array([0, 0, 1, 1, 1])
    s = cluster.silhouette(pts, labels)
    a = (math.dist(pts[4], pts[2]) + math.dist(pts[4], pts[3])) / 2
    b = (math.dist(pts[4], pts[0]) + math.dist(pts[4], pts[1])) / 2
    assert s[4] == pytest.approx((b - a) / max(a, b))
    assert s[4] < 0


def test_silhouette_singleton_and_errors():
    pts = np.array([[0.0], [0.1], [5.0]])
    assert cluster.silhouette(pts, [0, 0, 1])[2] == 0.0
    with pytest.raises(InvalidK):
        cluster.silhouette(pts, [0, 0, 0])


def model_with_counts():
    c = np.array([[5.0, 5.0], [0.0, 1.0], [2.0, 2.0]])
    return cluster.ClusterModel(
        3, c, np.array([0, 1, 2]), member_counts=np.array([50, 12, 80]),
        member_sums=np.array([200.0, 40.0, 300.0]),
    )


def test_assign_cluster():
    model = model_with_counts()
    assert cluster.assign_cluster([2.0, 2.0], model) == 2
    assert cluster.assign_cluster([0.0, 0.0], model) == 1  # cold start: fewest ratings
    tied = cluster.ClusterModel(
        3, model.centroids, model.labels, member_counts=np.array([12, 12, 80]),
        member_sums=np.array([30.0, 40.0, 1.0]),
    )
    assert cluster.assign_cluster([0.0, 0.0], tied) == 0  # then smallest sum
    with pytest.raises(DimensionMismatch):
        cluster.assign_cluster([1.0], model)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_assign_cluster_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    cents = rng.integers(0, 6, size=(5, 4)).astype(float)
    model = cluster.ClusterModel(5, cents, np.arange(5), member_counts=np.ones(5, int),
                                 member_sums=np.ones(5))
    x = rng.integers(0, 6, size=4).astype(float)
    if not x.any():
        x[0] = 1.0
    dists = [sum((x - c) ** 2) for c in cents]
    assert cluster.assign_cluster(x, model) == dists.index(min(dists))


def test_cluster_with_som_caps_k_and_labels_every_point():
    x, _ = blobs(2, n=5)
    som, model = cluster.cluster_with_som(
        x, 50, cluster.SomConfig(grid_rows=3, grid_cols=3), seed=0, point_ids=np.arange(100, 110)
    )
    assert model.k <= 9 and len(model.labels) == 10
    assert set(model.assignment) == set(range(100, 110))
    bmus = cluster.best_matching_units(som, x)
    for row, j in enumerate(bmus):
        assert model.labels[row] == model.neuron_to_cluster[int(j)]
    assert model.member_counts.sum() == np.count_nonzero(x)


def test_checkpoints_round_trip(tmp_path):
    x = np.random.default_rng(4).normal(size=(12, 3))
    cfg = cluster.SomConfig(grid_rows=2, grid_cols=3, ordering_steps=20, tuning_steps=20)
    som, model = cluster.cluster_with_som(x, 3, cfg, seed=1)
    cluster.write_som(som, tmp_path / "som.txt")
    back = cluster.read_som(tmp_path / "som.txt")
    assert np.array_equal(back.weights, som.weights) and back.config.decay == cfg.decay
    cluster.write_cluster_model(model, tmp_path / "model.txt")
    m2 = cluster.read_cluster_model(tmp_path / "model.txt")
    assert np.array_equal(m2.centroids, model.centroids)
    assert m2.assignment == model.assignment and m2.neuron_to_cluster == model.neuron_to_cluster
    assert np.array_equal(m2.member_counts, model.member_counts)
