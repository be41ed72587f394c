import math

import numpy as np
import pytest

import pmn


def small_data(seed=0, n=40, m1=3, m2=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, m1 + m2))
    x[:, m1] += 0.8 * x[:, 0]
    return pmn.Dataset(x, pmn.Partition.contiguous(m1, m2))


def test_partition_and_dataset():
    p = pmn.Partition.parse("1-3|4-5", 5)
    assert p.group1 == [0, 1, 2]
    assert str(p) == "1-3|4-5"
    d = small_data()
    assert (d.n, d.m) == (40, 5)
    with pytest.raises(pmn.PmnError):
        pmn.Partition.parse("1-3|3-5", 5)
    with pytest.raises(pmn.PmnError):
        pmn.Dataset(np.zeros((1, 2)), pmn.Partition.contiguous(1, 1))


def test_objective_gradient_matches_differences():
    d = small_data(1, n=12)
    obj = pmn.Objective(d, pmn.FeatureMap.product())
    theta = np.random.default_rng(2).normal(scale=0.3, size=obj.dim)
    g = obj.gradient(theta)
    h = 1e-6
    fd = np.array([(obj.value(theta + h * e) - obj.value(theta - h * e)) / (2 * h) for e in np.eye(obj.dim)])
    assert np.allclose(g, fd, atol=1e-6)
    assert obj.pair_count == 12 * 11


def test_fit_above_lambda_max_is_empty():
    d = small_data()
    f = pmn.FeatureMap.product()
    lmax = pmn.Objective(d, f).lambda_max()
    assert pmn.fit(d, f, 1.01 * lmax).support == []
    r = pmn.fit(d, f, 0.2 * lmax)
    assert r.converged
    assert r.kkt_max_residual <= 1e-6
    assert (0, 3) in r.support
    assert r.edges(d.partition, top=1)[0]["u"] == 0
    assert r.to_dot(d.partition).startswith("graph pmn {")


def test_path_and_roc():
    data, truth, precision = pmn.sample_gaussian(0.6, 400, 1, m1=15, m2=5, passage=5, eig_rank=6)
    assert len(truth) == 5
    assert precision.shape == (20, 20)
    path = pmn.lambda_path(data, pmn.FeatureMap.product(), "span:10:0.02", seed=1)
    assert len(path.lambdas) == 10
    assert all(a > b for a, b in zip(path.lambdas, path.lambdas[1:]))
    roc = path.roc(truth)
    assert roc["auc"] > 0.9


def test_diamond_and_windows():
    data, truth, warnings = pmn.sample_diamond(1.0, 50, 3, blocks=2)
    assert data.m == 8
    assert truth == [(0, 1), (4, 5)]
    d, w1, w2 = pmn.window_sequences([1, 2, 3, 4, 5], [5, 4, 3, 2, 1], 3)
    assert (w1, w2, d.n) == (3, 3, 3)
    coded, _, _ = pmn.window_sequences("MKVLA", "MKALA", 3)
    assert coded.n == 3
    with pytest.raises(pmn.PmnError):
        pmn.window_sequences([1, 2], [1, 2], 3)


def test_csv_round_trip(tmp_path):
    d = small_data(3)
    path = str(tmp_path / "d.csv")
    pmn.write_csv(d, ["a", "b", "c", "d", "e"], path)
    back, names = pmn.load_csv(path, "a,b,c|d,e")
    assert names == ["a", "b", "c", "d", "e"]
    assert np.array_equal(back.samples, d.samples)
    with pytest.raises(OSError):
        pmn.load_csv(str(tmp_path / "missing.csv"), "1|2")


def test_cross_validate_tie_goes_to_largest():
    d = small_data(4)
    cv = pmn.cross_validate(d, pmn.FeatureMap.product(), [1e3, 2e3], folds=2, seed=1)
    assert cv["best_lambda"] == 2e3
    assert math.isclose(cv["mean_scores"][0], cv["mean_scores"][1])
