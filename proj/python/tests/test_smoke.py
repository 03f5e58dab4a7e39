import math

import numpy as np
import pytest

import xmaml


def mlp():
    return xmaml.ModelSpec(4, [8], 3)


def batch(rng, n=8):
    return rng.normal(size=(n, 4)), rng.integers(0, 3, size=n).astype(float)


def test_meta_gradient_matches_finite_differences():
    spec = mlp()
    rng = np.random.default_rng(0)
    theta = xmaml.init_params(spec, 1)
    xs, ys = batch(rng)
    xq, yq = batch(rng)
    grad, loss = xmaml.meta_gradient(spec, theta, xs, ys, xq, yq, alpha=0.1)
    assert grad.shape == (spec.total_dim,)

    def objective(t):
        adapted = xmaml.inner_adapt(spec, t, xs, ys, alpha=0.1)
        return xmaml.task_loss(spec, adapted, xq, yq)

    assert loss == pytest.approx(objective(theta), rel=1e-12)
    h = 1e-5
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd[i] = (objective(theta + e) - objective(theta - e)) / (2 * h)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-6

    first, _ = xmaml.meta_gradient(spec, theta, xs, ys, xq, yq, alpha=0.1, order=xmaml.Order.first)
    assert not np.allclose(first, grad)


def test_nonpositive_alpha_rejected():
    spec = mlp()
    rng = np.random.default_rng(2)
    theta = xmaml.init_params(spec, 3)
    xs, ys = batch(rng)
    with pytest.raises(xmaml.ArgumentError):
        xmaml.meta_gradient(spec, theta, xs, ys, xs, ys, alpha=0.0)


def test_wrong_parameter_count():
    spec = mlp()
    x, y = batch(np.random.default_rng(0))
    with pytest.raises(xmaml.StructureError):
        xmaml.task_loss(spec, np.zeros(3), x, y)


def test_sinusoid_episode_shapes_and_determinism():
    (xs, ys), (xq, yq) = xmaml.sinusoid_episode(7, 10, 20)
    assert xs.shape == (10, 1) and ys.shape == (10,)
    assert xq.shape == (20, 1) and yq.shape == (20,)
    (xs2, _), _ = xmaml.sinusoid_episode(7, 10, 20)
    np.testing.assert_array_equal(xs, xs2)


def test_stats_oracles():
    r = xmaml.paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert r["t"] == pytest.approx(math.sqrt(18))
    assert r["df"] == 4
    assert r["p"] == pytest.approx(0.0132, abs=5e-4)
    assert xmaml.bonferroni(0.05, 200) == 0.00025
    one = xmaml.corrected_resampled_t_test([1, 2, 3, 4, 5], [0] * 5, 0.0)
    assert one["p"] == pytest.approx(r["p"] / 2)
    assert xmaml.student_t_cdf(0.0, 3) == pytest.approx(0.5)
    with pytest.raises(xmaml.InsufficientSamplesError):
        xmaml.paired_t_test([1.0], [0.0])


def test_aggregate_scores_max():
    cells = [("ar", 81.68), ("de", 82.02), ("zh", 82.09), ("sw", 80.44)]
    agg = xmaml.aggregate_scores("en", cells)
    assert agg["max"] == 82.09
    assert agg["argmax"] == "zh"


def test_planted_scan_flags_planted_feature():
    results = xmaml.planted_scan(4)
    assert results[0]["feature"] == "P"
    assert results[0]["significant"]
    assert sum(r["significant"] for r in results) == 1


def test_pipeline_round_trip(tmp_path):
    xmaml.synth(tmp_path / "ws", 3)
    cfg = tmp_path / "ws" / "experiment.ini"
    out = tmp_path / "run"
    files = xmaml.pretrain(cfg, out_dir=out)
    ckpt = next(f for f in files if str(f).endswith(".ckpt"))
    h, params = xmaml.load_checkpoint(ckpt)
    assert h != 0 and params.size > 0 and np.all(np.isfinite(params))
    with pytest.raises(xmaml.FormatError):
        bad = tmp_path / "bad.ini"
        bad.write_text("[nowhere]\nx = 1\n")
        xmaml.pretrain(bad)


def test_selftest_passes():
    checks = xmaml.selftest()
    assert checks
    assert all(ok for _, ok, _ in checks), [c for c in checks if not c[1]]
