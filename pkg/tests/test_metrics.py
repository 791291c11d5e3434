"""Metric oracles: hand values, inequalities on random vectors,
permutation calibration for HSIC and AUUC, probe simulation oracles."""

import numpy as np
import pytest

from infreg import metrics as mx
from infreg import synthgen as sg
from infreg.errors import UsageError
from infreg.rng import stream


def test_rmse_mae_hand_values():
    assert mx.rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert mx.mae([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5)
    assert mx.rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mx.mae([1.0, 2.0], [1.0, 2.0]) == 0.0


def test_rmse_dominates_mae(rng):
    for _ in range(200):
        a = rng.normal(size=20)
        b = rng.normal(size=20)
        assert mx.rmse(a, b) >= mx.mae(a, b) - 1e-15


def test_empty_inputs_raise():
    with pytest.raises(UsageError):
        mx.rmse([], [])
    with pytest.raises(UsageError):
        mx.pehe([], [])


def test_pehe_ate_hand_values():
    assert mx.ate_error([1.0, 3.0], [2.0, 2.0]) == pytest.approx(0.0)
    assert mx.pehe([1.0, 3.0], [2.0, 2.0]) == pytest.approx(1.0)
    assert mx.pehe([5.0], [5.0]) == 0.0


def test_pehe_dominates_ate_error(rng):
    for _ in range(1000):
        a = rng.normal(size=15)
        b = rng.normal(size=15)
        assert mx.pehe(a, b) >= mx.ate_error(a, b) - 1e-15


def test_pehe_translation_invariant(rng):
    a = rng.normal(size=30)
    b = rng.normal(size=30)
    assert mx.pehe(a + 1.7, b + 1.7) == pytest.approx(mx.pehe(a, b))


def test_metrics_permutation_invariant(rng):
    a = rng.normal(size=40)
    b = rng.normal(size=40)
    perm = rng.permutation(40)
    for fn in (mx.rmse, mx.mae, mx.pehe, mx.ate_error):
        assert fn(a, b) == pytest.approx(fn(a[perm], b[perm]))


def test_auuc_oracle_beats_reversed():
    ds = sg.gen_static(sg.StaticDGPSpec(n=2000, seed=8, sigma_y=0.2))
    treated = ds.t.max(axis=1) > 0.5
    good = mx.auuc(ds.ite_true, ds.y, treated)
    bad = mx.auuc(-ds.ite_true, ds.y, treated)
    assert good >= bad


def test_auuc_constant_outcomes_zero(rng):
    scores = rng.normal(size=100)
    outcomes = np.full(100, 2.0)
    treated = rng.random(100) < 0.5
    assert mx.auuc(scores, outcomes, treated) == pytest.approx(0.0)


def test_auuc_random_scores_center_zero():
    """Permutation oracle: on a null-effect dataset, random rankings give
    mean AUUC within 3 standard errors of zero."""
    g = stream(31, "eval")
    n = 400
    vals = np.array(
        [
            mx.auuc(g.normal(size=n), g.normal(size=n), g.random(n) < 0.5)
            for _ in range(1000)
        ]
    )
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean()) < 3.0 * se


def test_auuc_stable_tie_handling():
    scores = np.zeros(6)
    outcomes = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    treated = np.array([1, 0, 1, 0, 1, 0], dtype=bool)
    v1 = mx.auuc(scores, outcomes, treated)
    v2 = mx.auuc(scores, outcomes, treated)
    assert v1 == v2


def test_hsic_constant_feature_zero(rng):
    z = np.ones((50, 3))
    t = rng.normal(size=(50, 2))
    assert abs(mx.hsic(z, t)) < 1e-12


def test_hsic_dependence_vs_independence():
    g = stream(17, "eval")
    t = g.normal(size=(200, 2))
    dependent = mx.hsic(t.copy(), t)
    independent = mx.hsic(g.normal(size=(200, 2)), t)
    assert dependent > 10.0 * independent
    assert independent >= -1e-12


def test_hsic_permutation_calibration():
    """Independent inputs land below the 95th percentile of the
    permutation null built by shuffling one block."""
    g = stream(23, "eval")
    z = g.normal(size=(500, 3))
    t = g.normal(size=(500, 2))
    observed = mx.hsic(z, t)
    null = np.array(
        [mx.hsic(z[g.permutation(500)], t) for _ in range(200)]
    )
    assert observed < np.quantile(null, 0.95)


def test_hsic_nonnegative_random(rng):
    for _ in range(10):
        z = rng.normal(size=(60, 2))
        t = rng.normal(size=(60, 3))
        assert mx.hsic(z, t) >= -1e-12


def test_mi_probe_independent_noise():
    g = stream(41, "eval")
    z = g.normal(size=(5000, 4))
    t = (g.random(size=(5000, 2)) < 0.5).astype(float)
    assert abs(mx.mi_probe(z, t)) < 0.02


def test_mi_probe_perfect_embedding():
    """z literally contains t: probe should recover the full entropy."""
    g = stream(43, "eval")
    t = (g.random(size=(5000, 2)) < 0.5).astype(float)
    z = np.column_stack([t * 4.0 - 2.0, g.normal(size=(5000, 2)) * 0.01])
    probe = mx.mi_probe(z, t)
    eval_idx = np.arange(1, 5000, 2)
    h_total = sum(
        mx._plugin_entropy((t[eval_idx, j] > 0.5).astype(int)) for j in range(2)
    )
    assert abs(probe - h_total) / h_total < 0.05


def test_mi_probe_single_class_component():
    g = stream(47, "eval")
    z = g.normal(size=(1000, 3))
    t = np.zeros((1000, 2))
    t[:, 0] = (g.random(1000) < 0.5).astype(float)
    val = mx.mi_probe(z, t)
    assert val >= 0.0


def test_build_report_validates(rng):
    ds = sg.gen_static(sg.StaticDGPSpec(n=400, seed=19))
    z = rng.normal(size=(400, 4))
    report = mx.build_report(
        yhat=ds.y + rng.normal(size=400) * 0.1,
        y=ds.y,
        ite_hat=ds.ite_true + rng.normal(size=400) * 0.1,
        ite_true=ds.ite_true,
        z=z,
        t=ds.t,
        kl_value=0.5,
    )
    assert report.rmse_y > 0
    assert report.pehe > 0
    assert report.kl_bottleneck == 0.5
