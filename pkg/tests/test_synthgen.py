"""Generator oracles: RCT limit, closed-form recovery by least squares,
Monte Carlo ATE agreement, two-branch dynamic effect check, confounding dial."""

import numpy as np

from infreg import synthgen as sg
from infreg.rng import stream


def test_reproducible_bit_for_bit():
    a = sg.gen_static(sg.StaticDGPSpec(n=200, seed=42))
    b = sg.gen_static(sg.StaticDGPSpec(n=200, seed=42))
    for field in ("x", "t", "y", "t_alt", "ite_true"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    c = sg.gen_static(sg.StaticDGPSpec(n=200, seed=43))
    assert not np.array_equal(a.y, c.y)


def test_rct_limit_uncorrelated():
    """c = 0 removes confounding: treatments decouple from covariates."""
    ds = sg.gen_static(sg.StaticDGPSpec(n=10_000, confounding=0.0, seed=3))
    for j in range(ds.t.shape[1]):
        for k in range(ds.x.shape[1]):
            corr = np.corrcoef(ds.t[:, j], ds.x[:, k])[0, 1]
            assert abs(corr) < 0.05


def test_noiseless_regression_recovers_outcome():
    """With sigma_y = 0 the outcome lies in the span of the closed-form
    basis [x, sin(x w_nl), t, t * (Gamma x)], so least squares nails it."""
    spec = sg.StaticDGPSpec(n=1500, d_x=5, d_t=3, sigma_y=0.0, seed=11)
    ds = sg.gen_static(spec)
    basis = np.column_stack(
        [
            ds.x,
            np.sin(ds.x @ spec.w_nl),
            ds.t,
            ds.t * (ds.x @ spec.gamma.T),
            np.ones(spec.n),
        ]
    )
    coef, *_ = np.linalg.lstsq(basis, ds.y, rcond=None)
    resid = ds.y - basis @ coef
    assert np.sqrt((resid**2).mean()) < 1e-8


def test_ite_matches_noiseless_mean_difference():
    spec = sg.StaticDGPSpec(n=500, seed=5)
    ds = sg.gen_static(spec)
    direct = ds.mu(ds.x, ds.t) - ds.mu(ds.x, ds.t_alt)
    assert np.allclose(ds.ite_true, direct, atol=1e-12)


def test_dataset_ate_matches_brute_force():
    """Independent 1e6-draw re-simulation of the population ATE agrees with
    the dataset's mean true effect within 3 combined standard errors."""
    spec = sg.StaticDGPSpec(n=4000, seed=9)
    ds = sg.gen_static(spec)

    g = stream(spec.seed, "eval")
    n_mc = 1_000_000
    x = g.normal(size=(n_mc, spec.d_x))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    logits = spec.confounding * (x @ spec.w_assign.T)
    p = 1.0 / (1.0 + np.exp(-logits))
    t = (g.random(size=logits.shape) < p).astype(float)
    t_alt = (g.random(size=logits.shape) < 1.0 - p).astype(float)
    mc_ite = ds.mu(x, t) - ds.mu(x, t_alt)

    se = np.sqrt(
        ds.ite_true.var() / ds.ite_true.size + mc_ite.var() / n_mc
    )
    assert abs(ds.ite_true.mean() - mc_ite.mean()) < 3.0 * se


def _binary_mi(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in MI of two binary vectors, in nats."""
    mi = 0.0
    n = a.size
    for va in (0, 1):
        for vb in (0, 1):
            p_ab = ((a == va) & (b == vb)).mean()
            if p_ab == 0:
                continue
            p_a = (a == va).mean()
            p_b = (b == vb).mean()
            mi += p_ab * np.log(p_ab / (p_a * p_b))
    return mi


def test_confounding_dial_monotone():
    """Information between t_1 and the sign of its assignment score rises
    monotonically with the confounding strength."""
    values = []
    for c in (0.0, 0.5, 1.0, 2.0):
        spec = sg.StaticDGPSpec(n=100_000, confounding=c, seed=21)
        ds = sg.gen_static(spec)
        side = (ds.x @ spec.w_assign[0] > 0).astype(int)
        values.append(_binary_mi(ds.t[:, 0].astype(int), side))
    assert all(b > a for a, b in zip(values, values[1:]))


def test_dynamic_default_shapes():
    ds = sg.gen_dynamic(sg.DynamicDGPSpec(seed=1))
    assert ds.x.shape == (1000, 10, 8)
    assert ds.y.shape == (1000, 10)
    assert ds.a.shape[0] == 1000 and ds.a.shape[1] == 10
    assert ds.ite_true_step.shape == (1000, 10)


def test_dynamic_null_effect():
    spec = sg.DynamicDGPSpec(n=50, seed=2)
    spec.b_mat[...] = 0.0
    spec.beta[...] = 0.0
    spec.gamma[...] = 0.0
    ds = sg.gen_dynamic(spec)
    assert np.allclose(ds.ite_true_step, 0.0, atol=1e-15)


def test_dynamic_oracle_matches_two_branch_simulation():
    """Noiseless outcome branches under a and a_alt from the same state
    differ by exactly the recorded one-step effect."""
    spec = sg.DynamicDGPSpec(n=100, seed=7)
    ds = sg.gen_dynamic(spec)

    def branch_outcome(x_t, a):
        blade = spec.beta + x_t @ spec.gamma.T
        return x_t @ spec.w_out + (a * blade).sum(axis=1) / np.sqrt(spec.d_a)

    for k in range(spec.t_steps):
        diff = branch_outcome(ds.x[:, k], ds.a[:, k]) - branch_outcome(
            ds.x[:, k], ds.a_alt[:, k]
        )
        assert np.allclose(diff, ds.ite_true_step[:, k], atol=1e-12)


def test_dynamic_stable_spectral_radius():
    spec = sg.DynamicDGPSpec(seed=13)
    rho = np.abs(np.linalg.eigvals(spec.a_mat)).max()
    assert rho <= 0.9 + 1e-12


def test_dynamic_reproducible():
    a = sg.gen_dynamic(sg.DynamicDGPSpec(n=60, seed=17))
    b = sg.gen_dynamic(sg.DynamicDGPSpec(n=60, seed=17))
    for field in ("v", "x", "a", "y", "a_alt", "ite_true_step"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_nhanes_surrogate_shapes_and_sparsity():
    ds = sg.gen_nhanes_surrogate(seed=4, n=300)
    assert ds.x.shape == (300, 14)
    assert ds.t.shape == (300, 82)
    assert set(np.unique(ds.t)) <= {0.0, 1.0}
    active = np.flatnonzero(ds.spec.beta)
    assert active.size == round(0.10 * 82)
    inert = np.setdiff1d(np.arange(82), active)
    assert np.allclose(ds.spec.beta[inert], 0.0)
    assert np.allclose(ds.spec.gamma[inert], 0.0)
