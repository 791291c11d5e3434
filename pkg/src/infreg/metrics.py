"""Evaluation quantities: factual error, causal-effect error, uplift
ranking, kernel dependence, and a classifier-based mutual-information probe.

Conventions documented once here:
  - For vector treatments, "treated" for the uplift curve means any
    component active (configurable via the `treated` argument).
  - The MI probe factorizes over treatment components and reports the sum
    of per-component lower bounds; an exact joint estimate over {0,1}^d is
    infeasible for wide treatments, and the factorized sum remains a valid
    dependence diagnostic.
  - HSIC uses the biased estimator with Gaussian kernels and the median
    pairwise-distance bandwidth per block (floor 1e-6 when degenerate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.linear_model import LogisticRegression

from infreg.errors import UsageError


@dataclass
class MetricReport:
    """One evaluation row; everything is nonnegative except mi_probe,
    which may sit a hair below zero from the probe's constant convention."""

    rmse_y: float
    mae_y: float
    ate_error: float
    pehe: float
    auuc: float
    hsic_zt: float
    mi_probe: float
    kl_bottleneck: float

    def validate(self) -> None:
        for name in ("rmse_y", "mae_y", "ate_error", "pehe", "hsic_zt",
                     "kl_bottleneck"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be nonnegative")
        if self.mi_probe < -1e-6:
            raise UsageError("mi_probe fell below the constant-convention floor")


def _pair(yhat, y):
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if yhat.size == 0:
        raise UsageError("empty input to an error metric")
    if yhat.size != y.size:
        raise UsageError(f"length mismatch: {yhat.size} vs {y.size}")
    return yhat, y


def rmse(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def mae(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.mean(np.abs(yhat - y)))


def pehe(ite_hat, ite_true) -> float:
    ite_hat, ite_true = _pair(ite_hat, ite_true)
    return float(np.sqrt(np.mean((ite_hat - ite_true) ** 2)))


def ate_error(ite_hat, ite_true) -> float:
    ite_hat, ite_true = _pair(ite_hat, ite_true)
    return float(abs(ite_hat.mean() - ite_true.mean()))


def auuc(scores, outcomes, treated) -> float:
    """Area under the cumulative uplift curve.

    Units are sorted descending by score (stable, ties by original index).
    At prefix fraction p the curve value is p times the within-prefix
    difference of treated and control outcome means; prefixes missing one
    of the groups carry the last defined value forward (0 before any).
    The area is trapezoidal over p in (0, 1], reported per unit mass.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    outcomes = np.asarray(outcomes, dtype=np.float64).reshape(-1)
    treated = np.asarray(treated).reshape(-1).astype(bool)
    n = scores.size
    if n == 0:
        raise UsageError("empty input to auuc")
    if outcomes.size != n or treated.size != n:
        raise UsageError("auuc inputs must share a length")

    order = np.argsort(-scores, kind="stable")
    out_sorted = outcomes[order]
    trt_sorted = treated[order]

    cum_treated = np.cumsum(trt_sorted)
    cum_control = np.arange(1, n + 1) - cum_treated
    cum_out_treated = np.cumsum(out_sorted * trt_sorted)
    cum_out_control = np.cumsum(out_sorted * ~trt_sorted)

    curve = np.zeros(n)
    last = 0.0
    frac = np.arange(1, n + 1) / n
    for i in range(n):
        if cum_treated[i] > 0 and cum_control[i] > 0:
            diff = (
                cum_out_treated[i] / cum_treated[i]
                - cum_out_control[i] / cum_control[i]
            )
            last = frac[i] * diff
        curve[i] = last

    # Trapezoid from the origin through the n prefix points.
    xs = np.concatenate([[0.0], frac])
    ys = np.concatenate([[0.0], curve])
    return float(np.trapezoid(ys, xs))


def _gaussian_gram(a: np.ndarray) -> np.ndarray:
    sq = (a * a).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (a @ a.T)
    np.maximum(d2, 0.0, out=d2)
    iu = np.triu_indices(a.shape[0], k=1)
    med = np.median(np.sqrt(d2[iu]))
    bw = max(med, 1e-6)
    return np.exp(-d2 / (2.0 * bw * bw))


def hsic(z, t) -> float:
    """Biased HSIC: trace(K H L H) / n^2 with Gaussian kernels."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if z.shape[0] == 1:
        z = z.T
    if t.shape[0] == 1:
        t = t.T
    n = z.shape[0]
    if n < 4:
        raise UsageError("hsic needs at least 4 samples")
    if t.shape[0] != n:
        raise UsageError("hsic inputs must share a sample count")
    k = _gaussian_gram(z)
    l = _gaussian_gram(t)
    h = np.eye(n) - np.ones((n, n)) / n
    return float(np.trace(k @ h @ l @ h) / (n * n))


def _plugin_entropy(labels: np.ndarray) -> float:
    p = labels.mean()
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log(p) - (1 - p) * np.log(1 - p))


def mi_probe(z, t, seed: int = 0) -> float:
    """Classifier lower bound on the latent-treatment information.

    For each binary treatment component, fit logistic regression on the
    even-index half and evaluate mean log-likelihood on the odd-index
    half; the component's value is that mean plus the held-out plug-in
    entropy of the component, clipped at 0 (each true component MI is
    nonnegative, so clipping preserves the lower-bound property). Returns
    the sum over components.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if z.shape[0] == 1:
        z = z.T
    if t.shape[0] == 1:
        t = t.T
    n = z.shape[0]
    if n < 8:
        raise UsageError("mi_probe needs at least 8 samples")
    fit_idx = np.arange(0, n, 2)
    eval_idx = np.arange(1, n, 2)

    total = 0.0
    for j in range(t.shape[1]):
        labels = (t[:, j] > 0.5).astype(int)
        if labels[fit_idx].min() == labels[fit_idx].max():
            continue
        clf = LogisticRegression(max_iter=1000, random_state=seed)
        clf.fit(z[fit_idx], labels[fit_idx])
        proba = clf.predict_proba(z[eval_idx])
        eps = 1e-12
        ll = np.log(
            np.clip(proba[np.arange(eval_idx.size), labels[eval_idx]], eps, None)
        ).mean()
        comp = ll + _plugin_entropy(labels[eval_idx])
        total += max(comp, 0.0)
    return float(total)


def build_report(
    yhat, y, ite_hat, ite_true, z, t, kl_value: float,
    treated: Optional[np.ndarray] = None, probe_seed: int = 0,
) -> MetricReport:
    """Assemble every metric from raw evaluation arrays."""
    t_arr = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if t_arr.shape[0] == 1:
        t_arr = t_arr.T
    if treated is None:
        treated = t_arr.max(axis=1) > 0.5
    report = MetricReport(
        rmse_y=rmse(yhat, y),
        mae_y=mae(yhat, y),
        ate_error=ate_error(ite_hat, ite_true),
        pehe=pehe(ite_hat, ite_true),
        auuc=auuc(np.asarray(ite_hat).reshape(-1), np.asarray(y).reshape(-1),
                  treated),
        hsic_zt=hsic(z, t_arr),
        mi_probe=mi_probe(z, t_arr, seed=probe_seed),
        kl_bottleneck=float(kl_value),
    )
    report.validate()
    return report
