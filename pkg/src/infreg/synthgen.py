"""Seeded synthetic benchmarks with confounded assignment and closed-form
ground-truth effects.

Static generator:
    x ~ N(0, I) (then standardized per column)
    t_j ~ Bernoulli(sigmoid(c * W_assign[j] . x))
    mu(x, t) = w_lin . x + sin(w_nl . x) + t . (beta + Gamma x) / sqrt(d_t)
    y = mu(x, t) + sigma_y * eps

The 1/sqrt(d_t) scaling keeps outcome variance stable as the treatment
dimension grows, so sweeps across d_t compare like with like. The
alternative arm t_alt is drawn from the sign-flipped assignment logits,
giving a well-separated comparison for effect-heterogeneity metrics.

Dynamic generator:
    v ~ N(0, I), x_1 ~ N(0, I)
    a_t,j ~ Bernoulli(sigmoid(U x_t + u v))
    x_{t+1} = tanh(A x_t + B a_t + C v) + noise,  spectral radius(A) <= 0.9
    y_{t+1} = w . x_t + a_t . (beta + Gamma x_t) / sqrt(d_a) + eps

One-step true effects are (a - a') . (beta + Gamma x_t) / sqrt(d_a),
exact by construction because the arms share every other term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from infreg.rng import stream


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class StaticDGPSpec:
    """Configuration plus the frozen parameter draw of one static DGP."""

    n: int = 2000
    d_x: int = 6
    d_t: int = 2
    confounding: float = 1.0
    sigma_y: float = 0.5
    seed: int = 0
    sparse_beta_frac: Optional[float] = None

    w_assign: np.ndarray = field(init=False, repr=False)
    w_lin: np.ndarray = field(init=False, repr=False)
    w_nl: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)
    gamma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma_y < 0:
            raise ValueError("sigma_y must be nonnegative")
        g = stream(self.seed, "dgp")
        self.w_assign = g.normal(size=(self.d_t, self.d_x)) / np.sqrt(self.d_x)
        self.w_lin = g.normal(size=self.d_x) / np.sqrt(self.d_x)
        self.w_nl = g.normal(size=self.d_x) / np.sqrt(self.d_x)
        self.beta = g.normal(size=self.d_t)
        self.gamma = g.normal(size=(self.d_t, self.d_x)) / np.sqrt(self.d_x)
        if self.sparse_beta_frac is not None:
            # Keep a small active set; inert components get zero main effect
            # and zero heterogeneity so they are truly inert.
            k = max(1, int(round(self.sparse_beta_frac * self.d_t)))
            active = g.choice(self.d_t, size=k, replace=False)
            mask = np.zeros(self.d_t, dtype=bool)
            mask[active] = True
            self.beta = np.where(mask, self.beta, 0.0)
            self.gamma = np.where(mask[:, None], self.gamma, 0.0)


@dataclass
class StaticDataset:
    """One draw from a static DGP with its closed-form effect oracle."""

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    t_alt: np.ndarray
    ite_true: np.ndarray
    mu: Callable[[np.ndarray, np.ndarray], np.ndarray]
    spec: StaticDGPSpec


def _static_mu(spec: StaticDGPSpec):
    def mu(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        base = x @ spec.w_lin + np.sin(x @ spec.w_nl)
        effect = (t * (spec.beta + x @ spec.gamma.T)).sum(axis=1)
        return base + effect / np.sqrt(spec.d_t)

    return mu


def gen_static(spec: StaticDGPSpec) -> StaticDataset:
    g = stream(spec.seed, "data")
    x = g.normal(size=(spec.n, spec.d_x))
    x = (x - x.mean(axis=0)) / x.std(axis=0)

    logits = spec.confounding * (x @ spec.w_assign.T)
    t = (g.random(size=logits.shape) < _sigmoid(logits)).astype(np.float64)
    t_alt = (g.random(size=logits.shape) < _sigmoid(-logits)).astype(np.float64)

    mu = _static_mu(spec)
    noise = stream(spec.seed, "noise").normal(size=spec.n)
    y = mu(x, t) + spec.sigma_y * noise
    ite_true = mu(x, t) - mu(x, t_alt)
    return StaticDataset(x, t, y, t_alt, ite_true, mu, spec)


def gen_nhanes_surrogate(
    seed: int, n: int = 2000, confounding: float = 1.0, sigma_y: float = 0.5
) -> StaticDataset:
    """Survey-shaped surrogate: 14 covariates, 82 binary treatments, and a
    sparse effect vector (10% active) so most treatment components are inert."""
    spec = StaticDGPSpec(
        n=n,
        d_x=14,
        d_t=82,
        confounding=confounding,
        sigma_y=sigma_y,
        seed=seed,
        sparse_beta_frac=0.10,
    )
    return gen_static(spec)


@dataclass
class DynamicDGPSpec:
    """Configuration plus the frozen parameter draw of one dynamic DGP."""

    n: int = 1000
    t_steps: int = 10
    d_x: int = 8
    d_v: int = 3
    d_a: int = 2
    confounding: float = 1.0
    sigma_x: float = 0.1
    sigma_y: float = 0.5
    seed: int = 0

    a_mat: np.ndarray = field(init=False, repr=False)
    b_mat: np.ndarray = field(init=False, repr=False)
    c_mat: np.ndarray = field(init=False, repr=False)
    u_mat: np.ndarray = field(init=False, repr=False)
    u_vec: np.ndarray = field(init=False, repr=False)
    w_out: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)
    gamma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma_x < 0 or self.sigma_y < 0:
            raise ValueError("noise scales must be nonnegative")
        g = stream(self.seed, "dgp")
        a = g.normal(size=(self.d_x, self.d_x))
        rho = np.abs(np.linalg.eigvals(a)).max()
        self.a_mat = 0.9 * a / rho
        self.b_mat = g.normal(size=(self.d_x, self.d_a)) / np.sqrt(self.d_a)
        self.c_mat = g.normal(size=(self.d_x, self.d_v)) / np.sqrt(self.d_v)
        self.u_mat = g.normal(size=(self.d_a, self.d_x)) / np.sqrt(self.d_x)
        self.u_vec = g.normal(size=(self.d_a, self.d_v)) / np.sqrt(self.d_v)
        self.w_out = g.normal(size=self.d_x) / np.sqrt(self.d_x)
        self.beta = g.normal(size=self.d_a)
        self.gamma = g.normal(size=(self.d_a, self.d_x)) / np.sqrt(self.d_x)


@dataclass
class TrajectoryDataset:
    """Trajectories plus per-step alternative arms and exact one-step effects.

    Array layout: v is (n, d_v); x is (n, T, d_x); a and a_alt are
    (n, T, d_a); y is (n, T) where y[:, k] is the outcome observed after
    acting at step k; ite_true_step[:, k] is the effect of a[:, k] versus
    a_alt[:, k] on that outcome.
    """

    v: np.ndarray
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    a_alt: np.ndarray
    ite_true_step: np.ndarray
    spec: DynamicDGPSpec


def step_effect(spec: DynamicDGPSpec, x_t, a, a_alt) -> np.ndarray:
    """Exact one-step effect: (a - a')·(beta + Gamma x_t)/sqrt(d_a)."""
    blade = spec.beta + x_t @ spec.gamma.T
    return ((a - a_alt) * blade).sum(axis=1) / np.sqrt(spec.d_a)


def gen_dynamic(spec: DynamicDGPSpec) -> TrajectoryDataset:
    g = stream(spec.seed, "data")
    noise = stream(spec.seed, "noise")
    n, steps = spec.n, spec.t_steps

    v = g.normal(size=(n, spec.d_v))
    x = np.empty((n, steps, spec.d_x))
    a = np.empty((n, steps, spec.d_a))
    a_alt = np.empty((n, steps, spec.d_a))
    y = np.empty((n, steps))
    ite = np.empty((n, steps))

    x_t = g.normal(size=(n, spec.d_x))
    for k in range(steps):
        x[:, k] = x_t
        logits = spec.confounding * (x_t @ spec.u_mat.T + v @ spec.u_vec.T)
        a_k = (g.random(size=logits.shape) < _sigmoid(logits)).astype(np.float64)
        a_alt_k = (g.random(size=logits.shape) < _sigmoid(-logits)).astype(np.float64)
        a[:, k] = a_k
        a_alt[:, k] = a_alt_k

        blade = spec.beta + x_t @ spec.gamma.T
        y[:, k] = (
            x_t @ spec.w_out
            + (a_k * blade).sum(axis=1) / np.sqrt(spec.d_a)
            + spec.sigma_y * noise.normal(size=n)
        )
        ite[:, k] = step_effect(spec, x_t, a_k, a_alt_k)

        x_t = np.tanh(
            x_t @ spec.a_mat.T + a_k @ spec.b_mat.T + v @ spec.c_mat.T
        ) + spec.sigma_x * noise.normal(size=(n, spec.d_x))

    return TrajectoryDataset(v, x, a, y, a_alt, ite, spec)
