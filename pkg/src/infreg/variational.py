"""Probabilistic building blocks shared by the static and sequential models:
Gaussian stochastic encoder, reparameterized sampling, closed-form KL against
the fixed standard-normal reference, conditional reconstruction decoder, and
the outcome head.

Conventions fixed here and relied on elsewhere:
  - the reference marginal is a standard normal, so the rate term is exact;
  - decoder observation variance is 1 and its Gaussian constant is dropped,
    so reconstruction cost is 0.5 * squared residual per sample;
  - log-variances are clamped to [-10, 10] before exponentiation as a
    numerical guard (not part of the model).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from infreg import autodiff as ad
from infreg.autodiff import ParamStore, Tensor
from infreg.errors import ConfigurationError

LOGVAR_CLAMP = 10.0


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian q(z|·) with clamped log-variance."""

    mean: Tensor
    log_var: Tensor


@dataclass
class Mlp:
    """Affine layers with a fixed nonlinearity between them (not after the last)."""

    layers: list = field(default_factory=list)
    hidden_activation: str = "relu"


def init_mlp(
    rng: np.random.Generator,
    store: ParamStore,
    prefix: str,
    dims: list[int],
    hidden_activation: str = "relu",
    zero_last: bool = False,
) -> Mlp:
    """Glorot weights, zero biases; `zero_last` zeroes the final affine."""
    if len(dims) < 2:
        raise ConfigurationError("an MLP needs at least input and output dims")
    mlp = Mlp(hidden_activation=hidden_activation)
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        wdata = ad.glorot_uniform(rng, d_in, d_out)
        if zero_last and i == len(dims) - 2:
            wdata = np.zeros((d_in, d_out))
        w = store.add(f"{prefix}.w{i}", wdata)
        b = store.add(f"{prefix}.b{i}", np.zeros(d_out))
        mlp.layers.append((w, b))
    return mlp


def mlp_forward(mlp: Mlp, x: Tensor) -> Tensor:
    h = x
    last = len(mlp.layers) - 1
    for i, (w, b) in enumerate(mlp.layers):
        h = ad.affine(h, w, b)
        if i != last:
            h = ad.activation(h, mlp.hidden_activation)
    return h


@dataclass
class ModelHeads:
    """Encoder trunk with mean/log-var heads, decoder p(input|z,t), outcome g(z,t)."""

    trunk: Mlp
    mean_head: tuple
    log_var_head: tuple
    decoder: Mlp
    outcome_net: Mlp
    dz: int


def init_heads(
    rng: np.random.Generator,
    store: ParamStore,
    d_in: int,
    dz: int,
    dt: int,
    dy: int,
    hidden: int = 128,
    prefix: str = "heads",
) -> ModelHeads:
    trunk = init_mlp(rng, store, f"{prefix}.enc", [d_in, hidden])
    mean_head = (
        store.add(f"{prefix}.mean.w", ad.glorot_uniform(rng, hidden, dz)),
        store.add(f"{prefix}.mean.b", np.zeros(dz)),
    )
    log_var_head = (
        store.add(f"{prefix}.logvar.w", ad.glorot_uniform(rng, hidden, dz)),
        store.add(f"{prefix}.logvar.b", np.zeros(dz)),
    )
    decoder = init_mlp(rng, store, f"{prefix}.dec", [dz + dt, hidden, d_in])
    outcome_net = init_mlp(rng, store, f"{prefix}.out", [dz + dt, hidden, dy])
    return ModelHeads(trunk, mean_head, log_var_head, decoder, outcome_net, dz)


def encode(x: Tensor, heads: ModelHeads) -> GaussianPosterior:
    """Shared hidden layer, two linear heads, clamped log-variance."""
    h = ad.activation(
        ad.affine(x, *heads.trunk.layers[0]), heads.trunk.hidden_activation
    )
    for w, b in heads.trunk.layers[1:]:
        h = ad.activation(ad.affine(h, w, b), heads.trunk.hidden_activation)
    mean = ad.affine(h, *heads.mean_head)
    log_var = ad.clip(
        ad.affine(h, *heads.log_var_head), -LOGVAR_CLAMP, LOGVAR_CLAMP
    )
    return GaussianPosterior(mean, log_var)


def sample_reparam(post: GaussianPosterior, eps: Tensor) -> Tensor:
    """z = mean + exp(0.5 * log_var) * eps, differentiable in both heads."""
    std = ad.exp(ad.scale(post.log_var, 0.5))
    return ad.add(post.mean, ad.mul(std, eps))


def kl_to_prior(post: GaussianPosterior) -> Tensor:
    """Per-sample KL(q || standard normal): 0.5 * sum(mu^2 + e^lv - 1 - lv)."""
    inner = ad.sub(
        ad.add(ad.square(post.mean), ad.exp(post.log_var)),
        ad.add_scalar(post.log_var, 1.0),
    )
    return ad.scale(ad.row_sum(inner), 0.5)


def decoder_nll(target: Tensor, z: Tensor, t: Tensor, heads: ModelHeads) -> Tensor:
    """Per-sample 0.5 * ||target - dec(z (+) t)||^2 (Gaussian constant dropped)."""
    recon = mlp_forward(heads.decoder, ad.concat_cols([z, t]))
    resid = ad.sub(target, recon)
    return ad.scale(ad.row_sum(ad.square(resid)), 0.5)


def outcome(z: Tensor, t: Tensor, heads: ModelHeads) -> Tensor:
    """Outcome head g(z, t) on the concatenated latent and treatment."""
    return mlp_forward(heads.outcome_net, ad.concat_cols([z, t]))
