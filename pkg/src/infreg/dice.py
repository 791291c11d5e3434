"""Sequential estimator: a gated recurrent history embedding h_t, a
per-step stochastic representation z_t drawn from h_t alone (the current
action never enters the encoder), per-step information penalties, and
one-step counterfactual prediction with shared latent draws.

The per-step decoder reconstructs the realized history embedding h_t from
(z_t, a_t). The reconstruction target is detached: gradients do not flow
into h_t through the target side, which removes the degenerate shortcut of
collapsing the recurrence toward decodability. This is the one deliberate
gradient stop in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from infreg import autodiff as ad
from infreg import variational as vb
from infreg.autodiff import ParamStore, Tensor
from infreg.errors import ConfigurationError, DivergenceError
from infreg.rng import stream
from infreg.sice import DIVERGENCE_LIMIT


@dataclass
class DiceConfig:
    gru_hidden: int = 128
    dz: int = 32
    hidden: int = 128
    lam: float = 1e-5
    epochs: int = 50
    batch_size: int = 128
    lr: float = 5e-4
    eval_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigurationError("lam must be nonnegative")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if self.eval_samples < 1:
            raise ConfigurationError("eval_samples must be at least 1")


@dataclass
class DiceModel:
    gru: ad.GruParams
    heads: vb.ModelHeads
    store: ParamStore
    config: DiceConfig
    d_v: int = 0
    d_x: int = 0
    d_a: int = 0
    history: list = field(default_factory=list)


def init_dice(config: DiceConfig, d_v: int, d_x: int, d_a: int) -> DiceModel:
    store = ParamStore()
    g = stream(config.seed, "init")
    gru = ad.init_gru(
        g, d_in=d_v + d_a + d_x, d_h=config.gru_hidden, store=store, prefix="gru"
    )
    heads = vb.init_heads(
        g, store, d_in=config.gru_hidden, dz=config.dz, dt=d_a, dy=1,
        hidden=config.hidden,
    )
    return DiceModel(gru=gru, heads=heads, store=store, config=config,
                     d_v=d_v, d_x=d_x, d_a=d_a)


def unroll(model: DiceModel, v: Tensor, x: Tensor, a: Tensor, eps_seq):
    """March the recurrence over every step of a trajectory batch.

    v is (n, d_v); x and a are (n, T, ...); eps_seq yields one (n, dz)
    noise tensor per step. Step k consumes input concat(v, a_{k-1}, x_k)
    with a_{-1} = 0, so the encoder sees only the history h_k; the current
    action a_k reaches only the outcome head.
    """
    n, steps = x.data.shape[0], x.data.shape[1]
    h = ad.constant(np.zeros((n, model.config.gru_hidden)))
    a_prev = ad.constant(np.zeros((n, model.d_a)))
    states, posts, zs, yhats = [], [], [], []
    for k in range(steps):
        u = ad.concat_cols([v, a_prev, ad.constant(x.data[:, k])])
        h = ad.gru_cell(h, u, model.gru)
        post = vb.encode(h, model.heads)
        z = vb.sample_reparam(post, eps_seq[k])
        a_k = ad.constant(a.data[:, k])
        yhat = vb.outcome(z, a_k, model.heads)
        states.append(h)
        posts.append(post)
        zs.append(z)
        yhats.append(yhat)
        a_prev = a_k
    return states, posts, zs, yhats


def dice_loss(model: DiceModel, v: Tensor, x: Tensor, a: Tensor, y: Tensor,
              eps_seq, lam: float, targets=None):
    """Sum over steps of squared error + lam * (reconstruction + KL),
    each averaged over the batch; gradients flow through the full unroll.

    `targets` overrides the per-step reconstruction targets with fixed
    arrays; by default each step reconstructs its own realized h_k,
    detached. Passing the realized embeddings explicitly evaluates the
    identical objective, which is what gradient-check oracles perturb.
    """
    states, posts, zs, yhats = unroll(model, v, x, a, eps_seq)
    total = None
    sup_sum = rec_sum = kl_sum = 0.0
    for k, (h, post, z, yhat) in enumerate(zip(states, posts, zs, yhats)):
        y_k = ad.constant(y.data[:, k].reshape(-1, 1))
        supervised = ad.mean_all(ad.square(ad.sub(y_k, yhat)))
        if targets is None:
            target = ad.constant(h.data.copy())   # detached target
        else:
            target = ad.constant(targets[k])
        a_k = ad.constant(a.data[:, k])
        recon = ad.mean_all(vb.decoder_nll(target, z, a_k, model.heads))
        kl = ad.mean_all(vb.kl_to_prior(post))
        step_total = ad.add(supervised, ad.scale(ad.add(recon, kl), lam))
        total = step_total if total is None else ad.add(total, step_total)
        sup_sum += supervised.item()
        rec_sum += recon.item()
        kl_sum += kl.item()
    return total, sup_sum, rec_sum, kl_sum


def train_dice(dataset, config: DiceConfig) -> DiceModel:
    """Mini-batch Adam over trajectories for the configured epoch count."""
    v_data = np.asarray(dataset.v, dtype=np.float64)
    x_data = np.asarray(dataset.x, dtype=np.float64)
    a_data = np.asarray(dataset.a, dtype=np.float64)
    y_data = np.asarray(dataset.y, dtype=np.float64)
    n, steps = x_data.shape[0], x_data.shape[1]
    if n == 0:
        raise ConfigurationError("empty training set")

    model = init_dice(config, d_v=v_data.shape[1], d_x=x_data.shape[2],
                      d_a=a_data.shape[2])
    shuffle = stream(config.seed, "shuffle")
    noise = stream(config.seed, "noise")

    for epoch in range(config.epochs):
        perm = shuffle.permutation(n)
        sums = {"supervised": 0.0, "recon": 0.0, "kl": 0.0, "total": 0.0}
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            vb_t = ad.constant(v_data[idx])
            xb = ad.constant(x_data[idx])
            ab = ad.constant(a_data[idx])
            yb = ad.constant(y_data[idx])
            eps_seq = [
                ad.constant(noise.standard_normal((idx.size, config.dz)))
                for _ in range(steps)
            ]
            model.store.zero_grad()
            total, sup, rec, kl = dice_loss(model, vb_t, xb, ab, yb,
                                            eps_seq, config.lam)
            total_val = total.item()
            comps = {"supervised": sup, "recon": rec, "kl": kl,
                     "total": total_val}
            if not np.isfinite(total_val) or total_val > DIVERGENCE_LIMIT:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}: total={total_val!r}",
                    history=list(model.history),
                    diagnostics={"epoch": epoch, **comps},
                )
            ad.backward(total)
            model.store.adam_step(lr=config.lr)
            for key, val in comps.items():
                sums[key] += val * idx.size
        model.history.append({k: s / n for k, s in sums.items()})
        if not model.store.all_finite():
            raise DivergenceError(
                f"non-finite parameters after epoch {epoch}",
                history=list(model.history),
                diagnostics={"epoch": epoch},
            )
    return model


def states_for(model: DiceModel, v: np.ndarray, x: np.ndarray,
               a: np.ndarray) -> np.ndarray:
    """History embeddings h_k for every step, no gradients: (n, T, d_h)."""
    n, steps = x.shape[0], x.shape[1]
    out = np.empty((n, steps, model.config.gru_hidden))
    with ad.no_grad():
        h = ad.constant(np.zeros((n, model.config.gru_hidden)))
        a_prev = ad.constant(np.zeros((n, model.d_a)))
        for k in range(steps):
            u = ad.concat_cols([ad.constant(v), a_prev, ad.constant(x[:, k])])
            h = ad.gru_cell(h, u, model.gru)
            out[:, k] = h.data
            a_prev = ad.constant(a[:, k])
    return out


def predict_step_ite(
    model: DiceModel,
    h_state: np.ndarray,
    a: np.ndarray,
    a_prime: np.ndarray,
    s: int | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Monte Carlo one-step effect at a realized history embedding.

    Shared z_t draws feed both arms, giving exact antisymmetry and exact
    zero at a = a'.
    """
    s = s if s is not None else model.config.eval_samples
    if s < 1:
        raise ConfigurationError("sample count must be at least 1")
    g = stream(model.config.seed if seed is None else seed, "eval")
    h_arr = np.atleast_2d(np.asarray(h_state, dtype=np.float64))
    a_arr = np.atleast_2d(np.asarray(a, dtype=np.float64))
    ap_arr = np.atleast_2d(np.asarray(a_prime, dtype=np.float64))
    with ad.no_grad():
        post = vb.encode(ad.constant(h_arr), model.heads)
        acc = np.zeros(h_arr.shape[0])
        for _ in range(s):
            eps = ad.constant(g.standard_normal(post.mean.data.shape))
            z = vb.sample_reparam(post, eps)
            y_a = vb.outcome(z, ad.constant(a_arr), model.heads)
            y_b = vb.outcome(z, ad.constant(ap_arr), model.heads)
            acc += (y_a.data - y_b.data).reshape(-1)
    return acc / s


def predict_traj_ite(model: DiceModel, dataset, s: int | None = None,
                     seed: int | None = None) -> np.ndarray:
    """Per-(trajectory, step) one-step effects of a versus a_alt: (n, T)."""
    states = states_for(model, dataset.v, dataset.x, dataset.a)
    n, steps = states.shape[0], states.shape[1]
    out = np.empty((n, steps))
    for k in range(steps):
        out[:, k] = predict_step_ite(
            model, states[:, k], dataset.a[:, k], dataset.a_alt[:, k],
            s=s, seed=seed,
        )
    return out


def predict_traj_outcome(model: DiceModel, v: np.ndarray, x: np.ndarray,
                         a: np.ndarray, s: int | None = None,
                         seed: int | None = None) -> np.ndarray:
    """Posterior-mean factual prediction per (trajectory, step): (n, T)."""
    s = s if s is not None else model.config.eval_samples
    g = stream(model.config.seed if seed is None else seed, "eval")
    states = states_for(model, v, x, a)
    n, steps = states.shape[0], states.shape[1]
    out = np.empty((n, steps))
    with ad.no_grad():
        for k in range(steps):
            post = vb.encode(ad.constant(states[:, k]), model.heads)
            a_k = ad.constant(a[:, k])
            acc = np.zeros(n)
            for _ in range(s):
                eps = ad.constant(g.standard_normal(post.mean.data.shape))
                z = vb.sample_reparam(post, eps)
                acc += vb.outcome(z, a_k, model.heads).data.reshape(-1)
            out[:, k] = acc / s
    return out


def encode_traj_eval(model: DiceModel, v: np.ndarray, x: np.ndarray,
                     a: np.ndarray, seed: int | None = None):
    """Sampled z, posterior means, and per-row KL across all steps.

    Rows are ordered trajectory-major (all steps of trajectory 0, then
    trajectory 1, ...), matching a reshape of (n, T, ...) arrays.
    Returns (z_sampled, mean, kl_per_row), each with n * T rows.
    """
    g = stream(model.config.seed if seed is None else seed, "eval")
    states = states_for(model, v, x, a)
    n, steps = states.shape[0], states.shape[1]
    flat = states.reshape(n * steps, states.shape[2])
    with ad.no_grad():
        post = vb.encode(ad.constant(flat), model.heads)
        eps = ad.constant(g.standard_normal(post.mean.data.shape))
        z = vb.sample_reparam(post, eps)
        kl = vb.kl_to_prior(post)
    return z.data, post.mean.data, kl.data.reshape(-1)
