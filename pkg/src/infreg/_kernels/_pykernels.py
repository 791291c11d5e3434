"""Pure-numpy implementations of the hot elementwise kernels.

Same signatures as the compiled `_ckernels` module. The `*_bwd_acc`
functions accumulate into the gradient buffer in place; `adam_update`
mutates parameter and moment buffers in place.
"""

import numpy as np


def tanh_fwd(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def sigmoid_fwd(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def tanh_bwd_acc(grad_out: np.ndarray, y: np.ndarray, grad_acc: np.ndarray) -> None:
    grad_acc += grad_out * (1.0 - y * y)


def sigmoid_bwd_acc(grad_out: np.ndarray, y: np.ndarray, grad_acc: np.ndarray) -> None:
    grad_acc += grad_out * y * (1.0 - y)


def relu_bwd_acc(grad_out: np.ndarray, y: np.ndarray, grad_acc: np.ndarray) -> None:
    grad_acc += grad_out * (y > 0.0)


def adam_update(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    bc1: float,
    bc2: float,
) -> None:
    """Bias-corrected Adam update, in place on p/m/v.

    bc1 = 1 - beta1**t and bc2 = 1 - beta2**t are precomputed by the caller.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
