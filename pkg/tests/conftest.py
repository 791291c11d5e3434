"""Shared test utilities: the finite-difference gradient oracle."""

import numpy as np
import pytest


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, entry by entry."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return g


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray, rtol: float = 1e-4):
    """Relative error against the FD oracle, with an absolute floor for zeros."""
    denom = np.maximum(np.abs(numeric), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() <= rtol, f"max rel grad error {rel.max():.3e} > {rtol}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
