"""Shared test utilities: finite-difference gradient oracle, RBF-MMD."""

import numpy as np
import torch


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central-difference gradient of a scalar loss for each parameter tensor.

    Stays independent of autograd: only forward evaluations are used.
    """
    grads = []
    for p in params:
        flat = p.detach().reshape(-1)
        g = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
            up = float(loss_fn().detach())
            with torch.no_grad():
                flat[i] = orig - h
            down = float(loss_fn().detach())
            with torch.no_grad():
                flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads.append(g.reshape(p.shape))
    return grads


def max_grad_error(loss_fn, params, h=1e-5, rel=1e-4, abs_tol=1e-6):
    """Worst-case violation of |analytic - numeric| <= max(abs, rel*scale).

    Returns (worst_ratio, analytic, numeric); a ratio <= 1 means every
    coordinate is within tolerance.
    """
    params = list(params)
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, params, allow_unused=True)
    analytic = [torch.zeros_like(p) if g is None else g
                for p, g in zip(params, analytic)]
    numeric = finite_difference_grads(loss_fn, params, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        diff = (a - n).abs()
        tol = torch.maximum(torch.full_like(a, abs_tol),
                            rel * torch.maximum(a.abs(), n.abs()))
        worst = max(worst, float((diff / tol).max()))
    return worst


def assert_gradients_match(loss_fn, params, h=1e-5, rel=1e-4, abs_tol=1e-6):
    worst = max_grad_error(loss_fn, params, h=h, rel=rel, abs_tol=abs_tol)
    assert worst <= 1.0, f"gradient mismatch: worst violation ratio {worst:.3g}"


def rbf_mmd(x, y, bandwidth):
    """Biased RBF-kernel MMD^2 estimate between two sample sets."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def kernel_mean(a, b):
        sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-sq / (2.0 * bandwidth ** 2)).mean()

    return kernel_mean(x, x) + kernel_mean(y, y) - 2.0 * kernel_mean(x, y)


def median_heuristic_bandwidth(samples):
    samples = np.asarray(samples, dtype=np.float64)
    sq = ((samples[:, None, :] - samples[None, :, :]) ** 2).sum(axis=-1)
    med = np.median(sq[np.triu_indices(len(samples), k=1)])
    return float(np.sqrt(max(med, 1e-12) / 2.0))


def subsample_rows(array, count, seed):
    array = np.asarray(array)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(array), size=min(count, len(array)), replace=False)
    return array[np.sort(idx)]
