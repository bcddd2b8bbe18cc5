"""Shared test helpers: independent numeric oracles."""

import torch


def numeric_gradient(fn, tensors, wrt, eps=1e-6):
    """Central finite differences of scalar ``fn(*tensors)`` w.r.t.
    ``tensors[wrt]``, elementwise.  Inputs must be float64."""
    base = [t.detach().clone() for t in tensors]
    grad = torch.zeros_like(base[wrt])
    flat = base[wrt].reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(*base).item()
        flat[i] = orig - eps
        lo = fn(*base).item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def analytic_gradient(fn, tensors, wrt):
    """Autograd gradient of scalar ``fn(*tensors)`` w.r.t. ``tensors[wrt]``."""
    args = [t.detach().clone() for t in tensors]
    args[wrt].requires_grad_(True)
    out = fn(*args)
    (g,) = torch.autograd.grad(out, args[wrt])
    return g


def assert_gradients_match(fn, tensors, wrt, rtol=1e-4, atol=1e-7):
    num = numeric_gradient(fn, tensors, wrt)
    ana = analytic_gradient(fn, tensors, wrt)
    err = (ana - num).abs()
    tol = rtol * num.abs() + atol
    if not bool((err <= tol).all()):
        worst = (err - tol).max().item()
        raise AssertionError(
            f"gradient mismatch wrt arg {wrt}: worst excess {worst:.3e}\n"
            f"analytic={ana}\nnumeric={num}"
        )


def brute_force_knn(queries, corpus, k, exclude_self=False):
    """All-pairs exact nearest neighbors by direct distance evaluation.

    Intentionally naive: this is the oracle the fast implementation is
    checked against.
    """
    import numpy as np

    q = np.asarray(queries, dtype=np.float64)
    c = np.asarray(corpus, dtype=np.float64)
    idx_out = np.zeros((q.shape[0], k), dtype=np.int64)
    dist_out = np.zeros((q.shape[0], k), dtype=np.float64)
    for i in range(q.shape[0]):
        dists = np.sqrt(((c - q[i]) ** 2).sum(axis=1))
        if exclude_self:
            dists[i] = np.inf
        order = np.argsort(dists, kind="stable")[:k]
        idx_out[i] = order
        dist_out[i] = dists[order]
    return idx_out, dist_out
