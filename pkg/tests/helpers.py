"""Shared test utilities: central finite differences as the gradient oracle."""

import numpy as np

from allaxis import Tensor


def fd_grad(fn, tensors, index, step=1e-5):
    """Central finite-difference gradient of scalar fn w.r.t. tensors[index].

    fn receives the tensor list and returns a scalar Tensor; entries are
    perturbed one at a time, so this stays independent of the autodiff path.
    """
    target = tensors[index]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(tensors).item()
        flat[i] = orig - step
        lo = fn(tensors).item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def check_grads(fn, tensors, tol=1e-4, step=1e-5):
    """Assert analytic grads of scalar fn match finite differences."""
    from allaxis import backward

    for t in tensors:
        t.zero_grad()
    loss = fn(tensors)
    backward(loss)
    for i, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        numeric = fd_grad(fn, tensors, i, step=step)
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        err = rel_err(analytic, numeric)
        assert err < tol, f"gradient mismatch on input {i}: rel err {err:.3e} >= {tol}"


def rand_tensor(rng, shape, requires_grad=True, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=requires_grad)
