"""Directional central finite differences against autograd, in float64."""

import torch


def directional_errors(fn, tensors, n_dirs=3, eps=1e-7, seed=0):
    """Relative errors ``|fd - ad| / max(|fd|, |ad|)`` of ``d fn / d v`` for random directions ``v``.

    ``fn()`` must return a scalar that depends on the float64 ``tensors``
    (which need ``requires_grad``).
    """
    g = torch.Generator().manual_seed(seed)
    out = fn()
    grads = torch.autograd.grad(out, tensors)
    errors = []
    for _ in range(n_dirs):
        dirs = [torch.randn(t.shape, generator=g, dtype=t.dtype) for t in tensors]
        # unit-norm joint direction keeps the step well inside the ReLU/LeakyReLU linear pieces
        norm = torch.sqrt(sum((d ** 2).sum() for d in dirs))
        dirs = [d / norm for d in dirs]
        ad = sum((gr * d).sum() for gr, d in zip(grads, dirs)).item()
        with torch.no_grad():
            for t, d in zip(tensors, dirs):
                t.add_(eps * d)
            plus = fn().item()
            for t, d in zip(tensors, dirs):
                t.sub_(2 * eps * d)
            minus = fn().item()
            for t, d in zip(tensors, dirs):
                t.add_(eps * d)
        fd = (plus - minus) / (2 * eps)
        errors.append(abs(fd - ad) / max(abs(fd), abs(ad), 1e-12))
    return errors
