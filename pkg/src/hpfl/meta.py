"""Personalized meta-objective and the one-step local update rule.

The per-UE objective evaluates the base loss at the adapted point
theta = w - alpha * grad(w), so its gradient carries a Hessian term:

    meta_grad(w) = (I - alpha * H(w)) @ grad(w - alpha * grad(w))

The Hessian is applied only through Hessian-vector products.
"""

import numpy as np


class NonFiniteError(ValueError):
    """Raised when a loss, gradient, or update stops being finite."""


def _check_finite(arr, what, context):
    if not np.all(np.isfinite(arr)):
        where = f" at {context}" if context else ""
        raise NonFiniteError(f"non-finite {what}{where}")


def meta_loss(model, w, shard, alpha, context=""):
    """Base loss evaluated at the one-step adapted parameters."""
    g = model.grad(w, shard)
    _check_finite(g, "adaptation gradient", context)
    value = model.loss(w - alpha * g, shard)
    _check_finite(value, "meta loss", context)
    return value


def meta_grad(model, w, shard, alpha, context=""):
    """Exact gradient of meta_loss via two gradients and one HVP."""
    g1 = model.grad(w, shard)
    _check_finite(g1, "adaptation gradient", context)
    g2 = model.grad(w - alpha * g1, shard)
    _check_finite(g2, "adapted-point gradient", context)
    out = g2 - alpha * model.hvp(w, shard, g2)
    _check_finite(out, "meta gradient", context)
    return out


def local_update(model, w_global, shard, alpha, beta, context=""):
    """One personalized local step: w_global - beta * meta_grad(w_global)."""
    return w_global - beta * meta_grad(model, w_global, shard, alpha, context=context)


def plain_grad(model, w, shard, alpha=0.0, context=""):
    """Conventional gradient, signature-compatible with meta_grad."""
    g = model.grad(w, shard)
    _check_finite(g, "gradient", context)
    return g


def plain_loss(model, w, shard, alpha=0.0, context=""):
    """Conventional loss, signature-compatible with meta_loss."""
    value = model.loss(w, shard)
    _check_finite(value, "loss", context)
    return value


def adapt(model, w, shard, alpha):
    """One-step adapted parameters theta = w - alpha * grad(w)."""
    return w - alpha * model.grad(w, shard)
