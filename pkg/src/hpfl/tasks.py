"""Synthetic task families and loss models with exact Hessian-vector products.

Two task families are provided:

* a 10-class Gaussian-mixture classification family, where each UE draws
  samples from a per-UE subset of ``l`` class labels (the heterogeneity
  level: more labels per UE means a harder personalized task), solved by
  either multinomial logistic regression or a one-hidden-layer tanh
  perceptron, and
* a quadratic family with per-UE curvature and optimum, used wherever a
  closed-form reference is wanted.

Every model exposes ``loss``, ``grad`` and ``hvp`` on flat parameter
vectors; the Hessian is never materialized.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TaskShard:
    """One UE's local dataset: features, integer labels, allowed label set."""

    x: np.ndarray
    y: np.ndarray
    label_set: tuple

    @property
    def size(self):
        return self.x.shape[0]


@dataclass(frozen=True)
class QuadraticTask:
    """Quadratic objective 0.5 * (w - a)' Q (w - a) standing in for a shard."""

    q: np.ndarray
    a: np.ndarray

    @property
    def size(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class UEData:
    """Train/eval split for a single UE, same label subset on both sides."""

    train: object
    eval: object


def _softmax(z):
    zs = z - z.max(axis=1, keepdims=True)
    e = np.exp(zs)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    zs = z - z.max(axis=1, keepdims=True)
    return zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))


class LogisticModel:
    """Multinomial logistic regression on a flat parameter vector.

    Parameters are packed as the weight matrix (n_classes x dim) followed
    by the bias vector (n_classes). The Hessian-vector product is exact:
    for each sample the softmax Hessian block is diag(p) - p p'.
    """

    def __init__(self, dim, n_classes, l2=0.0):
        self.dim = dim
        self.n_classes = n_classes
        self.l2 = float(l2)
        self.n_params = n_classes * dim + n_classes

    def _unpack(self, w):
        c, d = self.n_classes, self.dim
        return w[: c * d].reshape(c, d), w[c * d :]

    def init_params(self, rng, scale=1.0):
        c, d = self.n_classes, self.dim
        weights = rng.standard_normal(c * d) * (scale / np.sqrt(d))
        bias = np.zeros(c)
        return np.concatenate([weights, bias])

    def loss(self, w, shard):
        weights, bias = self._unpack(w)
        z = shard.x @ weights.T + bias
        logp = _log_softmax(z)
        nll = -logp[np.arange(shard.size), shard.y].mean()
        return nll + 0.5 * self.l2 * float(w @ w)

    def grad(self, w, shard):
        weights, bias = self._unpack(w)
        n = shard.size
        z = shard.x @ weights.T + bias
        p = _softmax(z)
        delta = p
        delta[np.arange(n), shard.y] -= 1.0
        g_w = delta.T @ shard.x / n
        g_b = delta.mean(axis=0)
        return np.concatenate([g_w.ravel(), g_b]) + self.l2 * w

    def hvp(self, w, shard, v):
        weights, bias = self._unpack(w)
        v_w, v_b = self._unpack(v)
        n = shard.size
        z = shard.x @ weights.T + bias
        p = _softmax(z)
        rz = shard.x @ v_w.T + v_b
        rp = p * (rz - (p * rz).sum(axis=1, keepdims=True))
        h_w = rp.T @ shard.x / n
        h_b = rp.mean(axis=0)
        return np.concatenate([h_w.ravel(), h_b]) + self.l2 * v

    def predict(self, w, x):
        weights, bias = self._unpack(w)
        return np.argmax(x @ weights.T + bias, axis=1)


class MLPModel:
    """One-hidden-layer tanh perceptron with softmax output.

    The Hessian-vector product is computed with a hand-rolled forward-mode
    pass over the backward pass (double backprop), so it is exact up to
    floating point, not a finite-difference estimate.
    """

    def __init__(self, dim, hidden, n_classes, l2=0.0):
        self.dim = dim
        self.hidden = hidden
        self.n_classes = n_classes
        self.l2 = float(l2)
        self.n_params = hidden * dim + hidden + n_classes * hidden + n_classes

    def _unpack(self, w):
        d, h, c = self.dim, self.hidden, self.n_classes
        i = 0
        w1 = w[i : i + h * d].reshape(h, d); i += h * d
        b1 = w[i : i + h]; i += h
        w2 = w[i : i + c * h].reshape(c, h); i += c * h
        b2 = w[i : i + c]
        return w1, b1, w2, b2

    def init_params(self, rng, scale=1.0):
        d, h, c = self.dim, self.hidden, self.n_classes
        w1 = rng.standard_normal(h * d) * (scale / np.sqrt(d))
        b1 = np.zeros(h)
        w2 = rng.standard_normal(c * h) * (scale / np.sqrt(h))
        b2 = np.zeros(c)
        return np.concatenate([w1, b1, w2, b2])

    def _forward(self, w, x):
        w1, b1, w2, b2 = self._unpack(w)
        z1 = x @ w1.T + b1
        a1 = np.tanh(z1)
        z2 = a1 @ w2.T + b2
        return w1, b1, w2, b2, a1, z2

    def loss(self, w, shard):
        _, _, _, _, _, z2 = self._forward(w, shard.x)
        logp = _log_softmax(z2)
        nll = -logp[np.arange(shard.size), shard.y].mean()
        return nll + 0.5 * self.l2 * float(w @ w)

    def grad(self, w, shard):
        n = shard.size
        w1, b1, w2, b2, a1, z2 = self._forward(w, shard.x)
        p = _softmax(z2)
        d2 = p
        d2[np.arange(n), shard.y] -= 1.0
        g_w2 = d2.T @ a1 / n
        g_b2 = d2.mean(axis=0)
        d1 = (d2 @ w2) * (1.0 - a1 ** 2)
        g_w1 = d1.T @ shard.x / n
        g_b1 = d1.mean(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2]) + self.l2 * w

    def hvp(self, w, shard, v):
        n = shard.size
        x = shard.x
        w1, b1, w2, b2, a1, z2 = self._forward(w, x)
        v1, vb1, v2, vb2 = self._unpack(v)
        p = _softmax(z2)
        d2 = p.copy()
        d2[np.arange(n), shard.y] -= 1.0

        rz1 = x @ v1.T + vb1
        ra1 = (1.0 - a1 ** 2) * rz1
        rz2 = a1 @ v2.T + ra1 @ w2.T + vb2
        rd2 = p * (rz2 - (p * rz2).sum(axis=1, keepdims=True))

        h_w2 = (rd2.T @ a1 + d2.T @ ra1) / n
        h_b2 = rd2.mean(axis=0)

        u = d2 @ w2
        ru = d2 @ v2 + rd2 @ w2
        rd1 = ru * (1.0 - a1 ** 2) + u * (-2.0 * a1 * ra1)
        h_w1 = rd1.T @ x / n
        h_b1 = rd1.mean(axis=0)
        return np.concatenate([h_w1.ravel(), h_b1, h_w2.ravel(), h_b2]) + self.l2 * v

    def predict(self, w, x):
        _, _, _, _, _, z2 = self._forward(w, x)
        return np.argmax(z2, axis=1)


class QuadraticModel:
    """Per-shard quadratic objective with exact derivatives.

    The shard must be a QuadraticTask. There is no classification
    semantics, so predict returns None and accuracy metrics report 0.
    """

    def __init__(self, dim):
        self.dim = dim
        self.n_params = dim

    def init_params(self, rng, scale=1.0):
        return rng.standard_normal(self.dim) * scale

    def loss(self, w, shard):
        r = w - shard.a
        return 0.5 * float(r @ (shard.q @ r))

    def grad(self, w, shard):
        return shard.q @ (w - shard.a)

    def hvp(self, w, shard, v):
        return shard.q @ v

    def predict(self, w, x):
        return None


def make_class_means(rng, n_classes, dim, separation):
    """Class centers for the Gaussian mixture, scaled by the separation knob."""
    return separation * rng.standard_normal((n_classes, dim))


def _sample_shard(rng, means, labels, n_samples, noise):
    labels = np.asarray(labels)
    y = labels[rng.integers(0, len(labels), size=n_samples)]
    x = means[y] + noise * rng.standard_normal((n_samples, means.shape[1]))
    return TaskShard(x=x, y=y, label_set=tuple(int(c) for c in labels))


def build_classification_federation(rng, k, n_k_list, l, n_classes, dim,
                                    n_train, n_eval, separation, noise):
    """Per-ES lists of UEData for the Gaussian-mixture family.

    Each UE owns a label subset of size l drawn without replacement; its
    train and eval shards share that subset.
    """
    means = make_class_means(rng, n_classes, dim, separation)
    federation = []
    for k_idx in range(k):
        ues = []
        for _ in range(n_k_list[k_idx]):
            labels = np.sort(rng.choice(n_classes, size=l, replace=False))
            train = _sample_shard(rng, means, labels, n_train, noise)
            eval_ = _sample_shard(rng, means, labels, n_eval, noise)
            ues.append(UEData(train=train, eval=eval_))
        federation.append(ues)
    return federation


def _random_spd(rng, dim, eig_lo, eig_hi):
    m = rng.standard_normal((dim, dim))
    q_mat, _ = np.linalg.qr(m)
    eigs = rng.uniform(eig_lo, eig_hi, size=dim)
    return (q_mat * eigs) @ q_mat.T


def build_quadratic_federation(rng, k, n_k_list, dim, eig_lo=0.5, eig_hi=2.0,
                               es_spread=1.0, ue_spread=0.5):
    """Per-ES lists of UEData for the quadratic family.

    Each ES has its own optimum center; its UEs scatter around it, which
    gives nonzero gradient diversity across the hierarchy.
    """
    federation = []
    for k_idx in range(k):
        center = es_spread * rng.standard_normal(dim)
        ues = []
        for _ in range(n_k_list[k_idx]):
            q = _random_spd(rng, dim, eig_lo, eig_hi)
            a = center + ue_spread * rng.standard_normal(dim)
            task = QuadraticTask(q=q, a=a)
            ues.append(UEData(train=task, eval=task))
        federation.append(ues)
    return federation
