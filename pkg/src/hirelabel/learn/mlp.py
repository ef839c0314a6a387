"""Small fully connected networks with hand-written reverse-mode gradients."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..core import ensure_rng
from ..errors import NonFiniteLoss

HEADS = ("linear", "softmax")


def softmax(Z) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


class Mlp:
    """tanh hidden layers with a linear or softmax head.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    (fan_in, fan_out). Weights start uniform in ``+-sqrt(6 / (fan_in + fan_out))``
    and biases at zero.
    """

    def __init__(self, sizes: Sequence[int], head: str = "linear", rng=None, params=None):
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least input and output sizes, all positive")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        if params is None:
            rng = ensure_rng(rng)
            params = []
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                params.append(np.zeros(fan_out))
        self.params = [np.array(p, dtype=np.float64) for p in params]
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if self.params[2 * k].shape != (fan_in, fan_out) or self.params[2 * k + 1].shape != (fan_out,):
                raise ValueError(f"parameter shapes do not match layer {k}")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.head, params=[p.copy() for p in self.params])

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.params])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for k, p in enumerate(self.params):
            self.params[k] = flat[i:i + p.size].reshape(p.shape).copy()
            i += p.size
        if i != flat.size:
            raise ValueError(f"expected {i} parameters, got {flat.size}")

    def logits(self, X):
        """Pre-head output and the activations needed for backprop."""
        H = np.atleast_2d(np.asarray(X, dtype=np.float64))
        acts = [H]
        for k in range(self.n_layers):
            Z = H @ self.params[2 * k] + self.params[2 * k + 1]
            if k < self.n_layers - 1:
                H = np.tanh(Z)
                acts.append(H)
            else:
                H = Z
        return H, acts

    def forward(self, X) -> np.ndarray:
        Z, _ = self.logits(X)
        return softmax(Z) if self.head == "softmax" else Z

    def backward(self, acts, dZ) -> list[np.ndarray]:
        """Gradients of every parameter given the gradient at the pre-head output."""
        grads = [None] * len(self.params)
        G = dZ
        for k in range(self.n_layers - 1, -1, -1):
            grads[2 * k] = acts[k].T @ G
            grads[2 * k + 1] = G.sum(axis=0)
            if k > 0:
                G = (G @ self.params[2 * k].T) * (1.0 - acts[k] ** 2)
        return grads

    def loss_and_grad(self, X, Y, weights: Optional[np.ndarray] = None):
        """Weighted batch loss and its gradients.

        Linear head: mean over samples of ``w * sum_j (y_j - t_j)^2``.
        Softmax head: mean over samples of ``w * -sum_j t_j log p_j``.
        """
        Z, acts = self.logits(X)
        T = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        N = Z.shape[0]
        w = np.ones(N) if weights is None else np.asarray(weights, dtype=np.float64).reshape(N)
        if self.head == "softmax":
            shifted = Z - Z.max(axis=-1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
            per = -np.sum(T * logp, axis=-1)
            # d/dz of -sum t log softmax(z) is p * sum(t) - t
            dZ = (np.exp(logp) * T.sum(axis=-1, keepdims=True) - T) * (w / N)[:, None]
        else:
            diff = Z - T
            per = np.sum(diff**2, axis=-1)
            dZ = 2.0 * diff * (w / N)[:, None]
        loss = float(np.sum(w * per) / N)
        if not np.isfinite(loss):
            raise NonFiniteLoss("network loss is not finite")
        return loss, self.backward(acts, dZ)


def expectile_loss_and_grad(net: Mlp, X, targets, tau: float):
    """Mean of ``|tau - 1[d < 0]| d^2`` with ``d = target - V(x)``, and its gradients."""
    V, acts = net.logits(X)
    d = np.asarray(targets, dtype=np.float64).reshape(-1) - V[:, 0]
    weight = np.where(d < 0, 1.0 - tau, tau)
    N = d.size
    loss = float(np.mean(weight * d**2))
    if not np.isfinite(loss):
        raise NonFiniteLoss("value loss is not finite")
    dV = (-2.0 * weight * d / N)[:, None]
    return loss, net.backward(acts, dV)


def expectile(values, tau: float, iters: int = 100) -> float:
    """Scalar ``tau``-expectile of a sample by iterated weighted means."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    m = float(v.mean())
    for _ in range(iters):
        w = np.where(v < m, 1.0 - tau, tau)
        new = float(np.sum(w * v) / np.sum(w))
        if new == m:
            break
        m = new
    return m


class Adam:
    """Adam update rule over a list of parameter arrays (updated in place)."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
