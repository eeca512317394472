"""Feed-forward network with one sigmoid hidden layer and a linear output,
trained by full-batch gradient descent on weighted squared error.

Inputs and the target are standardised with training-sample (weighted)
moments before training; predictions are mapped back to the target's scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fdaudit import kernels
from fdaudit.errors import DivergenceError, ValidationError


def init_params(n_inputs: int, width: int, seed: int):
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, 1.0 / np.sqrt(max(n_inputs, 1)), size=(n_inputs, width))
    b1 = rng.normal(0.0, 1.0, size=width)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(width), size=width)
    return W1, b1, W2, 0.0


def pack(W1, b1, W2, b2) -> np.ndarray:
    return np.concatenate([W1.ravel(), b1, W2, [b2]])


def unpack(theta, n_inputs: int, width: int):
    theta = np.asarray(theta, dtype=float)
    k = n_inputs * width
    W1 = theta[:k].reshape(n_inputs, width)
    b1 = theta[k: k + width]
    W2 = theta[k + width: k + 2 * width]
    return W1, b1, W2, float(theta[-1])


def forward(X, W1, b1, W2, b2):
    act = 1.0 / (1.0 + np.exp(-(X @ W1 + b1)))
    return act @ W2 + b2, act


def loss_and_grad(theta, X, y, v, width: int):
    """Loss ``0.5 * sum v e^2 / sum v`` and its gradient in packed form."""
    X = np.asarray(X, dtype=float)
    W1, b1, W2, b2 = unpack(theta, X.shape[1], width)
    f, act = forward(X, W1, b1, W2, b2)
    vn = np.asarray(v, dtype=float) / np.sum(v)
    e = f - y
    g = vn * e
    da = np.outer(g, W2) * act * (1.0 - act)
    grad = pack(X.T @ da, da.sum(axis=0), act.T @ g, g.sum())
    return 0.5 * float(vn @ (e * e)), grad


@dataclass(eq=False)
class MlpFit:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    keep: np.ndarray
    y_mean: float
    y_scale: float
    train_loss: float
    losses: np.ndarray = field(repr=False)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Xs = (X[:, self.keep] - self.x_mean) / self.x_scale
        f, _ = forward(Xs, self.W1, self.b1, self.W2, self.b2)
        return self.y_mean + self.y_scale * f

    def diagnostics(self) -> dict:
        return {"train_mse": self.train_loss, "iterations": int(np.sum(np.isfinite(self.losses)))}


def fit_mlp(X, y, weights=None, hidden: int = 10, iters: int = 1000, rate: float = 1.0, seed: int = 0) -> MlpFit:
    """Train the network; raises :class:`DivergenceError` if the loss blows up."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n <= hidden:
        raise ValidationError(f"MLP needs more observations ({n}) than hidden units ({hidden})")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    wn = w / w.sum()
    x_mean = wn @ X
    x_scale = np.sqrt(wn @ (X - x_mean) ** 2)
    keep = x_scale > 1e-12 * np.maximum(1.0, np.abs(x_mean))
    y_mean = float(wn @ y)
    y_scale = float(np.sqrt(wn @ (y - y_mean) ** 2))
    if not y_scale > 1e-12 * max(1.0, abs(y_mean)):
        y_scale = 1.0
    Xs = (X[:, keep] - x_mean[keep]) / x_scale[keep]
    ys = (y - y_mean) / y_scale

    W1, b1, W2, b2 = init_params(Xs.shape[1], hidden, seed)
    # Overflow only happens on the way to divergence, which is reported below.
    with np.errstate(over="ignore", invalid="ignore"):
        W1, b1, W2, b2, losses, diverged = kernels.mlp_train(Xs, ys, w, W1, b1, W2, b2, rate, iters)
        final, _ = forward(Xs, W1, b1, W2, b2)
        mse = float(wn @ (final - ys) ** 2) * y_scale**2
    if diverged or not np.isfinite(mse):
        raise DivergenceError(f"MLP training diverged (loss is not finite); try a smaller learning rate than {rate}")
    return MlpFit(W1, b1, W2, b2, x_mean[keep], x_scale[keep], keep, y_mean, y_scale, mse, losses)
