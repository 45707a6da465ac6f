"""Pure-numpy implementations of the dense-layer kernels.

This is the fallback backend; the compiled extension in ``_kernels.pyx``
implements the same functions with the same signatures.
"""

import numpy as np

BACKEND = "numpy"


def affine(x, w, b):
    """y = x @ w.T + b for x (n, in), w (out, in), b (out,)."""
    return x @ w.T + b


def affine_param_grads(x, dy):
    """Gradients of an affine layer w.r.t. weight and bias.

    dy is the upstream gradient (n, out); returns (dw, db) with
    dw (out, in) and db (out,), both plain sums over the batch.
    """
    return dy.T @ x, dy.sum(axis=0)


def affine_input_grad(dy, w):
    """Gradient w.r.t. the layer input: dx = dy @ w."""
    return dy @ w


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(pre, dy):
    """Mask the upstream gradient where the pre-activation was <= 0."""
    return np.where(pre > 0.0, dy, 0.0)


def sgd_update(param, grad, lr):
    """In-place param -= lr * grad."""
    param -= lr * grad
