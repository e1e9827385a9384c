"""Pure-NumPy kernel backend.

Reference implementations for the hot inner loops. The compiled backend
in ``_native.pyx`` mirrors these definitions operation for operation;
elementwise kernels (relu, dropout, adam) are written so both backends
produce bit-identical output, reductions (softmax, distances) agree to
rounding.

All kernels take and return C-contiguous float64 arrays.
"""

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad, pre):
    """Gradient through relu given the pre-activation values."""
    return np.where(pre > 0.0, grad, 0.0)


def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(grad, out):
    """Gradient through tanh given the tanh output values."""
    return grad * (1.0 - out * out)


def dropout_apply(x, draws, rate):
    """Inverted dropout: zero where draws < rate, scale survivors by 1/(1-rate)."""
    scale = 1.0 / (1.0 - rate)
    return np.where(draws >= rate, x * scale, 0.0)


def dropout_backward(grad, draws, rate):
    scale = 1.0 / (1.0 - rate)
    return np.where(draws >= rate, grad * scale, 0.0)


def softmax(logits):
    """Row-wise softmax with max-subtraction stabilization."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy of row-wise softmax against integer labels.

    Returns ``(loss, grad)`` where ``grad`` is the gradient with respect
    to the logits: ``(softmax - onehot) / n``.
    """
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(s) - z[rows, labels]))
    grad = e / s[:, None]
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """One fused Adam step on flat parameter/moment arrays, in place.

    ``bc1``/``bc2`` are the precomputed bias corrections 1 - beta^t; the
    caller owns the step counter.
    """
    m[:] = beta1 * m + (1.0 - beta1) * g
    v[:] = beta2 * v + (1.0 - beta2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def sq_dists(queries, refs):
    """Pairwise squared Euclidean distances, shape (m, n).

    Uses the expansion ||q||^2 - 2 q.r + ||r||^2 so the inner product
    goes through BLAS; rounding can leave tiny negatives, clamped to 0.
    """
    qq = np.einsum("ij,ij->i", queries, queries)
    rr = np.einsum("ij,ij->i", refs, refs)
    d = qq[:, None] + rr[None, :] - 2.0 * (queries @ refs.T)
    np.maximum(d, 0.0, out=d)
    return d
