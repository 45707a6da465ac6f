"""Independent oracles shared by the unit and acceptance tests.

These deliberately avoid the library's own code paths: plain Python
loops and finite differences only.
"""

import numpy as np

from fedrema import nn


def params_to_vector(params):
    chunks = []
    for layer in params.extractor.layers:
        chunks.append(layer.weight.ravel())
        chunks.append(layer.bias.ravel())
    chunks.append(params.classifier.weight.ravel())
    chunks.append(params.classifier.bias.ravel())
    return np.concatenate(chunks)


def vector_to_params(vec, template):
    out = template.copy()
    pos = 0
    arrays = []
    for layer in out.extractor.layers:
        arrays += [layer.weight, layer.bias]
    arrays += [out.classifier.weight, out.classifier.bias]
    for a in arrays:
        n = a.size
        a[...] = vec[pos:pos + n].reshape(a.shape)
        pos += n
    return out


def grads_to_vector(grads):
    chunks = []
    for dw, db in grads.layer_grads:
        chunks.append(np.asarray(dw).ravel())
        chunks.append(np.asarray(db).ravel())
    chunks.append(np.asarray(grads.classifier_weight).ravel())
    chunks.append(np.asarray(grads.classifier_bias).ravel())
    return np.concatenate(chunks)


def finite_difference_gradient(params, batch, eps=1e-5):
    """Central differences of the cross-entropy loss over every entry."""
    x0 = params_to_vector(params)
    grad = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += eps
        xm = x0.copy()
        xm[i] -= eps
        lp = nn.cross_entropy_loss(vector_to_params(xp, params), batch)
        lm = nn.cross_entropy_loss(vector_to_params(xm, params), batch)
        grad[i] = (lp - lm) / (2 * eps)
    return grad


def random_model(rng, input_dim=None, hidden=None, features=None, classes=None):
    input_dim = input_dim or int(rng.integers(2, 6))
    hidden = hidden or int(rng.integers(2, 6))
    features = features or int(rng.integers(2, 5))
    classes = classes or int(rng.integers(2, 5))
    model = nn.init_model(input_dim, [hidden], features, classes,
                          seed=int(rng.integers(0, 2**31)))
    return model


def random_batch(rng, model, n=4):
    x = rng.standard_normal((n, model.extractor.in_dim))
    y = rng.integers(0, model.classifier.num_classes, size=n)
    return nn.LabeledBatch(x, y)


def mds_oracle(values):
    """O(K^2) exhaustive split-point search over the sorted values.

    Returns (max_gap, above_gap_index_set) with the same tie rules as
    the spec: stable ascending sort, first maximal gap.
    """
    values = list(values)
    k = len(values)
    order = sorted(range(k), key=lambda i: (values[i], i))
    best_gap = -1.0
    best_split = None
    for split in range(1, k):
        gap = values[order[split]] - values[order[split - 1]]
        if gap > best_gap:
            best_gap = gap
            best_split = split
    if best_gap == 0.0:
        return 0.0, set(range(k))
    return best_gap, {order[i] for i in range(best_split, k)}
