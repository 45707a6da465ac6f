import numpy as np
import pytest

from fedrema import backend
from fedrema.backend import numpy_backend

try:
    from fedrema.backend import _kernels
except ImportError:
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None,
                                    reason="compiled kernels not built")


def test_a_backend_is_selected():
    assert backend.BACKEND in ("numpy", "compiled")


@needs_compiled
class TestKernelAgreement:
    """The compiled kernels must match the numpy fallback closely;
    summation order differs, so exact bit-equality is not required."""

    rng = np.random.default_rng(123)

    def arrays(self, n=7, d_in=5, d_out=4):
        x = np.ascontiguousarray(self.rng.standard_normal((n, d_in)))
        w = np.ascontiguousarray(self.rng.standard_normal((d_out, d_in)))
        b = np.ascontiguousarray(self.rng.standard_normal(d_out))
        dy = np.ascontiguousarray(self.rng.standard_normal((n, d_out)))
        return x, w, b, dy

    def test_affine(self):
        x, w, b, _ = self.arrays()
        np.testing.assert_allclose(_kernels.affine(x, w, b),
                                   numpy_backend.affine(x, w, b), rtol=1e-13)

    def test_affine_param_grads(self):
        x, w, b, dy = self.arrays()
        dw_c, db_c = _kernels.affine_param_grads(x, dy)
        dw_n, db_n = numpy_backend.affine_param_grads(x, dy)
        np.testing.assert_allclose(dw_c, dw_n, rtol=1e-12)
        np.testing.assert_allclose(db_c, db_n, rtol=1e-12)

    def test_affine_input_grad(self):
        x, w, b, dy = self.arrays()
        np.testing.assert_allclose(_kernels.affine_input_grad(dy, w),
                                   numpy_backend.affine_input_grad(dy, w),
                                   rtol=1e-13)

    def test_relu_and_grad(self):
        x, _, _, _ = self.arrays()
        np.testing.assert_array_equal(_kernels.relu(x), numpy_backend.relu(x))
        dy = np.ascontiguousarray(self.rng.standard_normal(x.shape))
        np.testing.assert_array_equal(_kernels.relu_grad(x, dy),
                                      numpy_backend.relu_grad(x, dy))

    def test_sgd_update(self):
        p1 = self.rng.standard_normal((3, 4))
        p2 = p1.copy()
        g = self.rng.standard_normal((3, 4))
        _kernels.sgd_update(p1, g, 0.05)
        numpy_backend.sgd_update(p2, g, 0.05)
        np.testing.assert_allclose(p1, p2, rtol=1e-15)


@needs_compiled
def test_training_agrees_across_backends(monkeypatch):
    """A full local-training run produces near-identical models on both
    backends (differences only from float summation order)."""
    from fedrema import nn

    rng = np.random.default_rng(0)
    model = nn.init_model(6, [8], 4, 3, seed=1)
    data = nn.LabeledBatch(rng.standard_normal((60, 6)), rng.integers(0, 3, 60))

    results = {}
    for impl in (numpy_backend, _kernels):
        for name in ("affine", "affine_param_grads", "affine_input_grad",
                     "relu", "relu_grad", "sgd_update"):
            monkeypatch.setattr(backend, name, getattr(impl, name))
        out = nn.local_train(model, data, epochs=3, batch_size=20, lr=0.05, rng_seed=7)
        results[impl.BACKEND] = out
    a, b = results["numpy"], results["compiled"]
    np.testing.assert_allclose(a.classifier.weight, b.classifier.weight,
                               rtol=1e-9, atol=1e-12)
    for la, lb in zip(a.extractor.layers, b.extractor.layers):
        np.testing.assert_allclose(la.weight, lb.weight, rtol=1e-9, atol=1e-12)
