"""Benchmark the compiled kernels against the numpy fallback.

Runs local training on the desk-scale model in a subprocess per backend
(the backend is fixed at import time) and reports throughput.

    python3 benchmarks/bench_backends.py
"""

import json
import os
import subprocess
import sys

WORKER = r"""
import json, time
import numpy as np
import fedrema
from fedrema import nn

model = nn.init_model(64, [64], 32, 10, seed=0)
rng = np.random.default_rng(0)
data = nn.LabeledBatch(rng.standard_normal((480, 64)), rng.integers(0, 10, 480))

# warm up, then time repeated 5-epoch local training passes
nn.local_train(model, data, epochs=1, batch_size=100, lr=0.01, rng_seed=0)
reps = 20
t0 = time.perf_counter()
for r in range(reps):
    nn.local_train(model, data, epochs=5, batch_size=100, lr=0.01, rng_seed=r)
elapsed = time.perf_counter() - t0
steps = reps * 5 * 5  # 5 epochs x 5 minibatches
print(json.dumps({
    "backend": fedrema.BACKEND,
    "seconds": elapsed,
    "steps_per_second": steps / elapsed,
}))
"""


def run(backend):
    env = dict(os.environ, FEDREMA_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    results = []
    for backend in ("numpy", "compiled"):
        try:
            results.append(run(backend))
        except subprocess.CalledProcessError as e:
            print(f"{backend}: unavailable ({e.stderr.strip().splitlines()[-1]})")
    for r in results:
        print(f"{r['backend']:>9}: {r['seconds']:6.2f}s "
              f"({r['steps_per_second']:8.1f} SGD steps/s)")
    if len(results) == 2:
        ratio = results[1]["steps_per_second"] / results[0]["steps_per_second"]
        print(f"compiled/numpy speed ratio: {ratio:.2f}x")


if __name__ == "__main__":
    main()
