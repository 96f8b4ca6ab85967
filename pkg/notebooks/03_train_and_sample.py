"""
Training the three models
=========================

A short run of each model on a small pool.  The split models also see
the support set; the plain recurrent model does not.
"""

import numpy as np

from svrnn.models import Architecture, generate
from svrnn.threat import generate_pool, generate_support, subsample
from svrnn.training import TrainConfig, train

pool = generate_pool(40, 8, 4, 4, 0.25, 0.0, seed=0)
X = subsample(pool, 10, seed=0)
X_s = generate_support(40, 8, 4, 4, seed=1000, A=np.array(pool.metadata["A"]))

config = TrainConfig(epochs=20, batch_size=10, learning_rate=1e-3, seed=0)
for kind in ("svae", "vrnn", "svrnn"):
    arch = Architecture(kind, grid_side=8, horizon=4)
    result = train(kind, X, None if kind == "vrnn" else X_s, config, arch=arch)
    first, last = result.history[0].total, result.history[-1].total
    samples = generate(result.params, 5, seed=1)
    print(f"{kind:6s} loss {first:9.2f} -> {last:9.2f}   samples {samples.values.shape}")
