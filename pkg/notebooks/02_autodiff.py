"""
Reverse-mode gradients
======================

Operations record themselves on a tape; ``backward`` walks it in reverse.
Here a dense layer's gradient is compared with central differences.
"""

import numpy as np

from svrnn import autodiff as ad
from svrnn.autodiff import Tape
from svrnn.tensor import RngStream

rng = RngStream(3)
x, w, b, y = rng.normal((4, 5)), rng.normal((3, 5)), rng.normal(3), rng.normal((4, 3))


def loss(w_value):
    tape = Tape()
    out = ad.dense(tape.constant(x), tape.constant(w_value), tape.constant(b), "tanh")
    return float(ad.mse(out, y).value)


tape = Tape()
wv = tape.variable(w)
tape.backward(ad.mse(ad.dense(tape.constant(x), wv, tape.constant(b), "tanh"), y))

# central differences, one weight at a time
h = 1e-5
fd = np.zeros_like(w)
for idx in np.ndindex(w.shape):
    up, down = w.copy(), w.copy()
    up[idx] += h
    down[idx] -= h
    fd[idx] = (loss(up) - loss(down)) / (2 * h)
print("max |tape - fd|:", np.max(np.abs(wv.grad - fd)))

# the KL term of a diagonal Gaussian against N(0, I)
q = ad.GaussianLatent(tape.constant(np.array([1.0, 0.0])), tape.constant(np.array([0.0, np.log(2.0)])))
print("KL:", ad.kl_to_standard_normal(q).value)
