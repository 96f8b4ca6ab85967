"""
Simulating threat fields
========================

A field is one plus a weighted sum of Gaussian bumps; the weights follow a
stable linear system driven by noise.  This script builds a small pool,
a noiseless support set on the same dynamics, and writes a few frames as
PGM images.
"""

import numpy as np

from svrnn.persistence import export_field_image
from svrnn.tensor import RngStream
from svrnn.threat import ThreatDynamics, generate_pool, generate_support, integrate_dynamics, random_hurwitz

# a stable 4x4 dynamics matrix: every eigenvalue has negative real part
A = random_hurwitz(4, RngStream(0))
print("eigenvalue real parts:", np.round(np.linalg.eigvals(A).real, 3))

# without noise the weights decay towards zero
theta0 = np.array([4.0, -3.0, 2.0, -1.0])
for state in integrate_dynamics(ThreatDynamics(A, process_noise_std=0.0), theta0, 5):
    print(f"t={state.t:.0f}  |theta|={np.linalg.norm(state.theta):.3f}")

# 50 noisy data on a 20x20 grid, four frames each
pool = generate_pool(50, 20, 4, 4, sigma1=0.25, sigma2=0.0, seed=0)
print("pool values:", pool.values.shape)

# support data reuse the pool's dynamics matrix but carry no noise
support = generate_support(20, 20, 4, 4, seed=1000, A=np.array(pool.metadata["A"]))
print("support provenance:", support.provenance)

for t in range(1, 5):
    export_field_image(pool[0], t, f"pool0_t{t}.pgm", 20)
print("wrote pool0_t1.pgm .. pool0_t4.pgm")
