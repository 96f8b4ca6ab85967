"""
Comparing datasets by moments
=============================

Data are projected on the pool's first three principal axes; each axis
gets mean, variance, skewness and kurtosis, and a normalized distance
summarizes how far a dataset sits from the pool.
"""

from svrnn.evaluation import decay_fraction, fit_pca, format_report, project, similarity_report
from svrnn.threat import generate_pool, generate_support

pool = generate_pool(100, 10, 4, 4, 0.25, 0.0, seed=0)
same_law = generate_pool(100, 10, 4, 4, 0.25, 0.0, seed=1)
noiseless = generate_support(100, 10, 4, 4, seed=2)

basis = fit_pca(pool, 3)
print("explained variance:", basis.eigenvalues / basis.total_variance)
print("first coordinates:", project(basis, pool)[0])

report = similarity_report(pool, {"fresh pool": same_law, "noiseless": noiseless}, basis=basis)
print(format_report(report))

# share of data whose peak deviation shrinks from the first to the last frame
print("decay fraction, noiseless:", decay_fraction(noiseless))
