"""Diffusion-map coordinates of a sample on the 2-torus, and their extension.

Points concentrate near the circle y = 1/2 + 0.15 sin(2 pi x).  The leading
nontrivial eigenvectors of the Sinkhorn-normalised operator parametrise the
x coordinate; the Nystrom formula evaluates them off the sample.
"""
# %%
import numpy as np

from dmaps import TorusDomain, assa, assemble_P, build_kernel_matrix, eigensolve, make_rng, nystrom_extend, periodic

rng = make_rng(3)
x = rng.random(800)
y = 0.5 + 0.15 * np.sin(2 * np.pi * x) + 0.02 * rng.standard_normal(800)
X = np.stack([x, y], axis=1)

K = build_kernel_matrix(X, 0.004, periodic(TorusDomain(2)))
weights, report = assa(K)
op = assemble_P(K, weights)
res = eigensolve(op, 5)
print("semigroup eigenvalues:", np.round(res.semigroup_eigs, 4))
print("generator eigenvalues:", np.round(res.generator_eigs, 2))

# %%
# (phi_1, phi_2) wraps once around the origin as x runs around the torus
phi = res.eigenvectors[:, 1:3]
angle = np.arctan2(phi[:, 1], phi[:, 0])
order = np.argsort(x)
winding = (np.unwrap(angle[order])[-1] - angle[order][0]) / (2 * np.pi)
print("winding number of (phi_1, phi_2):", round(float(winding), 2))

# %%
# Nystrom extension to new points on the curve
xn = np.linspace(0, 1, 6, endpoint=False)
Xn = np.stack([xn, 0.5 + 0.15 * np.sin(2 * np.pi * xn)], axis=1)
ext = nystrom_extend(op, (res.semigroup_eigs[1], res.eigenvectors[:, 1]), Xn)
print("phi_1 at new points:", np.round(ext, 3))
