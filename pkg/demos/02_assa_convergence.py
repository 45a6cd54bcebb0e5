"""Plain Sinkhorn iteration against the accelerated symmetric variant (ASSA).

The setting is a standard normal sample of 3000 points in three dimensions
with a Euclidean Gaussian kernel at eps = 0.5.
"""
# %%
import numpy as np

from dmaps import assa, build_kernel_matrix, euclidean, make_rng, sinkhorn_plain
from dmaps.normalization import theoretical_contraction_bound

X = make_rng(0).standard_normal((3000, 3))
K = build_kernel_matrix(X, 0.5, euclidean(3))

w_fast, fast = assa(K, tol=1e-13)
w_slow, slow = sinkhorn_plain(K, tol=1e-13)
print(f"ASSA: {fast.iterations} iterations, plain: {slow.iterations} iterations")
print("same weights:", np.max(np.abs(np.log(w_fast.u / w_slow.u))))

# %%
# Residual traces side by side (every fourth plain iterate)
for i in range(0, max(fast.iterations, 40), 4):
    a = fast.residual_trace[i] if i < fast.iterations else float("nan")
    print(f"{i + 1:4d}  assa {a:9.2e}  plain {slow.residual_trace[i]:9.2e}")

# %%
# Once in the local regime each ASSA step shrinks the residual by about 1/8
print("observed tail contraction:", fast.tail_contraction)
print("asymptotic bound:", theoretical_contraction_bound(0.0))
print("fixed-point residual |u (K u) - 1|:", fast.fixed_point_residual)
