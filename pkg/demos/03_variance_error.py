"""Sampling (variance) error of the eigenspace E_1 in three dimensions.

A reduced version of the variance sweep: a separable density on the
3-torus, eps = 0.05, three sample sizes and a few trials.  Errors are
distances between the discrete eigenspace and the continuum eigenspace at
the same eps, in L^2 of the empirical measure.
"""
# %%
import numpy as np

from dmaps.config import default_config
from dmaps.experiments import cmd_variance_sweep

cfg = default_config("variance-sweep", M=[250, 1000, 2000], trials=4, out="demo_output/variance")
res = cmd_variance_sweep(cfg)

# %%
print(f"{'normalization':>14} {'M':>6} {'M_eff':>7} {'median error':>13}")
for s in res["summary"]:
    if s["reference"] == "continuum" and s["k"] == 1:
        print(f"{s['normalization']:>14} {s['M']:6d} {s['M_eff']:7.1f} {s['median_err_subspace_l2']:13.4f}")

# %%
# Quadrupling M should roughly halve the error
for label in ("standard:0.5", "sinkhorn"):
    med = {s["M"]: s["median_err_subspace_l2"] for s in res["summary"]
           if s["normalization"] == label and s["reference"] == "continuum" and s["k"] == 1}
    print(label, "error(250) / error(1000) =", round(med[250] / med[1000], 2))
