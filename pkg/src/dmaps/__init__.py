"""Diffusion maps on the flat torus with standard and Sinkhorn normalisations."""

__version__ = "0.1.0"

from .torus import TorusDomain, periodized_gaussian, choose_truncation
from .densities import (
    Sample,
    sample,
    make_rng,
    uniform,
    separable_exp,
    figure1_density,
    figure2_density,
    density_from_descriptor,
)
from .kernel import build_kernel_matrix, periodic, euclidean, KernelMatrix
from .normalization import standard_weights, assa, sinkhorn_plain, assemble_P, symmetrize
from .spectral import eigensolve, nystrom_extend, merge_by_reference, SpectralResult
from .reference import reference_eigendata, tensor_reference, continuum_operator
from .metrics import subspace_distance, eigenvalue_errors, fit_rate

__all__ = [
    "__version__",
    "TorusDomain", "periodized_gaussian", "choose_truncation",
    "Sample", "sample", "make_rng", "uniform", "separable_exp",
    "figure1_density", "figure2_density", "density_from_descriptor",
    "build_kernel_matrix", "periodic", "euclidean", "KernelMatrix",
    "standard_weights", "assa", "sinkhorn_plain", "assemble_P", "symmetrize",
    "eigensolve", "nystrom_extend", "merge_by_reference", "SpectralResult",
    "reference_eigendata", "tensor_reference", "continuum_operator",
    "subspace_distance", "eigenvalue_errors", "fit_rate",
]
