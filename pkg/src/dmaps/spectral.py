"""Eigendata of normalised kernel operators.

``P`` is similar to the symmetric matrix ``S`` returned by
:func:`dmaps.normalization.symmetrize`, so the eigenproblem is solved with a
symmetric solver and eigenvectors are mapped back with ``phi = sqrt(M) w / s``.
They are then orthonormal in ``<f, g> = (1/M) sum_i f_i g_i u_i / v_i``, the
inner product in which ``P`` is self-adjoint.

Three eigenvalue conventions are used:

* semigroup ``mu`` (eigenvalue of ``P``),
* generator ``lambda = -log(mu) / eps``,
* graph Laplacian ``lambda_tilde = (1 - mu) / eps``.
"""

from dataclasses import dataclass, field
import json

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import IllConditionedError, NumericalFailureError
from .normalization import symmetrize

__all__ = [
    "SpectralResult",
    "MergedEigenspaces",
    "eigensolve",
    "to_generator",
    "to_graph_laplacian",
    "nystrom_extend",
    "merge_by_reference",
    "cluster_values",
]

DENSE_THRESHOLD = 4000
NYSTROM_MU_MIN = 1e-8
CLUSTER_RTOL = 1e-7


def to_generator(mu, eps, return_flags=False):
    """``lambda = -log(mu) / eps``; nonpositive ``mu`` maps to ``+inf``.

    With ``return_flags=True`` also returns a boolean array marking those
    sentinel entries.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    mu = np.asarray(mu, dtype=float)
    bad = ~(mu > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(bad, np.inf, -np.log(np.where(bad, 1.0, mu)) / eps)
    lam = lam[()] if lam.ndim == 0 else lam
    if return_flags:
        return lam, bad
    return lam


def to_graph_laplacian(mu, eps):
    """``lambda_tilde = (1 - mu) / eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    out = (1.0 - np.asarray(mu, dtype=float)) / eps
    return out[()] if out.ndim == 0 else out


@dataclass
class SpectralResult:
    """Top eigenpairs of a normalised operator, sorted by ``mu`` descending.

    Attributes
    ----------
    eps : float
    semigroup_eigs : ndarray, shape (k,)
    eigenvectors : ndarray, shape (M, k)
        Eigenvectors of ``P``, unit length in the weighted inner product.
    kind : str
        ``"sinkhorn"`` or ``"standard"``.
    alpha : float or None
    inner_weights : ndarray, shape (M,)
        ``u / v``, the weights of the inner product.
    """

    eps: float
    semigroup_eigs: np.ndarray
    eigenvectors: np.ndarray
    kind: str
    alpha: float = None
    inner_weights: np.ndarray = field(default=None, repr=False)

    @property
    def k(self):
        return self.semigroup_eigs.shape[0]

    @property
    def generator_eigs(self):
        return to_generator(self.semigroup_eigs, self.eps)

    @property
    def nonpositive(self):
        """Flags for eigenvalues whose generator value is the ``inf`` sentinel."""
        return ~(self.semigroup_eigs > 0)

    @property
    def laplacian_eigs(self):
        return to_graph_laplacian(self.semigroup_eigs, self.eps)

    def to_csv(self, fh):
        fh.write("k,mu,lambda,lambda_tilde\n")
        for i, (m, g, t) in enumerate(zip(self.semigroup_eigs, self.generator_eigs, self.laplacian_eigs)):
            fh.write(f"{i},{m:.17g},{g:.17g},{t:.17g}\n")

    def to_dict(self, include_vectors=False):
        lam = [float(x) if np.isfinite(x) else None for x in self.generator_eigs]
        doc = {
            "eps": self.eps,
            "normalization": self.kind,
            "alpha": self.alpha,
            "mu": [float(x) for x in self.semigroup_eigs],
            "lambda": lam,
            "lambda_tilde": [float(x) for x in self.laplacian_eigs],
            "nonpositive_mu": [bool(x) for x in self.nonpositive],
        }
        if include_vectors:
            doc["eigenvectors"] = [[float(x) for x in col] for col in self.eigenvectors.T]
        return doc

    def to_json(self, include_vectors=False):
        return json.dumps(self.to_dict(include_vectors), indent=1)


def _fix_signs(V):
    # largest-magnitude entry of each column made positive (first one on ties)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eigensolve(op, k, method="auto", dense_threshold=DENSE_THRESHOLD):
    """Top-``k`` eigenpairs of ``op.P``.

    Parameters
    ----------
    op : NormalizedOperator
    k : int
        Number of eigenpairs, ``1 <= k <= M``.
    method : {"auto", "dense", "iterative"}
        ``"auto"`` uses a dense symmetric solver up to ``dense_threshold``
        rows and Lanczos (``eigsh``) beyond, when ``k`` is small.

    Returns
    -------
    SpectralResult
    """
    M = op.M
    if not 1 <= k <= M:
        raise ValueError(f"k must satisfy 1 <= k <= M = {M}, got {k}")
    S, s = symmetrize(op)
    if method == "auto":
        method = "iterative" if (M > dense_threshold and k < M // 10) else "dense"
    try:
        if method == "dense":
            w, W = linalg.eigh(S, subset_by_index=[M - k, M - 1])
        elif method == "iterative":
            if k >= M - 1:
                raise ValueError("the iterative path needs k < M - 1")
            v0 = np.full(M, 1.0 / np.sqrt(M))
            w, W = eigsh(S, k=k, which="LA", v0=v0, tol=1e-14)
        else:
            raise ValueError(f"unknown method {method!r}")
    except (linalg.LinAlgError, ArpackNoConvergence) as exc:
        raise NumericalFailureError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w = w[order]
    W = W[:, order]
    V = _fix_signs(np.sqrt(M) * W / s[:, None])
    u, v = op.weights.u, op.weights.v
    eps = getattr(op.K, "eps", float("nan"))
    return SpectralResult(float(eps), w, V, op.kind, op.weights.alpha, u / v)


def nystrom_extend(op, eigenpair, X):
    """Evaluate an eigenvector of ``P`` at arbitrary points.

    ``phi(x) = (sum_i k(x, x_i) u_i vec_i) / (mu sum_i k(x, x_i) u_i)``,
    which reproduces ``vec`` at the sample points for both normalisations.

    Parameters
    ----------
    op : NormalizedOperator
        Built on a :class:`~dmaps.kernel.KernelMatrix` (kernel rows are needed).
    eigenpair : (float, ndarray)
    X : array_like, shape (N, d)

    Raises
    ------
    IllConditionedError
        If ``mu < 1e-8``.
    """
    mu, vec = eigenpair
    if not mu >= NYSTROM_MU_MIN:
        raise IllConditionedError(f"eigenvalue {mu:.3e} is below {NYSTROM_MU_MIN:g}; extension is ill-conditioned")
    if not hasattr(op.K, "rows"):
        raise TypeError("Nystrom extension needs a KernelMatrix with kernel rows")
    R = op.K.rows(X)
    u = op.weights.u
    num = R @ (u * np.asarray(vec, dtype=float))
    den = R @ u
    with np.errstate(invalid="ignore", divide="ignore"):
        return num / (mu * den)


def cluster_values(values, rtol=CLUSTER_RTOL):
    """Split sorted ``values`` into runs closer than ``rtol * max(1, |value|)``."""
    values = np.asarray(values, dtype=float)
    clusters = []
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or abs(values[i] - values[i - 1]) > rtol * max(1.0, abs(values[i - 1])):
            clusters.append(np.arange(start, i))
            start = i
    return clusters


@dataclass
class MergedEigenspaces:
    """Computed eigenpairs grouped by the clusters of a reference spectrum.

    ``groups[c]`` holds column indices into the :class:`SpectralResult`,
    ``reference_values[c]`` the reference eigenvalue of cluster ``c`` and
    ``ambiguous[c]`` whether some member lies within ``gap_tol`` of more than
    one reference cluster.
    """

    groups: list
    reference_values: np.ndarray
    ambiguous: list


def merge_by_reference(result, reference_eigs, gap_tol=None, rtol=CLUSTER_RTOL):
    """Group computed eigenpairs following the multiplicities of a reference.

    Computed pairs (ordered by increasing generator eigenvalue) are dealt out
    to reference clusters in order; clusters that cannot be completed with
    the available pairs are dropped.

    Parameters
    ----------
    result : SpectralResult
    reference_eigs : array_like or object with ``eigenvalues``
        Reference generator eigenvalues, sorted ascending, repeated by
        multiplicity.
    gap_tol : float, optional
        Ambiguity radius; defaults to half the smallest gap between reference
        clusters.
    """
    ref = np.asarray(getattr(reference_eigs, "eigenvalues", reference_eigs), dtype=float)
    clusters = cluster_values(ref, rtol)
    centers = np.array([ref[c].mean() for c in clusters])
    if gap_tol is None:
        gap_tol = 0.5 * np.min(np.diff(centers)) if centers.size > 1 else np.inf
    lam = result.generator_eigs
    groups, values, ambiguous = [], [], []
    pos = 0
    for c, center in zip(clusters, centers):
        if pos + c.size > lam.size:
            break
        idx = np.arange(pos, pos + c.size)
        pos += c.size
        near = [np.sum(np.abs(lam[i] - centers) <= gap_tol) for i in idx]
        groups.append(idx)
        values.append(center)
        ambiguous.append(bool(max(near) > 1))
    return MergedEigenspaces(groups, np.array(values), ambiguous)
