"""Error measures: eigenvalue error tables, subspace distances, rate fits.

Two subspace distances are provided for spans of vectors sampled on a common
set of evaluation points:

``weighted_l2``
    The gap ``max(||(I - P_B) P_A||, ||(I - P_A) P_B||)`` in the weighted
    inner product ``<f, g> = sum_i w_i f_i g_i``.  For spans of equal
    dimension it is the sine of the largest principal angle.

``sup_grid``
    ``max(h(E, F), h(F, E))`` with
    ``h(E, F) = sup_{phi in E, |phi|_inf <= 1} inf_{psi in F} |phi - psi|_inf``,
    the sup norm taken over the evaluation points.  The inner infimum is a
    Chebyshev approximation problem solved as a linear program.  The map
    ``c -> inf_psi |A c - psi|_inf`` is a seminorm, so its maximum over the
    polytope ``{c : |A c|_inf <= 1}`` is attained at a vertex.  Vertices are
    visited in decreasing order of the seminorm bound
    ``sum_i |c_i| h(a_i)``; the search stops once that bound falls below the
    best value found or the LP budget runs out, so a lower and an upper bound
    are always available.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .errors import NumericalFailureError

__all__ = [
    "ERROR_COLUMNS",
    "SubspaceDistanceReport",
    "RateFit",
    "subspace_distance",
    "eigenvalue_errors",
    "fit_rate",
    "write_error_table",
    "format_value",
]

ERROR_COLUMNS = [
    "k", "eps", "M", "seed", "normalization", "err_lambda", "err_lambda_tilde",
    "err_subspace_l2", "err_subspace_sup_lo", "err_subspace_sup_hi",
]
RANK_RTOL = 1e-10
LP_TOL = 1e-10
DEFAULT_LP_BUDGET = 64


@dataclass
class SubspaceDistanceReport:
    """Distance between two spans.

    ``value`` is the largest distance actually attained; for ``sup_grid`` the
    true distance lies in ``[lower, upper]`` and ``value == lower``.
    ``one_sided`` holds the two directed values ``(h(A, B), h(B, A))``.
    """

    value: float
    norm_kind: str
    dim_a: int
    dim_b: int
    n_points: int
    lower: float
    upper: float
    one_sided: tuple = field(default=(0.0, 0.0))


@dataclass
class RateFit:
    """Least-squares line ``log err = slope log eps + intercept``."""

    slope: float
    intercept: float
    rms: float
    log_eps: np.ndarray
    log_err: np.ndarray


def _as_columns(A, n=None):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if n is not None and A.shape[0] != n:
        raise ValueError(f"spans are sampled on different point sets ({A.shape[0]} vs {n})")
    return A


def _orthonormal(A, sqrt_w):
    """Orthonormal basis (in the weighted inner product) of span(A), as ``sqrt(w) * Q``."""
    U, sv, _ = linalg.svd(sqrt_w[:, None] * A, full_matrices=False)
    if sv.size == 0 or sv[-1] <= RANK_RTOL * sv[0]:
        raise ValueError("rank-deficient span: columns are not linearly independent on the evaluation points")
    return U


def _weighted_l2(A, B, weights):
    n = A.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise ValueError("weights must be positive with one entry per evaluation point")
    sw = np.sqrt(w)
    Qa, Qb = _orthonormal(A, sw), _orthonormal(B, sw)

    def side(Q1, Q2):
        R = Q1 - Q2 @ (Q2.T @ Q1)
        return float(linalg.norm(R, 2))

    return side(Qa, Qb), side(Qb, Qa)


def _chebyshev(phi, B):
    """``min_d |phi - B d|_inf`` by linear programming."""
    n, k = B.shape
    ones = np.ones((n, 1))
    c = np.zeros(k + 1)
    c[-1] = 1.0
    res = linprog(
        c,
        A_ub=np.block([[B, -ones], [-B, -ones]]),
        b_ub=np.concatenate([phi, -phi]),
        bounds=[(None, None)] * k + [(0, None)],
        method="highs",
        options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL},
    )
    if res.status != 0:
        raise NumericalFailureError(f"Chebyshev approximation LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def _polytope_vertices(R):
    """Vertices of ``{c : |R c|_inf <= 1}``, one per +/- pair."""
    k = R.shape[1]
    if k == 1:
        return np.array([[1.0 / np.max(np.abs(R))]])
    hull = ConvexHull(np.vstack([R, -R]))
    normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
    V = normals / (-offsets)[:, None]
    # canonical sign, then merge facets split by triangulation
    lead = V[np.arange(V.shape[0]), np.argmax(np.abs(V) > 1e-12 * np.abs(V).max(axis=1, keepdims=True), axis=1)]
    V = V * np.sign(lead)[:, None]
    scale = np.abs(V).max()
    _, idx = np.unique(np.round(V / scale, 10), axis=0, return_index=True)
    return V[np.sort(idx)]


def _sup_one_sided(Ra, Rb, budget):
    """Bounds on ``h(span Ra, span Rb)`` in the sup norm."""
    k = Ra.shape[1]
    basis = np.array([_chebyshev(Ra[:, i], Rb) for i in range(k)])
    V = _polytope_vertices(Ra)
    bound = np.abs(V) @ basis
    order = np.argsort(-bound, kind="stable")
    best = 0.0
    upper = 0.0
    for count, j in enumerate(order):
        if bound[j] <= best:
            upper = best
            break
        if count >= budget:
            upper = float(bound[j])
            break
        best = max(best, _chebyshev(Ra @ V[j], Rb))
    else:
        upper = best
    return best, max(upper, best)


def subspace_distance(A, B, norm_kind="weighted_l2", weights=None, lp_budget=DEFAULT_LP_BUDGET):
    """Distance between ``span(A)`` and ``span(B)``.

    Parameters
    ----------
    A, B : array_like, shape (N,) or (N, k)
        Spanning vectors sampled on the same ``N`` evaluation points.
    norm_kind : {"weighted_l2", "sup_grid"}
    weights : array_like, shape (N,), optional
        Quadrature weights for ``weighted_l2``; uniform ``1/N`` by default,
        which realises ``L^2`` of the empirical measure.  Ignored by
        ``sup_grid``.
    lp_budget : int
        Maximum number of polytope vertices evaluated per direction in
        ``sup_grid``.

    Returns
    -------
    SubspaceDistanceReport

    Raises
    ------
    ValueError
        If either span is rank deficient on the evaluation points.
    """
    A = _as_columns(A)
    B = _as_columns(B, A.shape[0])
    n = A.shape[0]
    if norm_kind == "weighted_l2":
        ab, ba = _weighted_l2(A, B, weights)
        value = max(ab, ba)
        return SubspaceDistanceReport(value, norm_kind, A.shape[1], B.shape[1], n, value, value, (ab, ba))
    if norm_kind != "sup_grid":
        raise ValueError(f"unknown norm_kind {norm_kind!r}")
    ones = np.ones(n)
    # orthonormal columns keep the LPs and the vertex bound well conditioned
    Ra = _orthonormal(A, ones)
    Rb = _orthonormal(B, ones)
    lo_ab, hi_ab = _sup_one_sided(Ra, Rb, lp_budget)
    lo_ba, hi_ba = _sup_one_sided(Rb, Ra, lp_budget)
    lower = max(lo_ab, lo_ba)
    upper = max(hi_ab, hi_ba)
    return SubspaceDistanceReport(lower, norm_kind, A.shape[1], B.shape[1], n, lower, upper, (lo_ab, lo_ba))


def _computed_spectrum(computed, eps=None):
    """``(eps, lambda, lambda_tilde)`` of a discrete or continuum result, ascending."""
    if hasattr(computed, "semigroup_eigs"):
        return computed.eps, computed.generator_eigs, computed.laplacian_eigs
    lam = np.asarray(computed.eigenvalues, dtype=float)
    if eps is None:
        prov = getattr(computed, "provenance", None) or {}
        axes = prov.get("axes") or [{}]
        eps = prov.get("eps", axes[0].get("eps"))
    if eps is None:
        return None, lam, np.full(lam.shape, np.nan)
    return eps, lam, -np.expm1(-eps * lam) / eps


def eigenvalue_errors(computed, reference, k_max, eps=None):
    """Table of ``|lambda_k - lambda_k^ref|`` for ``k = 0 .. k_max``.

    Parameters
    ----------
    computed : SpectralResult or ReferenceEigendata
        Discrete result, or continuum eigendata carrying ``eps`` in its
        provenance (or passed as ``eps``).
    reference : ReferenceEigendata or TensorReference or array_like
        Generator eigenvalues, ascending.
    k_max : int
    eps : float, optional
        Bandwidth of continuum eigendata, for the graph-Laplacian column.

    Returns
    -------
    list of dict
        Keys ``k``, ``cluster``, ``eps``, ``lambda``, ``reference``,
        ``err_lambda`` and ``err_lambda_tilde``.  Within a degenerate cluster
        values are matched in sorted order.

    Raises
    ------
    ValueError
        If either side has fewer than ``k_max + 1`` eigenvalues.
    """
    from .spectral import cluster_values

    eps, lam, lam_t = _computed_spectrum(computed, eps)
    ref = np.asarray(getattr(reference, "eigenvalues", reference), dtype=float)
    need = k_max + 1
    if lam.size < need or ref.size < need:
        raise ValueError(f"need {need} eigenvalues, have {lam.size} computed and {ref.size} reference")
    cluster_of = np.empty(ref.size, dtype=int)
    for c, idx in enumerate(cluster_values(ref)):
        cluster_of[idx] = c
    rows = []
    for c in np.unique(cluster_of[:need]):
        idx = np.flatnonzero(cluster_of[:need] == c)
        got = np.sort(lam[idx])
        got_t = np.sort(lam_t[idx])
        for i, g, gt in zip(idx, got, got_t):
            rows.append({
                "k": int(i), "cluster": int(c), "eps": eps, "lambda": float(g), "reference": float(ref[i]),
                "err_lambda": float(abs(g - ref[i])), "err_lambda_tilde": float(abs(gt - ref[i])),
            })
    return rows


def fit_rate(eps_list, err_list):
    """Fit ``err ~ C eps^slope`` by least squares in log-log coordinates.

    Raises
    ------
    ValueError
        With fewer than three points or any nonpositive error.
    """
    eps = np.asarray(eps_list, dtype=float)
    err = np.asarray(err_list, dtype=float)
    if eps.shape != err.shape or eps.ndim != 1:
        raise ValueError("eps_list and err_list must be 1-d of equal length")
    if eps.size < 3:
        raise ValueError("a rate fit needs at least 3 points")
    if np.any(~(err > 0)) or np.any(~(eps > 0)):
        raise ValueError("errors and eps must be positive for a log-log fit")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RateFit(float(slope), float(intercept), rms, x, y)


def format_value(v):
    """Deterministic CSV cell text (``%.17g`` for floats, ``nan`` when missing)."""
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_error_table(fh, rows, columns=ERROR_COLUMNS, preamble=()):
    """Write rows (dicts) as CSV; missing columns become ``nan``.

    ``preamble`` lines are written first, each prefixed with ``#``.
    """
    for line in preamble:
        fh.write(f"# {line}\n")
    fh.write(",".join(columns) + "\n")
    for row in rows:
        fh.write(",".join(format_value(row.get(c)) for c in columns) + "\n")
