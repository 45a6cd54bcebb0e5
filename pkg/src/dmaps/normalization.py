"""Kernel normalisations: standard alpha-weights and Sinkhorn weights.

Given the kernel matrix ``K``, a normalisation is a pair of positive weight
vectors ``(u, v)`` such that ``P = diag(v) K diag(u)`` is row-stochastic.

* standard: ``u = (K 1)^{-alpha}``, ``v = 1 / (K u)``.
* Sinkhorn: ``v = u`` with ``u * (K u) = 1``, so ``P`` is symmetric and
  doubly stochastic.

The Sinkhorn weights are computed either by the plain iteration
``u <- 1 / (K u)`` or by the accelerated symmetric variant (ASSA), which
alternates two half-steps with a geometric mean and contracts locally by a
factor close to 1/8 per iteration.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import logsumexp

from .errors import AssemblyError, DegenerateRowError, NumericalFailureError

__all__ = [
    "WeightPair",
    "NormalizedOperator",
    "SinkhornReport",
    "standard_weights",
    "sinkhorn_plain",
    "assa",
    "assemble_P",
    "symmetrize",
    "theoretical_contraction_bound",
]

UNDERFLOW = 1e-300
FIXED_POINT_TOL = 1e-10
ROW_SUM_TOL = 1e-8
CONTRACTION_WARN = 0.5


@dataclass
class WeightPair:
    """Right weight ``u`` and left weight ``v``; ``kind`` is ``"standard"`` or ``"sinkhorn"``."""

    u: np.ndarray
    v: np.ndarray
    kind: str
    alpha: float = None

    @property
    def M(self):
        return self.u.shape[0]


@dataclass
class SinkhornReport:
    """Convergence record of a Sinkhorn solve.

    Attributes
    ----------
    iterations : int
    residual_trace : list of float
        Per-iteration ``||log(u_old / u_new)||_2`` (mean-removed for the
        plain iteration).
    fixed_point_residual : float
        ``||u * (K u) - 1||_inf`` at the returned weights.
    converged : bool
        Step residual below ``tolerance`` and fixed-point residual below
        ``fixed_point_tol``.
    algorithm : {"plain", "assa"}
    tolerance : float
        Threshold applied to the step residual.
    tail_contraction : float
        Largest ratio of consecutive residuals once the residual is below
        ``1e-4`` (and above the rounding floor); ``nan`` when no such pair.
    log_space : bool
        Whether the iteration ran in log space to avoid underflow.
    """

    iterations: int
    residual_trace: list
    fixed_point_residual: float
    converged: bool
    algorithm: str
    tolerance: float
    fixed_point_tol: float = FIXED_POINT_TOL
    tail_contraction: float = float("nan")
    log_space: bool = False

    @property
    def contraction_flag(self):
        """True when the observed tail contraction is worse than 0.5."""
        return bool(self.tail_contraction > CONTRACTION_WARN)

    def to_csv(self, fh):
        """Write ``iteration,residual`` rows to an open text file."""
        fh.write("iteration,residual\n")
        for i, r in enumerate(self.residual_trace, start=1):
            fh.write(f"{i},{r:.17g}\n")


@dataclass
class NormalizedOperator:
    """The Markov matrix ``P = diag(v) K diag(u)`` with its ingredients."""

    K: object
    weights: WeightPair
    P: np.ndarray
    row_sums: np.ndarray = field(repr=False, default=None)

    @property
    def kind(self):
        return self.weights.kind

    @property
    def M(self):
        return self.P.shape[0]


# -- helpers -----------------------------------------------------------------

def _dense(K):
    """Dense array behind ``K`` or ``None`` for matrix-free operators."""
    if hasattr(K, "entries"):
        return K.entries
    if isinstance(K, np.ndarray):
        return K
    return None


def _operator(K):
    dense = _dense(K)
    if dense is not None:
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError(f"kernel matrix must be square, got shape {dense.shape}")
        return dense.shape[0], (lambda x: dense @ x)
    if not hasattr(K, "matvec"):
        raise TypeError("K must be a KernelMatrix, an ndarray or a LinearOperator")
    return K.shape[0], K.matvec


def _check_positive(x, what):
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise NumericalFailureError(f"{what} has non-positive or non-finite entries")


def _tail_contraction(trace, M, start=1e-4):
    floor = 1e3 * np.finfo(float).eps * math.sqrt(M)
    ratios = [b / a for a, b in zip(trace[:-1], trace[1:]) if a < start and b > floor and a > 0]
    return max(ratios) if ratios else float("nan")


def _fixed_point_residual(matvec, u):
    return float(np.max(np.abs(u * matvec(u) - 1.0)))


# -- standard weights ----------------------------------------------------------

def standard_weights(K, alpha):
    """``u = (K 1)^{-alpha}`` and ``v = 1 / (K u)``.

    Parameters
    ----------
    K : KernelMatrix or ndarray
    alpha : float in [0, 1]

    Raises
    ------
    DegenerateRowError
        If some row of ``K`` sums to zero.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    M, matvec = _operator(K)
    q = matvec(np.ones(M))
    bad = np.nonzero(~(q > 0))[0]
    if bad.size:
        raise DegenerateRowError(bad)
    u = q ** -alpha if alpha != 0 else np.ones(M)
    Ku = matvec(u)
    bad = np.nonzero(~(Ku > 0))[0]
    if bad.size:
        raise DegenerateRowError(bad)
    return WeightPair(u, 1.0 / Ku, "standard", float(alpha))


# -- Sinkhorn solvers ------------------------------------------------------------

def _log_kernel(K):
    dense = _dense(K)
    if dense is None:
        raise NumericalFailureError("kernel products underflow and log-space iteration needs a dense matrix")
    with np.errstate(divide="ignore"):
        return np.log(dense)


def _log_apply(logK, logx):
    return logsumexp(logK + logx[None, :], axis=1)


def sinkhorn_plain(K, u0=None, tol=None, max_iter=100_000):
    """Plain Sinkhorn iteration ``u <- 1 / (K u)``.

    The iterates converge only up to an alternating constant, ``u_{2n} -> c U``
    and ``u_{2n+1} -> U / c``, so the stopping test uses the projective
    residual (the mean-removed ``l2`` norm of ``log(u_old / u_new)``) and the
    geometric mean of the final pair is returned.

    Parameters
    ----------
    K : KernelMatrix, ndarray or LinearOperator
    u0 : ndarray, optional
        Positive starting vector, ones by default.
    tol : float, optional
        Defaults to ``1e-13 * sqrt(M)``.
    max_iter : int

    Returns
    -------
    WeightPair, SinkhornReport
    """
    M, matvec = _operator(K)
    u = np.ones(M) if u0 is None else np.asarray(u0, dtype=float).copy()
    if u.shape != (M,) or np.any(~(u > 0)):
        raise ValueError("the starting vector must have M strictly positive entries")
    tol = 1e-13 * math.sqrt(M) if tol is None else float(tol)
    trace = []
    converged = False
    prev = u
    for it in range(1, max_iter + 1):
        Ku = matvec(prev)
        _check_positive(Ku, "K u")
        new = 1.0 / Ku
        r = np.log(prev / new)
        res = float(np.linalg.norm(r - r.mean()))
        trace.append(res)
        u, prev = np.sqrt(prev * new), new
        if res <= tol:
            converged = True
            break
    fp = _fixed_point_residual(matvec, u)
    report = SinkhornReport(
        iterations=len(trace),
        residual_trace=trace,
        fixed_point_residual=fp,
        converged=converged and fp <= FIXED_POINT_TOL,
        algorithm="plain",
        tolerance=tol,
        tail_contraction=_tail_contraction(trace, M),
    )
    return WeightPair(u, u.copy(), "sinkhorn"), report


def assa(K, eps=None, tau=None, max_iter=200, tol=None, u0=None):
    """Accelerated symmetric Sinkhorn algorithm.

    Starting from ``u = 1 / sqrt(K 1)``, repeat::

        u_o = u
        v = 1 / (K u_o)
        u = sqrt(v / (K v))

    until ``||log(u_o / u)||_2 <= eps * tau``.

    Parameters
    ----------
    K : KernelMatrix, ndarray or LinearOperator
        Nonnegative with positive row sums.  Symmetry is not required, but
        the fast contraction relies on ``K`` being self-adjoint in some
        weighted inner product.
    eps, tau : float, optional
        The stopping threshold is ``eps * tau``.  When ``tau`` is omitted the
        threshold is ``1e-13 * sqrt(M)``.
    max_iter : int
    tol : float, optional
        Absolute threshold overriding ``eps * tau``.
    u0 : ndarray, optional
        Alternative positive starting vector.

    Returns
    -------
    WeightPair, SinkhornReport

    Notes
    -----
    When some entry of ``K u`` falls below ``1e-300`` the iteration restarts
    in log space, using ``logsumexp`` on the dense kernel.
    """
    M, matvec = _operator(K)
    if tol is None:
        if tau is None:
            tol = 1e-13 * math.sqrt(M)
        else:
            if eps is None:
                eps = getattr(K, "eps", None)
            if eps is None or not eps > 0 or not tau > 0:
                raise ValueError("eps and tau must both be positive")
            tol = float(eps) * float(tau)
    tol = float(tol)

    q = matvec(np.ones(M))
    bad = np.nonzero(~(q > 0))[0]
    if bad.size:
        raise DegenerateRowError(bad)
    log_space = bool(np.any(q < UNDERFLOW))
    trace = []
    converged = False

    if not log_space:
        u = 1.0 / np.sqrt(q) if u0 is None else np.asarray(u0, dtype=float).copy()
        for it in range(max_iter):
            Ku = matvec(u)
            if np.any(Ku < UNDERFLOW):
                log_space = True
                break
            _check_positive(Ku, "K u")
            v = 1.0 / Ku
            Kv = matvec(v)
            if np.any(Kv < UNDERFLOW):
                log_space = True
                break
            _check_positive(Kv, "K v")
            new = np.sqrt(v / Kv)
            res = float(np.linalg.norm(np.log(u / new)))
            trace.append(res)
            u = new
            if res <= tol:
                converged = True
                break

    if log_space:
        logK = _log_kernel(K)
        if trace:
            lu = np.log(u)
        elif u0 is not None:
            lu = np.log(np.asarray(u0, dtype=float))
        else:
            lu = -0.5 * _log_apply(logK, np.zeros(M))
        for it in range(max_iter - len(trace)):
            lv = -_log_apply(logK, lu)
            new = 0.5 * (lv - _log_apply(logK, lv))
            if not np.all(np.isfinite(new)):
                raise NumericalFailureError("log-space Sinkhorn step produced non-finite values")
            res = float(np.linalg.norm(lu - new))
            trace.append(res)
            lu = new
            if res <= tol:
                converged = True
                break
        u = np.exp(lu)
        fp = float(np.max(np.abs(np.expm1(lu + _log_apply(logK, lu)))))
    else:
        fp = _fixed_point_residual(matvec, u)

    report = SinkhornReport(
        iterations=len(trace),
        residual_trace=trace,
        fixed_point_residual=fp,
        converged=converged and fp <= FIXED_POINT_TOL,
        algorithm="assa",
        tolerance=tol,
        tail_contraction=_tail_contraction(trace, M),
        log_space=log_space,
    )
    return WeightPair(u, u.copy(), "sinkhorn"), report


# -- assembly ----------------------------------------------------------------------

def _mirror_upper(A):
    iu = np.triu_indices(A.shape[0], 1)
    A[(iu[1], iu[0])] = A[iu]
    return A


def assemble_P(K, weights):
    """Form ``P = diag(v) K diag(u)``.

    For Sinkhorn weights the symmetric matrix ``diag(u) K diag(u)`` is stored
    with its lower triangle copied from the upper one, so ``P == P.T``.

    Raises
    ------
    AssemblyError
        If a row sum differs from 1 by more than ``1e-8``.
    """
    dense = _dense(K)
    if dense is None:
        raise TypeError("assemble_P needs a dense kernel matrix")
    u, v = weights.u, weights.v
    if u.shape[0] != dense.shape[0]:
        raise AssemblyError("weights and kernel matrix have different sizes")
    P = v[:, None] * dense * u[None, :]
    if weights.kind == "sinkhorn":
        P = _mirror_upper(P)
    rows = P.sum(axis=1)
    dev = float(np.max(np.abs(rows - 1.0)))
    if not dev <= ROW_SUM_TOL:
        raise AssemblyError(f"row sums of P deviate from 1 by {dev:.3e}")
    return NormalizedOperator(K, weights, P, rows)


def symmetrize(op):
    """Symmetric conjugate ``S = diag(s) P diag(s)^{-1}`` with ``s = sqrt(u / v)``.

    ``S = diag(sqrt(u v)) K diag(sqrt(u v))`` is formed directly and its
    lower triangle mirrored, so ``S == S.T``.  An eigenvector ``w`` of ``S``
    corresponds to the eigenvector ``w / s`` of ``P``.  For Sinkhorn weights
    ``s`` is one and ``S`` is ``P`` itself.

    Returns
    -------
    S : ndarray, shape (M, M)
    s : ndarray, shape (M,)
    """
    u, v = op.weights.u, op.weights.v
    if op.kind == "sinkhorn":
        return op.P, np.ones_like(u)
    a = np.sqrt(u * v)
    S = _mirror_upper(a[:, None] * _dense(op.K) * a[None, :])
    return S, np.sqrt(u / v)


def theoretical_contraction_bound(k):
    """Local contraction bound ``1/8 + k''`` of ASSA.

    Here ``k' = k exp(4k)`` and ``k'' = k' (2 + k'/2)``.  Valid for
    ``0 <= k < 0.1`` with ``k'' < 3/8``.

    >>> round(theoretical_contraction_bound(0.01), 6)
    0.14587
    """
    if not 0.0 <= k < 0.1:
        raise ValueError(f"the bound requires 0 <= k < 0.1, got {k!r}")
    kp = k * math.exp(4 * k)
    kpp = kp * (2 + kp / 2)
    if not kpp < 0.375:
        raise ValueError("the bound requires k'' < 3/8")
    return 0.125 + kpp
