"""Experiment commands behind the command-line interface.

Each command is a pure function of its :class:`~dmaps.config.ExperimentConfig`
(seed included).  Outputs go to ``config.out``: a CSV whose first line is a
provenance comment, a gnuplot script and a JSON summary.  Trials may run on
several threads; rows are sorted by trial index before anything is written,
so the files do not depend on the thread count.
"""

from concurrent.futures import ThreadPoolExecutor
import json
import math
import os

import numpy as np

from .config import normalization_label, parse_normalization
from .densities import density_from_descriptor, effective_sample_size, make_rng, sample
from .errors import ConfigError
from .kernel import build_kernel_matrix, euclidean, periodic
from .metrics import ERROR_COLUMNS, eigenvalue_errors, fit_rate, subspace_distance, write_error_table
from .normalization import assa, assemble_P, sinkhorn_plain, standard_weights, theoretical_contraction_bound
from .reference import reference_eigendata, tensor_reference
from .spectral import cluster_values, eigensolve, merge_by_reference
from .torus import TorusDomain

__all__ = [
    "cmd_bias_sweep",
    "cmd_variance_sweep",
    "cmd_assa_trace",
    "cmd_spectrum",
    "reference_for",
    "normalize",
    "read_points",
]

SUP_GRID_POINTS = 4096
VARIANCE_COLUMNS = ERROR_COLUMNS + ["trial", "reference", "M_eff"]
SUMMARY_COLUMNS = [
    "normalization", "reference", "k", "eps", "M", "M_eff", "trials",
    "mean_err_subspace_l2", "median_err_subspace_l2", "mean_err_lambda", "median_err_lambda",
]


# -- shared helpers ------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, cfg, rows, columns):
    with open(path, "w", newline="") as fh:
        write_error_table(fh, rows, columns, preamble=[cfg.provenance()])


def _out_dir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def reference_for(density, k, source, kind, alpha=None, eps=None, n_modes=2001, n_grid=None):
    """One-dimensional reference eigendata, or the tensor product for separable densities.

    ``kind`` is a normalisation kind (``"sinkhorn"`` or ``"standard"``); for
    the generator source it selects the matching limit operator.
    """
    if density.d == 1:
        return reference_eigendata(density, k, source, kind, alpha, eps, n_modes, n_grid)
    if not density.separable:
        raise ConfigError("multi-dimensional references need a separable density")
    per_axis = k
    while True:
        axes = [reference_eigendata(f, per_axis, source, kind, alpha, eps, n_modes, n_grid)
                for f in density.factors]
        try:
            return tensor_reference(axes, k)
        except ValueError:
            if per_axis > 4 * k + 20:
                raise
            per_axis += 2


def normalize(K, kind, alpha=None):
    """Weights and Markov matrix; returns ``(NormalizedOperator, SinkhornReport or None)``."""
    if kind == "sinkhorn":
        weights, report = assa(K)
        return assemble_P(K, weights), report
    return assemble_P(K, standard_weights(K, alpha)), None


def _gnuplot_bias(csv_name, labels):
    lines = [
        "# gnuplot script: eigenvalue bias against eps (log-log)",
        'set datafile separator ","',
        'set datafile commentschars "#"',
        "set logscale xy",
        'set xlabel "eps"',
        'set ylabel "|lambda_k(eps) - lambda_k|"',
        "set key left top",
    ]
    plots = []
    for i, lab in enumerate(labels):
        dash = 1 if lab == "sinkhorn" else 2
        plots.append(
            f"'{csv_name}' skip 2 using (($1==1 && strcol(5) eq \"{lab}\") ? $2 : 1/0):6 "
            f"with linespoints dt {dash} title \"{lab}, k=1\""
        )
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# -- bias sweep ------------------------------------------------------------------

def cmd_bias_sweep(config):
    """Eigenvalue bias of the continuum operators against the generator.

    For each normalisation and ``eps`` the continuum (infinite-sample)
    operator is eigensolved and compared with the generator reference.
    Writes ``bias_sweep.csv``, ``bias_sweep.json`` and ``bias_sweep.plt``.

    Returns
    -------
    dict
        ``rows`` (error table) and ``fits`` (slope per normalisation and k).
    """
    cfg = config
    density = density_from_descriptor(cfg.density)
    eps_list = sorted(cfg.eps)
    rows, fits, labels = [], {}, []
    x = np.arange(SUP_GRID_POINTS) * density.L / SUP_GRID_POINTS
    for name in cfg.normalizations:
        kind, alpha = parse_normalization(name)
        label = normalization_label(kind, alpha)
        labels.append(label)
        gen = reference_for(density, cfg.k, "generator", kind, alpha, n_modes=cfg.n_modes)
        count = len(gen.eigenvalues)
        clusters = cluster_values(gen.eigenvalues)
        G = gen.evaluate(x) if density.d == 1 else None
        for eps in eps_list:
            cont = reference_for(density, count, "continuum", kind, alpha, eps, n_grid=cfg.n_grid)
            errs = eigenvalue_errors(cont, gen, count - 1, eps=eps)
            sub = {}
            if G is not None:
                C = cont.evaluate(x)
                for idx in clusters:
                    l2 = subspace_distance(G[:, idx], C[:, idx], "weighted_l2").value
                    lo = hi = float("nan")
                    if cfg.sup_norm:
                        rep = subspace_distance(G[:, idx], C[:, idx], "sup_grid")
                        lo, hi = rep.lower, rep.upper
                    for i in idx:
                        sub[int(i)] = (l2, lo, hi)
            for r in errs:
                l2, lo, hi = sub.get(r["k"], (float("nan"),) * 3)
                rows.append({
                    "k": r["k"], "eps": eps, "M": 0, "seed": cfg.seed, "normalization": label,
                    "err_lambda": r["err_lambda"], "err_lambda_tilde": r["err_lambda_tilde"],
                    "err_subspace_l2": l2, "err_subspace_sup_lo": lo, "err_subspace_sup_hi": hi,
                })
        fits[label] = {}
        for kk in range(1, count):
            e = [r["err_lambda"] for r in rows if r["normalization"] == label and r["k"] == kk]
            try:
                f = fit_rate(eps_list, e)
                fits[label][kk] = {"slope": f.slope, "intercept": f.intercept, "rms": f.rms}
            except ValueError as exc:
                fits[label][kk] = {"slope": None, "error": str(exc)}
    out = _out_dir(cfg)
    _write_csv(os.path.join(out, "bias_sweep.csv"), cfg, rows, ERROR_COLUMNS)
    with open(os.path.join(out, "bias_sweep.plt"), "w") as fh:
        fh.write(_gnuplot_bias("bias_sweep.csv", labels))
    summary = {
        "provenance": cfg.provenance(),
        "density": cfg.density,
        "eps": eps_list,
        "fits": fits,
    }
    _write_json(os.path.join(out, "bias_sweep.json"), summary)
    return {"rows": rows, "fits": fits}


# -- variance sweep --------------------------------------------------------------

def _variance_trial(args):
    cfg, density, refs, M, trial = args
    smp = sample(density, M, cfg.seed, keys=(M, trial))
    mode = periodic(density.domain)
    rows = []
    for eps in sorted(cfg.eps):
        K = build_kernel_matrix(smp, eps, mode)
        for name in cfg.normalizations:
            kind, alpha = parse_normalization(name)
            label = normalization_label(kind, alpha)
            gen = refs[(label, None)]
            count = min(len(gen.eigenvalues), M)
            op, _ = normalize(K, kind, alpha)
            res = eigensolve(op, count)
            merged = merge_by_reference(res, gen)
            for source in ("continuum", "generator"):
                ref = refs[(label, eps)] if source == "continuum" else gen
                F = ref.evaluate(smp.points)
                errs = eigenvalue_errors(res, ref, count - 1)
                by_k = {r["k"]: r for r in errs}
                for idx in merged.groups[1:]:
                    l2 = subspace_distance(res.eigenvectors[:, idx], F[:, idx], "weighted_l2").value
                    lo = hi = float("nan")
                    if cfg.sup_norm:
                        rep = subspace_distance(res.eigenvectors[:, idx], F[:, idx], "sup_grid")
                        lo, hi = rep.lower, rep.upper
                    rows.append({
                        "k": int(idx[0]), "eps": eps, "M": M, "seed": cfg.seed, "normalization": label,
                        "err_lambda": max(by_k[i]["err_lambda"] for i in idx),
                        "err_lambda_tilde": max(by_k[i]["err_lambda_tilde"] for i in idx),
                        "err_subspace_l2": l2, "err_subspace_sup_lo": lo, "err_subspace_sup_hi": hi,
                        "trial": trial, "reference": source,
                        "M_eff": effective_sample_size(M, eps, density.d),
                    })
    return rows


def _summarize(rows, trials):
    groups = {}
    for r in rows:
        key = (r["normalization"], r["reference"], r["k"], r["eps"], r["M"])
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        l2 = np.array([r["err_subspace_l2"] for r in g])
        lam = np.array([r["err_lambda"] for r in g])
        out.append({
            "normalization": key[0], "reference": key[1], "k": key[2], "eps": key[3], "M": key[4],
            "M_eff": g[0]["M_eff"], "trials": trials,
            "mean_err_subspace_l2": float(np.mean(l2)), "median_err_subspace_l2": float(np.median(l2)),
            "mean_err_lambda": float(np.mean(lam)), "median_err_lambda": float(np.median(lam)),
        })
    return out


def _gnuplot_variance(summary_name):
    return "\n".join([
        "# gnuplot script: eigenspace error (L2 of the empirical measure)",
        'set datafile separator ","',
        'set datafile commentschars "#"',
        "set logscale xy",
        "set multiplot layout 2,1",
        'set xlabel "M_eff"',
        'set ylabel "variance error"',
        f"plot '{summary_name}' skip 2 using (strcol(2) eq \"continuum\" && $3==1 ? $6 : 1/0):8 "
        "with points title \"vs continuum reference\"",
        'set xlabel "eps"',
        'set ylabel "total error"',
        f"plot '{summary_name}' skip 2 using (strcol(2) eq \"generator\" && $3==1 ? $4 : 1/0):8 "
        "with points title \"vs generator reference\"",
        "unset multiplot",
    ]) + "\n"


def cmd_variance_sweep(config):
    """Eigenspace and eigenvalue errors of sampled operators.

    For every ``(M, trial)`` a sample is drawn from its own random stream,
    and for every ``eps`` and normalisation the discrete operator is
    eigensolved.  Errors are measured against the continuum operator at the
    same ``eps`` (variance error) and against the generator (total error),
    cluster by cluster.  Writes ``variance_sweep.csv`` (one row per trial),
    ``variance_sweep_summary.csv``, ``variance_sweep.json`` and
    ``variance_sweep.plt``.

    Returns
    -------
    dict
        ``rows`` and ``summary``.
    """
    cfg = config
    density = density_from_descriptor(cfg.density)
    refs = {}
    for name in cfg.normalizations:
        kind, alpha = parse_normalization(name)
        label = normalization_label(kind, alpha)
        gen = reference_for(density, cfg.k, "generator", kind, alpha, n_modes=cfg.n_modes)
        refs[(label, None)] = gen
        for eps in cfg.eps:
            refs[(label, eps)] = reference_for(density, len(gen.eigenvalues), "continuum", kind, alpha,
                                               eps, n_grid=cfg.n_grid)
    tasks = [(cfg, density, refs, M, t) for M in sorted(cfg.M) for t in range(cfg.trials)]
    results = _map(_variance_trial, tasks, cfg.threads)
    rows = []
    for (_, _, _, M, t), rs in sorted(zip(tasks, results), key=lambda p: (p[0][3], p[0][4])):
        rows.extend(rs)
    summary = _summarize(rows, cfg.trials)
    out = _out_dir(cfg)
    _write_csv(os.path.join(out, "variance_sweep.csv"), cfg, rows, VARIANCE_COLUMNS)
    _write_csv(os.path.join(out, "variance_sweep_summary.csv"), cfg, summary, SUMMARY_COLUMNS)
    with open(os.path.join(out, "variance_sweep.plt"), "w") as fh:
        fh.write(_gnuplot_variance("variance_sweep_summary.csv"))
    _write_json(os.path.join(out, "variance_sweep.json"), {
        "provenance": cfg.provenance(),
        "density": cfg.density,
        "trials": cfg.trials,
        "summary": summary,
    })
    return {"rows": rows, "summary": summary}


# -- ASSA trace ------------------------------------------------------------------

def _trace_sample(cfg):
    desc = cfg.density
    M = int(cfg.M[0])
    if desc.get("kind") == "normal":
        d = int(desc.get("d", 3))
        pts = make_rng(cfg.seed).standard_normal((M, d))
        return pts, euclidean(d)
    density = density_from_descriptor(desc)
    smp = sample(density, M, cfg.seed)
    return smp, periodic(density.domain)


def _first_below(trace, target):
    for i, r in enumerate(trace, start=1):
        if r <= target:
            return i
    return None


def cmd_assa_trace(config):
    """Residual traces of ASSA and plain Sinkhorn on the same kernel matrix.

    ``config.options`` may set ``target`` (residual, default ``1e-13``),
    ``max_iter_assa`` (500) and ``max_iter_plain`` (100000).  Writes
    ``assa_trace.csv``, ``assa_trace.json`` and ``assa_trace.plt``.

    Returns
    -------
    dict
        Iteration counts, tail contraction and the two reports.
    """
    cfg = config
    target = float(cfg.options.get("target", 1e-13))
    pts, mode = _trace_sample(cfg)
    eps = float(cfg.eps[0])
    K = build_kernel_matrix(pts, eps, mode, n_threads=cfg.threads)
    _, rep_a = assa(K, tol=target, max_iter=int(cfg.options.get("max_iter_assa", 500)))
    _, rep_p = sinkhorn_plain(K, tol=target, max_iter=int(cfg.options.get("max_iter_plain", 100_000)))
    n = max(len(rep_a.residual_trace), len(rep_p.residual_trace))
    rows = []
    for i in range(n):
        rows.append({
            "iteration": i + 1,
            "assa": rep_a.residual_trace[i] if i < len(rep_a.residual_trace) else None,
            "plain": rep_p.residual_trace[i] if i < len(rep_p.residual_trace) else None,
        })
    it_a = _first_below(rep_a.residual_trace, target)
    it_p = _first_below(rep_p.residual_trace, target)
    summary = {
        "provenance": cfg.provenance(),
        "M": K.M,
        "eps": eps,
        "kernel": mode.kind,
        "target": target,
        "assa_iterations": it_a,
        "plain_iterations": it_p,
        "iteration_ratio": (it_p / it_a) if it_a and it_p else None,
        "assa_tail_contraction": rep_a.tail_contraction,
        "plain_tail_contraction": rep_p.tail_contraction,
        "asymptotic_contraction_bound": theoretical_contraction_bound(0.0),
        "assa_fixed_point_residual": rep_a.fixed_point_residual,
        "plain_fixed_point_residual": rep_p.fixed_point_residual,
        "assa_converged": rep_a.converged,
        "plain_converged": rep_p.converged,
        "contraction_flag": rep_a.contraction_flag,
    }
    out = _out_dir(cfg)
    _write_csv(os.path.join(out, "assa_trace.csv"), cfg, rows, ["iteration", "assa", "plain"])
    with open(os.path.join(out, "assa_trace.plt"), "w") as fh:
        fh.write("\n".join([
            "# gnuplot script: Sinkhorn residual against iteration",
            'set datafile separator ","',
            'set datafile commentschars "#"',
            "set logscale y",
            'set xlabel "iteration"',
            'set ylabel "||log(u_old / u_new)||_2"',
            "plot 'assa_trace.csv' skip 2 using 1:3 with lines title \"plain Sinkhorn\", \\",
            "     'assa_trace.csv' skip 2 using 1:2 with lines title \"ASSA\"",
        ]) + "\n")
    _write_json(os.path.join(out, "assa_trace.json"), summary)
    return {"summary": summary, "assa": rep_a, "plain": rep_p}


# -- spectrum ------------------------------------------------------------------------

def read_points(path):
    """Headerless CSV of one point per row, returned as ``(M, d)``.

    Raises
    ------
    ValueError
        On empty files, non-numeric cells or rows of differing width.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(c) for c in line.split(",")])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(rows[-1])}")
    if not rows:
        raise ValueError(f"{path}: no points")
    return np.array(rows)


def cmd_spectrum(config):
    """Diffusion-map eigendata of a user sample.

    ``config.options`` holds ``input`` (CSV path), ``domain`` (``"torus"``
    or ``"euclidean"``) and ``L`` (torus side).  The first entries of
    ``config.eps`` and ``config.normalizations`` are used.  Writes
    ``spectrum.csv`` (eigenvalues in the three conventions) and
    ``spectrum.json`` (eigenvalues, eigenvectors, Sinkhorn report).

    Raises
    ------
    ValueError
        For a malformed input file or ``k`` larger than the sample.
    """
    cfg = config
    path = cfg.options.get("input")
    if not path:
        raise ConfigError("spectrum needs an input file")
    X = read_points(path)
    M, d = X.shape
    if cfg.k > M:
        raise ValueError(f"k = {cfg.k} exceeds the number of points M = {M}")
    domain_kind = cfg.options.get("domain", "torus")
    if domain_kind == "torus":
        mode = periodic(TorusDomain(d, float(cfg.options.get("L", 1.0))))
    elif domain_kind == "euclidean":
        mode = euclidean(d)
    else:
        raise ConfigError(f"unknown domain {domain_kind!r}")
    eps = float(cfg.eps[0])
    kind, alpha = parse_normalization(cfg.normalizations[0])
    K = build_kernel_matrix(X, eps, mode, n_threads=cfg.threads)
    op, report = normalize(K, kind, alpha)
    res = eigensolve(op, cfg.k)
    out = _out_dir(cfg)
    with open(os.path.join(out, "spectrum.csv"), "w", newline="") as fh:
        fh.write(f"# {cfg.provenance()}\n")
        res.to_csv(fh)
    doc = res.to_dict(include_vectors=True)
    doc["provenance"] = cfg.provenance()
    doc["M"] = M
    doc["d"] = d
    doc["kernel"] = mode.describe()
    if report is not None:
        doc["sinkhorn"] = {
            "iterations": report.iterations,
            "converged": report.converged,
            "fixed_point_residual": report.fixed_point_residual,
            "tail_contraction": report.tail_contraction,
            "residual_trace": report.residual_trace,
        }
    _write_json(os.path.join(out, "spectrum.json"), doc)
    return {"result": res, "report": report}
