"""Experiment configuration: TOML files with one section per command.

A file may set shared keys at top level and override them per command::

    seed = 7

    [density]
    kind = "figure1"

    [bias-sweep]
    normalizations = ["standard:0.5", "sinkhorn"]
    eps = {min = 1e-3, max = 1e-1, n = 12}

    [variance-sweep]
    density = {kind = "figure2"}
    M = [250, 1000, 4000]
    trials = 10

Command-line flags override the file, which overrides the defaults below.
"""

from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import sys
import warnings

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "COMMANDS",
    "ExperimentConfig",
    "default_config",
    "load_config",
    "parse_normalization",
    "normalization_label",
]

COMMANDS = ("bias-sweep", "variance-sweep", "assa-trace", "spectrum")

_DEFAULTS = {
    "bias-sweep": dict(
        density={"kind": "figure1"},
        normalizations=["standard:0.5", "sinkhorn"],
        eps={"min": 1e-3, "max": 1e-1, "n": 12},
        k=3, n_modes=2001, n_grid=2048,
    ),
    "variance-sweep": dict(
        density={"kind": "figure2"},
        normalizations=["standard:0.5", "sinkhorn"],
        eps=[0.05], M=[250, 1000, 4000], trials=10,
        k=3, n_modes=401, n_grid=512,
    ),
    "assa-trace": dict(
        density={"kind": "normal", "d": 3},
        normalizations=["sinkhorn"],
        eps=[0.5], M=[3000], k=1,
    ),
    "spectrum": dict(
        density={},
        normalizations=["sinkhorn"],
        eps=[0.1], M=[], k=5,
    ),
}


@dataclass
class ExperimentConfig:
    """Fully resolved settings of one command.

    Attributes
    ----------
    command : str
    density : dict
        Density descriptor (see :func:`dmaps.densities.density_from_descriptor`);
        ``{"kind": "normal", "d": d}`` selects the standard normal sample of
        the ASSA trace.
    normalizations : list of str
        ``"sinkhorn"`` or ``"standard:<alpha>"``.
    eps : list of float
    M : list of int
    trials : int
    seed : int
    k : int
        Number of eigenpairs (indices ``0 .. k-1``), extended to whole
        degenerate clusters.
    n_modes, n_grid : int
        Reference resolution.
    out : str
    threads : int
    sup_norm : bool
        Also compute sup-norm subspace bounds (slow).
    options : dict
        Command-specific extras (``target``, ``max_iter``, ``input``,
        ``domain``, ``L``...).
    """

    command: str
    density: dict = field(default_factory=dict)
    normalizations: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    M: list = field(default_factory=list)
    trials: int = 1
    seed: int = 0
    k: int = 3
    n_modes: int = 2001
    n_grid: int = 2048
    out: str = "results"
    threads: int = 1
    sup_norm: bool = False
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """SHA-256 of the settings that determine the output (not ``out`` or ``threads``)."""
        doc = self.to_dict()
        doc.pop("out")
        doc.pop("threads")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def provenance(self):
        from . import __version__
        return f"dmaps {__version__} config_sha256={self.digest()} seed={self.seed}"


def parse_normalization(name):
    """``"sinkhorn"`` -> ``("sinkhorn", None)``; ``"standard:0.5"`` -> ``("standard", 0.5)``."""
    name = str(name).strip()
    if name == "sinkhorn":
        return "sinkhorn", None
    kind, _, alpha = name.partition(":")
    if kind != "standard":
        raise ConfigError(f"unknown normalization {name!r}")
    try:
        alpha = float(alpha) if alpha else 0.5
    except ValueError:
        raise ConfigError(f"bad alpha in normalization {name!r}") from None
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return "standard", alpha


def normalization_label(kind, alpha):
    return "sinkhorn" if kind == "sinkhorn" else f"standard:{alpha:g}"


def _eps_grid(spec):
    if isinstance(spec, dict):
        try:
            lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec["n"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("an eps range needs numeric 'min', 'max' and 'n'") from None
        if n < 1 or not 0 < lo <= hi:
            raise ConfigError("an eps range needs 0 < min <= max and n >= 1")
        return [float(x) for x in np.geomspace(lo, hi, n)] if n > 1 else [lo]
    if isinstance(spec, (int, float)):
        return [float(spec)]
    return [float(x) for x in spec]


def _validate(cfg):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if not cfg.eps:
        raise ConfigError("the eps grid is empty")
    if any(not e > 0 for e in cfg.eps):
        raise ConfigError("eps values must be positive")
    torus = cfg.density.get("kind") != "normal" and cfg.options.get("domain", "torus") == "torus"
    L = float(cfg.options.get("L") or cfg.density.get("L", 1.0))
    if torus and max(cfg.eps) > L * L / 4:
        warnings.warn(f"eps beyond L^2/4 = {L * L / 4:g}; the kernel is nearly flat", stacklevel=3)
    if not cfg.normalizations:
        raise ConfigError("the normalization list is empty")
    for n in cfg.normalizations:
        parse_normalization(n)
    if cfg.command in ("variance-sweep", "assa-trace") and not cfg.M:
        raise ConfigError("the sample-size list is empty")
    if any(int(m) < 1 for m in cfg.M):
        raise ConfigError("sample sizes must be positive")
    if cfg.trials < 1 or cfg.threads < 1 or cfg.k < 1:
        raise ConfigError("trials, threads and k must be positive")
    return cfg


def default_config(command, **overrides):
    """Defaults of ``command`` with keyword overrides applied."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    base = dict(_DEFAULTS[command])
    base.update(overrides)
    return _build(command, base)


def _build(command, doc):
    known = set(ExperimentConfig.__dataclass_fields__) - {"command"}
    extra = {k: v for k, v in doc.items() if k not in known}
    doc = {k: v for k, v in doc.items() if k in known}
    options = dict(doc.pop("options", {}))
    options.update(extra)
    try:
        cfg = ExperimentConfig(
            command=command,
            density=dict(doc.get("density", {})),
            normalizations=list(doc.get("normalizations", [])),
            eps=_eps_grid(doc.get("eps", [])),
            M=[int(m) for m in doc.get("M", [])],
            trials=int(doc.get("trials", 1)),
            seed=int(doc.get("seed", 0)),
            k=int(doc.get("k", 3)),
            n_modes=int(doc.get("n_modes", 2001)),
            n_grid=int(doc.get("n_grid", 2048)),
            out=str(doc.get("out", "results")),
            threads=int(doc.get("threads", 1)),
            sup_norm=bool(doc.get("sup_norm", False)),
            options=options,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    return _validate(cfg)


def load_config(command, path=None, **overrides):
    """Resolve the configuration of ``command``.

    Parameters
    ----------
    command : str
        One of :data:`COMMANDS`.
    path : str, optional
        TOML file; top-level keys apply to every command, the ``[command]``
        table overrides them.
    **overrides
        Values from the command line; ``None`` entries are ignored.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    doc = dict(_DEFAULTS[command])
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config file: {exc}") from None
        shared = {k: v for k, v in data.items() if k not in COMMANDS}
        doc.update(shared)
        doc.update(data.get(command, {}))
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return _build(command, doc)


def with_overrides(cfg, **kw):
    """Copy of ``cfg`` with fields replaced and revalidated."""
    return _validate(replace(cfg, **kw))
