"""Run configuration: flat JSON key-value files, validated on load.

Schema (every key optional; defaults in :class:`RunConfig`)::

    n_spins, j_x, j_y, j_z              spin chain
    n_modes, xi, omega_max, beta,       bath; beta is a number or one value per spin
    coupling_form                       "literal" | "ohmic"
    dt, t_max, output_points,           run
    n_samples, seed, mode,
    ordering, chunk_size, workers, tree_reduction
    initial_state                       "up-up" | "up-down" | "psi-minus" | matrix
    g_c, Omega                          analytic overrides (null = from the rate formulas)

An explicit initial state is a list of rows; complex entries are written as
``[re, im]`` pairs. A config may name a shipped preset (``fig1``, ``fig2``,
``fig3``) instead of a path.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .adiabatic import ORDERINGS
from .bath import COUPLING_FORMS
from .model import MAX_SPINS

MODES = ("simulate", "analytic", "compare", "sampler-check", "oracle-check")
PRESETS = ("fig1", "fig2", "fig3")
STATE_PRESETS = ("up-up", "up-down", "psi-minus")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    n_spins: int = 2
    j_x: float = 1.0
    j_y: float = 1.0
    j_z: float = 0.5
    n_modes: int = 200
    xi: float = 0.007
    omega_max: float = 3.0
    beta: tuple = (1.0, 1.0)
    coupling_form: str = "literal"
    dt: float = 0.01
    t_max: float = 20.0
    output_points: int = 200
    n_samples: int = 5000
    seed: int = 0
    mode: str = "compare"
    initial_state: object = "up-down"
    ordering: str = "tracked"
    chunk_size: int = 250
    workers: int = 1
    tree_reduction: bool = True
    g_c: float | None = None
    Omega: float | None = None

    def __post_init__(self):
        _validate(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["beta"] = list(self.beta)
        state = self.initial_state
        if not isinstance(state, str):
            out["initial_state"] = [[[z.real, z.imag] for z in row] for row in np.asarray(state)]
        return out

    def rho0(self) -> np.ndarray:
        return initial_density(self.initial_state, self.n_spins)


def initial_density(state, n_spins=2) -> np.ndarray:
    """Density matrix of a named preset or an explicit (possibly complex) matrix."""
    d = 2**n_spins
    if isinstance(state, str):
        if state not in STATE_PRESETS:
            raise ConfigError(f"unknown preset {state!r}; expected one of {STATE_PRESETS} or a matrix", "initial_state")
        if n_spins != 2:
            raise ConfigError("named states are defined for two spins only", "initial_state")
        psi = {
            "up-up": np.array([1.0, 0, 0, 0]),
            "up-down": np.array([0, 1.0, 0, 0]),
            "psi-minus": np.array([1.0, -1.0, 0, 0]) / np.sqrt(2.0),
        }[state]
        return np.outer(psi, psi).astype(complex)
    rho = np.asarray(state, dtype=complex)
    if rho.shape != (d, d):
        raise ConfigError(f"matrix must be {d}x{d}, got shape {rho.shape}", "initial_state")
    return rho


def _check_density(rho, tol=1e-10):
    if not np.all(np.isfinite(rho)):
        raise ConfigError("matrix has non-finite entries", "initial_state")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ConfigError("matrix is not Hermitian", "initial_state")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ConfigError(f"trace is {tr}, expected 1", "initial_state")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -tol:
        raise ConfigError(f"matrix is not positive semidefinite (eigenvalue {lo:.3g})", "initial_state")


def _is_int(x):
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _validate(cfg: RunConfig):
    for name in ("n_spins", "n_modes", "output_points", "n_samples", "seed", "chunk_size", "workers"):
        if not _is_int(getattr(cfg, name)):
            raise ConfigError(f"expected an integer, got {getattr(cfg, name)!r}", name)
    for name in ("j_x", "j_y", "j_z", "xi", "omega_max", "dt", "t_max"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"expected a finite number, got {v!r}", name)
    if not 2 <= cfg.n_spins <= MAX_SPINS:
        raise ConfigError(f"must lie in [2, {MAX_SPINS}]", "n_spins")
    for name in ("n_modes", "output_points", "n_samples", "chunk_size", "workers"):
        if getattr(cfg, name) < 1:
            raise ConfigError("must be positive", name)
    if cfg.seed < 0:
        raise ConfigError("must be non-negative", "seed")
    for name in ("omega_max", "dt", "t_max"):
        if getattr(cfg, name) <= 0:
            raise ConfigError("must be positive", name)
    if cfg.xi < 0:
        raise ConfigError("must be non-negative", "xi")
    if len(cfg.beta) != cfg.n_spins:
        raise ConfigError(f"expected {cfg.n_spins} values (one per spin), got {len(cfg.beta)}", "beta")
    for b in cfg.beta:
        if isinstance(b, bool) or not isinstance(b, (int, float)) or not b > 0:
            raise ConfigError(f"inverse temperatures must be positive numbers, got {b!r}", "beta")
    if cfg.coupling_form not in COUPLING_FORMS:
        raise ConfigError(f"expected one of {sorted(COUPLING_FORMS)}", "coupling_form")
    if cfg.mode not in MODES:
        raise ConfigError(f"expected one of {MODES}", "mode")
    if cfg.ordering not in ORDERINGS:
        raise ConfigError(f"expected one of {ORDERINGS}", "ordering")
    if not isinstance(cfg.tree_reduction, bool):
        raise ConfigError("expected true or false", "tree_reduction")
    for name in ("g_c", "Omega"):
        v = getattr(cfg, name)
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0):
            raise ConfigError(f"must be a non-negative number or null, got {v!r}", name)
    spacing = cfg.t_max / cfg.output_points
    ratio = spacing / cfg.dt
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        raise ConfigError(f"dt must divide the output spacing t_max/output_points = {spacing}", "dt")
    _check_density(initial_density(cfg.initial_state, cfg.n_spins))


def _decode_state(value):
    if isinstance(value, str):
        return value
    if not isinstance(value, list) or not all(isinstance(row, list) for row in value):
        raise ConfigError("expected a preset name or a list of rows", "initial_state")
    try:
        rows = [[complex(*z) if isinstance(z, list) else complex(z) for z in row] for row in value]
    except TypeError as exc:
        raise ConfigError(f"bad matrix entry ({exc})", "initial_state") from None
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("rows have different lengths", "initial_state")
    return tuple(tuple(r) for r in rows)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", unknown[0])
    kwargs = dict(data)
    if "beta" in kwargs:
        beta = kwargs["beta"]
        n = kwargs.get("n_spins", RunConfig.n_spins)
        kwargs["beta"] = tuple(beta) if isinstance(beta, list) else (beta,) * (n if _is_int(n) else 1)
    if "initial_state" in kwargs:
        kwargs["initial_state"] = _decode_state(kwargs["initial_state"])
    return RunConfig(**kwargs)


def parse_config(text: str, source="<string>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def preset_text(name: str) -> str:
    return resources.files("spinbath.presets").joinpath(f"{name}.json").read_text()


def load_config(path_or_preset) -> RunConfig:
    """Load a config file, or a shipped preset when given a bare preset name."""
    if str(path_or_preset) in PRESETS and not Path(path_or_preset).exists():
        return parse_config(preset_text(str(path_or_preset)), f"preset {path_or_preset}")
    path = Path(path_or_preset)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
