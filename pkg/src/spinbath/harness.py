"""Experiment runners behind the command line: simulate, analytic, compare,
sampler-check and oracle-check, plus CSV persistence and plot-script emission."""
from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .bath import discretize_bath, thermal_variances
from .config import RunConfig
from .estimator import ReducedDensitySeries, estimate_reduced_density, fit_damped_cosine
from .lindblad import (
    bath_rates,
    eigensystem_hs,
    evolve_closed_form,
    evolve_liouvillian,
    override_total_rate,
)
from .model import SpinChainParams, spin_hamiltonian

log = logging.getLogger(__name__)

# relative difference of fitted frequencies above which the compare report flags a shift
FREQUENCY_SHIFT_FLAG = 0.05


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# construction from a config


def build_hamiltonian(cfg: RunConfig) -> np.ndarray:
    return spin_hamiltonian(SpinChainParams(cfg.n_spins, cfg.j_x, cfg.j_y, cfg.j_z))


def build_bath(cfg: RunConfig):
    return discretize_bath(cfg.n_modes, cfg.xi, cfg.omega_max, cfg.beta, cfg.coupling_form)


def time_grid(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.t_max, cfg.output_points + 1)


def build_rates(cfg: RunConfig):
    """(EigenSystemHS, RateSet) of the analytic solution, with config overrides applied."""
    if cfg.n_spins != 2 or cfg.j_x != cfg.j_y:
        raise HarnessError("the analytic solution needs two spins with j_x == j_y")
    eig = eigensystem_hs(cfg.j_x, cfg.j_z)
    modes = build_bath(cfg)
    rates = bath_rates(cfg.xi, cfg.beta, eig.omega, modes.omega[0], cfg.g_c, modes.spectral_power)
    if cfg.Omega is not None:
        rates = override_total_rate(rates, cfg.Omega, cfg.beta, eig.omega)
    return eig, rates


def analytic_series(cfg: RunConfig, t=None) -> np.ndarray:
    """Closed-form rho(t) in the natural basis, shape (T, 4, 4)."""
    eig, rates = build_rates(cfg)
    t = time_grid(cfg) if t is None else t
    rho0 = cfg.rho0()
    return np.array([evolve_closed_form(rho0, tk, eig, rates) for tk in t])


def simulate(cfg: RunConfig) -> ReducedDensitySeries:
    return estimate_reduced_density(
        build_hamiltonian(cfg), build_bath(cfg), cfg.rho0(),
        t_max=cfg.t_max, output_points=cfg.output_points, dt=cfg.dt,
        n_samples=cfg.n_samples, seed=cfg.seed, ordering=cfg.ordering,
        chunk_size=cfg.chunk_size, workers=cfg.workers, tree_reduction=cfg.tree_reduction,
    )


# ---------------------------------------------------------------------------
# output files


def element_labels(d: int):
    return [f"{i + 1}{j + 1}" for i in range(d) for j in range(d)]


def series_columns(d: int, with_stderr: bool):
    labels = element_labels(d)
    cols = ["t"] + [f"{part}_{lab}" for lab in labels for part in ("re", "im")]
    if with_stderr:
        cols += [f"se_{part}_{lab}" for lab in labels for part in ("re", "im")]
        cols += ["se_trace"]
    return cols


def _header(cfg: RunConfig, extra=None):
    lines = [f"spinbath {__version__}", f"seed: {cfg.seed}", "config: " + json.dumps(cfg.to_dict(), sort_keys=True)]
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    return "".join(f"# {line}\n" for line in lines)


def _interleave(rho):
    # (T, d, d) complex -> (T, 2 d^2) as re_11, im_11, re_12, ...
    flat = rho.reshape(rho.shape[0], -1)
    out = np.empty((flat.shape[0], 2 * flat.shape[1]))
    out[:, 0::2] = flat.real
    out[:, 1::2] = flat.imag
    return out


def write_series_csv(path, t, rho, cfg: RunConfig, stderr=None, extra=None):
    """One row per time; stderr is (se_re, se_im, se_trace) or None."""
    d = rho.shape[1]
    blocks = [np.asarray(t)[:, None], _interleave(rho)]
    if stderr is not None:
        se_re, se_im, se_tr = stderr
        blocks.append(_interleave(se_re + 1j * se_im))
        blocks.append(np.asarray(se_tr)[:, None])
    data = np.hstack(blocks)
    with open(path, "w") as fh:
        fh.write(_header(cfg, extra))
        fh.write(",".join(series_columns(d, stderr is not None)) + "\n")
        for row in data:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_series_csv(path):
    """(column names, data array) of a CSV written by :func:`write_series_csv`."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise HarnessError(f"{path}: no column header")
    names = lines[0].strip().split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:] if ln.strip()])
    return names, data.reshape(-1, len(names))


class _Outputs:
    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.paths = []

    def path(self, name):
        p = self.dir / name
        self.paths.append(p)
        return p


@contextmanager
def _outputs(out_dir):
    """Collect written files; remove them all if the run fails."""
    out = _Outputs(out_dir)
    out.dir.mkdir(parents=True, exist_ok=True)
    try:
        yield out
    except BaseException:
        for p in out.paths:
            p.unlink(missing_ok=True)
        raise


def _write_series(out, name, series: ReducedDensitySeries, cfg, extra=None):
    diag = dict(series.diagnostics, n_samples=series.n_samples, n_excluded=series.n_excluded)
    diag.update(extra or {})
    write_series_csv(
        out.path(name), series.t, series.rho, cfg,
        (series.stderr_re, series.stderr_im, series.trace_stderr), {"diagnostics": json.dumps(diag, sort_keys=True)},
    )


def _write_json(out, name, payload):
    with open(out.path(name), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# modes


def trace_statistics(series: ReducedDensitySeries) -> dict:
    dev = np.abs(series.trace() - 1.0)
    se = series.trace_stderr
    ratio = np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev > 0, np.inf, 0.0))
    return {
        "max_abs_trace_deviation": float(dev.max()),
        "max_trace_deviation_over_stderr": float(ratio.max()),
        "max_sample_trace_deviation": float(series.diagnostics.get("max_sample_trace_deviation", np.nan)),
    }


def run_simulate(cfg: RunConfig, out_dir=None):
    t0 = time.perf_counter()
    series = simulate(cfg)
    elapsed = time.perf_counter() - t0
    summary = {"mode": "simulate", "elapsed_s": elapsed, "n_samples": series.n_samples,
               "n_excluded": series.n_excluded, **trace_statistics(series)}
    if out_dir is not None:
        with _outputs(out_dir) as out:
            _write_series(out, "numeric.csv", series, cfg)
            _write_json(out, "summary.json", summary)
    return series, summary


def run_analytic(cfg: RunConfig, out_dir=None):
    eig, rates = build_rates(cfg)
    t = time_grid(cfg)
    rho = analytic_series(cfg, t)
    summary = {
        "mode": "analytic", "omega": eig.omega, "Omega": rates.omega_total,
        "Omega_plus": rates.omega_plus, "Omega_minus": rates.omega_minus, "g_c": rates.g_c,
    }
    if out_dir is not None:
        with _outputs(out_dir) as out:
            write_series_csv(out.path("analytic.csv"), t, rho, cfg)
            _write_json(out, "summary.json", summary)
    return rho, summary


def _fit_dict(fit):
    return {"decay_rate": fit.decay_rate, "frequency": fit.frequency, "amplitude": fit.amplitude,
            "offset": fit.offset, "residual_norm": fit.residual_norm, "converged": fit.converged}


def compare_report(cfg: RunConfig, series: ReducedDensitySeries, analytic: np.ndarray, element=(1, 1)) -> dict:
    """Numeric vs analytic comparison of one real diagonal element (default rho_22)."""
    eig, rates = build_rates(cfg)
    i, j = element
    num = series.rho[:, i, j].real
    ana = analytic[:, i, j].real
    dev = num - ana
    fit_num = fit_damped_cosine(series.t, num)
    fit_ana = fit_damped_cosine(series.t, ana)
    shift = abs(fit_num.frequency - fit_ana.frequency) / fit_ana.frequency if fit_ana.frequency > 0 else np.inf
    return {
        "mode": "compare",
        "element": f"rho{i + 1}{j + 1}",
        "max_abs_deviation": float(np.max(np.abs(dev))),
        "rms_deviation": float(np.sqrt(np.mean(dev**2))),
        "fit_numeric": _fit_dict(fit_num),
        "fit_analytic": _fit_dict(fit_ana),
        "omega": eig.omega,
        "Omega_formula": rates.omega_total,
        "Omega_fitted_numeric": fit_num.decay_rate,
        "frequency_relative_difference": float(shift),
        "frequency_shift_flagged": bool(shift > FREQUENCY_SHIFT_FLAG),
        "trace": trace_statistics(series),
        "n_samples": series.n_samples,
        "n_excluded": series.n_excluded,
        "seed": series.seed,
    }


def format_report(report: dict) -> str:
    fn, fa = report["fit_numeric"], report["fit_analytic"]
    lines = [
        f"element               {report['element']}",
        f"max |numeric-analytic| {report['max_abs_deviation']:.4g}",
        f"RMS deviation          {report['rms_deviation']:.4g}",
        f"numeric fit            Gamma={fn['decay_rate']:.4g} nu={fn['frequency']:.4g}",
        f"analytic fit           Gamma={fa['decay_rate']:.4g} nu={fa['frequency']:.4g}",
        f"Omega formula / fitted {report['Omega_formula']:.4g} / {report['Omega_fitted_numeric']:.4g}",
        f"max |Tr rho - 1|       {report['trace']['max_abs_trace_deviation']:.3g}",
    ]
    if report["frequency_shift_flagged"]:
        lines.append(
            f"NOTE: fitted frequencies differ by {100 * report['frequency_relative_difference']:.1f}% "
            "(frequency shift between numeric and analytic curves)"
        )
    return "\n".join(lines) + "\n"


def run_compare(cfg: RunConfig, out_dir=None):
    series = simulate(cfg)
    analytic = analytic_series(cfg, series.t)
    report = compare_report(cfg, series, analytic)
    if report["frequency_shift_flagged"]:
        log.warning("fitted frequencies differ by %.1f%%", 100 * report["frequency_relative_difference"])
    if out_dir is not None:
        with _outputs(out_dir) as out:
            _write_series(out, "numeric.csv", series, cfg)
            write_series_csv(out.path("analytic.csv"), series.t, analytic, cfg)
            _write_json(out, "report.json", report)
            out.path("report.txt").write_text(format_report(report))
    return series, analytic, report


def sampler_moments(modes, n_samples, seed=0, batch=10000):
    """Empirical vs closed-form Wigner variances for every mode of every bath.

    Returns a list of per-bath dicts with arrays var_r, var_p (empirical),
    var_r_exact, var_p_exact and the equipartition z-score
    (Var P - omega^2 Var R) / its standard error.
    """
    rng = np.random.default_rng(seed)
    out = []
    for ks, beta in enumerate(modes.beta):
        vr_exact, vp_exact = thermal_variances(modes.omega, beta)
        n = 0
        s_r = np.zeros(modes.n_modes)
        s_p = np.zeros(modes.n_modes)
        s_rr = np.zeros(modes.n_modes)
        s_pp = np.zeros(modes.n_modes)
        s_d2 = np.zeros(modes.n_modes)
        s_d = np.zeros(modes.n_modes)
        w2 = modes.omega**2
        while n < n_samples:
            m = min(batch, n_samples - n)
            r = rng.standard_normal((m, modes.n_modes)) * np.sqrt(vr_exact)
            p = rng.standard_normal((m, modes.n_modes)) * np.sqrt(vp_exact)
            s_r += r.sum(0)
            s_p += p.sum(0)
            s_rr += (r**2).sum(0)
            s_pp += (p**2).sum(0)
            diff = p**2 - w2 * r**2
            s_d += diff.sum(0)
            s_d2 += (diff**2).sum(0)
            n += m
        var_r = (s_rr - s_r**2 / n) / (n - 1)
        var_p = (s_pp - s_p**2 / n) / (n - 1)
        mean_d = s_d / n
        se_d = np.sqrt((s_d2 / n - mean_d**2) / (n - 1))
        out.append({
            "beta": beta, "omega": modes.omega, "var_r": var_r, "var_p": var_p,
            "var_r_exact": vr_exact, "var_p_exact": vp_exact, "equipartition_z": mean_d / se_d,
        })
    return out


def run_sampler_check(cfg: RunConfig, out_dir=None):
    """Per-decade summary of the sampler moments (worst relative error in each decade)."""
    modes = build_bath(cfg)
    rows = []
    for ks, res in enumerate(sampler_moments(modes, cfg.n_samples, cfg.seed)):
        decade = np.floor(np.log10(res["omega"])).astype(int)
        rel_r = np.abs(res["var_r"] / res["var_r_exact"] - 1)
        rel_p = np.abs(res["var_p"] / res["var_p_exact"] - 1)
        for dec in np.unique(decade):
            sel = decade == dec
            rows.append({
                "bath": ks, "beta": res["beta"], "decade": f"[1e{dec}, 1e{dec + 1})", "n_modes": int(sel.sum()),
                "max_rel_err_var_r": float(rel_r[sel].max()), "max_rel_err_var_p": float(rel_p[sel].max()),
                "max_abs_equipartition_z": float(np.abs(res["equipartition_z"][sel]).max()),
            })
    summary = {"mode": "sampler-check", "n_samples": cfg.n_samples, "rows": rows}
    if out_dir is not None:
        with _outputs(out_dir) as out:
            _write_json(out, "sampler.json", summary)
    return summary


def random_density(rng, d=4):
    """Random full-rank density matrix (Ginibre construction)."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def run_oracle_check(cfg: RunConfig, out_dir=None, n_states=100, times=(0.5, 1.0, 5.0, 20.0)):
    """Closed form against the Liouvillian exponential on random initial states."""
    eig, rates = build_rates(cfg)
    h_s = build_hamiltonian(cfg)
    rng = np.random.default_rng(cfg.seed)
    max_diff = 0.0
    max_trace = 0.0
    min_eig = np.inf
    for _ in range(n_states):
        rho0 = random_density(rng)
        for t in times:
            a = evolve_closed_form(rho0, t, eig, rates)
            b = evolve_liouvillian(rho0, t, h_s, eig, rates)
            max_diff = max(max_diff, float(np.max(np.abs(a - b))))
            max_trace = max(max_trace, abs(np.trace(a) - 1.0))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (a + a.conj().T)).min()))
    summary = {"mode": "oracle-check", "n_states": n_states, "times": list(times),
               "max_elementwise_difference": max_diff, "max_trace_deviation": max_trace,
               "min_eigenvalue": min_eig}
    if out_dir is not None:
        with _outputs(out_dir) as out:
            _write_json(out, "oracle.json", summary)
    return summary


# ---------------------------------------------------------------------------
# plot script

_PLOT_TEMPLATE = '''"""Plot reduced-density-matrix series written by spinbath (needs numpy and matplotlib)."""
import numpy as np
import matplotlib.pyplot as plt

NUMERIC = {numeric!r}
ANALYTIC = {analytic!r}
ELEMENT = {element!r}


def load(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    names = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return {{name: data[:, k] for k, name in enumerate(names)}}


fig, (ax_trace, ax_el) = plt.subplots(1, 2, figsize=(10, 4))
if NUMERIC:
    num = load(NUMERIC)
    labels = [name[3:] for name in num if name.startswith("re_")]
    trace = sum(num["re_" + lab] for lab in labels if lab[0] == lab[1])
    ax_trace.errorbar(num["t"], trace, yerr=num["se_trace"], fmt=".", ms=3)
    ax_trace.set_xlabel("t")
    ax_trace.set_ylabel("Tr rho")
    ax_el.errorbar(num["t"], num["re_" + ELEMENT], yerr=num["se_re_" + ELEMENT], fmt="o", ms=3, label="numeric")
if ANALYTIC:
    ana = load(ANALYTIC)
    ax_el.plot(ana["t"], ana["re_" + ELEMENT], "-", label="analytic")
ax_el.set_xlabel("t")
ax_el.set_ylabel("rho_" + ELEMENT)
ax_el.legend()
fig.tight_layout()
fig.savefig({output!r}, dpi=150)
'''


def emit_plot_script(script_path, numeric_csv=None, analytic_csv=None, element="22", image="figure.png"):
    """Write a standalone matplotlib script that reads only the given CSVs."""
    if numeric_csv is None and analytic_csv is None:
        raise HarnessError("no CSV files given")
    required = {}
    if numeric_csv is not None:
        required[numeric_csv] = ["t", f"re_{element}", f"se_re_{element}", "se_trace"]
    if analytic_csv is not None:
        required[analytic_csv] = ["t", f"re_{element}"]
    for path, cols in required.items():
        names, data = read_series_csv(path)
        for col in cols:
            if col not in names:
                raise HarnessError(f"{path}: missing column {col!r}")
        if data.shape[0] == 0:
            raise HarnessError(f"{path}: empty series")
    script = _PLOT_TEMPLATE.format(
        numeric=None if numeric_csv is None else str(Path(numeric_csv).resolve()),
        analytic=None if analytic_csv is None else str(Path(analytic_csv).resolve()),
        element=element, output=image,
    )
    Path(script_path).write_text(script)
    return Path(script_path)
