"""Experiment drivers behind the command line.

Each driver takes an :class:`~macromech.config.ExperimentConfig` and returns
an :class:`ExperimentResult`: CSV rows (in sweep order), extra manifest
entries and optionally a Wigner grid.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .conditioning import (
    Heterodyne,
    Homodyne,
    SystemParams,
    choose_cutoff,
    condition,
    evolve_joint,
    measurement_amplitude,
)
from .config import ExperimentConfig
from .core import CoherentSuperposition, wigner_grid
from .errors import ConfigError, InvariantViolation, NoCrossingError
from .fidelity import fidelity_curve, optimize_lambda, simplified_state
from .macroscopicity import MixtureState, mean_excitations, measure_I, mixture_statistics
from .subtraction import detuning_sweep, read_table, synthetic_table
from .trajectories import (
    DEFAULT_DTAU,
    NoiseParams,
    ThermalInit,
    ensemble_condition,
    mean_photon_number,
    run_ensemble,
)

__all__ = [
    "ExperimentResult",
    "conditional_state",
    "state_metrics",
    "gap",
    "find_crossing",
    "crossing_report",
    "fit_sinusoid",
    "mixture_wigner",
    "run_experiment",
    "RUNNERS",
]

INVARIANT_TOL = 1e-9
NORM_TOL = 1e-10
CROSSING_TOL = 1e-5
THETA_TOL = 1e-3


@dataclass
class ExperimentResult:
    header: list[str]
    rows: list[list] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    wigner_header: list[str] | None = None
    wigner_rows: list[list] | None = None


def conditional_state(params: SystemParams, setting, tol: float = 1e-12) -> CoherentSuperposition:
    """Normalized mirror state after the field outcome ``setting``."""
    n_max = max(1, choose_cutoff(params, setting, tol=tol))
    return condition(evolve_joint(params, n_max, tail_tol=None), setting)


def state_metrics(state: CoherentSuperposition) -> tuple[float, float]:
    return measure_I(state), mean_excitations(state)


def gap(params: SystemParams, setting) -> float:
    """``<b^dag b> - I`` of the conditional state."""
    i_val, n_val = state_metrics(conditional_state(params, setting))
    return n_val - i_val


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def find_crossing(params: SystemParams, theta: float, x_values, tol: float = CROSSING_TOL,
                  threads: int = 1) -> float:
    """Homodyne outcome ``x`` at which ``I`` comes closest to ``<b^dag b>``.

    Scans ``x_values`` for the smallest gap, then bisects on the sign of the
    gap's derivative inside the bracketing grid cells until the bracket is
    narrower than ``tol``.

    Raises:
        NoCrossingError: if the gap is flat (no coupling) or minimal at an
            end of the scanned range.
    """
    xs = np.asarray(sorted(x_values), dtype=float)
    if xs.size < 3:
        raise ConfigError("crossing search needs at least three x values")
    gaps = np.array(_pmap(lambda x: gap(params, Homodyne(x, theta)), xs, threads))
    if np.ptp(gaps) < 1e-12 * max(1.0, abs(gaps).max()):
        raise NoCrossingError("I - <b^dag b> is flat over the range; nothing to cross")
    i = int(np.argmin(gaps))
    if i == 0 or i == xs.size - 1:
        raise NoCrossingError(f"gap is smallest at the edge x = {xs[i]:.6g}; widen the range")
    lo, hi = xs[i - 1], xs[i + 1]
    h = min(1e-6, tol / 10)

    def slope(x):
        return gap(params, Homodyne(x + h, theta)) - gap(params, Homodyne(x - h, theta))

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def crossing_report(params: SystemParams, thetas, x_values, threads: int = 1) -> dict:
    """Crossing per angle and whether they agree within the tolerance."""
    thetas = [float(t) for t in thetas]
    xbars = _pmap(lambda t: find_crossing(params, t, x_values), thetas, threads)
    spread = float(max(xbars) - min(xbars))
    return {
        "thetas": thetas,
        "x_bar": xbars,
        "spread": spread,
        "theta_independent": bool(spread <= THETA_TOL),
    }


def fit_sinusoid(theta, values) -> dict:
    """Least-squares ``a + c sin(theta + b)`` with ``c >= 0`` and ``b`` in ``[0, 2 pi)``.

    For fixed ``b`` the model is linear in ``(a, c)``; ``b`` is scanned on a
    grid and refined by a bounded scalar search.
    """
    th = np.asarray(theta, dtype=float)
    y = np.asarray(values, dtype=float)
    if th.size < 3:
        raise ValueError("need at least three points to fit a sinusoid")

    def solve(b):
        X = np.column_stack([np.ones_like(th), np.sin(th + b)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        return coef, float(np.sum((X @ coef - y) ** 2))

    grid = np.linspace(0, 2 * np.pi, 721)[:-1]
    sse = [solve(b)[1] for b in grid]
    j = int(np.argmin(sse))
    step = grid[1] - grid[0]
    res = minimize_scalar(lambda b: solve(b)[1], bounds=(grid[j] - step, grid[j] + step),
                          method="bounded", options={"xatol": 1e-12})
    b = float(res.x)
    (a, c), err = solve(b)
    if c < 0:
        c, b = -c, b + np.pi
    b = float(np.mod(b, 2 * np.pi))
    return {"a": float(a), "b": b, "c": float(c), "rms": math.sqrt(err / th.size)}


def mixture_wigner(mix: MixtureState, re, im) -> np.ndarray:
    return wigner_grid(mix.components, mix.probabilities, re, im)


# configuration helpers

def _system(cfg: ExperimentConfig, **override) -> SystemParams:
    vals = {
        "alpha": cfg.value("system", "alpha", 0.8),
        "beta": cfg.value("system", "beta", 2.0),
        "k": cfg.value("system", "k", 1.0, real=True),
        "tau": cfg.value("system", "tau", math.pi, real=True),
        "r": cfg.value("system", "r", 0.0, real=True),
    }
    vals.update(override)
    try:
        return SystemParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"[system]: {exc}") from None


def _settings(cfg: ExperimentConfig) -> list:
    """Measurement settings; list-valued keys expand to their product."""
    kind = cfg.text("measurement", "type", "homodyne").lower()
    if kind == "homodyne":
        return [Homodyne(x, t) for x in cfg.values("measurement", "x", [0.0], real=True)
                for t in cfg.values("measurement", "theta", [0.0], real=True)]
    if kind == "heterodyne":
        return [Heterodyne(s) for s in cfg.values("measurement", "sigma")]
    raise ConfigError(f"[measurement] type: {kind!r} must be homodyne or heterodyne")


def _setting_columns(setting) -> list:
    if isinstance(setting, Homodyne):
        return ["homodyne", setting.x, setting.theta]
    return ["heterodyne", setting.sigma.real, setting.sigma.imag]


SETTING_HEADER = ["measurement", "x_or_sigma_re", "theta_or_sigma_im"]


def _grid(cfg: ExperimentConfig, section: str = "wigner"):
    re = np.asarray(cfg.values(section, "re", [-4 + 0.1 * i for i in range(81)], real=True))
    im = np.asarray(cfg.values(section, "im", [-4 + 0.1 * i for i in range(81)], real=True))
    return re, im


def _pure_row(state: CoherentSuperposition):
    i_val, n_val = state_metrics(state)
    residue = abs(state.norm_squared - 1.0)
    return i_val, n_val, residue


def _check(cfg_debug: bool, i_val, n_val, residue=None, where=""):
    if not cfg_debug:
        return
    if i_val > n_val + INVARIANT_TOL:
        raise InvariantViolation(f"I <= <b^dag b> violated{where}: I={i_val:.17g}, <b^dag b>={n_val:.17g}")
    if residue is not None and residue >= NORM_TOL:
        raise InvariantViolation(f"normalization residue {residue:.3e} >= {NORM_TOL:g}{where}")


# drivers

def _run_sweep_k(cfg, debug, threads):
    ks = cfg.values("sweep", "k", real=True)
    settings = _settings(cfg)
    fid = cfg.text("fidelity", "parity", "none").lower()
    points = [(k, s) for s in settings for k in ks]

    def one(pt):
        k, s = pt
        st = conditional_state(_system(cfg, k=k), s)
        i_val, n_val, res = _pure_row(st)
        _check(debug, i_val, n_val, res, f" at k={k:g}")
        row = [k, *_setting_columns(s), i_val, n_val, n_val - i_val]
        if fid != "none":
            lam, f = optimize_lambda(st, fid)
            row += [f, lam.real, lam.imag]
        return row

    header = ["k", *SETTING_HEADER, "I", "mean_excitations", "gap"]
    if fid != "none":
        header += ["F", "lambda_re", "lambda_im"]
    return ExperimentResult(header, _pmap(one, points, threads))


def _run_sweep_x_theta(cfg, debug, threads):
    params = _system(cfg)
    xs = cfg.values("sweep", "x", real=True)
    thetas = cfg.values("sweep", "theta", [0.0], real=True)
    points = [(x, t) for t in thetas for x in xs]

    def one(pt):
        x, t = pt
        i_val, n_val, res = _pure_row(conditional_state(params, Homodyne(x, t)))
        _check(debug, i_val, n_val, res, f" at x={x:g}, theta={t:g}")
        return [x, t, i_val, n_val, n_val - i_val]

    out = ExperimentResult(["x", "theta", "I", "mean_excitations", "gap"], _pmap(one, points, threads))
    if cfg.flag("analysis", "find_crossing"):
        cthetas = cfg.values("analysis", "crossing_theta", [0.0, math.pi / 4, math.pi / 2], real=True)
        cxs = cfg.values("analysis", "crossing_x", xs, real=True)
        out.manifest["crossing"] = crossing_report(params, cthetas, cxs, threads)
    if cfg.flag("analysis", "fit_sinusoid"):
        fx = cfg.value("analysis", "fit_x", 1.42701, real=True)
        fth = cfg.values("analysis", "fit_theta", list(np.linspace(0, 2 * np.pi, 73)[:-1]), real=True)
        vals = _pmap(lambda t: measure_I(conditional_state(params, Homodyne(fx, t))), fth, threads)
        fit = fit_sinusoid(fth, vals)
        fit.update({"x": fx, "theta": [float(t) for t in fth], "I": vals})
        out.manifest["sinusoid_fit"] = fit
    return out


def _run_sweep_sigma(cfg, debug, threads):
    if cfg.text("measurement", "type", "heterodyne").lower() != "heterodyne":
        raise ConfigError("[measurement] type: sweep-sigma requires heterodyne")
    cfg.sections.setdefault("measurement", {})["type"] = "heterodyne"
    return _run_sweep_k(cfg, debug, threads)


def _run_wigner_grid(cfg, debug, threads):
    params = _system(cfg)
    settings = _settings(cfg)
    if len(settings) != 1:
        raise ConfigError("[measurement]: wigner-grid needs exactly one setting")
    st = conditional_state(params, settings[0])
    i_val, n_val, res = _pure_row(st)
    _check(debug, i_val, n_val, res)
    re, im = _grid(cfg)
    w = wigner_grid([st], [1.0], re, im)
    rows = [[float(a), float(b), float(w[p, q])] for p, a in enumerate(re) for q, b in enumerate(im)]
    out = ExperimentResult(["k", *SETTING_HEADER, "I", "mean_excitations", "gap", "W_min", "W_max"],
                           [[params.k, *_setting_columns(settings[0]), i_val, n_val, n_val - i_val,
                             float(w.min()), float(w.max())]])
    out.wigner_header = ["re", "im", "W"]
    out.wigner_rows = rows
    return out


def _run_fidelity_opt(cfg, debug, threads):
    params = _system(cfg)
    settings = _settings(cfg)
    parity = cfg.text("fidelity", "parity", "even").lower()

    def one(s):
        st = conditional_state(params, s)
        i_val, n_val, res = _pure_row(st)
        _check(debug, i_val, n_val, res)
        lam, f = optimize_lambda(st, parity)
        return [*_setting_columns(s), i_val, n_val, f, lam.real, lam.imag]

    out = ExperimentResult([*SETTING_HEADER, "I", "mean_excitations", "F", "lambda_re", "lambda_im"],
                           _pmap(one, settings, threads))
    if cfg.has("fidelity", "mu"):
        mus = cfg.values("fidelity", "mu", real=True)
        re_vals = cfg.values("fidelity", "lambda_re", list(np.linspace(0, 4, 81)), real=True)
        st = conditional_state(params, settings[0])
        joint = evolve_joint(params, 2, tail_tol=None)
        d = joint.weights * measurement_amplitude(settings[0], joint.photon_numbers)
        weights = (np.abs(st.weights) ** 2).tolist()
        curves = {}
        for mu in mus:
            simple = simplified_state(d[0], d[1], d[2], mu, joint.amplitudes)
            curves[f"{mu:.6g}"] = fidelity_curve(simple, re_vals, 0.0, parity).tolist()
        out.manifest["simplified"] = {"lambda_re": re_vals, "curves": curves,
                                      "coefficients_squared": weights}
    return out


def _noise(cfg, kappa, seed) -> NoiseParams:
    try:
        return NoiseParams(kappa=kappa, dtau=cfg.value("noise", "dtau", DEFAULT_DTAU, real=True),
                           n_traj=cfg.integer("noise", "n_traj", 500), seed=seed)
    except ValueError as exc:
        raise ConfigError(f"[noise]: {exc}") from None


def _dissipative_rows(cfg, debug, threads, nbars):
    params = _system(cfg)
    settings = _settings(cfg)
    if len(settings) != 1:
        raise ConfigError("[measurement]: dissipative runs need exactly one setting")
    setting = settings[0]
    kappas = cfg.values("noise", "kappa", real=True)
    n_max = cfg.integer("noise", "n_max", 0) or None
    want_w = cfg.has("wigner", "re") or cfg.flag("wigner", "enabled")
    header = ["nbar", "kappa", "I", "mean_excitations", "gap", "se_I", "se_mean_excitations",
              "se_gap", "photons", "se_photons", "photons_expected", "W_min"]
    out = ExperimentResult(header)
    if want_w:
        re, im = _grid(cfg)
        out.wigner_header = ["nbar", "kappa", "re", "im", "W"]
        out.wigner_rows = []
    for nbar in nbars:
        init = ThermalInit(params.beta, nbar) if nbar > 0 else None
        for kappa in kappas:
            noise = _noise(cfg, kappa, cfg.seed)
            try:
                trajs = run_ensemble(params, noise, init, n_max=n_max, threads=threads)
            except ValueError as exc:
                raise ConfigError(f"[noise]: {exc}") from None
            mix = ensemble_condition(trajs, setting)
            stats = mixture_statistics(mix)
            _check(debug, stats.I, stats.mean_excitations, None, f" at kappa={kappa:g}")
            ph, se_ph = mean_photon_number(trajs)
            w_min = float("nan")
            if want_w:
                w = mixture_wigner(mix, re, im)
                w_min = float(w.min())
                out.wigner_rows += [[nbar, kappa, float(a), float(b), float(w[p, q])]
                                    for p, a in enumerate(re) for q, b in enumerate(im)]
            out.rows.append([nbar, kappa, stats.I, stats.mean_excitations, stats.gap, stats.se_I,
                             stats.se_mean_excitations, stats.se_gap, ph, se_ph,
                             abs(params.alpha) ** 2 * math.exp(-kappa * params.tau), w_min])
    return out


def _run_dissipative(cfg, debug, threads):
    return _dissipative_rows(cfg, debug, threads, [0.0])


def _run_thermal(cfg, debug, threads):
    nbars = cfg.values("init", "nbar", [0.0, 1.0], real=True)
    if any(n < 0 for n in nbars):
        raise ConfigError("[init] nbar: must be >= 0")
    return _dissipative_rows(cfg, debug, threads, nbars)


def _run_subtraction(cfg, debug, threads):
    operator = cfg.text("subtraction", "operator", "creation")
    if cfg.has("subtraction", "table"):
        path = Path(cfg.text("subtraction", "table"))
        if not path.is_absolute() and cfg.path is not None:
            path = cfg.path.parent / path
        table = read_table(path)
    else:
        deltas = cfg.values("subtraction", "delta", list(np.linspace(0, 3, 31)), real=True)
        table = synthetic_table(deltas,
                                r_rate=cfg.value("subtraction", "r_rate", 0.5, real=True),
                                nbar0=cfg.value("subtraction", "nbar0", 0.01, real=True),
                                heat_rate=cfg.value("subtraction", "heat_rate", 1.0, real=True))
    try:
        rows, best = detuning_sweep(table, operator, threads)
    except ValueError as exc:
        raise ConfigError(f"[subtraction]: {exc}") from None
    for d, i_val, n_val in rows:
        _check(debug, i_val, n_val, None, f" at delta={d:g}")
    out = ExperimentResult(["delta", "I", "mean_excitations"], [list(r) for r in rows])
    out.manifest["argmax_I"] = {"index": best, "delta": rows[best][0], "I": rows[best][1]}
    return out


RUNNERS = {
    "sweep-k": _run_sweep_k,
    "sweep-x-theta": _run_sweep_x_theta,
    "sweep-sigma": _run_sweep_sigma,
    "wigner-grid": _run_wigner_grid,
    "fidelity-opt": _run_fidelity_opt,
    "dissipative": _run_dissipative,
    "thermal": _run_thermal,
    "subtraction": _run_subtraction,
}


def run_experiment(cfg: ExperimentConfig, debug: bool = False, threads: int = 1) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg, debug, threads)
