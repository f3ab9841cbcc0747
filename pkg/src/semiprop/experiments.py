"""Batch experiments: kernel sweeps, rate fits, stationary-phase and flow checks.

Configuration is an INI file read with :mod:`configparser`.  Every key is
listed in :data:`CONFIG_SCHEMA`; unknown sections or keys are errors.
Reports are deterministic: rows are written in configuration order and
contain no timestamps.
"""
from __future__ import annotations

import configparser
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .flow import (SymplecticityError, auxiliary_matrices, integrate_batch, symplectic_residuals)
from .hamiltonians import HamiltonianModel, builtin_model
from .herman_kluk import PhaseSpaceQuadrature, hk_kernel, propagate_hk
from .reference import (BandError, GridSpec, free_kernel, hyperbolic_kernel, kernel_column,
                        mehler_kernel, split_step_propagate)
from .stationary_phase import Jet, oracle_quadrature, sp_expansion, validate_parameters
from .van_vleck import ehrenfest_diagnostics, find_branches, vanvleck_kernel

__all__ = [
    "ConfigError",
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "RateFit",
    "load_config",
    "parse_config",
    "fit_rate",
    "closed_form_kernel",
    "model_potential",
    "run_sweep",
    "write_sweep",
    "statphase_family",
    "statphase_check",
    "flow_check",
    "propagate_file",
]

log = logging.getLogger(__name__)

METHODS = ("hk", "vanvleck", "split_step", "closed_form")
CLOSED_FORM_TOL = 1e-12


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _floats(s: str) -> list:
    return [float(v) for v in s.replace(",", " ").split()]


def _ints(s: str) -> list:
    return [int(v) for v in s.replace(",", " ").split()]


def _words(s: str) -> list:
    return s.replace(",", " ").split()


def _points(s: str) -> list:
    out = []
    for item in s.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        x, _, y = item.partition(":")
        if not y:
            raise ConfigError(f"point {item!r} must be written x:y")
        out.append((float(x), float(y)))
    return out


# section -> key -> (parser, default, help)
CONFIG_SCHEMA = {
    "model": {
        "name": (str, "free", "builtin model: free, harmonic, inverted_harmonic, quartic"),
        "params": (_floats, "", "model parameters (frequencies, gamma, or lambda [dim])"),
    },
    "sweep": {
        "hbar": (_floats, "0.1", "strictly decreasing values in (0, 1]"),
        "t": (_floats, "", "list of times (alternative to ehrenfest_c)"),
        "ehrenfest_c": (float, "", "time rule t = c log(1/hbar), c > 0"),
        "points": (_points, "0.3:0.2", "evaluation points x:y separated by commas"),
        "methods": (_words, "vanvleck closed_form", "subset of hk vanvleck split_step closed_form"),
        "search_box": (_floats, "-10 10", "momentum range of the branch search"),
        "order": (int, "1", "number of hbar terms in the Van Vleck series"),
        "tol": (float, "1e-10", "root and flow tolerance"),
        "min_order": (float, "", "pass threshold for fitted error orders"),
        "max_error": (float, "", "pass threshold for relative errors"),
    },
    "quadrature": {
        "spacing_factor": (float, "0.3333333333333333", "HK node spacing in units of sqrt(hbar)"),
        "tol": (float, "1e-10", "Gaussian tail tolerance for the HK box"),
        "p_box": (float, "10", "HK momentum scan range"),
    },
    "reference": {
        "length": (float, "16", "split-step box length, centred at 0"),
        "p_max": (float, "9", "grid Nyquist momentum"),
        "band": (_floats, "-6 6", "flat band of the kernel-column window"),
        "taper": (float, "1", "window roll-off width"),
        "steps": (int, "4000", "split-step time steps"),
    },
    "statphase": {
        "mu": (float, "0", "Hessian growth exponent"),
        "nu": (float, "0", "cubic growth exponent"),
        "sigma": (float, "0", "inverse-Hessian growth exponent"),
        "k": (_ints, "1 2 3", "expansion lengths"),
        "hbar": (_floats, "0.0625 0.03125 0.015625 0.0078125 0.00390625 0.001953125 0.0009765625",
                  "hbar values"),
        "support": (_floats, "-0.3 0.5", "amplitude support before scaling by hbar^rho"),
        "gauss_width": (float, "0.09", "Gaussian factor of the amplitude profile"),
        "tol": (float, "1e-12", "oracle relative tolerance"),
    },
    "propagate": {
        "input": (str, "", "wave-function file"),
        "t": (float, "1", "propagation time"),
        "method": (_words, "hk", "hk and/or split_step"),
        "steps": (int, "2000", "split-step steps"),
    },
    "flow": {
        "models": (_words, "free harmonic inverted_harmonic quartic", "builtin models to sample"),
        "n_traj": (int, "50", "trajectories in total"),
        "t_max": (float, "5", "times drawn from [-t_max, t_max]"),
        "box": (float, "2", "initial points drawn from [-box, box]^2d"),
    },
}

DEFAULT_PARAMS = {"free": (), "harmonic": (1.0,), "inverted_harmonic": (1.0,), "quartic": (0.1,)}


def config_help() -> str:
    lines = ["configuration keys (INI sections):"]
    for sec, keys in CONFIG_SCHEMA.items():
        lines.append(f"  [{sec}]")
        for k, (_, default, text) in keys.items():
            d = f" (default: {default})" if default != "" else ""
            lines.append(f"    {k}: {text}{d}")
    return "\n".join(lines)


def parse_config(text_or_sections) -> dict:
    """Parse INI text (or a dict of dicts of strings) into typed sections with defaults."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if isinstance(text_or_sections, str):
        cp.read_string(text_or_sections)
    else:
        cp.read_dict({s: {k: str(v) for k, v in kv.items()} for s, kv in text_or_sections.items()})
    out = {}
    for sec in cp.sections():
        if sec not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in CONFIG_SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    for sec, keys in CONFIG_SCHEMA.items():
        out[sec] = {}
        for key, (conv, default, _) in keys.items():
            raw = cp[sec][key] if cp.has_option(sec, key) else default
            if raw == "":
                out[sec][key] = None
                continue
            try:
                out[sec][key] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


@dataclass
class ExperimentConfig:
    """Validated sweep configuration."""

    model: str
    params: tuple
    hbars: tuple
    times: Optional[tuple]
    ehrenfest_c: Optional[float]
    points: tuple
    methods: tuple
    search_box: tuple = (-10.0, 10.0)
    order: int = 1
    tol: float = 1e-10
    spacing_factor: float = 1 / 3
    quad_tol: float = 1e-10
    p_box: float = 10.0
    ref_length: float = 16.0
    ref_pmax: float = 9.0
    ref_band: tuple = (-6.0, 6.0)
    ref_taper: float = 1.0
    ref_steps: int = 4000
    min_order: Optional[float] = None
    max_error: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        h = np.asarray(self.hbars, dtype=float)
        if h.size == 0 or np.any(h <= 0) or np.any(h > 1) or np.any(np.diff(h) >= 0):
            raise ConfigError(f"hbar values must lie in (0, 1] and strictly decrease, got {self.hbars}")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if self.ehrenfest_c is not None:
            if self.times:
                raise ConfigError("give either t or ehrenfest_c, not both")
            if not self.ehrenfest_c > 0:
                raise ConfigError("ehrenfest_c must be > 0")
        elif not self.times:
            raise ConfigError("a time list or ehrenfest_c is required")
        if not self.points:
            raise ConfigError("at least one evaluation point is required")
        if len(self.search_box) != 2 or self.search_box[1] <= self.search_box[0]:
            raise ConfigError("search_box must be two increasing numbers")
        if self.order < 1:
            raise ConfigError("order must be >= 1")

    @classmethod
    def from_sections(cls, sec: dict, seed: int = 0) -> "ExperimentConfig":
        m, s, q, r = sec["model"], sec["sweep"], sec["quadrature"], sec["reference"]
        name = m["name"]
        params = tuple(m["params"]) if m["params"] is not None else DEFAULT_PARAMS.get(name, ())
        return cls(model=name, params=params, hbars=tuple(s["hbar"]),
                   times=tuple(s["t"]) if s["t"] else None, ehrenfest_c=s["ehrenfest_c"],
                   points=tuple(s["points"]), methods=tuple(s["methods"]),
                   search_box=tuple(s["search_box"]), order=s["order"], tol=s["tol"],
                   spacing_factor=q["spacing_factor"], quad_tol=q["tol"], p_box=q["p_box"],
                   ref_length=r["length"], ref_pmax=r["p_max"], ref_band=tuple(r["band"]),
                   ref_taper=r["taper"], ref_steps=r["steps"], min_order=s["min_order"],
                   max_error=s["max_error"], seed=seed)

    def build_model(self) -> HamiltonianModel:
        return builtin_model(self.model, self.params)

    def time_list(self, hbar: float) -> list:
        if self.ehrenfest_c is not None:
            return [self.ehrenfest_c * math.log(1 / hbar)]
        return list(self.times)


@dataclass
class RateFit:
    """Least-squares slope of ``log err`` against ``log hbar``."""

    order: float
    ci_low: float
    ci_high: float
    n_used: int
    status: str  # "fit", "exact" or "insufficient"

    def as_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                for k, v in asdict(self).items()}


def fit_rate(hbars, errors, floors, level: float = 0.95) -> RateFit:
    """Fit ``err ~ hbar^order`` after dropping points within 10x of their floor.

    All points below 10x floor gives status ``"exact"``; fewer than two usable
    points gives ``"insufficient"``.  For 3+ points the interval uses a
    Student-t quantile.
    """
    h = np.asarray(hbars, dtype=float)
    e = np.asarray(errors, dtype=float)
    f = np.broadcast_to(np.asarray(floors, dtype=float), e.shape)
    good = np.isfinite(e) & (e > 10 * f)
    if np.all(np.isfinite(e) & ~good):
        return RateFit(math.inf, math.nan, math.nan, 0, "exact")
    if good.sum() < 2:
        return RateFit(math.nan, math.nan, math.nan, int(good.sum()), "insufficient")
    res = stats.linregress(np.log(h[good]), np.log(e[good]))
    n = int(good.sum())
    if n > 2:
        half = float(stats.t.ppf(0.5 + level / 2, n - 2) * res.stderr)
    else:
        half = math.nan
    return RateFit(float(res.slope), float(res.slope - half), float(res.slope + half), n, "fit")


def closed_form_kernel(model: HamiltonianModel, t: float, x, y, hbar: float):
    """Exact kernel for the quadratic builtin models in d = 1, else ``None``."""
    if model.name == "free":
        return complex(free_kernel(t, x, y, hbar))
    if model.dim != 1:
        return None
    if model.name == "harmonic":
        return complex(mehler_kernel(t, x[0], y[0], model.params[0], hbar))
    if model.name == "inverted_harmonic":
        return complex(hyperbolic_kernel(t, x[0], y[0], model.params[0], hbar))
    return None


def model_potential(model: HamiltonianModel) -> Optional[Callable]:
    """``V(q)`` of a builtin ``|p|^2/2 + V`` model for the grid solver (``None`` if free)."""
    name, p = model.name, model.params
    if name == "free":
        return None
    if name in ("harmonic", "inverted_harmonic"):
        k = (1.0 if name == "harmonic" else -1.0) * np.asarray(p, dtype=float) ** 2
        return lambda *q: 0.5 * sum(ki * qi * qi for ki, qi in zip(k, q))
    if name == "quartic":
        lam = float(p[0])

        def V(*q):
            r = sum(qi * qi for qi in q)
            return 0.5 * r + lam * r * r
        return V
    raise ValueError(f"no potential form for model {name!r}")


# ---------------------------------------------------------------------------
# sweep


def _column(cfg: ExperimentConfig, model, t, y, hbar, cache):
    key = (hbar, t, y)
    if key not in cache:
        n = int(2 ** math.ceil(math.log2(cfg.ref_length * cfg.ref_pmax / (math.pi * hbar))))
        L = cfg.ref_length
        grid = GridSpec.from_bounds(-L / 2, L / 2, n, hbar)
        V = model_potential(model)
        kc = kernel_column(V, t, y, grid, cfg.ref_steps, band=cfg.ref_band, taper=cfg.ref_taper)
        # self-convergence floor from one step doubling
        kc2 = kernel_column(V, t, y, grid, 2 * cfg.ref_steps, band=cfg.ref_band, taper=cfg.ref_taper)
        cache[key] = (kc, kc2)
    return cache[key]


def _cell(cfg: ExperimentConfig, model, hbar, t, x, y, cache) -> list:
    """Rows for one (hbar, t, x, y): one per method, errors against the reference."""
    xv, yv = np.array([x]), np.array([y])
    values, floors, notes = {}, {}, {}
    diag = {"n_branches": None, "cond_B": None, "delta": None, "lambda": None,
            "ehrenfest_margin": None}
    lo, hi = cfg.search_box
    if "split_step" in cfg.methods:
        lo = min(lo, cfg.ref_band[0] - cfg.ref_taper - 1.0)
        hi = max(hi, cfg.ref_band[1] + cfg.ref_taper + 1.0)
    found = None
    need_branches = "vanvleck" in cfg.methods or "split_step" in cfg.methods
    if need_branches:
        try:
            found = find_branches(model, t, xv, yv, (lo, hi), cfg.tol)
            etas = [float(b.eta[0]) for b in found.branches]
            omega = max([float(np.linalg.norm(b.traj.tangent, 2)) for b in found.branches], default=1.0)
            diag.update(ehrenfest_diagnostics(found.branches, hbar, omega))
            diag["n_branches"] = len(found.branches)
        except Exception as exc:  # recorded, run continues
            notes["vanvleck"] = f"branch search failed: {exc}"
            found = None
    kc = None
    if "split_step" in cfg.methods:
        try:
            kc, kc2 = _column(cfg, model, t, y, hbar, cache)
            if found is not None and not kc.certify(etas):
                raise BandError(f"branch momenta {np.round(etas, 4)} not certified by band {kc.band}")
            values["split_step"] = complex(kc.value_at(x))
            ref2 = complex(kc2.value_at(x))
            floors["split_step"] = abs(values["split_step"] - ref2) / abs(ref2)
        except Exception as exc:
            notes["split_step"] = str(exc)
    for m in cfg.methods:
        try:
            if m == "closed_form":
                v = closed_form_kernel(model, t, xv, yv, hbar)
                if v is None:
                    raise ValueError(f"no closed form for {model.name}")
                values[m], floors[m] = v, CLOSED_FORM_TOL
            elif m == "vanvleck":
                if found is None:
                    raise RuntimeError(notes.get("vanvleck", "branch search failed"))
                brs = found.branches
                if kc is not None:
                    brs = [b for b in brs if kc.in_band(b.eta[0])]  # outside-band paths are not in the column
                res = vanvleck_kernel(brs, hbar, cfg.order)
                values[m], floors[m] = res.value, 100 * cfg.tol
                if res.no_classical_path:
                    notes[m] = "no classical path"
            elif m == "hk":
                if kc is not None and found is not None and not all(kc.in_band(e) for e in etas):
                    raise BandError("HK includes every branch; some lie outside the reference band")
                quad = PhaseSpaceQuadrature.for_kernel(model, t, xv, yv, hbar, tol=cfg.quad_tol,
                                                       p_box=cfg.p_box, spacing_factor=cfg.spacing_factor)
                values[m], floors[m] = complex(hk_kernel(model, t, xv, yv, quad, hbar)), 1e-8
        except Exception as exc:
            notes[m] = str(exc)
    ref = "closed_form" if "closed_form" in values else ("split_step" if "split_step" in values else None)
    rows = []
    for m in cfg.methods:
        v = values.get(m)
        err = tol = None
        if v is not None and ref is not None and m != ref:
            rv = values[ref]
            err = abs(v - rv) / abs(rv) if rv != 0 else abs(v)
            tol = max(floors[m], floors[ref])
        rows.append({"hbar": hbar, "t": t, "x": x, "y": y, "method": m,
                     "re": None if v is None else v.real, "im": None if v is None else v.imag,
                     "reference": ref if m != ref else "", "rel_error": err, "tolerance": tol,
                     **diag, "status": notes.get(m, "ok" if v is not None else "failed")})
    return rows


def run_sweep(cfg: ExperimentConfig, threads: int = 1):
    """Evaluate every (hbar, t, x, y, method) cell; returns ``(rows, summary)``."""
    model = cfg.build_model()
    if model.dim != 1 and ("split_step" in cfg.methods or "hk" in cfg.methods):
        raise ConfigError("split_step and hk sweeps support d = 1")
    cells = [(h, ti, i, x, y) for h in cfg.hbars for ti, t in enumerate(cfg.time_list(h))
             for i, (x, y) in enumerate(cfg.points)]
    caches = {}

    def work(cell):
        h, ti, _, x, y = cell
        t = cfg.time_list(h)[ti]
        log.info("cell hbar=%g t=%g x=%g y=%g", h, t, x, y)
        return _cell(cfg, model, h, t, x, y, caches.setdefault(h, {}))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(work, cells))
    else:
        chunks = [work(c) for c in cells]
    rows = [r for ch in chunks for r in ch]
    return rows, _summarize(cfg, rows)


def _summarize(cfg: ExperimentConfig, rows: list) -> dict:
    fits = []
    n_times = len(cfg.times) if cfg.times else 1
    all_pass = True
    for m in cfg.methods:
        for ti in range(n_times):
            errs, floors, hs, ts = [], [], [], []
            for h in cfg.hbars:
                t = cfg.time_list(h)[ti]
                sel = [r for r in rows if r["method"] == m and r["hbar"] == h and r["t"] == t
                       and r["rel_error"] is not None]
                if not sel:
                    continue
                errs.append(max(r["rel_error"] for r in sel))
                floors.append(max(r["tolerance"] for r in sel))
                hs.append(h)
                ts.append(t)
            if not errs:
                continue
            fit = fit_rate(hs, errs, floors)
            ok = True
            if cfg.max_error is not None:
                ok &= max(errs) <= cfg.max_error
            if cfg.min_order is not None:
                ok &= fit.status == "exact" or (fit.status == "fit" and fit.order >= cfg.min_order)
            all_pass &= ok
            pair = next(r["reference"] for r in rows if r["method"] == m and r["reference"])
            fits.append({"method": m, "reference": pair, "times": ts, "hbar": hs, "max_rel_error": errs,
                         "tolerance": floors, "rate": "exact" if fit.status == "exact" else fit.order,
                         "fit": fit.as_dict(), "pass": bool(ok)})
    failed = sum(r["status"] not in ("ok", "no classical path") for r in rows)
    return {"model": cfg.model, "params": list(cfg.params), "methods": list(cfg.methods),
            "order": cfg.order, "seed": cfg.seed, "fits": fits, "failed_cells": failed,
            "pass": bool(all_pass and fits)}


CSV_FIELDS = ["hbar", "t", "x", "y", "method", "re", "im", "reference", "rel_error", "tolerance",
              "n_branches", "cond_B", "delta", "lambda", "ehrenfest_margin", "status"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(rows: list, path, fields: Sequence[str] = CSV_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def write_json(obj, path) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))
    text = json.dumps(obj, indent=2, sort_keys=True, default=default, allow_nan=True)
    Path(path).write_text(text + "\n")


def write_sweep(rows: list, summary: dict, out_dir, stem: str = "sweep") -> tuple:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(rows, out / f"{stem}.csv")
    write_json(summary, out / f"{stem}.json")
    return out / f"{stem}.csv", out / f"{stem}.json"


# ---------------------------------------------------------------------------
# stationary phase


@dataclass
class StatphaseFamily:
    """Phase and amplitude as jets (for the expansion) and callables (for the oracle)."""

    phase_jet: Jet
    amp_jet: Jet
    phase_fn: Callable
    amp_fn: Callable
    domain: list


def statphase_family(params, hbar: float, support=(-0.3, 0.5), gauss_width: float = 0.09,
                     order: int = 15) -> StatphaseFamily:
    """``phi = hbar^-mu x^2/2 + hbar^-nu x^3`` with amplitude ``u(x / hbar^rho)``.

    ``u`` is a compact bump on ``support`` times a Gaussian of width
    ``gauss_width``, normalised to ``u(0) = 1``.  The Gaussian keeps the
    second critical point of the cubic away from the bulk of the amplitude.
    On the scaled support the cubic term needs no extra cutoff.
    """
    a, b = support
    c, w = 0.5 * (a + b), 0.5 * (b - a)
    ga = gauss_width
    const = 1.0 / (1.0 - (c / w) ** 2) - 1.0
    L = hbar ** params.rho
    c2, c3 = hbar ** -params.mu, hbar ** -params.nu

    def prof_jet(X):
        s = (X - c) / w
        return (1 - (1 - s * s).reciprocal() - X * X / (2 * ga * ga) + const).exp()

    def prof(x):
        s = (x - c) / w
        if abs(s) >= 1:
            return 0.0
        return math.exp(1 - 1 / (1 - s * s) - x * x / (2 * ga * ga) + const)

    X = Jet.variable(0, 1, order)
    return StatphaseFamily(
        phase_jet=0.5 * c2 * X * X + c3 * X * X * X,
        amp_jet=prof_jet(X / L),
        phase_fn=lambda x: 0.5 * c2 * x * x + c3 * x ** 3,
        amp_fn=lambda x: prof(x / L),
        domain=[(a * L, b * L)])


def statphase_check(mu: float, nu: float, sigma: float, ks=(1, 2, 3), hbars=None,
                    support=(-0.3, 0.5), gauss_width: float = 0.09, tol: float = 1e-12) -> dict:
    """Fit the decay of ``|sp_expansion(k) - oracle|`` in hbar for each k.

    A fit passes when its exponent is at least ``k (1 - 5mu - 6sigma - 2nu) - 0.1``.
    """
    params = validate_parameters(mu, nu, sigma)
    if hbars is None:
        hbars = 2.0 ** -np.arange(4, 11)
    hbars = [float(h) for h in hbars]
    oracle = []
    fams = []
    for h in hbars:
        fam = statphase_family(params, h, support, gauss_width, order=max(15, 6 * max(ks)))
        fams.append(fam)
        oracle.append(oracle_quadrature(fam.phase_fn, fam.amp_fn, h, fam.domain, tol=tol))
    results = []
    for k in ks:
        errs, floors = [], []
        for h, fam, orc in zip(hbars, fams, oracle):
            e = sp_expansion(fam.phase_jet, fam.amp_jet, h, k, params)
            errs.append(abs(e.value - orc.value))
            floors.append(max(orc.error, 1e-16 * abs(orc.value)))
        fit = fit_rate(hbars, errs, floors)
        floor = k * params.exponent_gain - 0.1
        ok = fit.status == "fit" and fit.order >= floor
        results.append({"k": k, "errors": errs, "oracle_error": floors, "fit": fit.as_dict(),
                        "predicted_error_exponent": k * params.exponent_gain + params.rho,
                        "required": floor, "pass": bool(ok)})
    return {"mu": mu, "nu": nu, "sigma": sigma, "rho": params.rho,
            "exponent_gain": params.exponent_gain, "hbar": hbars,
            "oracle_converged": all(o.converged for o in oracle),
            "cubic_window": "identity on the amplitude support", "results": results,
            "pass": all(r["pass"] for r in results)}


# ---------------------------------------------------------------------------
# flow check and propagation


def flow_check(models: Sequence[str] = ("free", "harmonic", "inverted_harmonic", "quartic"),
               n_traj: int = 50, t_max: float = 5.0, box: float = 2.0, seed: int = 0,
               tol: float = 1e-10) -> tuple:
    """Symplectic and ``Y_t`` diagnostics for random trajectories spread over ``models``."""
    rng = np.random.default_rng(seed)
    rows = []
    per = [n_traj // len(models) + (i < n_traj % len(models)) for i in range(len(models))]
    for name, n in zip(models, per):
        model = builtin_model(name, DEFAULT_PARAMS.get(name, ()))
        d = model.dim
        for _ in range(n):
            z0 = rng.uniform(-box, box, 2 * d)
            t = float(rng.uniform(-t_max, t_max))
            rec = integrate_batch(model, z0[None, :], t, tol).record(0)
            res = symplectic_residuals(rec.A, rec.B, rec.C, rec.D)
            Y = rec.A + rec.D + 1j * (rec.B - rec.C)
            Z = rec.A - rec.D + 1j * (rec.B + rec.C)
            yres = float(np.abs(Y.conj().T @ Y - Z.conj().T @ Z - 4 * np.eye(d)).max())
            smin = float(np.linalg.svd(Y, compute_uv=False).min())
            try:
                auxiliary_matrices(rec)
                status = "ok"
            except SymplecticityError as exc:
                status = str(exc)
            rows.append({"model": name, "t": t, **{f"z0_{i}": float(v) for i, v in enumerate(z0)},
                         **res, "Y_resid": yres, "Y_smin": smin, "status": status})
    worst = {k: max(r[k] for r in rows) for k in ("AtC", "BtD", "AtD_CtB", "det", "Y_resid")}
    worst["Y_smin"] = min(r["Y_smin"] for r in rows)
    ok = (max(worst[k] for k in ("AtC", "BtD", "AtD_CtB", "det")) <= 1e-7
          and worst["Y_resid"] <= 1e-6 and worst["Y_smin"] >= 2 - 1e-6)
    return rows, {"n_traj": len(rows), "seed": seed, "worst": worst, "pass": bool(ok)}


def propagate_file(model: HamiltonianModel, psi0, t: float, methods=("hk",), steps: int = 2000,
                   quad_tol: float = 1e-10, spacing_factor: float = 1 / 3) -> dict:
    """Propagate a wave function by each method; relative L2 differences between methods."""
    out = {}
    for m in methods:
        if m == "hk":
            quad = PhaseSpaceQuadrature.for_wavefunction(psi0, tol=quad_tol, spacing_factor=spacing_factor)
            out[m] = propagate_hk(model, psi0, t, quad=quad)
        elif m == "split_step":
            out[m] = split_step_propagate(model_potential(model), psi0, t, steps)
        else:
            raise ConfigError(f"unknown propagation method {m!r}")
    return out
