"""Command-line runner for the optomech_lab experiments.

Usage
-----
``optomech-lab list``
    Print the registered experiments and their parameters.
``optomech-lab run CONFIG [--set section.key=value ...] [--seed N] [--out DIR]``
    Run the experiment described by an INI config (or by the
    ``manifest.json`` of an earlier run) and write its artifacts.

Config files
------------
A ``[run]`` section names the experiment and may give ``seed`` and
``output_dir``.  A ``[parameters]`` section overrides the experiment's
defaults, which reproduce the reference figure parameters.  Unknown
sections or keys are rejected, so a typo never falls back silently to a
default.  Example::

    [run]
    experiment = cat-chsh
    seed = 0

    [parameters]
    v_values = 1, 3, 5

Outputs
-------
Every run writes ``summary.json`` (headline numbers with units, no wall
time, so identical inputs give byte-identical files), one or more CSV
tables with 17 significant digits, and ``manifest.json`` holding the
resolved parameters, package version, seed, wall time and SHA-256 of each
artifact.  Passing the manifest back to ``run`` reproduces the artifacts.

Exit codes
----------
0 success, 2 configuration error, 3 model or stability error, 4 accuracy
error, 1 any other library error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from . import __version__
from .errors import AccuracyError, ArgumentError, ConfigError, ModelError, OptomechError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_ACCURACY = 4

RUN_KEYS = ("experiment", "seed", "output_dir")
SECTIONS = ("run", "parameters")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def q(value, unit: str) -> dict:
    """A JSON quantity ``{"value": ..., "unit": ...}``."""
    return {"value": _plain(value), "unit": unit}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_csv(path, header, columns, comments: Optional[dict] = None) -> None:
    """Write equal-length columns as CSV with 17 significant digits."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k} = {v}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Experiment registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    """A named runnable with typed defaults.

    ``run(params, seed, out_dir)`` writes its tables into ``out_dir`` and
    returns the summary mapping.
    """

    name: str
    description: str
    defaults: Dict[str, object]
    run: Callable


REGISTRY: Dict[str, Experiment] = {}


def experiment(name: str, description: str, **defaults):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, description, defaults, fn)
        return fn
    return wrap


def _floats(values) -> list:
    return [float(v) for v in values]


# -- steady-state optomechanics ------------------------------------------------


@experiment("steady2", "two-mode steady state and its approach from a thermal start",
            temperature=0.4, detuning_ratio=0.05, mass=5e-12, gamma=10.0,
            t_max_decay=30.0, points=201)
def run_steady2(p, seed, out):
    from . import entanglement as en
    from . import gaussian_core as gc
    from . import models as md
    from . import presets as ps

    mech, cav = ps.optomech_pair(p["temperature"], p["detuning_ratio"], p["mass"], p["gamma"])
    model = md.build_two_mode(mech, cav)
    gc.require_stable(model.K)
    V_ss = gc.solve_lyapunov(model.K, model.D)
    rate = gc.slowest_decay_rate(model.K)
    t = np.linspace(0.0, p["t_max_decay"] / rate, int(p["points"]))
    V0 = np.diag([mech.v_thermal / 2] * 2 + [0.5] * 2)
    traj = gc.propagate_covariance(model.K, model.D, V0, t, method="exact")
    iu = np.triu_indices(4)
    names = [f"V{i}{j}" for i, j in zip(*iu)]
    write_csv(out / "covariance.csv", ["t_s"] + names,
              [t] + [traj.covariances[:, i, j] for i, j in zip(*iu)],
              {"basis": "q,p,x,y (mirror, cavity)"})
    rel = np.max(np.abs(traj.covariances[-1] - V_ss)) / np.max(np.abs(V_ss))
    return {
        "log_negativity": q(en.log_negativity(V_ss, [0], [1]), "ebit"),
        "negativity_exponent": q(en.negativity_exponent(V_ss, [0], [1]), "1"),
        "slowest_decay_rate": q(rate, "1/s"),
        "propagated_vs_lyapunov_rel": q(rel, "1"),
        "lyapunov_residual": q(gc.lyapunov_residual(model.K, model.D, V_ss), "1"),
        "min_symplectic_eigenvalue": q(gc.min_symplectic_eigenvalue(V_ss), "1"),
    }


@experiment("steady3", "three-mode hybrid steady state and pairwise entanglement",
            temperature=10e-6, detuning_ratio=2.0, rate=100.0, omega_b_ratio=1.0)
def run_steady3(p, seed, out):
    from . import entanglement as en
    from . import gaussian_core as gc
    from . import models as md
    from . import presets as ps

    mech, cav, bec = ps.hybrid_set(p["detuning_ratio"], p["temperature"], p["rate"],
                                   omega_b_ratio=p["omega_b_ratio"])
    model = md.build_three_mode(mech, cav, bec)
    gc.require_stable(model.K)
    V = gc.solve_lyapunov(model.K, model.D)
    write_csv(out / "covariance.csv", [f"c{j}" for j in range(6)], list(V.T),
              {"basis": "q,p,x,y,Q,P (mirror, cavity, condensate)"})
    pairs = {"E_MC": ([0], [1]), "E_MA": ([0], [2]), "E_CA": ([1], [2])}
    summary = {k: q(en.log_negativity(V, a, b), "ebit") for k, (a, b) in pairs.items()}
    summary["lyapunov_residual"] = q(gc.lyapunov_residual(model.K, model.D, V), "1")
    return summary


@experiment("tripartite", "one-vs-two log-negativities of the hybrid state over temperature",
            temperatures=(1e-6, 5e-6, 10e-6, 20e-6, 50e-6, 0.05), detuning_ratio=2.0,
            rate=100.0, compute_g_tri=False, restarts=4)
def run_tripartite(p, seed, out):
    from . import entanglement as en
    from . import gaussian_core as gc
    from . import models as md
    from . import presets as ps

    rows = []
    for T in _floats(p["temperatures"]):
        mech, cav, bec = ps.hybrid_set(p["detuning_ratio"], T, p["rate"])
        model = md.build_three_mode(mech, cav, bec)
        gc.require_stable(model.K)
        V = gc.solve_lyapunov(model.K, model.D)
        rep = en.tripartite_report(V, compute_g_tri=p["compute_g_tri"] and T < 1e-3,
                                   restarts=int(p["restarts"]), seed=seed,
                                   symmetry_tol=1e-4)
        g = rep.g_tri if rep.g_tri is not None else float("nan")
        rows.append((T, *rep.e_one_vs_two, rep.genuine, g))
    cols = list(zip(*rows))
    write_csv(out / "tripartite.csv", ["temperature_K", "E_M|CA", "E_C|MA", "E_A|MC",
                                       "genuine", "g_tri"], cols)
    return {
        "temperatures": q(cols[0], "K"),
        "genuine": q(list(cols[4]), "bool"),
        "E_M|CA": q(cols[1], "ebit"),
        "E_C|MA": q(cols[2], "ebit"),
        "E_A|MC": q(cols[3], "ebit"),
    }


# -- photon subtraction ------------------------------------------------------------


@experiment("subtract", "Wigner function of the photon-subtracted mirror",
            temperature=0.4, detuning_ratio=0.05, route="formal", tau=0.9, epsilon=0.7)
def run_subtract(p, seed, out):
    from . import photon_subtract as ph

    b = ph.pair_blocks(p["temperature"], p["detuning_ratio"])
    route = p["route"]
    if route == "formal":
        g = ph.wigner_formal(b)
    elif route == "bs":
        g = ph.wigner_bs(b, p["tau"])
    elif route == "inefficient":
        g = ph.wigner_bs_inefficient(b, p["tau"], p["epsilon"])
    else:
        raise ConfigError(f"parameters.route: unknown route {route!r} "
                          "(choose formal, bs or inefficient)")
    g.to_csv(out / "wigner.csv")
    g.to_raster(out / "wigner.raster")
    return {
        "origin": q(g.origin(), "1/(quadrature^2)"),
        "min": q(g.min, "1/(quadrature^2)"),
        "norm": q(g.norm, "1"),
        "raw_norm": q(g.raw_norm, "1"),
        "formal_origin": q(ph.origin_value(b), "1/(quadrature^2)"),
        "negativity_criterion": q(ph.negativity_criterion(b), "bool"),
    }


@experiment("decay", "origin value of the subtracted state under mechanical damping",
            temperature=0.004, detuning_ratio=0.1, gamma_t_max=0.3, points=301)
def run_decay(p, seed, out):
    from . import photon_subtract as ph
    from . import presets as ps

    mech, _ = ps.optomech_pair(p["temperature"], p["detuning_ratio"])
    b = ph.pair_blocks(p["temperature"], p["detuning_ratio"])
    gt = np.linspace(0.0, p["gamma_t_max"], int(p["points"]))
    w = ph.decay_negativity(b, mech.gamma, mech.nbar, gt / mech.gamma)
    write_csv(out / "decay.csv", ["gamma_t", "W00"], [gt, w],
              {"nbar": f"{mech.nbar:.17g}", "gamma_per_s": f"{mech.gamma:.17g}"})
    tc = ph.first_zero_crossing(gt, w)
    return {
        "W00_initial": q(w[0], "1/(quadrature^2)"),
        "zero_crossing_gamma_t": q(float("nan") if tc is None else tc, "1"),
        "bath_nbar": q(mech.nbar, "1"),
    }


# -- spectra and cooling ------------------------------------------------------------


@experiment("spectra", "mirror displacement spectrum with the condensate",
            detuning_over_kappa=0.5, zeta_factor=0.7, omega_b_ratio=1.0, temperature=300.0,
            w_min=0.5, w_max=1.5, points=4001)
def run_spectra(p, seed, out):
    from scipy.signal import find_peaks

    from . import presets as ps
    from . import spectra as sp
    from .models import BecParams

    mech, cav, _ = ps.spectra_set(temperature=p["temperature"])
    zeta = ps.spectra_reference_zeta(mech, cav, p["zeta_factor"])
    bec = BecParams(omega_b=p["omega_b_ratio"] * mech.omega_m, zeta=zeta)
    w = np.linspace(p["w_min"], p["w_max"], int(p["points"])) * mech.omega_m
    delta = p["detuning_over_kappa"] * cav.kappa
    curve = sp.dns_mechanical(mech, cav, bec, w, delta)
    write_csv(out / "spectrum.csv", ["omega_over_omega_m", "S_q"],
              [w / mech.omega_m, curve.values])
    idx, _ = find_peaks(np.log(curve.values))
    return {
        "zeta": q(zeta, "1/s"),
        "peaks": q(w[idx] / mech.omega_m, "omega_m"),
        "effective_temperature": q(sp.effective_temperature(mech, cav, bec, delta), "K"),
    }


@experiment("cooling", "effective mirror temperature against detuning",
            temperature=300.0, zeta=0.0, omega_b_ratio=1.0, d_min=0.1, d_max=1.5, points=29)
def run_cooling(p, seed, out):
    from . import presets as ps
    from . import spectra as sp
    from .models import BecParams

    mech, cav, _ = ps.spectra_set(temperature=p["temperature"])
    bec = None if p["zeta"] == 0 else BecParams(p["omega_b_ratio"] * mech.omega_m, p["zeta"])
    d = np.linspace(p["d_min"], p["d_max"], int(p["points"]))
    temps = np.array([sp.effective_temperature(mech, cav, bec, x * cav.kappa) for x in d])
    write_csv(out / "cooling.csv", ["delta_over_kappa", "T_eff_K"], [d, temps])
    k = int(np.argmin(temps))
    return {
        "best_delta": q(d[k], "kappa"),
        "min_temperature": q(temps[k], "K"),
        "bath_temperature": q(mech.temperature, "K"),
    }


# -- time-resolved control ------------------------------------------------------------


def _control_system(p):
    from . import control as ct
    from . import presets as ps

    return ct.ControlSystem.from_params(ps.control_set(detuning_ratio=p["detuning_ratio"]))


@experiment("dynamics", "pairwise entanglement after switching on a constant pump",
            detuning_ratio=2.0, t_max_kappa=12.0, points=1201)
def run_dynamics(p, seed, out):
    from . import control as ct

    system = _control_system(p)
    t = np.linspace(0.0, p["t_max_kappa"] / system.kappa, int(p["points"]))
    tr = ct.entanglement_trajectory(system, None, t)
    write_csv(out / "trace.csv", ["kappa_t", "E_MA", "E_CM", "E_CA", "min_nu"],
              [t * system.kappa, tr.e_ma, tr.e_cm, tr.e_ca, tr.min_nu])
    onset = t[np.argmax(tr.e_ma >= tr.e_ma.max() / 2)] if tr.e_ma.max() > 0 else np.nan
    return {
        "E_MA_max": q(tr.e_ma.max(), "ebit"),
        "E_MA_onset": q(onset * system.kappa, "1/kappa"),
        "E_CM_max": q(tr.e_cm.max(), "ebit"),
        "E_CM_peak_time": q(t[np.argmax(tr.e_cm)] * system.kappa, "1/kappa"),
        "physical": q(tr.physical_ok, "bool"),
    }


def _write_modulation(res, out):
    with open(out / "modulation.json", "w") as fh:
        fh.write(res.to_json())
        fh.write("\n")


@experiment("control-short", "optimized pump shape for short-time mirror-atom entanglement",
            detuning_ratio=2.7, j_max=4, restarts=4, maxfev=400)
def run_control_short(p, seed, out):
    from . import control as ct

    system = _control_system(p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = ct.optimize_short_time(system, j_max=int(p["j_max"]), restarts=int(p["restarts"]),
                                     seed=seed, maxfev=int(p["maxfev"]))
    peak, peak_time = ct.unmodulated_peak(system)
    _write_modulation(res, out)
    write_csv(out / "restarts.csv", ["restart", "value"],
              [np.arange(len(res.restarts)),
               [np.nan if r["value"] is None else r["value"] for r in res.restarts]])
    return {
        "objective": q(res.objective, "ebit"),
        "constant_pump_value": q(res.baseline, "ebit"),
        "unmodulated_peak": q(peak, "ebit"),
        "unmodulated_peak_time": q(peak_time * system.kappa, "1/kappa"),
        "ratio_to_peak": q(res.objective / peak, "1"),
        "window": q(res.settings.get("tau", np.nan) * system.kappa, "1/kappa"),
    }


@experiment("control-mono", "long-time entanglement under monochromatic modulation",
            detuning_ratio=2.7, sigma_min=0.76, sigma_max=0.80, points=17)
def run_control_mono(p, seed, out):
    from . import control as ct

    system = _control_system(p)
    sig = np.linspace(p["sigma_min"], p["sigma_max"], int(p["points"])) * system.kappa
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        best, vals = ct.scan_monochromatic(system, sig)
    write_csv(out / "scan.csv", ["sigma_over_kappa", "E_MA_long_time_max"],
              [sig / system.kappa, vals])
    return {
        "best_sigma": q(best / system.kappa, "kappa"),
        "best_value": q(np.nanmax(vals), "ebit"),
    }


@experiment("control-periodic", "optimized periodic pump for long-time entanglement",
            detuning_ratio=2.7, sigma_ratio=0.7825, n_max=8, restarts=2, maxfev=300,
            robust_margin=0.0, max_drop=0.045, start=(), check_robustness=True)
def run_control_periodic(p, seed, out):
    from . import control as ct

    system = _control_system(p)
    n_max = int(p["n_max"])
    starts = []
    if p["start"]:
        c = np.array(_floats(p["start"]))
        if c.size != 2 * n_max:
            raise ConfigError(f"parameters.start: expected {2 * n_max} coefficients, "
                              f"got {c.size}")
        starts.append(c)
    margin = p["robust_margin"] or None
    max_drop = p["max_drop"] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = ct.optimize_periodic(system, p["sigma_ratio"] * system.kappa, n_max=n_max,
                                   restarts=int(p["restarts"]), seed=seed,
                                   maxfev=int(p["maxfev"]), robust_margin=margin,
                                   max_drop=max_drop, starts=starts)
        value = ct.long_time_max(system, res.modulation)
        rob = ct.robustness_check(system, res.modulation) if p["check_robustness"] else None
    _write_modulation(res, out)
    coeffs = np.concatenate([res.modulation.A, res.modulation.B])
    write_csv(out / "coefficients.csv", ["index", "coefficient"],
              [np.arange(coeffs.size), coeffs])
    summary = {
        "objective": q(res.objective, "ebit"),
        "long_time_max": q(value, "ebit"),
        "monochromatic_value": q(res.baseline, "ebit"),
    }
    if rob is not None:
        summary["robustness_drop"] = q(rob["drop"], "1")
        summary["robustness_values"] = q(rob["values"], "ebit")
    return summary


# -- spin probe -------------------------------------------------------------------------


@experiment("spin-probe", "rotor precession signal and its envelope spectrum",
            state="superposition01", ratio=1.0, alpha_re=1.0, alpha_im=0.0, nbar=1.0,
            probe_ratio=0.05, omega_ratio=0.25, g_factor=0.5,
            l_x0=0.0, l_y0=0.0, l_z0=100.0, n_atoms=1000, periods=40.0, points=16000)
def run_spin_probe(p, seed, out):
    from . import spin_probe as sp

    probe = sp.default_probe(p["probe_ratio"], p["omega_ratio"], p["g_factor"])
    rotor = sp.RotorInitial(p["l_x0"], p["l_y0"], p["l_z0"], int(p["n_atoms"]))
    alpha = complex(p["alpha_re"], p["alpha_im"])
    kind = p["state"]
    if kind == "superposition01":
        state = sp.superposition_01(p["ratio"])
    elif kind == "superposition012":
        state = sp.superposition_012(alpha)
    elif kind == "coherent":
        state = sp.coherent_coefficients(alpha)
    elif kind == "thermal":
        state = sp.CantileverState.thermal(p["nbar"])
    else:
        raise ConfigError(f"parameters.state: unknown state {kind!r} (choose superposition01, "
                          "superposition012, coherent or thermal)")
    t = sp.default_time_grid(probe, p["periods"], int(p["points"]))
    tr = sp.lx_expectation(state, rotor, probe, t, check=False)
    env = sp.envelope_spectrum(t, tr.lx, probe.omega_larmor)
    write_csv(out / "lx.csv", ["t_s", "L_x"], [tr.times, tr.lx])
    write_csv(out / "envelope.csv", ["omega_rad_per_s", "magnitude"], [env.omega, env.magnitude])
    return {
        "larmor_frequency": q(probe.omega_larmor, "rad/s"),
        "envelope_peak": q(env.peak() / probe.omega_m, "omega_m"),
        "envelope_amplitude": q(env.amplitude(), "hbar"),
        "significant_lines": q(env.significant_lines(0.05), "count"),
        "max_abs_lx": q(np.abs(tr.lx).max(), "hbar"),
    }


# -- cat engine ---------------------------------------------------------------------------


def _cat(p, v=None):
    from .cat_engine import CatParams

    return CatParams(p["upsilon_t"], p["d"], p["v_thermal"] if v is None else v)


@experiment("cat-chsh", "maximal Bell-CHSH value of the atom-mirror cat against temperature",
            upsilon_t=4.0, d=2.0, v_values=(1.0, 3.0, 5.0, 9.0), theta1_over_pi=1.5)
def run_cat_chsh(p, seed, out):
    from . import cat_engine as ce

    rows = []
    for V in _floats(p["v_values"]):
        r = ce.optimize_chsh(ce.CatParams(p["upsilon_t"], p["d"], V),
                             theta1=p["theta1_over_pi"] * np.pi)
        rows.append((p["d"], V, p["upsilon_t"], r.value, r.theta, r.beta.real, r.beta.imag))
    cols = list(zip(*rows))
    write_csv(out / "chsh.csv", ["d", "V", "upsilon_t", "B_max", "theta_rad", "beta_re",
                                 "beta_im"], cols)
    return {
        "V": q(cols[1], "1"),
        "B_max": q(cols[3], "1"),
        "violates": q([b > 2 for b in cols[3]], "bool"),
    }


@experiment("cat-projected", "log-negativity of the cat projected on phonon pairs",
            upsilon_t=2.5, d=2.0, v_values=(1.0, 2.0, 3.0, 4.0, 5.0), p_values=(0, 1, 2))
def run_cat_projected(p, seed, out):
    from . import cat_engine as ce

    vs = _floats(p["v_values"])
    ps_ = [int(x) for x in p["p_values"]]
    table = np.array([[ce.projected_logneg(k, ce.CatParams(p["upsilon_t"], p["d"], V))
                       for k in ps_] for V in vs])
    write_csv(out / "projected.csv", ["V"] + [f"E_p{k}" for k in ps_],
              [vs] + list(table.T))
    return {"V": q(vs, "1"), "p": q(ps_, "1"), "E_N": q(table, "ebit")}


@experiment("cat-wigner", "conditional mirror Wigner function of the thermal cat",
            upsilon_t=2.0, d=0.0, v_thermal=3.0)
def run_cat_wigner(p, seed, out):
    from . import cat_engine as ce

    params = _cat(p)
    g = ce.conditional_wigner(params)
    g.to_csv(out / "wigner.csv")
    g.to_raster(out / "wigner.raster")
    fid = ce.wigner_fidelity(_cat(p, 1.0), params)
    return {
        "min": q(g.min, "1/(quadrature^2)"),
        "norm": q(g.norm, "1"),
        "raw_norm": q(g.raw_norm, "1"),
        "fidelity_to_pure": q(fid, "1"),
        "entropy_overlap": q(ce.entanglement_entropy(p["upsilon_t"]), "bit"),
    }


@experiment("cat-dissipative", "conditional Wigner function with mirror damping",
            upsilon_t=1.0, d=0.0, v_thermal=5.0, gamma_over_upsilon=0.1)
def run_cat_dissipative(p, seed, out):
    from . import cat_engine as ce

    params = _cat(p)
    g = ce.dissipative_wigner(params, p["gamma_over_upsilon"])
    g.to_csv(out / "wigner.csv")
    g.to_raster(out / "wigner.raster")
    ref = ce.conditional_wigner(params)
    return {
        "min": q(g.min, "1/(quadrature^2)"),
        "undamped_min": q(ref.min, "1/(quadrature^2)"),
        "norm": q(g.norm, "1"),
        "raw_norm": q(g.raw_norm, "1"),
    }


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return n
    return None


def _where(source: str, text: str, section: str, key: str) -> str:
    line = _line_of(text, section, key) if text else None
    return f"{source}:{line}: " if line else f"{source}: "


def coerce(raw: str, default, field: str):
    """Parse ``raw`` into the type of ``default``."""
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s for s in raw.replace(";", ",").split(",") if s.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(s.strip()) for s in items)
        return raw
    except ValueError:
        kind = "boolean" if isinstance(default, bool) else type(default).__name__
        if isinstance(default, tuple):
            kind = "comma-separated list"
        raise ConfigError(f"{field}: cannot parse {raw!r} as {kind}") from None


@dataclass
class RunSpec:
    experiment: str
    parameters: dict
    seed: int
    output_dir: Optional[str]


def _read_manifest(path: Path) -> RunSpec:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid manifest JSON ({exc})") from None
    for key in ("experiment", "parameters", "seed"):
        if key not in data:
            raise ConfigError(f"{path}: manifest is missing required field {key!r}")
    exp = REGISTRY.get(data["experiment"])
    if exp is None:
        raise ConfigError(f"{path}: unknown experiment {data['experiment']!r}")
    params = {}
    for k, v in data["parameters"].items():
        if k not in exp.defaults:
            raise ConfigError(f"{path}: unknown parameter {k!r} for {exp.name}")
        d = exp.defaults[k]
        params[k] = tuple(v) if isinstance(d, tuple) else type(d)(v)
    return RunSpec(exp.name, params, int(data["seed"]), None)


def load_spec(path, overrides=(), seed: Optional[int] = None) -> RunSpec:
    """Resolve a config or manifest plus ``--set`` overrides into a RunSpec.

    Raises
    ------
    ConfigError
        naming the offending field (and line, for INI files).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    if path.suffix == ".json":
        spec = _read_manifest(path)
        text, cp = "", None
    else:
        text = path.read_text()
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(exc).replace("\n", " ")) from None
        spec = None
    raw = {"run": {}, "parameters": {}}
    if cp is not None:
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}] "
                                  f"(allowed: {', '.join(SECTIONS)})")
            raw[section] = dict(cp[section])
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or section not in SECTIONS:
            raise ConfigError(f"--set {item!r}: expected section.key=value with section "
                              f"in {', '.join(SECTIONS)}")
        raw[section][name] = value
    for key in raw["run"]:
        if key not in RUN_KEYS:
            raise ConfigError(f"{_where(str(path), text, 'run', key)}unknown key run.{key}")
    if spec is None:
        if "experiment" not in raw["run"]:
            raise ConfigError(f"{path}: missing required field run.experiment")
        name = raw["run"]["experiment"].strip()
        if name not in REGISTRY:
            raise ConfigError(f"{_where(str(path), text, 'run', 'experiment')}run.experiment: "
                              f"unknown experiment {name!r}")
        spec = RunSpec(name, {}, 0, None)
    elif "experiment" in raw["run"] and raw["run"]["experiment"].strip() != spec.experiment:
        raise ConfigError("run.experiment cannot be changed when re-running a manifest")
    exp = REGISTRY[spec.experiment]
    params = dict(exp.defaults)
    params.update(spec.parameters)
    for key, value in raw["parameters"].items():
        if key not in exp.defaults:
            raise ConfigError(f"{_where(str(path), text, 'parameters', key)}unknown key "
                              f"parameters.{key} for experiment {exp.name} "
                              f"(allowed: {', '.join(exp.defaults)})")
        params[key] = coerce(value, exp.defaults[key], f"parameters.{key}")
    if "seed" in raw["run"]:
        spec.seed = coerce(raw["run"]["seed"], 0, "run.seed")
    if seed is not None:
        spec.seed = int(seed)
    if "output_dir" in raw["run"]:
        spec.output_dir = raw["run"]["output_dir"].strip()
    spec.parameters = params
    return spec


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def execute(spec: RunSpec, out_dir) -> dict:
    """Run ``spec`` into ``out_dir`` and return the manifest."""
    exp = REGISTRY[spec.experiment]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(spec.seed % 2**32)
    start = time.perf_counter()
    summary = exp.run(dict(spec.parameters), spec.seed, out)
    wall = time.perf_counter() - start
    _dump_json({"experiment": exp.name, "seed": spec.seed, "results": summary},
               out / "summary.json")
    artifacts = {f.name: _sha256(f) for f in sorted(out.iterdir())
                 if f.is_file() and f.name != "manifest.json"}
    manifest = {
        "experiment": exp.name,
        "parameters": spec.parameters,
        "seed": spec.seed,
        "version": __version__,
        "wall_time_s": wall,
        "artifacts": artifacts,
    }
    _dump_json(manifest, out / "manifest.json")
    return manifest


def _cmd_list(args) -> int:
    for exp in REGISTRY.values():
        print(f"{exp.name:18s} {exp.description}")
        for k, v in exp.defaults.items():
            shown = ", ".join(str(x) for x in v) if isinstance(v, tuple) else v
            print(f"    {k} = {shown}")
    return EXIT_OK


def _cmd_run(args) -> int:
    spec = load_spec(args.config, args.set or (), args.seed)
    out = args.out or spec.output_dir or f"optomech-out/{spec.experiment}"
    manifest = execute(spec, out)
    print(f"{spec.experiment}: wrote {len(manifest['artifacts'])} artifacts to {out} "
          f"in {manifest['wall_time_s']:.2f} s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optomech-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list experiments and their defaults")
    run = sub.add_parser("run", help="run an experiment from a config or manifest")
    run.add_argument("config", help="INI config file or manifest.json of an earlier run")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config value (repeatable)")
    run.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    run.add_argument("--out", help="output directory (overrides run.output_dir)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = _cmd_list if args.command == "list" else _cmd_run
    try:
        return handler(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except AccuracyError as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except OptomechError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
