"""Scenario pipelines dispatched by the command-line runner.

``prepare`` turns a sweep point into a ready-to-run closure; all
parameter validation happens there so that bad input is caught before
any worker starts.  ``run`` returns ``(outputs, diagnostics)`` and raises
on numerical failure or a violated invariant.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvariantViolation
from .operators import BatteryParams, check_truncation
from .spectra import Bare, Chemical, Flat, Tabulated, Thermal, make_profile

DEFAULT_AMBIENT_G0 = 1e-3
SPECTRUM_LAWS = ("excitonic", "chemical", "thermal", "bare", "tabulated")


@dataclass(frozen=True)
class Prepared:
    kind: str
    inputs: dict
    run: object  # callable(verify: bool) -> (outputs, diagnostics)


def _resolve(base, rel):
    rel = Path(rel)
    return rel if rel.is_absolute() else base.parent / rel


def _battery_params(sec):
    return BatteryParams(**sec)


def _spectrum(cfg, sec, p, default):
    if not sec:
        return default(p)
    law = sec.get("law")
    if law not in SPECTRUM_LAWS:
        raise ConfigError(f"[spectrum].law must be one of {SPECTRUM_LAWS}, got {law!r}")
    if law == "tabulated":
        if "csv" not in sec:
            raise ConfigError("[spectrum]: tabulated law needs 'csv'")
        return Tabulated.from_csv(_resolve(cfg.path, sec["csv"]))
    if "profile" not in sec:
        raise ConfigError(f"[spectrum]: law {law!r} needs a 'profile' table")
    prof = make_profile(sec["profile"])
    T1 = float(sec.get("T1", p.T))
    if law == "excitonic":
        return Chemical(prof, T1, float(sec.get("delta_g", p.delta_mu)))
    if law == "chemical":
        return Chemical(prof, T1, float(sec.get("delta_g", 0.0)))
    if law == "thermal":
        return Thermal(prof, T1)
    return Bare(prof)


def _ambient_default(p):
    return Thermal(Flat(DEFAULT_AMBIENT_G0), p.T)


def _charging_default(p):
    from .battery import default_charging_spectrum

    return default_charging_spectrum(p)


def _require(cond, msg):
    if not cond:
        raise InvariantViolation(msg)


# --------------------------------------------------------------------------
# Battery scenarios
# --------------------------------------------------------------------------

def _battery_steady(cfg, sec):
    from .battery import steady_state_report
    from .davies import kernel_dimension
    from .linalg import check_density

    p = _battery_params(sec["battery"])
    check_truncation(p)
    spec = _spectrum(cfg, sec["spectrum"], p, _charging_default)
    tol = cfg.tolerances

    def run(verify):
        from .battery import battery_generator

        rho, rep = steady_state_report(p, spec)
        out = {
            "trace_distance": rep.trace_distance,
            "p1_numeric": rep.p1_numeric,
            "p1_closed": rep.p1_closed,
        }
        diag = {"truncation_tail": rep.truncation_tail, "residual_closed": rep.residual_closed}
        if verify:
            bg = battery_generator(p, spec)
            check_density(rho)
            diag["kernel_dimension"] = kernel_dimension(bg.total, basis=bg.frame.basis)
            _require(diag["kernel_dimension"] == 1, "stationary state is not unique")
        _require(rep.trace_distance <= tol["trace_distance"],
                 f"trace distance {rep.trace_distance:.3e} to closed form exceeds {tol['trace_distance']:.1e}")
        return out, diag

    return p, run


def _battery_evolve(cfg, sec):
    from .battery import battery_generator, stationary_closed_form
    from .davies import propagate_series
    from .linalg import check_density, trace_distance
    from .operators import conditioned_gibbs

    p = _battery_params(sec["battery"])
    check_truncation(p)
    spec = _spectrum(cfg, sec["spectrum"], p, _charging_default)
    ev = sec["evolve"]
    times = [float(t) for t in ev.get("times", [0.0, 10.0, 100.0, 1000.0])]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ConfigError("[evolve].times must be non-negative and non-decreasing")
    initial = ev.get("initial", "discharged")
    if initial not in ("discharged", "charged"):
        raise ConfigError("[evolve].initial must be 'discharged' or 'charged'")

    def run(verify):
        bg = battery_generator(p, spec)
        rho0 = conditioned_gibbs(p, 0 if initial == "discharged" else 1)
        states = propagate_series(bg.total, rho0, times, basis=bg.frame.basis)
        P1 = bg.frame.P1
        H = bg.frame.H
        out = {
            "times": times,
            "p1": [float(np.trace(P1 @ r).real) for r in states],
            "energy": [float(np.trace(H @ r).real) for r in states],
            "distance_to_stationary": trace_distance(states[-1], stationary_closed_form(p)),
        }
        diag = {}
        if verify:
            for r in states:
                check_density(r, tol=cfg.tolerances["cptp"])
            diag["states_valid"] = True
        return out, diag

    return p, run


def _discharge_rate(cfg, sec):
    from .battery import discharge_rate, sideband_completeness

    p = _battery_params(sec["battery"])
    check_truncation(p)
    spec = _spectrum(cfg, sec["spectrum"], p, _ambient_default)
    tol = cfg.tolerances["rate"]

    def run(verify):
        r = discharge_rate(p, spec)
        out = {"direct": r.direct, "closed": r.closed, "poisson": r.poisson, "asymptotic": r.asymptotic}
        rel = abs(r.direct - r.closed) / max(abs(r.closed), 1e-300)
        diag = {"direct_vs_closed": rel}
        if verify:
            diag["sideband_completeness"] = sideband_completeness(p)
        _require(rel <= tol or abs(r.direct - r.closed) <= 1e-300,
                 f"direct and closed-form rates differ by {rel:.3e} (relative)")
        return out, diag

    return p, run


def _ergotropy(cfg, sec):
    from .thermo import (
        battery_beta_bar_closed_form,
        battery_bound_ergotropy_closed_form,
        battery_entropy_closed_form,
        battery_ergotropy,
        zero_T_work,
    )

    p = _battery_params(sec["battery"])
    check_truncation(p)
    tol = cfg.tolerances["ergotropy"]

    def run(verify):
        r = battery_ergotropy(p)
        bb = battery_beta_bar_closed_form(p)
        out = {
            "W_max": r.W_max,
            "W_bar_max": r.W_bar_max,
            "beta_bar": r.beta_bar,
            "S_state": r.S_state,
            "S_gibbs": r.S_gibbs,
            "edge": r.edge,
            "W_bar_closed_form": battery_bound_ergotropy_closed_form(p, bb),
            "S_closed_form": battery_entropy_closed_form(p, "stationary"),
            "W_step": zero_T_work(p).value,
        }
        diag = {}
        if verify:
            diag["entropy_gap"] = abs(r.S_state - out["S_closed_form"])
        _require(r.W_bar_max >= r.W_max - tol, "bounded ergotropy below ergotropy")
        return out, diag

    return p, run


# --------------------------------------------------------------------------
# Exciton factory
# --------------------------------------------------------------------------

def _factory(cfg, sec):
    from .exciton import ExcitonFactoryParams, HotTemperature, load_mode_table, optimal_delta_mu

    f = dict(sec["factory"])
    if "mode_table" in f:
        if "band_a" in f or "band_b" in f:
            raise ConfigError("[factory]: give either mode_table or band_a/band_b")
        f["band_a"], f["band_b"] = load_mode_table(_resolve(cfg.path, f.pop("mode_table")))
    if "band_a" not in f or "band_b" not in f:
        raise ConfigError("[factory]: band_a and band_b (or mode_table) are required")
    hot = f.get("hot_T", 0.01)
    if isinstance(hot, dict):
        if set(hot) != {"eps", "T"}:
            raise ConfigError("[factory].hot_T table needs exactly 'eps' and 'T'")
        hot = HotTemperature(tuple(hot["eps"]), tuple(hot["T"]))
    f["hot_T"] = hot
    filling = f.pop("filling", None)
    num = int(f.pop("grid_points", 241))
    p = ExcitonFactoryParams(**f)
    tol = cfg.tolerances["residual"]

    def run(verify):
        from .exciton import default_grid, factory_stationary_state, fit_fermi_dirac, mode_occupations

        r = optimal_delta_mu(p, grid=default_grid(p, num), filling=filling)
        out = {
            "delta_mu": r.delta_mu,
            "predicted_delta_mu": r.predicted,
            "effective_gap": r.effective_gap,
            "mu_b": r.mu_b,
            "residual": r.residual,
            "bound": r.bound,
        }
        diag = {"bound_slack": r.bound - r.residual}
        if verify:
            rho = factory_stationary_state(p)
            fit = fit_fermi_dirac(p, mode_occupations(rho, p.n_modes))
            diag.update(fit_mu_a=fit.mu_a, fit_mu_b=fit.mu_b, fit_T=fit.T, fit_residual=fit.residual)
        _require(r.residual <= r.bound + tol, "interband residual exceeds its trace-norm bound")
        return out, diag

    inputs = {"band_a": list(p.band_a), "band_b": list(p.band_b), "T": p.T, "delta_g": p.delta_g}
    return inputs, run


# --------------------------------------------------------------------------
# Refined weak coupling
# --------------------------------------------------------------------------

def _rwc(cfg, sec):
    from .rwc import ExponentialCorrelation

    r = dict(sec["rwc"])
    omega = float(r.get("omega", 1.0))
    c, kappa, Omega = float(r.get("c", 1.0)), float(r.get("kappa", 1.0)), float(r.get("Omega", 0.0))
    lam = float(r.get("lam", 0.1))
    times = [float(t) for t in r.get("times", [1.0, 10.0, 100.0, 200.0])]
    method = r.get("method", "auto")
    initial = r.get("initial", "excited")
    if not omega > 0 or not lam > 0:
        raise ConfigError("[rwc]: omega and lam must be positive")
    if any(t < 0 for t in times):
        raise ConfigError("[rwc].times must be non-negative")
    if method not in ("auto", "closed", "quadrature"):
        raise ConfigError("[rwc].method must be 'auto', 'closed' or 'quadrature'")
    if initial not in ("excited", "coherent"):
        raise ConfigError("[rwc].initial must be 'excited' or 'coherent'")
    if "T" in r:
        F = ExponentialCorrelation.kms_pair(c, kappa, Omega, float(r["T"]))
    else:
        F = ExponentialCorrelation.single(c, kappa, Omega)
    H = np.diag([0.0, omega]).astype(complex)
    S = np.array([[0, 1], [1, 0]], dtype=complex)
    if initial == "excited":
        rho0 = np.diag([0.0, 1.0]).astype(complex)
    else:
        rho0 = 0.5 * np.ones((2, 2), dtype=complex)
    tol = cfg.tolerances["cptp"]

    def run(verify):
        from .davies import generator_superop
        from .linalg import is_cptp
        from .rwc import cumulant_k2, davies_limit, markov_compare, rwc_map, superop_distance

        L = generator_superop(davies_limit(H, S, F, lam))
        rows = markov_compare(H, S, F, lam, times, rho0, method=method)
        gen_dist = []
        cptp = []
        for t in times:
            if t == 0:
                gen_dist.append(float("nan"))
                continue
            k2 = cumulant_k2(H, S, F, t, method=method)
            gen_dist.append(superop_distance(lam**2 * k2.dissipator / t, L))
            if verify:
                cptp.append(bool(is_cptp(rwc_map(lam, k2, check=False), tol=tol)))
        out = {"times": times, "state_distance": [d for _, d in rows], "generator_distance": gen_dist}
        diag = {}
        if verify:
            diag["cptp"] = all(cptp)
            _require(all(cptp), "refined map failed the Choi positivity test")
        return out, diag

    inputs = {"omega": omega, "c": c, "kappa": kappa, "Omega": Omega, "lam": lam}
    return inputs, run


BUILDERS = {
    "battery-steady": _battery_steady,
    "battery-evolve": _battery_evolve,
    "discharge-rate": _discharge_rate,
    "ergotropy": _ergotropy,
    "exciton-factory": _factory,
    "rwc-compare": _rwc,
}


def _battery_inputs(p):
    return {k: getattr(p, k) for k in p.__dataclass_fields__}


def prepare(cfg, point):
    params, run = BUILDERS[cfg.kind](cfg, point.sections)
    inputs = _battery_inputs(params) if isinstance(params, BatteryParams) else dict(params)
    return Prepared(cfg.kind, inputs, run)
