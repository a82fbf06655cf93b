"""Command-line front end.

Scenario files are JSON with human units (dB, dBm, degrees, meters,
Hz); conversion to linear internal units happens exactly once at parse.
Curves go to CSV with a PNG rendered next to each one, fit reports to
JSON.  Outputs are byte-deterministic for a given (scenario, flags,
seed) triple.

Exit codes: 0 success, 1 validation tolerance failure, 2 scenario or
flag problem (with the offending field path), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import plots
from .analysis import (ASSOC_PATHLOSS, ASSOC_POWER, CoverageCurve, Scenario,
                       TierConfig, pcov_highest_power, pcov_multitier,
                       pcov_smallest_pathloss, pcov_with_beam_errors, rate)
from .channel import (PRESETS, AntennaPattern, LinkStateParams,
                      PathLossParams, RadioConfig,
                      kappa_from_floating_intercept, path_loss)
from .intensity import blockage_probability
from .mcsim import SimConfig, noise_limited_gap, simulate
from .numerics import InfeasibleError, QuadratureError
from .twoball import (TABLE_PARAMS, TwoBallParams, approx_intensity,
                      fit_table_preset, fit_two_ball, power_grid)

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3

_ASSOC_ALIASES = {
    "pathloss": ASSOC_PATHLOSS,
    "power": ASSOC_POWER,
    ASSOC_PATHLOSS: ASSOC_PATHLOSS,
    ASSOC_POWER: ASSOC_POWER,
}


class SchemaError(Exception):
    """Scenario-file violation; `path` points at the offending field."""

    def __init__(self, path, msg):
        self.path = path or "(root)"
        self.msg = msg
        super().__init__(f"{self.path}: {msg}")


class EmitCheckError(Exception):
    """A computed curve failed its sanity bounds; nothing was written."""


# --- scenario file parsing ---------------------------------------------------

def _check_keys(obj, path, allowed):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected a JSON object")
    for key in obj:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise SchemaError(where, "unknown key")


def _num(obj, path, key, default=None):
    if key not in obj:
        if default is None:
            raise SchemaError(f"{path}.{key}" if path else key, "missing required number")
        return float(default)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(f"{path}.{key}" if path else key, "expected a number")
    return float(val)


def _integer(obj, path, key, default):
    if key not in obj:
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(f"{path}.{key}" if path else key, "expected an integer")
    return val


def _parse_pattern(obj, path):
    _check_keys(obj, path, {"gain_max_db", "gain_min_db", "beamwidth_deg"})
    return AntennaPattern.from_db(_num(obj, path, "gain_max_db"),
                                  _num(obj, path, "gain_min_db"),
                                  _num(obj, path, "beamwidth_deg"))


def _parse_radio(obj, path):
    _check_keys(obj, path, {"tx_power_dbm", "bandwidth_hz", "noise_figure_db"})
    return RadioConfig(_num(obj, path, "tx_power_dbm"),
                       _num(obj, path, "bandwidth_hz"),
                       _num(obj, path, "noise_figure_db"))


def _parse_link(obj, path):
    _check_keys(obj, path, {"delta_los_per_m", "gamma_los",
                            "delta_out_per_m", "gamma_out"})
    return LinkStateParams(_num(obj, path, "delta_los_per_m"),
                           _num(obj, path, "gamma_los"),
                           _num(obj, path, "delta_out_per_m"),
                           _num(obj, path, "gamma_out"))


def _parse_pathloss(obj, path):
    _check_keys(obj, path, {"kappa_per_m", "alpha_db", "beta",
                            "mu_db", "sigma_db"})
    beta = _num(obj, path, "beta")
    if ("kappa_per_m" in obj) == ("alpha_db" in obj):
        raise SchemaError(path, "give exactly one of kappa_per_m / alpha_db")
    if "kappa_per_m" in obj:
        kappa = _num(obj, path, "kappa_per_m")
    else:
        kappa = kappa_from_floating_intercept(_num(obj, path, "alpha_db"), beta)
    return PathLossParams(kappa, beta, _num(obj, path, "mu_db", 0.0),
                          _num(obj, path, "sigma_db", 1e-9))


def _parse_two_ball(obj, path):
    _check_keys(obj, path, {"d1_m", "d2_m", "q_los", "q_nlos", "q_out"})
    qs = []
    for key in ("q_los", "q_nlos", "q_out"):
        val = obj.get(key)
        if not isinstance(val, list) or len(val) != 3:
            raise SchemaError(f"{path}.{key}", "expected a list of 3 numbers")
        qs.append(tuple(float(v) for v in val))
    return TwoBallParams(_num(obj, path, "d1_m"), _num(obj, path, "d2_m"),
                         qs[0], qs[1], qs[2])


def _parse_size(obj, path):
    """R_c or density from a tier-like object; 0 density marks it empty."""
    if ("cell_radius_m" in obj) == ("density_per_m2" in obj):
        raise SchemaError(path, "give exactly one of cell_radius_m / density_per_m2")
    if "cell_radius_m" in obj:
        return {"cell_radius": _num(obj, path, "cell_radius_m")}
    return {"density": _num(obj, path, "density_per_m2")}


def _parse_association(obj, path):
    name = obj.get("association", ASSOC_PATHLOSS)
    if name not in _ASSOC_ALIASES:
        raise SchemaError(f"{path}.association" if path else "association",
                          f"expected one of {sorted(set(_ASSOC_ALIASES))}")
    return _ASSOC_ALIASES[name]


_TOP_KEYS = {"preset", "link", "los", "nlos", "cell_radius_m", "density_per_m2",
             "radio", "bs_pattern", "mt_pattern", "association",
             "beam_error_std_deg", "two_ball", "tiers", "sim", "sweeps"}
_TIER_KEYS = {"tx_power_dbm", "cell_radius_m", "density_per_m2", "bs_pattern"}
_SIM_KEYS = {"window_radius_m", "realizations", "seed"}
_SWEEP_KEYS = {"t_grid_db", "rc_grid_m"}


class Loaded:
    """Parsed scenario plus the file's sim defaults and sweep axes.

    `scenario` is None when every tier had zero density (the degenerate
    no-deployment case: coverage and rate are identically 0).
    """

    def __init__(self, scenario, preset_name, sim, sweeps):
        self.scenario = scenario
        self.preset_name = preset_name
        self.sim = sim
        self.sweeps = sweeps


def load_scenario(path) -> Loaded:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise SchemaError("(file)", str(e)) from e
    except json.JSONDecodeError as e:
        raise SchemaError("(file)", f"not valid JSON: {e}") from e
    _check_keys(doc, "", _TOP_KEYS)

    preset_name = doc.get("preset")
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise SchemaError("preset", f"unknown preset {preset_name!r}; "
                              f"known: {sorted(PRESETS)}")
        for key in ("link", "los", "nlos"):
            if key in doc:
                raise SchemaError(key, "preset and explicit link/los/nlos "
                                  "are mutually exclusive")
        src = PRESETS[preset_name]
        link, los, nlos = src.link, src.los, src.nlos
    else:
        for key in ("link", "los", "nlos"):
            if key not in doc:
                raise SchemaError(key, "required without a preset")
        link = _parse_link(doc["link"], "link")
        los = _parse_pathloss(doc["los"], "los")
        nlos = _parse_pathloss(doc["nlos"], "nlos")

    radio = _parse_radio(doc.get("radio", {}), "radio") if "radio" in doc else None
    if radio is None:
        raise SchemaError("radio", "missing required object")
    if "mt_pattern" not in doc:
        raise SchemaError("mt_pattern", "missing required object")
    mt_pattern = _parse_pattern(doc["mt_pattern"], "mt_pattern")
    association = _parse_association(doc, "")

    beam = None
    if "beam_error_std_deg" in doc:
        val = doc["beam_error_std_deg"]
        if not isinstance(val, list) or len(val) != 2:
            raise SchemaError("beam_error_std_deg",
                              "expected [bs_sigma_deg, mt_sigma_deg]")
        beam = tuple(math.radians(float(v)) for v in val)

    two_ball = _parse_two_ball(doc["two_ball"], "two_ball") if "two_ball" in doc else None

    if "tiers" in doc:
        for key in ("cell_radius_m", "density_per_m2", "bs_pattern"):
            if key in doc:
                raise SchemaError(key, "tiers[] and single-tier fields "
                                  "are mutually exclusive")
        if not isinstance(doc["tiers"], list) or not doc["tiers"]:
            raise SchemaError("tiers", "expected a non-empty list")
        tiers = []
        for i, tier_doc in enumerate(doc["tiers"]):
            where = f"tiers[{i}]"
            _check_keys(tier_doc, where, _TIER_KEYS)
            size = _parse_size(tier_doc, where)
            if size.get("density") == 0.0:
                continue
            tiers.append(TierConfig(_num(tier_doc, where, "tx_power_dbm"),
                                    _parse_pattern(tier_doc.get("bs_pattern", {}),
                                                   f"{where}.bs_pattern"),
                                    **size))
    else:
        if "bs_pattern" not in doc:
            raise SchemaError("bs_pattern", "missing required object")
        size = _parse_size(doc, "")
        if size.get("density") == 0.0:
            tiers = []
        else:
            tiers = [TierConfig(radio.tx_power_dbm,
                                _parse_pattern(doc["bs_pattern"], "bs_pattern"),
                                **size)]

    sim = {"window_radius": 0.0, "realizations": 100_000, "seed": 1}
    if "sim" in doc:
        _check_keys(doc["sim"], "sim", _SIM_KEYS)
        sim["window_radius"] = _num(doc["sim"], "sim", "window_radius_m", 0.0)
        sim["realizations"] = _integer(doc["sim"], "sim", "realizations",
                                       sim["realizations"])
        sim["seed"] = _integer(doc["sim"], "sim", "seed", sim["seed"])

    sweeps = {}
    if "sweeps" in doc:
        _check_keys(doc["sweeps"], "sweeps", _SWEEP_KEYS)
        for key in _SWEEP_KEYS:
            if key in doc["sweeps"]:
                sweeps[key] = _parse_grid(doc["sweeps"][key], f"sweeps.{key}")

    if not tiers:
        return Loaded(None, preset_name, sim, sweeps)
    try:
        scn = Scenario(tiers=tuple(tiers), link=link, los=los, nlos=nlos,
                       radio=radio, mt_pattern=mt_pattern,
                       association=association, beam_error_std=beam,
                       two_ball=two_ball)
    except ValueError as e:
        raise SchemaError("(scenario)", str(e)) from e
    return Loaded(scn, preset_name, sim, sweeps)


def _parse_grid(text, where):
    """start:stop:step, inclusive of stop (within half a step)."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise SchemaError(where, "expected START:STOP:STEP")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as e:
        raise SchemaError(where, "expected numbers") from e
    if step <= 0 or stop < start:
        raise SchemaError(where, "need step > 0 and stop >= start")
    return np.arange(start, stop + 0.5 * step, step)


# --- shared plumbing ---------------------------------------------------------

def _with_overrides(loaded, args):
    """Apply --rc / --association to the scenario from the file."""
    scn = loaded.scenario
    if scn is None:
        return None
    if getattr(args, "rc", None) is not None:
        if len(scn.tiers) > 1:
            raise SchemaError("--rc", "only applies to single-tier scenarios")
        tier = scn.tiers[0]
        tiers = (TierConfig(tier.tx_power_dbm, tier.bs_pattern,
                            cell_radius=float(args.rc)),)
    else:
        tiers = scn.tiers
    assoc = scn.association
    if getattr(args, "association", None):
        assoc = _ASSOC_ALIASES[args.association]
    try:
        return Scenario(tiers=tiers, link=scn.link, los=scn.los, nlos=scn.nlos,
                        radio=scn.radio, mt_pattern=scn.mt_pattern,
                        association=assoc, beam_error_std=scn.beam_error_std,
                        two_ball=scn.two_ball)
    except ValueError as e:
        raise SchemaError("(scenario)", str(e)) from e


def _ensure_two_ball(scn, preset_name):
    if scn.two_ball is not None:
        return scn
    if preset_name in TABLE_PARAMS:
        return Scenario(tiers=scn.tiers, link=scn.link, los=scn.los,
                        nlos=scn.nlos, radio=scn.radio,
                        mt_pattern=scn.mt_pattern, association=scn.association,
                        beam_error_std=scn.beam_error_std,
                        two_ball=TABLE_PARAMS[preset_name])
    raise SchemaError("two_ball", "twoball mode needs two_ball parameters "
                      "(or a preset with tabulated ones)")


def _pcov_callable(scn, mode):
    """Pick the right coverage op for the scenario; returns f(t_linear)."""
    if len(scn.tiers) > 1:
        if scn.beam_error_std is not None:
            raise SchemaError("beam_error_std_deg",
                              "beam errors are single-tier only")
        return lambda t: pcov_multitier(scn, t, mode=mode)
    if scn.beam_error_std is not None:
        if scn.association == ASSOC_POWER:
            return lambda t: pcov_with_beam_errors(scn, t, mode=mode)
        return lambda t: pcov_with_beam_errors(scn, t)
    if scn.association == ASSOC_POWER:
        return lambda t: pcov_highest_power(scn, t, mode=mode)
    if mode != "exact":
        raise SchemaError("--mode", "twoball mode applies to "
                          "highest-received-power association")
    return lambda t: pcov_smallest_pathloss(scn, t)


def _guard_curve(name, values, monotone=None):
    v = np.asarray(values, dtype=float)
    if np.any(v < -1e-12) or (name.startswith("pcov") and np.any(v > 1.0 + 1e-12)):
        raise EmitCheckError(f"{name}: value out of bounds, refusing to emit")
    if monotone == "nonincreasing" and np.any(np.diff(v) > 1e-9 * max(1.0, v.max())):
        raise EmitCheckError(f"{name}: expected non-increasing values, "
                             "refusing to emit")


def _write_csv(path, comment, columns, rows):
    lines = [f"# {comment}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _png_path(out):
    stem, _ = os.path.splitext(out)
    return stem + ".png"


def _sim_config(scn, loaded, args):
    return SimConfig(scn,
                     window_radius=(args.window if args.window is not None
                                    else loaded.sim["window_radius"]),
                     realizations=(args.realizations if args.realizations is not None
                                   else loaded.sim["realizations"]),
                     rng_seed=(args.seed if args.seed is not None
                               else loaded.sim["seed"]))


# --- subcommands -------------------------------------------------------------

def cmd_coverage(args) -> int:
    loaded = load_scenario(args.scenario)
    if args.t_grid is not None and args.rc_grid is not None:
        raise SchemaError("--t-grid/--rc-grid", "choose one sweep axis")
    scn = _with_overrides(loaded, args)
    mode = args.mode
    rows = []
    mc_note = ""

    if args.rc_grid is not None:
        rc_grid = _parse_grid(args.rc_grid, "--rc-grid")
        t_lin = 10.0 ** (args.t / 10.0)
        axis_name, axis = "cell_radius_m", rc_grid
        analytic, mc, ci = [], [], []
        for rc in rc_grid:
            sub = argparse.Namespace(rc=float(rc), association=args.association)
            scn_rc = _with_overrides(loaded, sub)
            if scn_rc is None:
                analytic.append(0.0)
                continue
            if mode == "twoball":
                scn_rc = _ensure_two_ball(scn_rc, loaded.preset_name)
            analytic.append(_pcov_callable(scn_rc, mode)(t_lin))
            if args.with_mc:
                res = simulate(_sim_config(scn_rc, loaded, args),
                               thresholds=[t_lin], workers=args.workers)
                mc.append(res.snr_coverage.values[0])
                ci.append(res.snr_ci[0])
        _guard_curve("pcov_analytic", analytic, monotone="nonincreasing")
        comment_axis = f"t_db={args.t:g}, rc sweep"
    else:
        grid_db = (_parse_grid(args.t_grid, "--t-grid") if args.t_grid is not None
                   else loaded.sweeps.get("t_grid_db"))
        if grid_db is None:
            grid_db = np.arange(-20.0, 40.5, 1.0)
        t_lin_grid = 10.0 ** (grid_db / 10.0)
        axis_name, axis = "threshold_db", grid_db
        if scn is None:
            analytic = [0.0] * len(grid_db)
            mc, ci = [], []
        else:
            if mode == "twoball":
                scn = _ensure_two_ball(scn, loaded.preset_name)
            pcov = _pcov_callable(scn, mode)
            analytic = [pcov(float(t)) for t in t_lin_grid]
            # the curve type enforces bounds and monotonicity in T
            CoverageCurve(thresholds=tuple(t_lin_grid), values=tuple(analytic))
            mc, ci = [], []
            if args.with_mc:
                res = simulate(_sim_config(scn, loaded, args),
                               thresholds=t_lin_grid, workers=args.workers)
                mc = list(res.snr_coverage.values)
                ci = list(res.snr_ci)
        comment_axis = "threshold sweep"

    columns = [axis_name, "pcov_analytic"]
    series = {"analytic": analytic}
    bands = {}
    if mc:
        _guard_curve("pcov_mc", mc)
        columns += ["pcov_mc_snr", "mc_ci95"]
        series["monte carlo (SNR)"] = mc
        bands["monte carlo (SNR)"] = ci
        reals = (args.realizations if args.realizations is not None
                 else loaded.sim["realizations"])
        seed = args.seed if args.seed is not None else loaded.sim["seed"]
        mc_note = f", mc realizations={reals} seed={seed}"
        rows = list(zip(axis, analytic, mc, ci))
    else:
        rows = list(zip(axis, analytic))

    assoc = scn.association if scn is not None else "(empty)"
    comment = (f"mmwcov coverage: association={assoc}, mode={mode}, "
               f"{comment_axis}{mc_note}")
    _write_csv(args.out, comment, columns, rows)
    xlabel = "threshold (dB)" if axis_name == "threshold_db" else "cell radius (m)"
    plots.save_coverage_plot(_png_path(args.out), axis, series, xlabel,
                             bands=bands or None)
    print(f"wrote {args.out} and {_png_path(args.out)} ({len(rows)} rows)")
    return EXIT_OK


def _baseline_scenario(scn, preset_name, baseline_preset, bandwidth_hz):
    """Same deployment and BS hardware, baseline propagation and radio.

    The mobile is omnidirectional at the baseline carrier; bandwidth is
    the baseline's (40 MHz unless overridden).
    """
    preset = PRESETS[baseline_preset]
    radio = RadioConfig(scn.radio.tx_power_dbm, bandwidth_hz,
                        scn.radio.noise_figure_db)
    mt = AntennaPattern.from_db(0.0, 0.0, 360.0)
    return Scenario(tiers=scn.tiers, link=preset.link, los=preset.los,
                    nlos=preset.nlos, radio=radio, mt_pattern=mt,
                    association=scn.association)


def cmd_rate(args) -> int:
    loaded = load_scenario(args.scenario)
    rc_grid = (_parse_grid(args.rc_grid, "--rc-grid") if args.rc_grid is not None
               else loaded.sweeps.get("rc_grid_m"))
    if rc_grid is None:
        rc_grid = np.arange(25.0, 251.0, 25.0)
    if args.baseline is not None and args.baseline not in PRESETS:
        raise SchemaError("--baseline", f"unknown preset {args.baseline!r}")

    rates, base_rates = [], []
    bw = None
    for rc in rc_grid:
        sub = argparse.Namespace(rc=float(rc), association=args.association)
        scn_rc = _with_overrides(loaded, sub)
        if scn_rc is None:
            rates.append(0.0)
            if args.baseline:
                base_rates.append(0.0)
            continue
        bw = scn_rc.radio.bandwidth_hz
        if args.mode == "highsnr":
            rates.append(rate(scn_rc, mode="highsnr"))
        else:
            rates.append(rate(scn_rc, pcov=_pcov_callable(scn_rc, "exact"),
                              mode=args.mode))
        if args.baseline:
            base = _baseline_scenario(scn_rc, loaded.preset_name,
                                      args.baseline, args.baseline_bw_hz)
            base_rates.append(rate(base, pcov=_pcov_callable(base, "exact"),
                                   mode="gcq"))

    _guard_curve("rate", rates, monotone="nonincreasing")
    columns = ["cell_radius_m", "rate_bps"]
    rows = [[rc, r] for rc, r in zip(rc_grid, rates)]
    if args.normalize_bw:
        columns.append("rate_bps_per_hz")
        for row, r in zip(rows, rates):
            row.append(r / bw if bw else 0.0)
    series = {"rate": rates}
    if args.baseline:
        _guard_curve("rate_baseline", base_rates, monotone="nonincreasing")
        columns += ["baseline_rate_bps", "rate_ratio"]
        for row, r, b in zip(rows, rates, base_rates):
            row += [b, r / b if b > 0 else 0.0]
        series["baseline"] = base_rates

    comment = (f"mmwcov rate: mode={args.mode}, rc sweep"
               + (f", baseline={args.baseline}" if args.baseline else ""))
    _write_csv(args.out, comment, columns, rows)
    plots.save_rate_plot(_png_path(args.out), rc_grid, series)
    print(f"wrote {args.out} and {_png_path(args.out)} ({len(rows)} rows)")
    return EXIT_OK


def cmd_fit_twoball(args) -> int:
    loaded = load_scenario(args.scenario)
    scn = loaded.scenario
    if scn is None:
        raise SchemaError("(scenario)", "zero-density scenario has nothing to fit")
    if len(scn.tiers) > 1:
        raise SchemaError("tiers", "two-ball fitting is single-tier")
    lam = scn.tiers[0].density

    if scn.two_ball is not None:
        # synthetic self-consistency run: the target is itself a two-ball
        # intensity, so the fit should recover the given parameters
        tb = scn.two_ball
        grid = power_grid(path_loss(scn.los, 1.0),
                          path_loss(scn.nlos, 4.0 * tb.d2), 300, -0.8)
        states = (("los", scn.los), ("nlos", scn.nlos))

        def target(x):
            return sum(approx_intensity(x, s, tb, lam, pl.kappa, pl.beta)
                       for s, pl in states)

        fit = fit_two_ball(target, grid, lam=lam, los=scn.los, nlos=scn.nlos,
                           n_starts=args.starts, seed=args.seed,
                           workers=args.workers)
        report = {"target": "synthetic-two-ball", "fit": fit.as_dict(),
                  "given": {"d1": tb.d1, "d2": tb.d2, "q_los": list(tb.q_los),
                            "q_nlos": list(tb.q_nlos), "q_out": list(tb.q_out)}}
        p = fit.params
        report["recovery"] = {
            "d_rel_error": max(abs(p.d1 - tb.d1) / tb.d1,
                               abs(p.d2 - tb.d2) / tb.d2),
            "q_abs_error": max(abs(a - b) for pa, pb in
                               ((p.q_los, tb.q_los), (p.q_nlos, tb.q_nlos),
                                (p.q_out, tb.q_out))
                               for a, b in zip(pa, pb)),
        }
    else:
        if loaded.preset_name is None:
            raise SchemaError("preset", "fitting needs a preset with a recipe "
                              "or explicit two_ball parameters")
        fit = fit_table_preset(PRESETS[loaded.preset_name], lam,
                               n_starts=args.starts, seed=args.seed,
                               workers=args.workers)
        report = {"target": f"exact-intensity ({loaded.preset_name})",
                  "fit": fit.as_dict()}
        if loaded.preset_name in TABLE_PARAMS:
            tab = TABLE_PARAMS[loaded.preset_name]
            p = fit.params
            report["table_comparison"] = {
                "table": {"d1": tab.d1, "d2": tab.d2, "q_los": list(tab.q_los),
                          "q_nlos": list(tab.q_nlos), "q_out": list(tab.q_out)},
                "d_rel_error": max(abs(p.d1 - tab.d1) / tab.d1,
                                   abs(p.d2 - tab.d2) / tab.d2),
                "q_abs_error": max(abs(a - b) for pa, pb in
                                   ((p.q_los, tab.q_los), (p.q_nlos, tab.q_nlos),
                                    (p.q_out, tab.q_out))
                                   for a, b in zip(pa, pb)),
            }

    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    stem, _ = os.path.splitext(args.out)
    res_csv = stem + "-residuals.csv"
    fit_d = report["fit"]
    _write_csv(res_csv, "mmwcov two-ball fit residuals",
               ["x", "target", "model", "log_residual"],
               zip(fit_d["grid"], fit_d["target"], fit_d["model"],
                   fit_d["log_residual"]))
    plots.save_fit_plot(stem + ".png", fit_d["grid"], fit_d["target"],
                        fit_d["model"], fit.params.d1, fit.params.d2)
    print(f"wrote {args.out}, {res_csv} and {stem}.png "
          f"(resnorm {fit.resnorm:.4f})")
    return EXIT_OK


def cmd_validate(args) -> int:
    loaded = load_scenario(args.scenario)
    scn = loaded.scenario
    if scn is None:
        print("PASS empty scenario: coverage and rate are identically 0")
        return EXIT_OK
    grid_db = (_parse_grid(args.t_grid, "--t-grid") if args.t_grid is not None
               else np.arange(-10.0, 31.0, 2.0))
    t_lin = 10.0 ** (grid_db / 10.0)
    failures = 0

    def check(ok, name, detail):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failures += 1

    associations = ([scn.association] if len(scn.tiers) > 1
                    else [ASSOC_PATHLOSS, ASSOC_POWER])
    first_res = None
    for assoc in associations:
        scn_a = Scenario(tiers=scn.tiers, link=scn.link, los=scn.los,
                         nlos=scn.nlos, radio=scn.radio,
                         mt_pattern=scn.mt_pattern, association=assoc,
                         beam_error_std=scn.beam_error_std,
                         two_ball=scn.two_ball)
        pcov = _pcov_callable(scn_a, "exact")
        analytic = np.array([pcov(float(t)) for t in t_lin])
        cfg = _sim_config(scn_a, loaded, args)
        res = simulate(cfg, thresholds=t_lin, workers=args.workers)
        if first_res is None:
            first_res = res
        gap = np.abs(analytic - np.asarray(res.snr_coverage.values))
        worst = float(gap.max())
        check(worst <= args.tol, f"coverage [{assoc}]",
              f"max |analytic - MC| = {worst:.4f} (tol {args.tol:g}, "
              f"{cfg.realizations} realizations)")

    lam = sum(t.density for t in scn.tiers)
    p_blk = blockage_probability(scn.link, lam)
    n = first_res.realizations
    sigma = math.sqrt(max(p_blk * (1.0 - p_blk), 1e-12) / n)
    diff = abs(first_res.blockage - p_blk)
    check(diff <= 3.0 * sigma, "blockage",
          f"|MC - closed form| = {diff:.5f} (3 sigma = {3 * sigma:.5f})")

    gapr = noise_limited_gap(_sim_config(scn, loaded, args), thresholds=t_lin,
                             workers=args.workers)
    worst_gap = max(gapr.gap)
    check(True, "noise-limited gap",
          f"max SNR-vs-SINR coverage gap = {worst_gap:.4f} (reported)")

    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_CHECK
    print("all checks passed")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

def _add_common(p, with_mc=False):
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: MMWCOV_WORKERS or CPUs)")
    if with_mc:
        p.add_argument("--realizations", type=int, default=None,
                       help="Monte Carlo realizations (default: sim block or 1e5)")
        p.add_argument("--seed", type=int, default=None,
                       help="Monte Carlo seed (default: sim block or 1)")
        p.add_argument("--window", type=float, default=None,
                       help="simulation window radius in m (default: documented rule)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mmwcov",
        description="Coverage and rate analysis for blockage-limited "
                    "cellular networks, with Monte Carlo validation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coverage", help="coverage vs. threshold or cell radius")
    _add_common(p, with_mc=True)
    p.add_argument("--t-grid", default=None, metavar="A:B:S",
                   help="threshold sweep in dB (default -20:40:1)")
    p.add_argument("--rc-grid", default=None, metavar="A:B:S",
                   help="cell-radius sweep in m (switches the axis)")
    p.add_argument("--t", type=float, default=0.0,
                   help="threshold in dB for --rc-grid sweeps (default 0)")
    p.add_argument("--rc", type=float, default=None,
                   help="override the single tier's cell radius in m")
    p.add_argument("--association", choices=sorted(_ASSOC_ALIASES), default=None)
    p.add_argument("--mode", choices=["exact", "twoball"], default="exact")
    p.add_argument("--with-mc", action="store_true",
                   help="add a Monte Carlo column")
    p.add_argument("--out", default="coverage.csv")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("rate", help="average rate vs. cell radius")
    _add_common(p)
    p.add_argument("--rc-grid", default=None, metavar="A:B:S",
                   help="cell-radius sweep in m (default 25:250:25)")
    p.add_argument("--association", choices=sorted(_ASSOC_ALIASES), default=None)
    p.add_argument("--mode", choices=["gcq", "adaptive", "highsnr"], default="gcq")
    p.add_argument("--normalize-bw", action="store_true",
                   help="add a rate/BW column")
    p.add_argument("--baseline", default=None, metavar="PRESET",
                   help="add baseline rate and ratio columns (e.g. uwave-2.5ghz)")
    p.add_argument("--baseline-bw-hz", type=float, default=40e6,
                   help="baseline bandwidth (default 40 MHz)")
    p.add_argument("--out", default="rate.csv")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("fit-twoball", help="fit two-ball radii and probabilities")
    _add_common(p)
    p.add_argument("--starts", type=int, default=16,
                   help="multi-start count (default 16)")
    p.add_argument("--seed", type=int, default=1, help="start sampler seed")
    p.add_argument("--out", default="fit-report.json")
    p.set_defaults(func=cmd_fit_twoball)

    p = sub.add_parser("validate",
                       help="run the analytic-vs-Monte-Carlo check suite")
    _add_common(p, with_mc=True)
    p.add_argument("--t-grid", default=None, metavar="A:B:S",
                   help="threshold grid in dB (default -10:30:2)")
    p.add_argument("--tol", type=float, default=0.01,
                   help="coverage agreement tolerance (default 0.01)")
    p.set_defaults(func=cmd_validate)
    return ap


def _merge_grid_flags(argv):
    """Join `--t-grid -20:40:1` into one token; argparse would otherwise
    read the negative start of the range as an unknown option."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("--t-grid", "--rc-grid") and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(_merge_grid_flags(list(argv)))
    try:
        return args.func(args)
    except SchemaError as e:
        print(f"scenario error at {e.path}: {e.msg}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except EmitCheckError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (QuadratureError, InfeasibleError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
