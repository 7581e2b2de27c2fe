"""Command-line surface tying the simulation modules together.

Every subcommand writes CSV outputs with headers plus a JSON run manifest
into the output directory; re-running with ``--config manifest.json``
reproduces the outputs bit for bit. Domain errors exit nonzero with a
machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from ddsim.analysis import (
    FitError,
    compare_sequences,
    fit_alpha,
    scaling_study,
    write_comparison_csv,
    write_comparison_summary,
)
from ddsim.coherence import QuadratureConfig, coherence_curve, write_curve_csv
from ddsim.manifest import build_manifest, load_manifest
from ddsim.montecarlo import (
    ErrorAxis,
    ensemble_curve,
    robustness_scan,
    write_ensemble_csv,
    write_map_csv,
    write_map_manifest,
)
from ddsim.noise import (
    Ambient,
    OhmicHardCutoff,
    PowerLaw,
    SpectrumError,
    Spur,
    DEFAULT_SPUR_SIGMA,
    load_tabulated_csv,
    model_from_dict,
    model_to_dict,
    periodogram,
    psd,
    read_trace_csv,
    synthesize_trace,
    with_noise_scale,
    write_tabulated_csv,
    write_trace_csv,
)
from ddsim.sequences import (
    DEFAULT_FINAL_TAIL,
    DEFAULT_PRIMARY_TAIL,
    LayoutError,
    SequenceFamily,
    build_layout,
)
from ddsim.filters import filter_curve, write_filter_csv

_TWO_PI = 2.0 * math.pi


class CliError(ValueError):
    """Bad command-line input."""


def _resolve(args: argparse.Namespace, config: dict, name: str, default=None):
    """CLI value if given, else config value, else default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _require(args, config, name):
    value = _resolve(args, config, name)
    if value is None:
        raise CliError(f"missing required parameter --{name.replace('_', '-')}")
    return value


def _load_config(path) -> dict:
    doc = load_manifest(path)
    if "params" in doc:
        return dict(doc["params"])
    return dict(doc)


def _build_model(args, config):
    if isinstance(config.get("model"), dict):
        base = model_from_dict(config["model"])
    else:
        kind = _resolve(args, config, "model")
        if kind is None:
            raise CliError("missing --model")
        if kind == "ohmic":
            base = OhmicHardCutoff(
                slope_amplitude=float(_require(args, config, "amplitude")),
                cutoff=_TWO_PI * float(_require(args, config, "cutoff_hz")),
            )
        elif kind == "power_law":
            band = _resolve(args, config, "band_hz", [1e-3, 1e6])
            base = PowerLaw(
                exponent=float(_require(args, config, "exponent")),
                amplitude=float(_require(args, config, "amplitude")),
                omega_ref=_TWO_PI * float(_resolve(args, config, "omega_ref_hz", 1.0)),
                band=(_TWO_PI * float(band[0]), _TWO_PI * float(band[1])),
            )
        elif kind == "ambient":
            band = _resolve(args, config, "band_hz", [1e-3, 1e6])
            spurs = []
            for spec in _resolve(args, config, "spur", []) or []:
                parts = str(spec).split(":")
                center = _TWO_PI * float(parts[0])
                weight = float(parts[1]) if len(parts) > 1 else 0.15
                sigma = (
                    _TWO_PI * float(parts[2]) / (2.0 * math.sqrt(2.0 * math.log(2.0)))
                    if len(parts) > 2
                    else DEFAULT_SPUR_SIGMA
                )
                spurs.append(Spur(center=center, weight=weight, sigma=sigma))
            base = Ambient(
                alpha=float(_resolve(args, config, "amplitude", 1.0)),
                spurs=tuple(spurs),
                omega_ref=_TWO_PI * float(_resolve(args, config, "omega_ref_hz", 1.0)),
                band=(_TWO_PI * float(band[0]), _TWO_PI * float(band[1])),
            )
        elif kind == "tabulated":
            base = load_tabulated_csv(_require(args, config, "table"))
        else:
            raise CliError(f"unknown model kind {kind!r}")
    scale = _resolve(args, config, "noise_scale", 1.0)
    if scale != 1.0:
        base = with_noise_scale(base, float(scale))
    return base


def _build_family(args, config) -> SequenceFamily:
    kind = str(_require(args, config, "kind"))
    n = int(_require(args, config, "n"))
    tau_pi = float(_resolve(args, config, "tau_pi", 0.0))
    axis = str(_resolve(args, config, "axis", "X"))
    return SequenceFamily(kind, n, tau_pi, axis=axis)


def _quad(args, config) -> QuadratureConfig:
    return QuadratureConfig(rel_tol=float(_resolve(args, config, "rel_tol", 1e-6)))


def _out_dir(args, config) -> str:
    out = _resolve(args, config, "out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _emit_manifest(args, config, command: str, params: dict, inputs=None) -> None:
    out = _out_dir(args, config)
    manifest = build_manifest(
        command, params, seed=params.get("seed"), inputs=inputs
    )
    path = getattr(args, "manifest", None) or os.path.join(out, "manifest.json")
    manifest.write(path)


def _collect(args, config, names: dict) -> dict:
    """Resolved parameter dict (the manifest payload)."""
    params = {}
    for name, default in names.items():
        value = _resolve(args, config, name, default)
        params[name] = value
    return params


# -- subcommand implementations ---------------------------------------------

def _cmd_sequence(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            "kind": None,
            "n": None,
            "tau": None,
            "tau_pi": 0.0,
            "grid_quantum": None,
            "primary_tail": DEFAULT_PRIMARY_TAIL,
            "final_tail": DEFAULT_FINAL_TAIL,
            "axis": "X",
            "out": ".",
        },
    )
    family = _build_family(args, config)
    layout = build_layout(
        family,
        float(_require(args, config, "tau")),
        primary_tail=float(params["primary_tail"]),
        final_tail=float(params["final_tail"]),
        grid_quantum=params["grid_quantum"],
    )
    out = _out_dir(args, config)
    with open(os.path.join(out, "layout.json"), "w") as fh:
        fh.write(layout.to_json())
        fh.write("\n")
    _emit_manifest(args, config, "sequence", params)
    return 0


def _cmd_filter(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            "kind": None,
            "n": None,
            "tau": 1.0,
            "tau_pi": 0.0,
            "omega_tau_min": 1e-2,
            "omega_tau_max": 1e3,
            "points": 500,
            "out": ".",
        },
    )
    family = _build_family(args, config)
    tau = float(params["tau"])
    layout = build_layout(family, tau)
    grid = (
        np.geomspace(
            float(params["omega_tau_min"]),
            float(params["omega_tau_max"]),
            int(params["points"]),
        )
        / tau
    )
    samples = filter_curve(layout, grid)
    out = _out_dir(args, config)
    write_filter_csv(os.path.join(out, "filter.csv"), samples)
    _emit_manifest(args, config, "filter", params)
    return 0


def _cmd_noise(args, config) -> int:
    action = args.noise_action
    out = _out_dir(args, config)
    if action == "synth":
        params = _collect(
            args,
            config,
            {
                "model": None,
                "amplitude": None,
                "cutoff_hz": None,
                "exponent": None,
                "omega_ref_hz": 1.0,
                "band_hz": None,
                "spur": None,
                "table": None,
                "noise_scale": 1.0,
                "duration": None,
                "dt": None,
                "seed": 0,
                "out": ".",
                "model_dict": None,
            },
        )
        model = _build_model(args, config)
        params["model_dict"] = model_to_dict(model)
        trace = synthesize_trace(
            model,
            float(_require(args, config, "duration")),
            float(_require(args, config, "dt")),
            int(_resolve(args, config, "seed", 0)),
        )
        write_trace_csv(os.path.join(out, "trace.csv"), trace)
        _emit_manifest(args, config, "noise synth", params)
        return 0
    if action == "psd":
        params = _collect(
            args,
            config,
            {
                "model": None,
                "amplitude": None,
                "cutoff_hz": None,
                "exponent": None,
                "omega_ref_hz": 1.0,
                "band_hz": None,
                "spur": None,
                "table": None,
                "noise_scale": 1.0,
                "freq_min_hz": 1e-3,
                "freq_max_hz": 1e6,
                "points": 500,
                "out": ".",
            },
        )
        model = _build_model(args, config)
        omegas = _TWO_PI * np.geomspace(
            float(params["freq_min_hz"]), float(params["freq_max_hz"]), int(params["points"])
        )
        values = psd(model, omegas)
        with open(os.path.join(out, "psd.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["omega_rad_s", "psd"])
            for w, v in zip(omegas, values):
                writer.writerow([f"{w:.17g}", f"{v:.17g}"])
        _emit_manifest(args, config, "noise psd", params)
        return 0
    if action == "periodogram":
        params = _collect(args, config, {"trace": None, "out": "."})
        trace_path = _require(args, config, "trace")
        trace = read_trace_csv(trace_path)
        est = periodogram(trace)
        write_tabulated_csv(os.path.join(out, "periodogram.csv"), est)
        _emit_manifest(
            args, config, "noise periodogram", params, inputs={"trace": trace_path}
        )
        return 0
    raise CliError(f"unknown noise action {action!r}")


def _tau_grid(args, config) -> np.ndarray:
    lo = float(_require(args, config, "tau_min"))
    hi = float(_require(args, config, "tau_max"))
    pts = int(_resolve(args, config, "tau_points", 16))
    return np.geomspace(lo, hi, pts)


_MODEL_KEYS = {
    "model": None,
    "amplitude": None,
    "cutoff_hz": None,
    "exponent": None,
    "omega_ref_hz": 1.0,
    "band_hz": None,
    "spur": None,
    "table": None,
    "noise_scale": 1.0,
}


def _cmd_coherence(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            **_MODEL_KEYS,
            "kind": None,
            "n": None,
            "tau_pi": 0.0,
            "tau_min": None,
            "tau_max": None,
            "tau_points": 16,
            "grid_quantum": None,
            "rel_tol": 1e-6,
            "out": ".",
        },
    )
    family = _build_family(args, config)
    model = _build_model(args, config)
    curve = coherence_curve(
        family,
        model,
        _tau_grid(args, config),
        _quad(args, config),
        grid_quantum=params["grid_quantum"],
    )
    out = _out_dir(args, config)
    write_curve_csv(os.path.join(out, "coherence.csv"), curve)
    _emit_manifest(args, config, "coherence", params)
    return 0


def _cmd_ensemble(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            **_MODEL_KEYS,
            "kind": None,
            "n": None,
            "tau_pi": 0.0,
            "tau_min": None,
            "tau_max": None,
            "tau_points": 8,
            "grid_quantum": None,
            "realizations": 1000,
            "oversample": 16,
            "dt": None,
            "workers": None,
            "seed": 0,
            "out": ".",
        },
    )
    family = _build_family(args, config)
    model = _build_model(args, config)
    curve = ensemble_curve(
        family,
        model,
        _tau_grid(args, config),
        int(params["realizations"]),
        int(params["seed"]),
        dt=None if params["dt"] is None else float(params["dt"]),
        oversample=int(params["oversample"]),
        workers=None if params["workers"] is None else int(params["workers"]),
        grid_quantum=params["grid_quantum"],
    )
    out = _out_dir(args, config)
    write_ensemble_csv(os.path.join(out, "ensemble.csv"), curve)
    _emit_manifest(args, config, "ensemble", params)
    return 0


def _cmd_robustness(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            "kind": None,
            "n": None,
            "tau": None,
            "tau_pi": 0.0,
            "grid_quantum": None,
            "error_axis": "pulse_length",
            "error_min": None,
            "error_max": None,
            "error_points": 33,
            "theta_points": 33,
            "delta_l_hz": 0.0,
            "seed": 0,
            "out": ".",
        },
    )
    family = _build_family(args, config)
    axis = ErrorAxis(
        kind=str(params["error_axis"]),
        values=np.linspace(
            float(_require(args, config, "error_min")),
            float(_require(args, config, "error_max")),
            int(params["error_points"]),
        ),
    )
    theta_grid = np.linspace(0.0, _TWO_PI, int(params["theta_points"]), endpoint=False)
    rmap = robustness_scan(
        family,
        float(_require(args, config, "tau")),
        axis,
        theta_grid,
        interpulse_detuning=_TWO_PI * float(params["delta_l_hz"]),
        grid_quantum=params["grid_quantum"],
        seed=int(params["seed"]),
    )
    out = _out_dir(args, config)
    write_map_csv(os.path.join(out, "robustness.csv"), rmap)
    write_map_manifest(os.path.join(out, "robustness_meta.json"), rmap)
    _emit_manifest(args, config, "robustness", params)
    return 0


def _read_error_curve(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(
            (line for line in fh if not line.startswith("#"))
        )
        taus, errs = [], []
        for row in reader:
            taus.append(float(row["tau_s"]))
            errs.append(float(row["error_prob"]))
    if not taus:
        raise CliError(f"no data rows in {path}")
    return np.asarray(taus), np.asarray(errs)


def _cmd_fit(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            **_MODEL_KEYS,
            "kind": None,
            "n": None,
            "tau_pi": 0.0,
            "data": None,
            "fit_gamma": False,
            "rel_tol": 1e-6,
            "grid_quantum": None,
            "out": ".",
        },
    )
    data_path = _require(args, config, "data")
    taus, errs = _read_error_curve(data_path)
    family = _build_family(args, config)
    model = _build_model(args, config)
    result = fit_alpha(
        taus,
        errs,
        family,
        model,
        fit_gamma=bool(params["fit_gamma"]),
        quad=_quad(args, config),
        grid_quantum=params["grid_quantum"],
    )
    out = _out_dir(args, config)
    with open(os.path.join(out, "fit.json"), "w") as fh:
        json.dump(
            {
                "alpha": result.alpha,
                "alpha_uncertainty": result.alpha_uncertainty,
                "gamma": result.gamma,
                "gamma_uncertainty": result.gamma_uncertainty,
                "rss": result.rss,
                "iterations": result.iterations,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    _emit_manifest(args, config, "fit", params, inputs={"data": data_path})
    return 0


def _cmd_scaling(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            **_MODEL_KEYS,
            "kind": None,
            "n": None,
            "tau_pi": 0.0,
            "amplitudes": None,
            "mode": "analytic",
            "realizations": 800,
            "points_per_curve": 8,
            "seed": 0,
            "tau_hi": 10.0,
            "workers": None,
            "out": ".",
        },
    )
    amplitudes = params["amplitudes"]
    if amplitudes is None:
        raise CliError("missing --amplitudes")
    if isinstance(amplitudes, str):
        amplitudes = [float(v) for v in amplitudes.split(",")]
    family = _build_family(args, config)
    model = _build_model(args, config)
    result = scaling_study(
        amplitudes,
        family,
        model,
        mode=str(params["mode"]),
        realizations=int(params["realizations"]),
        seed=int(params["seed"]),
        points_per_curve=int(params["points_per_curve"]),
        tau_hi=float(params["tau_hi"]),
        workers=None if params["workers"] is None else int(params["workers"]),
    )
    out = _out_dir(args, config)
    with open(os.path.join(out, "scaling.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["amplitude", "alpha", "ratio_to_first"])
        for v, a, r in zip(result.amplitudes, result.alphas, result.ratios):
            writer.writerow([f"{v:.17g}", f"{a:.17g}", f"{r:.17g}"])
    with open(os.path.join(out, "scaling.json"), "w") as fh:
        json.dump({"slope": result.slope, "mode": result.mode}, fh, indent=2)
        fh.write("\n")
    params["amplitudes"] = list(map(float, amplitudes))
    _emit_manifest(args, config, "scaling", params)
    return 0


def _cmd_compare(args, config) -> int:
    params = _collect(
        args,
        config,
        {
            **_MODEL_KEYS,
            "kinds": "cpmg,udd",
            "n_list": "2,4,6",
            "tau_pi": 0.0,
            "tau_min": None,
            "tau_max": None,
            "tau_points": 24,
            "grid_quantum": None,
            "rel_tol": 1e-6,
            "out": ".",
        },
    )
    kinds = params["kinds"]
    if isinstance(kinds, str):
        kinds = kinds.split(",")
    n_list = params["n_list"]
    if isinstance(n_list, str):
        n_list = [int(v) for v in n_list.split(",")]
    model = _build_model(args, config)
    report = compare_sequences(
        kinds,
        n_list,
        model,
        _tau_grid(args, config),
        tau_pi=float(params["tau_pi"]),
        quad=_quad(args, config),
        grid_quantum=params["grid_quantum"],
    )
    out = _out_dir(args, config)
    write_comparison_csv(os.path.join(out, "comparison.csv"), report)
    write_comparison_summary(os.path.join(out, "comparison.json"), report)
    params["kinds"] = list(kinds)
    params["n_list"] = list(n_list)
    _emit_manifest(args, config, "compare", params)
    return 0


# -- parser -------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--manifest", type=str, default=None, help="manifest path override")
    p.add_argument("--config", type=str, default=None, help="JSON config or manifest to replay")


def _add_family(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["cpmg", "udd", "custom"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--tau-pi", type=float, default=None, help="pulse width in s")
    p.add_argument("--axis", choices=["X", "Y_effective"], default=None)
    p.add_argument("--grid-quantum", type=float, default=None)


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--model", choices=["ohmic", "power_law", "ambient", "tabulated"], default=None
    )
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--cutoff-hz", type=float, default=None)
    p.add_argument("--exponent", type=float, default=None)
    p.add_argument("--omega-ref-hz", type=float, default=None)
    p.add_argument("--band-hz", type=float, nargs=2, default=None)
    p.add_argument(
        "--spur",
        action="append",
        default=None,
        help="center_hz:weight[:fwhm_hz], repeatable",
    )
    p.add_argument("--table", type=str, default=None, help="tabulated spectrum CSV")
    p.add_argument("--noise-scale", type=float, default=None, help="V_N amplitude knob")


def _add_tau_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-min", type=float, default=None)
    p.add_argument("--tau-max", type=float, default=None)
    p.add_argument("--tau-points", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddsim",
        description="Dynamical-decoupling sequence simulation and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sequence", help="emit a validated layout as JSON")
    _add_common(p)
    _add_family(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--primary-tail", type=float, default=None)
    p.add_argument("--final-tail", type=float, default=None)
    p.set_defaults(func=_cmd_sequence)

    p = sub.add_parser("filter", help="emit a filter-function curve as CSV")
    _add_common(p)
    _add_family(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--omega-tau-min", type=float, default=None)
    p.add_argument("--omega-tau-max", type=float, default=None)
    p.add_argument("--points", type=int, default=None)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("noise", help="synthesize traces, evaluate spectra")
    _add_common(p)
    _add_model(p)
    p.add_argument("noise_action", choices=["synth", "psd", "periodogram"])
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--freq-min-hz", type=float, default=None)
    p.add_argument("--freq-max-hz", type=float, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--trace", type=str, default=None, help="trace CSV to analyze")
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("coherence", help="predicted decoherence curve")
    _add_common(p)
    _add_family(p)
    _add_model(p)
    _add_tau_grid(p)
    p.add_argument("--rel-tol", type=float, default=None)
    p.set_defaults(func=_cmd_coherence)

    p = sub.add_parser("ensemble", help="Monte Carlo decoherence curve")
    _add_common(p)
    _add_family(p)
    _add_model(p)
    _add_tau_grid(p)
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--oversample", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("robustness", help="systematic-error robustness map")
    _add_common(p)
    _add_family(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--error-axis", choices=["pulse_length", "detuning"], default=None)
    p.add_argument("--error-min", type=float, default=None)
    p.add_argument("--error-max", type=float, default=None)
    p.add_argument("--error-points", type=int, default=None)
    p.add_argument("--theta-points", type=int, default=None)
    p.add_argument("--delta-l-hz", type=float, default=None, help="interpulse detuning")
    p.set_defaults(func=_cmd_robustness)

    p = sub.add_parser("fit", help="fit noise scale (and spur weight) to a curve")
    _add_common(p)
    _add_family(p)
    _add_model(p)
    p.add_argument("--data", type=str, default=None, help="CSV with tau_s and error_prob")
    p.add_argument("--fit-gamma", action="store_const", const=True, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("scaling", help="noise-amplitude scaling study")
    _add_common(p)
    _add_family(p)
    _add_model(p)
    p.add_argument("--amplitudes", type=str, default=None, help="comma-separated V_N list")
    p.add_argument("--mode", choices=["analytic", "montecarlo"], default=None)
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--points-per-curve", type=int, default=None)
    p.add_argument("--tau-hi", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("compare", help="sequence comparison and crossover report")
    _add_common(p)
    _add_model(p)
    _add_tau_grid(p)
    p.add_argument("--kinds", type=str, default=None)
    p.add_argument("--n-list", type=str, default=None)
    p.add_argument("--tau-pi", type=float, default=None)
    p.add_argument("--grid-quantum", type=float, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    try:
        if args.config:
            config = _load_config(args.config)
        return args.func(args, config)
    except (
        CliError,
        LayoutError,
        SpectrumError,
        FitError,
        ValueError,
        RuntimeError,
        OSError,
    ) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
