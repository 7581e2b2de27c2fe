"""Fitting measured decoherence, noise-power scaling studies and
sequence-comparison reports.

Fits exploit the linearity of the dephasing exponent in the spectrum: for a
template model with background chi0(tau) and unit-weight spur part
chi_spur(tau), the predicted error probability is

    p(tau; alpha, gamma) = (1 - exp(-alpha*(chi0 + gamma*chi_spur))) / 2

so the overall noise strength alpha and the relative spur weight gamma are
recovered by bounded scalar searches, not generic nonlinear optimization.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from ddsim.coherence import QuadratureConfig, chi, coherence_curve, tau_for_target_w
from ddsim.montecarlo import ensemble_curve
from ddsim.noise import Ambient, SpectrumModel, Spur, SpurOnly, with_noise_scale
from ddsim.sequences import SequenceFamily, build_layout


class FitError(RuntimeError):
    """The measured curve cannot identify the fit parameters."""


@dataclass(frozen=True)
class FitResult:
    """Recovered noise scale and optional spur weight with curvature-based
    uncertainties and the residual sum of squares."""

    alpha: float
    alpha_uncertainty: float
    gamma: float | None
    gamma_uncertainty: float | None
    rss: float
    iterations: int

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("fitted alpha must be positive")


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, iterations: int = 80):
    """Golden-section minimum of a unimodal scalar function on [lo, hi].
    Returns (argmin, evaluations)."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    for _ in range(iterations):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        evals += 1
        if abs(b - a) <= 1e-12 * (abs(a) + abs(b) + 1e-30):
            break
    return (c if fc < fd else d), evals


def _unit_spur_part(model: Ambient) -> SpurOnly:
    unit = replace(
        model, spurs=tuple(Spur(s.center, 1.0, s.sigma) for s in model.spurs)
    )
    return SpurOnly(base=unit)


def chi_components(
    family: SequenceFamily,
    model: SpectrumModel,
    taus,
    quad: QuadratureConfig | None = None,
    *,
    grid_quantum: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(chi0, chi_spur) per tau: background exponent and the unit-weight
    spur exponent (zero when the model carries no spurs)."""
    taus = np.asarray(taus, dtype=float)
    if isinstance(model, Ambient) and model.spurs:
        bg = model.without_spurs()
        spur = _unit_spur_part(model)
        chi0 = np.array(
            [
                chi(build_layout(family, t, grid_quantum=grid_quantum), bg, quad).value
                for t in taus
            ]
        )
        chis = np.array(
            [
                chi(build_layout(family, t, grid_quantum=grid_quantum), spur, quad).value
                for t in taus
            ]
        )
        return chi0, chis
    chi0 = np.array(
        [
            chi(build_layout(family, t, grid_quantum=grid_quantum), model, quad).value
            for t in taus
        ]
    )
    return chi0, np.zeros_like(chi0)


def fit_alpha(
    taus,
    error_probs,
    family: SequenceFamily,
    base_model: SpectrumModel,
    *,
    fit_gamma: bool = False,
    alpha_bracket: tuple[float, float] = (1e-4, 1e4),
    quad: QuadratureConfig | None = None,
    grid_quantum: float | None = None,
) -> FitResult:
    """Least-squares fit of the overall noise scale to a measured error
    curve; optionally fits the relative spur weight as well.

    The objective is summed squared residuals of the error probability (the
    measured quantity). alpha is searched on a log-spaced bracket by golden
    section; gamma, when free, on [0, 1].
    """
    taus = np.asarray(taus, dtype=float)
    meas = np.asarray(error_probs, dtype=float)
    if taus.size < 4:
        raise FitError(f"need at least 4 points to fit, got {taus.size}")
    if meas.max() < 1e-3:
        raise FitError("curve is degenerate: no decay observed (all W near 1)")
    if meas.min() > 0.497:
        raise FitError("curve is degenerate: fully dephased everywhere (all W near 0)")
    if fit_gamma and not (isinstance(base_model, Ambient) and base_model.spurs):
        raise FitError("fit_gamma requires an ambient model with spur terms")
    if fit_gamma:
        chi0, chispur = chi_components(
            family, base_model, taus, quad, grid_quantum=grid_quantum
        )
        gamma0 = base_model.spurs[0].weight
    else:
        # gamma held at the template's stored spur weights
        chi0 = np.array(
            [
                chi(
                    build_layout(family, t, grid_quantum=grid_quantum),
                    base_model,
                    quad,
                ).value
                for t in taus
            ]
        )
        chispur = np.zeros_like(chi0)
        gamma0 = 0.0

    def rss(log_alpha: float, gamma: float) -> float:
        alpha = 10.0**log_alpha
        exponent = alpha * (chi0 + gamma * chispur) if fit_gamma else alpha * chi0
        pred = 0.5 * (1.0 - np.exp(-exponent))
        return float(np.sum((meas - pred) ** 2))

    lo, hi = math.log10(alpha_bracket[0]), math.log10(alpha_bracket[1])
    iterations = 0
    gamma = gamma0
    if fit_gamma:
        for _ in range(6):
            log_alpha, ev1 = _golden_min(lambda la: rss(la, gamma), lo, hi)
            gamma, ev2 = _golden_min(lambda g: rss(log_alpha, g), 0.0, 1.0)
            iterations += ev1 + ev2
    else:
        log_alpha, iterations = _golden_min(lambda la: rss(la, gamma), lo, hi)
    alpha = 10.0**log_alpha
    best = rss(log_alpha, gamma)

    # curvature-based uncertainties: sigma^2 = 2 s^2 / d2RSS
    n_par = 2 if fit_gamma else 1
    dof = max(1, taus.size - n_par)
    s2 = best / dof

    def curvature(f, x, h):
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / h**2

    h_a = max(1e-6, abs(alpha) * 1e-4)
    d2a = curvature(lambda a: rss(math.log10(max(a, 1e-300)), gamma), alpha, h_a)
    sigma_alpha = math.sqrt(2.0 * s2 / d2a) if d2a > 0.0 else 0.0
    if fit_gamma:
        h_g = 1e-4
        d2g = curvature(lambda g: rss(log_alpha, g), gamma, h_g)
        sigma_gamma = math.sqrt(2.0 * s2 / d2g) if d2g > 0.0 else 0.0
    return FitResult(
        alpha=alpha,
        alpha_uncertainty=sigma_alpha,
        gamma=gamma if fit_gamma else None,
        gamma_uncertainty=sigma_gamma if fit_gamma else None,
        rss=best,
        iterations=iterations,
    )


# -- noise-power scaling -----------------------------------------------------

@dataclass(frozen=True)
class ScalingResult:
    """Fitted noise scales over an amplitude sweep, normalized to the first
    point, with the log-log regression slope (2 for quadratic power
    scaling)."""

    amplitudes: np.ndarray
    alphas: np.ndarray
    ratios: np.ndarray
    slope: float
    mode: str
    fits: tuple[FitResult, ...]


def _span_taus(
    family: SequenceFamily,
    model: SpectrumModel,
    points: int,
    w_span: tuple[float, float],
    quad: QuadratureConfig | None,
    tau_hi: float,
) -> np.ndarray:
    targets = np.linspace(w_span[1], w_span[0], points)
    return np.array(
        [
            tau_for_target_w(family, model, w, quad=quad, tau_hi=tau_hi, rel_tol=1e-3)
            for w in targets
        ]
    )


def scaling_study(
    amplitudes,
    family: SequenceFamily,
    model_template: SpectrumModel,
    *,
    mode: str = "montecarlo",
    realizations: int = 800,
    seed: int = 0,
    taus=None,
    points_per_curve: int = 8,
    w_span: tuple[float, float] = (0.15, 0.95),
    quad: QuadratureConfig | None = None,
    tau_hi: float = 10.0,
    workers: int | None = None,
) -> ScalingResult:
    """Fit the noise scale at each amplitude and report ratios to the first.

    "analytic" mode fits noiseless predicted curves (a pure linearity
    check: ratios are (V/V_ref)^2 and the slope is 2 up to solver
    tolerance); "montecarlo" mode synthesizes ensembles at every amplitude
    and fits those, so the slope carries statistics.

    With ``taus`` given, every amplitude is measured on that fixed grid
    (the experimental protocol: identical sequences, varying noise power).
    Otherwise each amplitude gets its own grid spanning ``w_span`` in
    predicted coherence.
    """
    if mode not in ("analytic", "montecarlo"):
        raise ValueError(f"unknown mode {mode!r}")
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.size < 3:
        raise ValueError("need at least 3 amplitudes, the first is the reference")
    if taus is not None:
        taus = np.asarray(taus, dtype=float)
    alphas = []
    fits = []
    for k, v in enumerate(amplitudes):
        model_v = with_noise_scale(model_template, v)
        grid = (
            taus
            if taus is not None
            else _span_taus(family, model_v, points_per_curve, w_span, quad, tau_hi)
        )
        if mode == "analytic":
            curve = coherence_curve(family, model_v, grid, quad)
            errs = curve.error_probs
        else:
            mc = ensemble_curve(
                family,
                model_v,
                grid,
                realizations,
                seed + k,
                workers=workers,
            )
            errs = mc.error_probs
        fit = fit_alpha(grid, errs, family, model_template, quad=quad)
        alphas.append(fit.alpha)
        fits.append(fit)
    alphas = np.array(alphas)
    ratios = alphas / alphas[0]
    slope = float(np.polyfit(np.log(amplitudes), np.log(alphas), 1)[0])
    return ScalingResult(
        amplitudes=amplitudes,
        alphas=alphas,
        ratios=ratios,
        slope=slope,
        mode=mode,
        fits=tuple(fits),
    )


# -- sequence comparison -----------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    """Error probabilities per (kind, n) over a shared tau grid, plus the
    crossover duration where the ordering of the first two kinds flips
    (None when no flip occurs inside the grid)."""

    kinds: tuple[str, ...]
    n_list: tuple[int, ...]
    taus: np.ndarray
    error_probs: dict  # (kind, n) -> np.ndarray
    crossovers: dict  # n -> float | None


def _crossover_tau(taus: np.ndarray, diff: np.ndarray) -> float | None:
    sign = np.sign(diff)
    for i in range(sign.size - 1):
        a, b = sign[i], sign[i + 1]
        if a == 0.0:
            continue
        if b == 0.0 or a * b < 0.0:
            d0, d1 = diff[i], diff[i + 1]
            frac = d0 / (d0 - d1) if d0 != d1 else 0.5
            return float(taus[i] + frac * (taus[i + 1] - taus[i]))
    return None


def compare_sequences(
    kinds,
    n_list,
    model: SpectrumModel,
    taus,
    *,
    tau_pi: float = 0.0,
    quad: QuadratureConfig | None = None,
    grid_quantum: float | None = None,
) -> ComparisonReport:
    """Predicted error probabilities for several sequence kinds and pulse
    counts on one tau grid, with crossover detection between the first two
    kinds. No extrapolation: a flip outside the grid reports None."""
    kinds = tuple(kinds)
    n_list = tuple(int(n) for n in n_list)
    taus = np.asarray(taus, dtype=float)
    errors: dict = {}
    for n in n_list:
        for kind in kinds:
            family = SequenceFamily(kind, n, tau_pi)
            curve = coherence_curve(family, model, taus, quad, grid_quantum=grid_quantum)
            errors[(kind, n)] = curve.error_probs
    crossovers = {}
    if len(kinds) >= 2:
        a, b = kinds[0], kinds[1]
        for n in n_list:
            crossovers[n] = _crossover_tau(taus, errors[(a, n)] - errors[(b, n)])
    return ComparisonReport(
        kinds=kinds,
        n_list=n_list,
        taus=taus,
        error_probs=errors,
        crossovers=crossovers,
    )


def write_comparison_csv(path, report: ComparisonReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "n", "tau_s", "error_prob"])
        for (kind, n), errs in sorted(report.error_probs.items()):
            for tau, e in zip(report.taus, errs):
                writer.writerow([kind, n, f"{tau:.17g}", f"{e:.17g}"])


def write_comparison_summary(path, report: ComparisonReport) -> None:
    doc = {
        "kinds": list(report.kinds),
        "n_list": list(report.n_list),
        "crossover_tau_s": {
            str(n): report.crossovers.get(n) for n in report.n_list
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
