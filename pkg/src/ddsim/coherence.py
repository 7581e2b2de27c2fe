"""Dephasing exponent chi(tau) and predicted coherence curves.

chi is the spectral overlap integral

    chi(tau) = (2/pi) * integral_0^inf S(omega)/omega^2 * F(omega tau) domega

evaluated over the spectrum's support band. The integrand oscillates on the
scale Delta(omega tau) ~ pi and may contain narrow spurs, so integration runs
on log-spaced panels with forced boundaries at spur locations and
filter-peak guides, with adaptive Simpson bisection inside each panel.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ddsim.filters import filter_values
from ddsim.noise import Ambient, SpectrumModel, SpurOnly, model_to_dict
from ddsim.sequences import SequenceFamily, SequenceLayout, build_layout


class ChiConvergenceError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, last_estimate: float, previous_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.previous_estimate = previous_estimate


class ChiDivergenceError(RuntimeError):
    """The coherence integrand diverges at the lower band edge."""


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for the chi integral.

    ``rel_tol`` is the relative tolerance on each panel (refinement stops
    when successive Simpson refinements differ by less); ``max_levels``
    bounds the bisection depth per panel. ``panels_per_decade`` sets the
    log-spaced base grid and ``peak_guides`` the number of filter-peak
    boundaries forced near multiples of pi / (mean free interval).
    """

    rel_tol: float = 1e-6
    max_levels: int = 30
    panels_per_decade: int = 4
    peak_guides: int = 64


@dataclass(frozen=True)
class ChiResult:
    value: float
    error_estimate: float
    evaluations: int

    def __float__(self) -> float:
        return self.value


def _integrand_factory(layout: SequenceLayout, model: SpectrumModel):
    tau = layout.total_duration

    def integrand(omega: np.ndarray) -> np.ndarray:
        return (2.0 / math.pi) * model.psd(omega) / omega**2 * filter_values(
            layout, omega * tau
        )

    return integrand


def _panel_boundaries(
    layout: SequenceLayout, model: SpectrumModel, lo: float, hi: float, cfg: QuadratureConfig
) -> np.ndarray:
    pts = {lo, hi}
    decades = math.log10(hi / lo)
    n_log = max(2, int(math.ceil(decades * cfg.panels_per_decade)))
    pts.update(np.geomspace(lo, hi, n_log + 1))
    # narrow spectral lines must land on panel edges or bisection never
    # sees them
    spur_sources = []
    if isinstance(model, Ambient):
        spur_sources = model.spurs
    elif isinstance(model, SpurOnly):
        spur_sources = model.base.spurs
    for spur in spur_sources:
        for k in (-6.0, -2.0, 0.0, 2.0, 6.0):
            pts.add(spur.center + k * spur.sigma)
    # filter peaks recur near odd multiples of pi over the mean free interval
    mean_gap = (layout.total_duration - layout.n * layout.pulse_duration) / (
        layout.n + 1
    )
    step = math.pi / mean_gap
    k = 1
    while k <= cfg.peak_guides and k * step < hi:
        pts.add(k * step)
        k += 1
    arr = np.array(sorted(p for p in pts if lo <= p <= hi))
    return arr


def _adaptive_simpson_panel(f, a: float, b: float, cfg: QuadratureConfig, tol_floor: float):
    """Level-synchronous adaptive Simpson on one panel.

    Returns (integral, error_estimate, n_evaluations). Intervals whose
    two-level Simpson difference exceeds the tolerance are bisected in bulk
    until every interval converges or ``max_levels`` is reached.
    """
    xs = np.array([a, 0.5 * (a + b), b])
    fs = f(xs)
    lo = np.array([a])
    hi = np.array([b])
    fl, fm, fh = fs[:1], fs[1:2], fs[2:]
    coarse = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh)
    total = 0.0
    err = 0.0
    evals = 3
    for level in range(cfg.max_levels):
        mid = 0.5 * (lo + hi)
        xlm = 0.5 * (lo + mid)
        xmh = 0.5 * (mid + hi)
        flm = f(xlm)
        fmh = f(xmh)
        evals += xlm.size + xmh.size
        left = (mid - lo) / 6.0 * (fl + 4.0 * flm + fm)
        right = (hi - mid) / 6.0 * (fm + 4.0 * fmh + fh)
        fine = left + right
        delta = fine - coarse
        tol = cfg.rel_tol * np.maximum(np.abs(fine), tol_floor)
        done = np.abs(delta) <= 15.0 * tol
        if not np.all(done) and level == cfg.max_levels - 1:
            bad_fine = float(total + np.sum(fine))
            bad_coarse = float(total + np.sum(coarse))
            raise ChiConvergenceError(
                f"panel [{a:g}, {b:g}] rad/s did not converge after "
                f"{cfg.max_levels} bisection levels "
                f"(last two estimates {bad_fine:g}, {bad_coarse:g})",
                bad_fine,
                bad_coarse,
            )
        total += float(np.sum(fine[done] + delta[done] / 15.0))
        err += float(np.sum(np.abs(delta[done])) / 15.0)
        keep = ~done
        if not np.any(keep):
            break
        # children inherit endpoint values; each child's coarse Simpson was
        # just computed as this level's half-interval estimate
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate(
            [mid[keep], hi[keep]]
        )
        fl, fm, fh, coarse = (
            np.concatenate([fl[keep], fm[keep]]),
            np.concatenate([flm[keep], fmh[keep]]),
            np.concatenate([fm[keep], fh[keep]]),
            np.concatenate([left[keep], right[keep]]),
        )
    return total, err, evals


def chi(
    layout: SequenceLayout,
    model: SpectrumModel,
    quad: QuadratureConfig | None = None,
) -> ChiResult:
    """Dephasing exponent for ``layout`` under ``model``.

    Returns the converged integral with a convergence estimate. Raises
    :class:`ChiDivergenceError` when the integrand blows up at an open lower
    band edge, and :class:`ChiConvergenceError` (carrying the last two
    estimates) when refinement stalls.
    """
    cfg = quad or QuadratureConfig()
    f = _integrand_factory(layout, model)
    lo, hi = model.support()
    if hi <= 0.0:
        return ChiResult(0.0, 0.0, 0)
    if lo <= 0.0:
        # open lower edge: |s_hat| <= tau bounds the integrand by
        # (2/pi) S(omega) tau^2, so divergence can only come from the
        # spectrum itself; probe its local power law
        probes = hi * np.array([1e-9, 2e-9])
        svals = np.asarray(model.psd(probes), dtype=float)
        if svals[0] > 0.0 and svals[1] > 0.0:
            slope = math.log(svals[1] / svals[0]) / math.log(2.0)
            if slope <= -0.999:
                raise ChiDivergenceError(
                    f"spectrum grows like omega^{slope:.3f} toward the open "
                    "band edge at 0; the coherence integral diverges"
                )
        lo = hi * 1e-9
    boundaries = _panel_boundaries(layout, model, lo, hi, cfg)
    # order-of-magnitude estimate so near-zero panels are not refined forever
    probe = f(boundaries)
    tol_floor = abs(float(np.trapezoid(probe, boundaries))) * 1e-3
    total = 0.0
    err = 0.0
    evals = boundaries.size
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if b <= a:
            continue
        t, e, ne = _adaptive_simpson_panel(f, float(a), float(b), cfg, tol_floor)
        total += t
        err += e
        evals += ne
    if total < 0.0:
        if total < -1e-12:
            raise ChiConvergenceError(
                f"quadrature produced a negative exponent {total:g}", total, total
            )
        total = 0.0
    return ChiResult(value=total, error_estimate=err, evaluations=evals)


# -- coherence curves ------------------------------------------------------

@dataclass(frozen=True)
class CoherenceCurve:
    """(tau, chi, W, error probability) samples for one sequence family
    under one spectrum. W = exp(-chi) and error = (1 - W)/2 hold exactly."""

    taus: np.ndarray
    chis: np.ndarray
    family: SequenceFamily | None = None
    model: SpectrumModel | None = None

    @property
    def ws(self) -> np.ndarray:
        return np.exp(-self.chis)

    @property
    def error_probs(self) -> np.ndarray:
        return 0.5 * (1.0 - self.ws)

    def __len__(self) -> int:
        return self.taus.size


def coherence_curve(
    family: SequenceFamily,
    model: SpectrumModel,
    taus,
    quad: QuadratureConfig | None = None,
    *,
    grid_quantum: float | None = None,
) -> CoherenceCurve:
    """Evaluate chi over a tau grid, building one layout per point."""
    taus = np.asarray(taus, dtype=float)
    chis = np.empty_like(taus)
    for i, tau in enumerate(taus):
        try:
            layout = build_layout(family, tau, grid_quantum=grid_quantum)
            chis[i] = chi(layout, model, quad).value
        except Exception as exc:
            head = str(exc.args[0]) if exc.args else str(exc)
            exc.args = (f"tau = {tau:g} s: {head}",) + exc.args[1:]
            raise
    return CoherenceCurve(taus=taus, chis=chis, family=family, model=model)


def tau_for_target_w(
    family: SequenceFamily,
    model: SpectrumModel,
    target_w: float,
    *,
    tau_lo: float | None = None,
    tau_hi: float = 10.0,
    quad: QuadratureConfig | None = None,
    iterations: int = 60,
    rel_tol: float = 1e-9,
) -> float:
    """Duration at which the predicted coherence crosses ``target_w``
    (bisection on the monotone-decay assumption)."""
    if not 0.0 < target_w < 1.0:
        raise ValueError("target W must be in (0, 1)")
    target_chi = -math.log(target_w)
    lo = tau_lo if tau_lo is not None else max(
        family.n * family.pulse_duration * 1.01, 1e-6
    )
    if lo <= family.n * family.pulse_duration:
        lo = family.n * family.pulse_duration + 1e-9
    hi = tau_hi
    chi_hi = chi(build_layout(family, hi), model, quad).value
    if chi_hi < target_chi:
        raise ValueError(
            f"target W = {target_w} not reached by tau = {hi} s (chi = {chi_hi:g})"
        )
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        val = chi(build_layout(family, mid), model, quad).value
        if val < target_chi:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + rel_tol:
            break
    return math.sqrt(lo * hi)


def write_curve_csv(path, curve: CoherenceCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau_s", "chi", "W", "error_prob"])
        for tau, c, w, p in zip(curve.taus, curve.chis, curve.ws, curve.error_probs):
            writer.writerow(
                [f"{tau:.17g}", f"{c:.17g}", f"{w:.17g}", f"{p:.17g}"]
            )


def write_curve_manifest(path, curve: CoherenceCurve, quad: QuadratureConfig) -> None:
    doc = {
        "family": None
        if curve.family is None
        else {
            "kind": curve.family.kind,
            "n": curve.family.n,
            "tau_pi_s": curve.family.pulse_duration,
        },
        "model": None if curve.model is None else model_to_dict(curve.model),
        "quadrature": {
            "rel_tol": quad.rel_tol,
            "max_levels": quad.max_levels,
            "panels_per_decade": quad.panels_per_decade,
            "peak_guides": quad.peak_guides,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
