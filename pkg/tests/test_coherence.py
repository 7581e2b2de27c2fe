import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from ddsim.coherence import (
    ChiConvergenceError,
    ChiDivergenceError,
    QuadratureConfig,
    chi,
    coherence_curve,
    tau_for_target_w,
    write_curve_csv,
    write_curve_manifest,
)
from ddsim.filters import filter_values
from ddsim.noise import (
    Ambient,
    OhmicHardCutoff,
    PowerLaw,
    Spur,
    with_noise_scale,
)
from ddsim.sequences import SequenceFamily, build_layout

TWO_PI = 2.0 * math.pi


def _dense_quadrature_oracle(layout, model, grid):
    """Brute-force trapezoid evaluation of the coherence integrand on a
    caller-supplied dense grid; independent of the adaptive path."""
    integrand = (2.0 / math.pi) * model.psd(grid) / grid**2 * filter_values(
        layout, grid * layout.total_duration
    )
    return float(np.trapezoid(integrand, grid))


def test_zero_amplitude_model_gives_unit_coherence():
    layout = build_layout(SequenceFamily("udd", 2, 0.0), 1e-3)
    model = with_noise_scale(
        OhmicHardCutoff(slope_amplitude=1.0, cutoff=TWO_PI * 500.0), 0.0
    )
    result = chi(layout, model)
    assert result.value == 0.0
    assert math.exp(-result.value) == 1.0


def test_narrow_spur_limit_matches_point_filter_value():
    # a narrow line of integrated area A at w0 contributes
    # (2/pi) * (A / w0^2) * F(w0 tau); checked against brute-force
    # quadrature of the same Gaussian line
    tau = 8e-3
    layout = build_layout(SequenceFamily("cpmg", 2, 0.0), tau)
    w0 = TWO_PI * 400.0
    sigma = TWO_PI * 0.05
    base = Ambient(
        alpha=1.0,
        spurs=(Spur(center=w0, weight=1.0, sigma=sigma),),
        band=(TWO_PI * 1.0, TWO_PI * 2000.0),
    )
    # pull out the pure line: subtract the smooth background
    area = base.base_band_power() * 1.0
    predicted = (2.0 / math.pi) * area / w0**2 * filter_values(layout, np.array([w0 * tau]))[0]
    grid = np.unique(
        np.concatenate(
            [
                np.geomspace(base.band[0], base.band[1], 20000),
                np.linspace(w0 - 10 * sigma, w0 + 10 * sigma, 60000),
            ]
        )
    )
    spur_only = base.spurs_only()
    oracle = _dense_quadrature_oracle(layout, spur_only, grid)
    adaptive = chi(layout, spur_only).value
    assert adaptive == pytest.approx(oracle, rel=2e-4)
    assert adaptive == pytest.approx(predicted, rel=2e-3)


def test_free_induction_white_noise():
    S0 = 2.5
    tau = 3e-3
    layout = build_layout(SequenceFamily("cpmg", 0, 0.0), tau)
    model = PowerLaw(
        exponent=0.0,
        amplitude=S0,
        omega_ref=TWO_PI,
        band=(TWO_PI * 1.0, TWO_PI * 2000.0),
    )
    result = chi(layout, model)
    grid = np.geomspace(model.band[0], model.band[1], 400000)
    oracle = _dense_quadrature_oracle(layout, model, grid)
    assert result.value == pytest.approx(oracle, rel=1e-5)
    # wide-band analytic limit of the free-induction overlap: chi -> 2 S0 tau
    assert result.value == pytest.approx(2.0 * S0 * tau, rel=0.05)


def test_chi_linearity_in_noise_power():
    layout = build_layout(SequenceFamily("udd", 4, 0.0), 5e-3)
    base = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    c1 = chi(layout, base).value
    for v in (0.1, 0.7, 3.0):
        cv = chi(layout, with_noise_scale(base, v)).value
        assert cv == pytest.approx(v**2 * c1, rel=1e-9)


def test_chi_additivity_background_plus_spur():
    layout = build_layout(SequenceFamily("cpmg", 4, 0.0), 8e-3)
    full = Ambient(
        alpha=3e5,
        spurs=(Spur(center=TWO_PI * 153.0, weight=0.15),),
        band=(TWO_PI * 1e-1, TWO_PI * 1e4),
    )
    total = chi(layout, full).value
    bg = chi(layout, full.without_spurs()).value
    spur = chi(layout, full.spurs_only()).value
    assert total == pytest.approx(bg + spur, rel=1e-6)


def test_quadrature_robustness_under_tolerance_halving():
    layout = build_layout(SequenceFamily("udd", 6, 185e-6), 12e-3)
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    loose = chi(layout, model, QuadratureConfig(rel_tol=1e-6))
    tight = chi(layout, model, QuadratureConfig(rel_tol=5e-7))
    assert abs(loose.value - tight.value) <= loose.error_estimate + 1e-15 * loose.value


@dataclass(frozen=True)
class _DivergentStub:
    """S ~ 1/omega on an open band, integrable nowhere near zero."""

    def psd(self, omega):
        return 1.0 / np.asarray(omega, dtype=float)

    def support(self):
        return (0.0, 1e3)

    def synthesis_cutoff(self):
        return 1e3


def test_divergent_infrared_is_detected():
    layout = build_layout(SequenceFamily("cpmg", 1, 0.0), 1e-3)
    with pytest.raises(ChiDivergenceError, match="diverges"):
        chi(layout, _DivergentStub())


def test_nonconvergence_carries_last_two_estimates():
    layout = build_layout(SequenceFamily("cpmg", 2, 0.0), 8e-3)
    model = Ambient(
        alpha=1.0,
        spurs=(Spur(center=TWO_PI * 153.0, weight=0.15, sigma=1e-3),),
        band=(TWO_PI * 1.0, TWO_PI * 2000.0),
    )
    cfg = QuadratureConfig(rel_tol=1e-12, max_levels=3, panels_per_decade=1)
    with pytest.raises(ChiConvergenceError) as err:
        chi(layout, model, cfg)
    assert math.isfinite(err.value.last_estimate)
    assert math.isfinite(err.value.previous_estimate)


def test_monotone_decay_for_spurless_spectra():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    fam = SequenceFamily("udd", 4, 0.0)
    curve = coherence_curve(fam, model, np.geomspace(1e-3, 5e-2, 12))
    assert np.all(np.diff(curve.ws) <= 1e-12)


def test_more_pulses_help_in_low_frequency_noise():
    # spur-free steep spectrum: the n=4 filter passes strictly less noise
    # than n=2 at every duration spanning the decay
    model = Ambient(alpha=3e7, spurs=(), band=(TWO_PI * 1e-3, TWO_PI * 1e6))
    taus = np.geomspace(2e-3, 4e-2, 10)
    chi2 = coherence_curve(SequenceFamily("cpmg", 2, 0.0), model, taus).chis
    chi4 = coherence_curve(SequenceFamily("cpmg", 4, 0.0), model, taus).chis
    assert chi2[-1] > 1.0  # the grid really spans the decay
    assert np.all(chi4 <= chi2 * (1.0 + 1e-9))


def test_curve_consistency_and_free_induction_point():
    S0 = 1.5
    model = PowerLaw(
        exponent=0.0, amplitude=S0, omega_ref=TWO_PI, band=(TWO_PI, TWO_PI * 2000.0)
    )
    fam = SequenceFamily("cpmg", 0, 0.0)
    taus = np.array([1e-3, 2e-3, 4e-3])
    curve = coherence_curve(fam, model, taus)
    assert curve.ws == pytest.approx(np.exp(-curve.chis), rel=1e-15)
    assert curve.error_probs == pytest.approx(0.5 * (1 - curve.ws), rel=1e-15)
    lay = build_layout(fam, 2e-3)
    assert curve.chis[1] == pytest.approx(chi(lay, model).value, rel=1e-12)


def test_curve_error_annotates_tau():
    model = OhmicHardCutoff(slope_amplitude=1.0, cutoff=TWO_PI * 500.0)
    fam = SequenceFamily("cpmg", 6, 185e-6)
    with pytest.raises(Exception, match="tau = 0.001"):
        coherence_curve(fam, model, [1e-3])


def test_tau_for_target_w_brackets_the_crossing():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    fam = SequenceFamily("udd", 3, 0.0)
    tau = tau_for_target_w(fam, model, 0.5, tau_hi=1.0)
    val = chi(build_layout(fam, tau), model).value
    assert val == pytest.approx(math.log(2.0), rel=1e-5)


def test_curve_csv_and_manifest(tmp_path):
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    fam = SequenceFamily("udd", 2, 0.0)
    curve = coherence_curve(fam, model, np.geomspace(1e-3, 1e-2, 5))
    csv_path = tmp_path / "curve.csv"
    write_curve_csv(csv_path, curve)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "tau_s,chi,W,error_prob"
    assert len(lines) == 6
    tau, c, w, p = map(float, lines[2].split(","))
    assert w == pytest.approx(math.exp(-c), rel=1e-15)
    assert p == pytest.approx(0.5 * (1 - w), rel=1e-15)
    man_path = tmp_path / "curve.json"
    write_curve_manifest(man_path, curve, QuadratureConfig())
    doc = json.loads(man_path.read_text())
    assert doc["family"]["kind"] == "udd"
    assert doc["model"]["variant"] == "ohmic_hard_cutoff"
    assert doc["quadrature"]["rel_tol"] == 1e-6
