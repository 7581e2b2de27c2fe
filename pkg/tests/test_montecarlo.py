import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsim.coherence import chi
from ddsim.filters import toggle_function
from ddsim.montecarlo import (
    DRIVE_ALIGNED_PHASE,
    ControlErrorModel,
    ErrorAxis,
    TraceError,
    accumulate_phase,
    bright_population,
    ensemble_coherence,
    ensemble_curve,
    evolve_sequence,
    ideal_final_phase,
    phase_weights,
    robustness_scan,
    write_ensemble_csv,
    write_map_csv,
    write_map_manifest,
)
from ddsim.noise import NoiseTrace, OhmicHardCutoff, PowerLaw, with_noise_scale
from ddsim.sequences import SequenceFamily, build_layout

TWO_PI = 2.0 * math.pi


def _trace_for(layout, samples_fn, oversample=16):
    dt = layout.min_free_interval() / (16 * 1.0001)
    m = int(math.ceil(layout.total_duration / dt)) + 2
    t = np.arange(m) * dt
    return NoiseTrace(dt=dt, samples=samples_fn(t), seed=0)


def test_static_noise_refocused_by_single_echo():
    layout = build_layout(SequenceFamily("udd", 1, 0.0), 1e-3)
    trace = _trace_for(layout, lambda t: np.full_like(t, 123.0))
    phi = accumulate_phase(toggle_function(layout), trace)
    assert abs(phi) < 1e-12


def test_free_induction_constant_noise():
    tau = 1e-3
    layout = build_layout(SequenceFamily("cpmg", 0, 0.0), tau)
    trace = _trace_for(layout, lambda t: np.full_like(t, 55.0))
    phi = accumulate_phase(toggle_function(layout), trace)
    assert phi == pytest.approx(55.0 * tau, rel=1e-12)


def test_linear_drift_through_single_echo():
    tau = 1e-3
    c = 4.0e4
    layout = build_layout(SequenceFamily("udd", 1, 0.0), tau)
    trace = _trace_for(layout, lambda t: c * t)
    phi = accumulate_phase(toggle_function(layout), trace)
    assert phi == pytest.approx(-c * tau**2 / 4.0, rel=1e-10)


def test_trace_too_coarse_rejected():
    layout = build_layout(SequenceFamily("cpmg", 4, 0.0), 1e-3)
    # smallest free interval is 125 us; dt must be <= 7.8 us
    trace = NoiseTrace(dt=2e-5, samples=np.zeros(60), seed=0)
    with pytest.raises(TraceError, match="too coarse"):
        accumulate_phase(toggle_function(layout), trace)


def test_trace_too_short_rejected():
    layout = build_layout(SequenceFamily("cpmg", 1, 0.0), 1e-3)
    trace = NoiseTrace(dt=1e-6, samples=np.zeros(100), seed=0)
    with pytest.raises(TraceError, match="covers"):
        accumulate_phase(toggle_function(layout), trace)


def test_phase_weights_integrate_smooth_signal():
    # weights reproduce the toggled integral of a band-limited signal
    layout = build_layout(SequenceFamily("udd", 3, 1e-4), 8e-3)
    toggle = toggle_function(layout)
    dt = layout.min_free_interval() / 32
    m = int(math.ceil(8e-3 / dt)) + 2
    t = np.arange(m) * dt
    w0 = TWO_PI * 150.0
    beta = np.cos(w0 * t + 0.3)
    weights = phase_weights(toggle, dt, m)
    direct = 0.0
    for seg in toggle.segments:
        if seg.value:
            xs = np.linspace(seg.start, seg.end, 4001)
            direct += seg.value * np.trapezoid(np.cos(w0 * xs + 0.3), xs)
    assert weights @ beta == pytest.approx(direct, rel=1e-4, abs=1e-9)


def test_zero_noise_gives_unit_coherence():
    layout = build_layout(SequenceFamily("udd", 2, 0.0), 2e-3)
    model = with_noise_scale(
        OhmicHardCutoff(slope_amplitude=1.0, cutoff=TWO_PI * 500.0), 0.0
    )
    result = ensemble_coherence(layout, model, 100, seed=1)
    assert result.w == 1.0
    assert result.phi_square_half == 0.0


def test_ensemble_matches_spectral_prediction():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    fam = SequenceFamily("udd", 2, 0.0)
    layout = build_layout(fam, 4e-3)
    predicted = math.exp(-chi(layout, model).value)
    result = ensemble_coherence(layout, model, 2000, seed=3)
    assert abs(result.w - predicted) <= max(0.02, 3.0 * result.stderr)


def test_gaussian_identity_phi_square():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    layout = build_layout(SequenceFamily("cpmg", 3, 0.0), 5e-3)
    reference = chi(layout, model).value
    result = ensemble_coherence(layout, model, 3000, seed=11)
    # mean(phi^2)/2 estimates chi; allow the discretization and sampling slack
    assert result.phi_square_half == pytest.approx(reference, rel=0.1)


def test_ensemble_determinism_and_worker_independence():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    layout = build_layout(SequenceFamily("udd", 3, 0.0), 3e-3)
    a = ensemble_coherence(layout, model, 600, seed=21)
    b = ensemble_coherence(layout, model, 600, seed=21)
    c = ensemble_coherence(layout, model, 600, seed=21, workers=3)
    assert a.w == b.w == c.w
    assert a.stderr == b.stderr == c.stderr
    d = ensemble_coherence(layout, model, 600, seed=22)
    assert d.w != a.w


def test_statistical_envelope_shrinks_with_realizations():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    layout = build_layout(SequenceFamily("cpmg", 2, 0.0), 4e-3)
    # empirical spread of the W estimate over independent seeds
    envelopes = []
    for r in (250, 1000, 4000):
        ws = [
            ensemble_coherence(layout, model, r, seed=100 * k, oversample=8).w
            for k in range(24)
        ]
        envelopes.append(float(np.std(ws)))
    assert envelopes[0] / envelopes[1] == pytest.approx(2.0, abs=0.8)
    assert envelopes[1] / envelopes[2] == pytest.approx(2.0, abs=0.8)
    # the reported batch-means stderr tracks the true envelope
    reported = ensemble_coherence(layout, model, 4000, seed=77, oversample=8).stderr
    assert reported == pytest.approx(envelopes[2], rel=0.6)


def test_ensemble_curve_matches_prediction_pointwise():
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    fam = SequenceFamily("cpmg", 2, 0.0)
    taus = [2e-3, 4e-3, 8e-3]
    curve = ensemble_curve(fam, model, taus, 2000, seed=17)
    for tau, w, se in zip(curve.taus, curve.ws, curve.stderrs):
        predicted = math.exp(-chi(build_layout(fam, tau), model).value)
        assert abs(w - predicted) <= max(0.02, 3.0 * se)


def test_ensemble_csv(tmp_path):
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    curve = ensemble_curve(SequenceFamily("udd", 1, 0.0), model, [1e-3, 2e-3], 300, seed=2)
    path = tmp_path / "mc.csv"
    write_ensemble_csv(path, curve)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau_s,chi,W,error_prob,w_stderr"
    assert len(lines) == 3


# -- Bloch evolution ---------------------------------------------------------

def test_ideal_sequence_closes_dark():
    fam = SequenceFamily("cpmg", 6, 185e-6)
    layout = build_layout(fam, 8e-3, grid_quantum=10e-6)
    errors = ControlErrorModel(
        initial_phase=DRIVE_ALIGNED_PHASE, interpulse_detuning=TWO_PI * 1e5
    )
    state = evolve_sequence(layout, None, errors)
    assert bright_population(state) < 1e-9
    assert abs(np.linalg.norm(state) - 1.0) < 1e-9


def test_two_quarter_turns_reach_dark():
    layout = build_layout(SequenceFamily("cpmg", 0, 0.0), 1e-3)
    state = evolve_sequence(layout, None, ControlErrorModel())
    assert state[2] == pytest.approx(-1.0, abs=1e-12)


def test_constant_noise_echo_stays_dark():
    layout = build_layout(SequenceFamily("udd", 1, 0.0), 1e-3)
    trace = _trace_for(layout, lambda t: np.full_like(t, 377.0))
    state = evolve_sequence(layout, trace, ControlErrorModel())
    assert bright_population(state) < 1e-6


def test_bloch_phase_matches_fast_path():
    rng = np.random.default_rng(8)
    for n, kind in ((1, "udd"), (2, "cpmg"), (5, "udd")):
        layout = build_layout(SequenceFamily(kind, n, 0.0), 2e-3)
        trace = _trace_for(layout, lambda t: rng.normal(0.0, 300.0, t.size))
        phi = accumulate_phase(toggle_function(layout), trace)
        state = evolve_sequence(layout, trace, ControlErrorModel())
        assert bright_population(state) == pytest.approx(
            math.sin(phi / 2.0) ** 2, abs=1e-9
        )


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=0, max_value=8),
    eps=st.floats(min_value=-0.9, max_value=0.9),
    detuning=st.floats(min_value=-1e4, max_value=1e4),
    theta=st.floats(min_value=0.0, max_value=TWO_PI),
)
def test_norm_preserved_under_any_errors(n, eps, detuning, theta):
    layout = build_layout(SequenceFamily("udd", n, 100e-6), 20e-3)
    errors = ControlErrorModel(
        pulse_length_scale=eps,
        static_detuning=detuning,
        interpulse_detuning=TWO_PI * 1e5,
        initial_phase=theta,
    )
    state = evolve_sequence(layout, None, errors)
    assert abs(np.linalg.norm(state) - 1.0) < 1e-9


def test_axis_equivalence_without_pulse_errors():
    tau = 8e-3
    layX = build_layout(SequenceFamily("udd", 6, 185e-6, axis="X"), tau)
    layY = build_layout(SequenceFamily("udd", 6, 185e-6, axis="Y_effective"), tau)
    rng = np.random.default_rng(3)
    trace = _trace_for(layX, lambda t: rng.normal(0.0, 200.0, t.size))
    errors = ControlErrorModel(initial_phase=0.7, interpulse_detuning=TWO_PI * 1e5)
    bx = bright_population(evolve_sequence(layX, trace, errors))
    by = bright_population(evolve_sequence(layY, trace, errors))
    assert abs(bx - by) < 1e-9


def test_axis_plans_differ_under_pulse_errors():
    tau = 8e-3
    layX = build_layout(SequenceFamily("udd", 6, 185e-6, axis="X"), tau)
    layY = build_layout(SequenceFamily("udd", 6, 185e-6, axis="Y_effective"), tau)
    errors = ControlErrorModel(
        pulse_length_scale=0.2,
        initial_phase=0.7,
        interpulse_detuning=TWO_PI * 1e5,
    )
    bx = bright_population(evolve_sequence(layX, None, errors))
    by = bright_population(evolve_sequence(layY, None, errors))
    assert abs(bx - by) > 1e-4


def test_fixed_final_tail_mode():
    layout = build_layout(
        SequenceFamily("cpmg", 2, 0.0), 1e-3, primary_tail=12.5e-6, final_tail=17.5e-6
    )
    delta_l = TWO_PI * 1e5
    errors = ControlErrorModel(interpulse_detuning=delta_l)
    # auto closure always ends dark
    auto = evolve_sequence(layout, None, errors, final_tail_mode="auto")
    assert bright_population(auto) < 1e-9
    # the fixed tail reproduces auto only when it implements the same angle
    theta_f = ideal_final_phase(layout, errors)
    matched = build_layout(
        SequenceFamily("cpmg", 2, 0.0),
        1e-3,
        primary_tail=12.5e-6,
        final_tail=theta_f / delta_l,
    )
    fixed = evolve_sequence(matched, None, errors, final_tail_mode="fixed")
    assert bright_population(fixed) < 1e-9


def test_ungated_noise_degrades_pulses():
    layout = build_layout(SequenceFamily("cpmg", 4, 185e-6), 8e-3)
    rng = np.random.default_rng(10)
    trace = _trace_for(layout, lambda t: rng.normal(0.0, 3000.0, t.size))
    errors = ControlErrorModel(initial_phase=DRIVE_ALIGNED_PHASE)
    gated = bright_population(evolve_sequence(layout, trace, errors, gate_noise=True))
    ungated = bright_population(
        evolve_sequence(layout, trace, errors, gate_noise=False)
    )
    assert ungated != pytest.approx(gated, abs=1e-12)


def test_control_error_validation():
    with pytest.raises(ValueError):
        ControlErrorModel(pulse_length_scale=-1.0)
    with pytest.raises(ValueError):
        ControlErrorModel(static_detuning=math.inf)


def test_error_axis_validation():
    with pytest.raises(ValueError):
        ErrorAxis("bogus", np.array([1.0]))
    with pytest.raises(ValueError):
        ErrorAxis("detuning", np.array([]))


def test_robustness_scan_zero_error_column():
    theta = np.linspace(0.0, TWO_PI, 9, endpoint=False)
    axis = ErrorAxis("pulse_length", np.array([0.0]))
    for kind, gq in (("cpmg", 10e-6), ("udd", None)):
        fam = SequenceFamily(kind, 6, 185e-6)
        rmap = robustness_scan(
            fam, 8e-3, axis, theta, interpulse_detuning=TWO_PI * 1e5, grid_quantum=gq
        )
        assert rmap.values.shape == (9, 1)
        assert np.max(rmap.values) < 1e-9


def test_robustness_scan_with_noise_is_deterministic():
    fam = SequenceFamily("cpmg", 2, 0.0)
    axis = ErrorAxis("pulse_length", np.array([0.0, 0.2]))
    theta = np.array([DRIVE_ALIGNED_PHASE])
    model = OhmicHardCutoff(slope_amplitude=0.5, cutoff=TWO_PI * 500.0)
    a = robustness_scan(fam, 4e-3, axis, theta, model=model, realizations=8, seed=5)
    b = robustness_scan(fam, 4e-3, axis, theta, model=model, realizations=8, seed=5)
    assert np.array_equal(a.values, b.values)
    assert np.all((a.values >= 0.0) & (a.values <= 1.0))
    # noise makes even the error-free column imperfect
    assert a.values[0, 0] > 1e-6


def test_map_csv_and_manifest(tmp_path):
    fam = SequenceFamily("udd", 2, 0.0)
    axis = ErrorAxis("detuning", np.array([0.0, TWO_PI * 100.0]))
    rmap = robustness_scan(fam, 2e-3, axis, np.array([0.0, math.pi]))
    csv_path = tmp_path / "map.csv"
    write_map_csv(csv_path, rmap)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "theta0_rad,error_param,bright_population"
    assert len(lines) == 5
    meta_path = tmp_path / "map.json"
    write_map_manifest(meta_path, rmap)
    assert "udd" in meta_path.read_text()
