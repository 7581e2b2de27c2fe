"""Time-domain ensemble simulation of a dephasing qubit under pulse
sequences.

Two simulation depths are provided. The phase-accumulation fast path
integrates the toggled noise integral phi = integral s(t) beta(t) dt per
realization and estimates W = |<e^{i phi}>|; it is the independent oracle
for the spectral-overlap prediction. The full Bloch-vector path composes
exact axis-angle rotations for every free-precession window and every
finite-width pulse, including deliberate interpulse detuning, systematic
pulse-length and detuning errors, and effective-Y pulses built from a pi_X
pulse plus a net pi_Z rotation in the adjacent precession bookkeeping.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ddsim.filters import ToggleFunction, toggle_function
from ddsim.noise import NoiseTrace, SpectrumModel, model_to_dict, _next_pow2
from ddsim.sequences import (
    AXIS_Y_EFFECTIVE,
    SequenceFamily,
    SequenceLayout,
    build_layout,
)

# Primary-tail rotation putting the equatorial state along the drive axis
# (the CPMG convention).
DRIVE_ALIGNED_PHASE = math.pi / 2.0

# Realizations per statistics batch; also the fixed reduction granularity
# that makes parallel and serial runs agree bit for bit.
_BATCH = 250

# Fraction of the smallest free interval a trace step may not exceed.
_RESOLUTION_DIVISOR = 16.0

# Keep trapezoid bias negligible: dt <= this / (highest synthesized omega).
_TRAPEZOID_PHASE_STEP = 0.2


class TraceError(ValueError):
    """A noise trace does not satisfy a simulation precondition."""


@dataclass(frozen=True)
class ControlErrorModel:
    """Systematic control imperfections applied during a sequence.

    ``pulse_length_scale`` epsilon makes every pi pulse rotate by
    pi*(1+epsilon). ``static_detuning`` (rad/s) acts during pulses and free
    precession alike. ``interpulse_detuning`` (rad/s) is the deliberate
    effective Larmor precession applied only between pulses.
    ``initial_phase`` (rad) is the primary-tail rotation selecting the
    equatorial start state.
    """

    pulse_length_scale: float = 0.0
    static_detuning: float = 0.0
    interpulse_detuning: float = 0.0
    initial_phase: float = 0.0

    def __post_init__(self):
        for name in (
            "pulse_length_scale",
            "static_detuning",
            "interpulse_detuning",
            "initial_phase",
        ):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.pulse_length_scale <= -1.0:
            raise ValueError("pulse_length_scale must exceed -1")


# -- trapezoid weights for the toggled noise integral -----------------------

def _grid_index(x: float, dt: float, snap: float = 1e-9) -> float:
    q = x / dt
    r = round(q)
    return float(r) if abs(q - r) < snap else q


def _segment_weights(a: float, b: float, dt: float, n_samples: int) -> np.ndarray:
    """Weights w such that w . beta approximates integral_a^b beta(t) dt by
    the trapezoid rule with linearly interpolated segment endpoints."""
    w = np.zeros(n_samples)
    if b <= a:
        return w
    qa = _grid_index(a, dt)
    qb = _grid_index(b, dt)
    ka = math.ceil(qa)
    kb = math.floor(qb)

    def add_point(q: float, coeff: float) -> None:
        # linear interpolation of beta at fractional index q
        k = int(math.floor(q))
        frac = q - k
        if k >= n_samples - 1:
            w[n_samples - 1] += coeff
            return
        w[k] += coeff * (1.0 - frac)
        w[k + 1] += coeff * frac

    if ka > kb:
        # whole segment inside one grid cell
        length = (qb - qa) * dt
        add_point(qa, length / 2.0)
        add_point(qb, length / 2.0)
        return w
    left = (ka - qa) * dt
    if left > 0.0:
        add_point(qa, left / 2.0)
        w[ka] += left / 2.0
    right = (qb - kb) * dt
    if right > 0.0:
        w[kb] += right / 2.0
        add_point(qb, right / 2.0)
    if kb > ka:
        w[ka] += dt / 2.0
        w[kb] += dt / 2.0
        if kb > ka + 1:
            w[ka + 1 : kb] += dt
    return w


def phase_weights(toggle: ToggleFunction, dt: float, n_samples: int) -> np.ndarray:
    """Weight vector turning a sampled trace into phi = integral s(t) beta dt."""
    w = np.zeros(n_samples)
    for seg in toggle.segments:
        if seg.value:
            w += seg.value * _segment_weights(seg.start, seg.end, dt, n_samples)
    return w


def _check_trace(toggle: ToggleFunction, trace: NoiseTrace) -> None:
    if trace.duration < toggle.total_duration * (1.0 - 1e-12):
        raise TraceError(
            f"trace covers {trace.duration:g} s but the sequence lasts "
            f"{toggle.total_duration:g} s"
        )
    min_free = min(s.end - s.start for s in toggle.segments if s.value)
    if trace.dt > min_free / _RESOLUTION_DIVISOR:
        raise TraceError(
            f"trace step {trace.dt:g} s is too coarse: the smallest "
            f"free-precession interval {min_free:g} s requires "
            f"dt <= {min_free / _RESOLUTION_DIVISOR:g} s"
        )


def accumulate_phase(toggle: ToggleFunction, trace: NoiseTrace) -> float:
    """Toggled noise phase phi = integral s(t) beta(t) dt for one trace.

    Deterministic; per-segment trapezoid sums on the trace grid. The trace
    must cover the sequence and resolve the smallest free interval by a
    factor of 16.
    """
    _check_trace(toggle, trace)
    w = phase_weights(toggle, trace.dt, trace.samples.size)
    return float(w @ trace.samples)


# -- batched synthesis -------------------------------------------------------

def _auto_dt(layout: SequenceLayout, model: SpectrumModel, dt: float | None) -> float:
    if dt is not None:
        return dt
    min_free = min(
        g for g in layout.free_intervals() if g > 0.0
    )
    return min(
        min_free / _RESOLUTION_DIVISOR,
        _TRAPEZOID_PHASE_STEP / model.synthesis_cutoff(),
    )


def _bin_amplitudes(model: SpectrumModel, n: int, dt: float) -> np.ndarray:
    """Per-bin magnitudes matching the synthesis normalization of
    :func:`ddsim.noise.synthesize_trace` for an n-point transform."""
    domega = 2.0 * math.pi / (n * dt)
    omegas = domega * np.arange(1, n // 2)
    return n * np.sqrt((2.0 / math.pi) * model.psd(omegas) * domega)


def _child_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _synthesize_block(
    amplitudes: np.ndarray,
    rngs: list[np.random.Generator],
    n: int,
    n_keep: int,
) -> np.ndarray:
    """(len(rngs), n_keep) array of independent realizations."""
    nbins = n // 2 - 1
    bins = np.zeros((len(rngs), n // 2 + 1), dtype=complex)
    for i, rng in enumerate(rngs):
        phases = rng.uniform(0.0, 2.0 * math.pi, nbins)
        bins[i, 1 : n // 2] = amplitudes * np.exp(1j * phases)
    return np.fft.irfft(bins, n, axis=1)[:, :n_keep]


@dataclass(frozen=True)
class EnsembleResult:
    """Monte Carlo coherence estimate W with its batch-means standard error.

    ``phi_square_half`` is mean(phi^2)/2, which for Gaussian phase
    statistics equals the dephasing exponent chi.
    """

    w: float
    stderr: float
    phi_square_half: float
    realizations: int
    seed: int


def _reduce_batches(batch_sums: list[complex], batch_counts: list[int]):
    z = np.array(batch_sums)
    counts = np.array(batch_counts)
    total = np.sum(z)  # pairwise, fixed order
    r = int(np.sum(counts))
    w = abs(total) / r
    batch_ws = np.abs(z / counts)
    stderr = (
        float(np.std(batch_ws, ddof=1) / math.sqrt(batch_ws.size))
        if batch_ws.size > 1
        else float("nan")
    )
    return w, stderr


def _ensemble_phases(
    model: SpectrumModel,
    weight_sets: list[np.ndarray],
    n: int,
    n_keep: int,
    dt: float,
    realizations: int,
    seed: int,
    workers: int | None,
) -> list[np.ndarray]:
    """phi arrays (one per weight set), realization-indexed, computed in
    fixed batches so results do not depend on worker count."""
    amplitudes = _bin_amplitudes(model, n, dt)
    rngs = _child_rngs(seed, realizations)
    weights = np.stack(weight_sets)  # (S, n_keep)
    # keep transient FFT buffers bounded regardless of trace length
    mem_block = max(1, (1 << 24) // max(n, 1))
    batches = [
        (b, list(range(b, min(b + _BATCH, realizations))))
        for b in range(0, realizations, _BATCH)
    ]

    def run_batch(batch_indices: list[int]) -> np.ndarray:
        out = np.empty((len(batch_indices), weights.shape[0]))
        for off in range(0, len(batch_indices), mem_block):
            idx = batch_indices[off : off + mem_block]
            block = _synthesize_block(amplitudes, [rngs[i] for i in idx], n, n_keep)
            out[off : off + len(idx)] = block @ weights.T
        return out

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, [idx for _, idx in batches]))
    else:
        results = [run_batch(idx) for _, idx in batches]
    stacked = np.concatenate(results, axis=0)
    return [stacked[:, s] for s in range(weights.shape[0])]


def ensemble_coherence(
    layout: SequenceLayout,
    model: SpectrumModel,
    realizations: int,
    seed: int,
    *,
    dt: float | None = None,
    oversample: int = 16,
    workers: int | None = None,
) -> EnsembleResult:
    """Estimate W = |<e^{i phi}>| over independent noise realizations.

    Each realization is keyed by (seed, index), so results are identical
    for any worker count or execution order. The synthesized record is
    ``oversample`` times longer than the sequence so that its frequency
    resolution resolves the filter structure; phases are then accumulated
    over the first sequence-length window.
    """
    if realizations < 2:
        raise ValueError("need at least 2 realizations")
    toggle = toggle_function(layout)
    dt = _auto_dt(layout, model, dt)
    tau = layout.total_duration
    n_keep = int(math.ceil(tau / dt)) + 1
    n = _next_pow2(max(n_keep, int(math.ceil(oversample * tau / dt))))
    weights = phase_weights(toggle, dt, n_keep)
    _check_trace(toggle, NoiseTrace(dt=dt, samples=np.zeros(n_keep), seed=seed))
    phis = _ensemble_phases(
        model, [weights], n, n_keep, dt, realizations, seed, workers
    )[0]
    z = np.exp(1j * phis)
    batch_sums = []
    batch_counts = []
    for b in range(0, realizations, _BATCH):
        chunk = z[b : b + _BATCH]
        batch_sums.append(complex(np.sum(chunk)))
        batch_counts.append(chunk.size)
    w, stderr = _reduce_batches(batch_sums, batch_counts)
    return EnsembleResult(
        w=w,
        stderr=stderr,
        phi_square_half=float(np.mean(phis**2) / 2.0),
        realizations=realizations,
        seed=seed,
    )


@dataclass(frozen=True)
class EnsembleCurve:
    """Monte Carlo W(tau) sweep sharing one noise record per realization."""

    taus: np.ndarray
    ws: np.ndarray
    stderrs: np.ndarray
    phi_square_half: np.ndarray
    realizations: int
    seed: int

    @property
    def error_probs(self) -> np.ndarray:
        return 0.5 * (1.0 - self.ws)


def ensemble_curve(
    family: SequenceFamily,
    model: SpectrumModel,
    taus,
    realizations: int,
    seed: int,
    *,
    dt: float | None = None,
    oversample: int = 16,
    workers: int | None = None,
    grid_quantum: float | None = None,
) -> EnsembleCurve:
    """Monte Carlo coherence at several durations, reusing each
    realization's noise record across the tau grid."""
    taus = np.asarray(sorted(taus), dtype=float)
    layouts = [build_layout(family, t, grid_quantum=grid_quantum) for t in taus]
    toggles = [toggle_function(lay) for lay in layouts]
    dts = [_auto_dt(lay, model, dt) for lay in layouts]
    step = min(dts)
    tau_max = layouts[-1].total_duration
    n_keep = int(math.ceil(tau_max / step)) + 1
    n = _next_pow2(max(n_keep, int(math.ceil(oversample * tau_max / step))))
    weight_sets = []
    for toggle in toggles:
        _check_trace(toggle, NoiseTrace(dt=step, samples=np.zeros(n_keep), seed=seed))
        weight_sets.append(phase_weights(toggle, step, n_keep))
    phi_sets = _ensemble_phases(
        model, weight_sets, n, n_keep, step, realizations, seed, workers
    )
    ws = np.empty(taus.size)
    stderrs = np.empty(taus.size)
    phi2 = np.empty(taus.size)
    for i, phis in enumerate(phi_sets):
        z = np.exp(1j * phis)
        sums = [
            complex(np.sum(z[b : b + _BATCH])) for b in range(0, realizations, _BATCH)
        ]
        counts = [
            min(b + _BATCH, realizations) - b for b in range(0, realizations, _BATCH)
        ]
        ws[i], stderrs[i] = _reduce_batches(sums, counts)
        phi2[i] = float(np.mean(phis**2) / 2.0)
    return EnsembleCurve(
        taus=taus,
        ws=ws,
        stderrs=stderrs,
        phi_square_half=phi2,
        realizations=realizations,
        seed=seed,
    )


def write_ensemble_csv(path, curve: EnsembleCurve) -> None:
    """Coherence-curve-compatible CSV with the Monte Carlo standard error."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau_s", "chi", "W", "error_prob", "w_stderr"])
        for tau, w, se in zip(curve.taus, curve.ws, curve.stderrs):
            chi_implied = -math.log(w) if w > 0.0 else math.inf
            writer.writerow(
                [
                    f"{tau:.17g}",
                    f"{chi_implied:.17g}",
                    f"{w:.17g}",
                    f"{0.5 * (1.0 - w):.17g}",
                    f"{se:.17g}",
                ]
            )


# -- Bloch-vector evolution --------------------------------------------------

def _rotate_z(states: np.ndarray, angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    x = states[..., 0] * c - states[..., 1] * s
    y = states[..., 0] * s + states[..., 1] * c
    return np.stack([x, y, states[..., 2]], axis=-1)


def _rotate_axis(states: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation; ``axis`` must be unit length (broadcastable)."""
    c = np.cos(angle)[..., None]
    s = np.sin(angle)[..., None]
    k = axis
    cross = np.cross(np.broadcast_to(k, states.shape), states)
    dot = np.sum(k * states, axis=-1, keepdims=True)
    return states * c + cross * s + k * dot * (1.0 - c)


def bright_population(state: np.ndarray) -> np.ndarray:
    """Probability of the bright (+z) basis state; ideal sequences end dark
    at 0."""
    return 0.5 * (1.0 + np.asarray(state)[..., 2])


def _window_noise_integrals(
    layout: SequenceLayout, trace: NoiseTrace | None
) -> np.ndarray:
    """integral of beta over each free-precession window (noise gated off
    during pulses)."""
    if trace is None:
        return np.zeros(layout.n + 1)
    edges = [0.0]
    for a, b in layout.pulse_windows():
        edges.extend((a, b))
    edges.append(layout.total_duration)
    if trace.duration < layout.total_duration * (1.0 - 1e-12):
        raise TraceError(
            f"trace covers {trace.duration:g} s but the sequence lasts "
            f"{layout.total_duration:g} s"
        )
    out = np.empty(layout.n + 1)
    for j in range(layout.n + 1):
        a, b = edges[2 * j], edges[2 * j + 1]
        w = _segment_weights(a, b, trace.dt, trace.samples.size)
        out[j] = float(w @ trace.samples)
    return out


def _pulse_noise_integrals(
    layout: SequenceLayout, trace: NoiseTrace | None
) -> list[np.ndarray]:
    """Sampled beta inside each pulse window (used only when gating is off)."""
    if trace is None:
        return [np.zeros(0) for _ in range(layout.n)]
    out = []
    for a, b in layout.pulse_windows():
        ka = int(math.ceil(_grid_index(a, trace.dt)))
        kb = int(math.floor(_grid_index(b, trace.dt)))
        out.append(trace.samples[ka : kb + 1])
    return out


def _nominal_window_angles(layout: SequenceLayout, delta_l: float) -> np.ndarray:
    """Deliberate Z rotation per free window: interpulse detuning plus the
    compensating pi for every preceding effective-Y pulse."""
    angles = delta_l * np.asarray(layout.free_intervals())
    for j, axis in enumerate(layout.axis_plan):
        if axis == AXIS_Y_EFFECTIVE:
            angles[j + 1] += math.pi
    return angles


def ideal_final_phase(
    layout: SequenceLayout, errors: ControlErrorModel
) -> float:
    """Final-tail Z rotation closing the error-free sequence to the dark
    state (the normative closure convention).

    Computed from the exact azimuth bookkeeping of ideal pulses: each pi_X
    flips the equatorial azimuth sign, each free window adds its deliberate
    rotation.
    """
    theta0 = errors.initial_phase + errors.interpulse_detuning * layout.primary_tail
    zeta = _nominal_window_angles(layout, errors.interpulse_detuning)
    n = layout.n
    az = (-math.pi / 2.0 + theta0) * (-1.0) ** n
    for j in range(n + 1):
        az += (-1.0) ** (n - j) * zeta[j]
    return float((-math.pi / 2.0 - az) % (2.0 * math.pi))


def evolve_sequence(
    layout: SequenceLayout,
    trace: NoiseTrace | None,
    errors: ControlErrorModel,
    *,
    gate_noise: bool = True,
    final_tail_mode: str = "auto",
) -> np.ndarray:
    """Full Bloch evolution of one realization; returns the final vector.

    Starts at +z, applies an ideal pi/2 about X, the primary-tail rotation,
    then alternating free precession (Z rotation by the deliberate
    detuning, the systematic detuning and the gated noise integral) and
    finite pi pulses about the tilted axis (Omega_R, 0, static_detuning)
    with angle scaled by (1 + pulse_length_scale). A final-tail Z rotation
    and a closing ideal pi/2 map the error-free state to the dark pole.

    ``final_tail_mode`` "auto" computes the closing rotation from the ideal
    bookkeeping; "fixed" uses interpulse_detuning * layout.final_tail.
    """
    states = _evolve_states(
        layout,
        beta_windows=_window_noise_integrals(layout, trace),
        theta0=np.array(
            [errors.initial_phase + errors.interpulse_detuning * layout.primary_tail]
        ),
        eps=np.array([errors.pulse_length_scale]),
        detuning=np.array([errors.static_detuning]),
        delta_l=errors.interpulse_detuning,
        final_tail_mode=final_tail_mode,
        pulse_beta=None if gate_noise else _pulse_noise_integrals(layout, trace),
    )
    return states[0]


def _evolve_states(
    layout: SequenceLayout,
    beta_windows: np.ndarray,
    theta0: np.ndarray,
    eps: np.ndarray,
    detuning: np.ndarray,
    delta_l: float,
    final_tail_mode: str = "auto",
    pulse_beta: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Vectorized evolution over broadcastable error grids.

    theta0, eps and detuning broadcast together to the cell shape; the
    noise integrals are shared by all cells (they describe one trace).
    """
    theta0, eps, detuning = np.broadcast_arrays(
        np.asarray(theta0, dtype=float),
        np.asarray(eps, dtype=float),
        np.asarray(detuning, dtype=float),
    )
    shape = theta0.shape
    states = np.zeros(shape + (3,))
    states[..., 2] = 1.0
    x_axis = np.array([1.0, 0.0, 0.0])
    # opening pi/2 about X, then the primary tail
    states = _rotate_axis(states, x_axis, np.full(shape, math.pi / 2.0))
    states = _rotate_z(states, theta0)
    zeta = _nominal_window_angles(layout, delta_l)
    intervals = layout.free_intervals()
    tau_pi = layout.pulse_duration
    for j in range(layout.n + 1):
        states = _rotate_z(states, zeta[j] + detuning * intervals[j] + beta_windows[j])
        if j < layout.n:
            if tau_pi == 0.0:
                states = _rotate_axis(
                    states, x_axis, math.pi * (1.0 + eps)
                )
            elif pulse_beta is None or pulse_beta[j].size == 0:
                omega_r = math.pi / tau_pi
                norm = np.sqrt(omega_r**2 + detuning**2)
                axis = np.stack(
                    [
                        np.broadcast_to(omega_r / norm, shape),
                        np.zeros(shape),
                        detuning / norm,
                    ],
                    axis=-1,
                )
                states = _rotate_axis(states, axis, norm * tau_pi * (1.0 + eps))
            else:
                # ungated noise: compose stepwise rotations over the trace
                # samples inside the pulse window
                omega_r = math.pi / tau_pi
                n_steps = pulse_beta[j].size
                step = tau_pi * (1.0 + eps) / n_steps
                for beta_k in pulse_beta[j]:
                    z_comp = detuning + beta_k
                    norm = np.sqrt(omega_r**2 + z_comp**2)
                    axis = np.stack(
                        [
                            np.broadcast_to(omega_r / norm, shape),
                            np.zeros(shape),
                            z_comp / norm,
                        ],
                        axis=-1,
                    )
                    states = _rotate_axis(states, axis, norm * step)
    # closing bookkeeping
    if final_tail_mode == "auto":
        n = layout.n
        az = (-math.pi / 2.0 + theta0) * (-1.0) ** n
        for j in range(n + 1):
            az = az + (-1.0) ** (n - j) * zeta[j]
        theta_f = -math.pi / 2.0 - az
    elif final_tail_mode == "fixed":
        theta_f = np.full(shape, delta_l * layout.final_tail)
    else:
        raise ValueError(f"unknown final_tail_mode {final_tail_mode!r}")
    states = _rotate_z(states, theta_f)
    states = _rotate_axis(states, x_axis, np.full(shape, math.pi / 2.0))
    return states


# -- robustness maps ---------------------------------------------------------

@dataclass(frozen=True)
class ErrorAxis:
    """Systematic-error sweep: ``kind`` is "pulse_length" (dimensionless
    epsilon) or "detuning" (rad/s)."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("pulse_length", "detuning"):
            raise ValueError(f"unknown error axis kind {self.kind!r}")
        if np.asarray(self.values).size == 0:
            raise ValueError("error axis needs at least one value")


@dataclass(frozen=True)
class RobustnessMap:
    """Final bright-state population over (initial phase) x (error value)."""

    theta_grid: np.ndarray
    error_kind: str
    error_grid: np.ndarray
    values: np.ndarray  # shape (len(theta_grid), len(error_grid))
    metadata: dict


def robustness_scan(
    family: SequenceFamily,
    tau: float,
    error_axis: ErrorAxis,
    theta_grid,
    *,
    interpulse_detuning: float = 0.0,
    grid_quantum: float | None = None,
    model: SpectrumModel | None = None,
    realizations: int = 1,
    seed: int = 0,
    dt: float | None = None,
) -> RobustnessMap:
    """Bright-population map over start phases and one systematic error.

    Without a noise model each cell is a single deterministic run; with one,
    cells are averaged over ``realizations`` gated noise traces.
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid.size == 0:
        raise ValueError("theta grid must be non-empty")
    layout = build_layout(family, tau, grid_quantum=grid_quantum)
    errs = np.asarray(error_axis.values, dtype=float)
    t_mesh, e_mesh = np.meshgrid(theta_grid, errs, indexing="ij")
    if error_axis.kind == "pulse_length":
        eps, detuning = e_mesh, np.zeros_like(e_mesh)
    else:
        eps, detuning = np.zeros_like(e_mesh), e_mesh

    def run(beta_windows: np.ndarray) -> np.ndarray:
        states = _evolve_states(
            layout,
            beta_windows=beta_windows,
            theta0=t_mesh,
            eps=eps,
            detuning=detuning,
            delta_l=interpulse_detuning,
        )
        return bright_population(states)

    if model is None:
        values = run(np.zeros(layout.n + 1))
    else:
        from ddsim.noise import synthesize_trace

        step = _auto_dt(layout, model, dt)
        acc = np.zeros_like(t_mesh)
        for i, rng_seed in enumerate(np.random.SeedSequence(seed).spawn(realizations)):
            trace = synthesize_trace(
                model,
                layout.total_duration,
                step,
                seed + i,
                rng=np.random.default_rng(rng_seed),
            )
            acc += run(_window_noise_integrals(layout, trace))
        values = acc / realizations
    metadata = {
        "kind": family.kind,
        "n": family.n,
        "tau_s": layout.total_duration,
        "tau_pi_s": layout.pulse_duration,
        "grid_quantum_s": grid_quantum,
        "interpulse_detuning_rad_s": interpulse_detuning,
        "error_kind": error_axis.kind,
        "noise": None if model is None else model_to_dict(model),
        "realizations": realizations if model is not None else 0,
        "seed": seed,
    }
    return RobustnessMap(
        theta_grid=theta_grid,
        error_kind=error_axis.kind,
        error_grid=errs,
        values=values,
        metadata=metadata,
    )


def write_map_csv(path, rmap: RobustnessMap) -> None:
    """Long-format CSV: one row per (theta0, error value) cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta0_rad", "error_param", "bright_population"])
        for i, th in enumerate(rmap.theta_grid):
            for j, e in enumerate(rmap.error_grid):
                writer.writerow(
                    [f"{th:.17g}", f"{e:.17g}", f"{rmap.values[i, j]:.17g}"]
                )


def write_map_manifest(path, rmap: RobustnessMap) -> None:
    with open(path, "w") as fh:
        json.dump(rmap.metadata, fh, indent=2)
