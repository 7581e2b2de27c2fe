"""Frequency-domain filter functions of pulse sequences.

Two independent evaluation routes are provided: a closed-form expression in
the dimensionless variable ``omega * tau`` and a segment-by-segment Fourier
transform of the time-domain toggling function. Their agreement is a core
correctness check, so neither may be expressed through the other.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from ddsim.sequences import SequenceLayout


@dataclass(frozen=True)
class ToggleSegment:
    start: float
    end: float
    value: int  # -1, 0 or +1


@dataclass(frozen=True)
class ToggleFunction:
    """Piecewise-constant sign s(t) of noise-phase accumulation.

    Free-precession windows alternate +1, -1, ... starting at +1; pulse
    windows carry 0. Segments are contiguous and cover [0, tau]; zero-width
    pulse windows (tau_pi = 0) are omitted.
    """

    segments: tuple[ToggleSegment, ...]
    total_duration: float

    def zero_time(self) -> float:
        """Total duration spent at value 0 (inside pulses)."""
        return sum(s.end - s.start for s in self.segments if s.value == 0)


def toggle_function(layout: SequenceLayout) -> ToggleFunction:
    """Build the toggling function of a validated layout."""
    tau = layout.total_duration
    segs: list[ToggleSegment] = []
    prev = 0.0
    sign = 1
    for a, b in layout.pulse_windows():
        segs.append(ToggleSegment(prev, a, sign))
        if b > a:
            segs.append(ToggleSegment(a, b, 0))
        prev = b
        sign = -sign
    segs.append(ToggleSegment(prev, tau, sign))
    return ToggleFunction(tuple(segs), tau)


@dataclass(frozen=True)
class FilterSample:
    """Filter value at one frequency: F = |y|^2 with y the transformed
    toggling function."""

    omega: float
    omega_tau: float
    y: complex
    F: float


def _closed_form_y(layout: SequenceLayout, x):
    """Vectorized closed-form y(x), x = omega * tau.

    y = 1 + (-1)^(n+1) e^{ix} + 2 cos(x delta_pi / 2) sum_j (-1)^j e^{i delta_j x}
    with delta_pi = tau_pi / tau. Finite pulse width enters only through the
    cosine factor.
    """
    x = np.asarray(x, dtype=float)
    n = layout.n
    y = 1.0 + (-1.0) ** (n + 1) * np.exp(1j * x)
    if n:
        delta_pi = layout.pulse_duration / layout.total_duration
        fr = np.asarray(layout.fractions)
        signs = np.where(np.arange(1, n + 1) % 2 == 0, 1.0, -1.0)
        phases = np.exp(1j * np.multiply.outer(x, fr))
        y = y + 2.0 * np.cos(x * delta_pi / 2.0) * (phases @ signs)
    return y


def filter_values(layout: SequenceLayout, omega_tau) -> np.ndarray:
    """F(omega tau) for an array of dimensionless frequencies (fast path)."""
    y = _closed_form_y(layout, omega_tau)
    return np.abs(y) ** 2


def filter_closed_form(layout: SequenceLayout, omega_tau: float) -> FilterSample:
    """Closed-form filter sample at dimensionless frequency omega*tau >= 0."""
    if omega_tau < 0.0:
        raise ValueError(f"omega*tau must be >= 0, got {omega_tau}")
    y = complex(_closed_form_y(layout, omega_tau))
    return FilterSample(
        omega=omega_tau / layout.total_duration,
        omega_tau=omega_tau,
        y=y,
        F=abs(y) ** 2,
    )


def filter_numeric(layout: SequenceLayout, omega: float) -> FilterSample:
    """Filter sample from the time-domain route at angular frequency omega.

    Evaluates i*omega * integral of s(t) e^{i omega t} dt with an exact
    antiderivative per toggle segment; no quadrature error enters. Serves as
    the independent oracle for :func:`filter_closed_form`.
    """
    if omega < 0.0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    if omega == 0.0:
        # i*omega times a bounded integral vanishes in the limit.
        return FilterSample(0.0, 0.0, 0j, 0.0)
    y = 0j
    for seg in toggle_function(layout).segments:
        if seg.value:
            y += seg.value * (
                np.exp(1j * omega * seg.end) - np.exp(1j * omega * seg.start)
            )
    return FilterSample(
        omega=omega,
        omega_tau=omega * layout.total_duration,
        y=complex(y),
        F=abs(y) ** 2,
    )


def filter_curve(layout: SequenceLayout, omega_grid) -> list[FilterSample]:
    """Closed-form samples over an ascending angular-frequency grid."""
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size and np.any(np.diff(omega_grid) < 0):
        raise ValueError("frequency grid must be sorted ascending")
    tau = layout.total_duration
    x = omega_grid * tau
    y = _closed_form_y(layout, x)
    return [
        FilterSample(omega=float(w), omega_tau=float(xi), y=complex(yi), F=abs(yi) ** 2)
        for w, xi, yi in zip(omega_grid, x, y)
    ]


def write_filter_csv(path, samples: list[FilterSample]) -> None:
    """Emit a filter curve as CSV with mandatory header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega_rad_s", "omega_tau", "F"])
        for s in samples:
            writer.writerow([f"{s.omega:.17g}", f"{s.omega_tau:.17g}", f"{s.F:.17g}"])


# -- spectral flatness at zero frequency ----------------------------------

def _fd_weights(order: int, offsets):
    """Finite-difference weights for the given derivative order on the given
    integer stencil offsets, from the moment conditions
    sum_p w_p k_p^q = order! * [q == order] for q = 0 .. npts-1."""
    npts = len(offsets)
    A = mp.matrix(npts, npts)
    for q in range(npts):
        for p, k in enumerate(offsets):
            A[q, p] = k ** q
    rhs = mp.matrix(npts, 1)
    rhs[order, 0] = mp.factorial(order)
    w = mp.lu_solve(A, rhs)
    return [w[p, 0] for p in range(npts)]


def derivative_magnitudes(
    layout: SequenceLayout, max_order: int, *, step: float = 1e-2, digits: int = 60
) -> list[float]:
    """|d^m y / d(omega tau)^m| at omega*tau = 0 for m = 1 .. max_order.

    Central finite differences with stencil step ``step``, evaluated in
    ``digits``-digit arithmetic so the estimates are limited by stencil
    truncation rather than round-off. Stencils carry enough extra points
    that truncation stays near step^6.
    """
    n = layout.n
    delta_pi = layout.pulse_duration / layout.total_duration
    fr = [mp.mpf(f) for f in layout.fractions]
    parity = mp.mpf((-1) ** (n + 1))

    with mp.workdps(digits):
        h = mp.mpf(step)

        def y(x):
            total = 1 + parity * mp.exp(1j * x)
            cosfac = mp.cos(x * mp.mpf(delta_pi) / 2)
            for j, d in enumerate(fr, start=1):
                total += 2 * (-1) ** j * mp.exp(1j * d * x) * cosfac
            return total

        out = []
        for order in range(1, max_order + 1):
            # symmetric stencil, 6th-order-accurate truncation
            half = (order + 1) // 2 + 3
            offsets = [mp.mpf(k) for k in range(-half, half + 1)]
            weights = _fd_weights(order, offsets)
            acc = mp.mpc(0)
            for w, k in zip(weights, offsets):
                acc += w * y(k * h)
            out.append(float(abs(acc / h ** order)))
    return out
