"""Pulse-sequence layouts: CPMG, UDD and custom timing patterns.

A layout places ``n`` pi pulses of width ``tau_pi`` inside a total duration
``tau`` (free precession plus pulse time). Pulse positions are stored as
fractions of ``tau`` locating each pulse *center*.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

AXIS_X = "X"
AXIS_Y_EFFECTIVE = "Y_effective"
_AXES = (AXIS_X, AXIS_Y_EFFECTIVE)

# Interpulse grid matching a 100 kHz deliberate precession period.
DEFAULT_GRID_QUANTUM = 10e-6

# Conventional phase-bookkeeping delays at 100 kHz deliberate detuning:
# the primary tail turns the start state a net quarter turn onto the drive
# axis, the final tail closes the sequence onto the dark state.
DEFAULT_PRIMARY_TAIL = 12.5e-6
DEFAULT_FINAL_TAIL = 17.5e-6


class LayoutError(ValueError):
    """A sequence layout violates a timing constraint."""


def cpmg_fractions(n: int) -> list[float]:
    """Fractional pulse centers (2j-1)/(2n) for an n-pulse multipulse echo.

    The first and last free-precession periods are half as long as the
    interior ones. ``n = 0`` yields an empty list (free induction).
    """
    if n < 0:
        raise ValueError(f"pulse count must be >= 0, got {n}")
    return [(2 * j - 1) / (2 * n) for j in range(1, n + 1)]


def udd_fractions(n: int) -> list[float]:
    """Fractional pulse centers sin^2[pi j / (2n+2)] for an n-pulse UDD
    sequence. Symmetric about 1/2; identical to CPMG for n <= 2."""
    if n < 0:
        raise ValueError(f"pulse count must be >= 0, got {n}")
    fractions = [0.0] * n
    for j in range(1, n + 1):
        if 2 * j > n + 1:
            # mirror partner already computed; keeps the symmetry
            # delta_j + delta_{n+1-j} = 1 exact in floating point
            fractions[j - 1] = 1.0 - fractions[n - j]
        elif 4 * j == 2 * n + 2:  # sin^2(pi/4) = 1/2 exactly
            fractions[j - 1] = 0.5
        elif 6 * j == 2 * n + 2:  # sin^2(pi/6) = 1/4 exactly
            fractions[j - 1] = 0.25
        else:
            fractions[j - 1] = math.sin(math.pi * j / (2 * n + 2)) ** 2
    return fractions


@dataclass(frozen=True)
class SequenceLayout:
    """Timing of one dynamical-decoupling sequence.

    Attributes
    ----------
    n : int
        Number of pi pulses (>= 0).
    fractions : tuple of float
        Strictly increasing fractional times of pulse centers, each in (0, 1).
    total_duration : float
        Sequence length tau in seconds: all free precession plus all pulses.
    pulse_duration : float
        Pi-pulse width tau_pi in seconds (>= 0).
    axis_plan : tuple of str
        Per-pulse rotation axis tag, "X" or "Y_effective".
    primary_tail, final_tail : float
        Phase-bookkeeping delays in seconds, consumed only by the Monte
        Carlo evolution (they set the initial/final equatorial phase).
    grid_quantum : float or None
        When set, every free-precession interval is an integer multiple of
        this quantum.
    """

    n: int
    fractions: tuple[float, ...]
    total_duration: float
    pulse_duration: float = 0.0
    axis_plan: tuple[str, ...] = ()
    primary_tail: float = 0.0
    final_tail: float = 0.0
    grid_quantum: float | None = None
    kind: str = "custom"

    def __post_init__(self):
        if not self.axis_plan:
            object.__setattr__(self, "axis_plan", (AXIS_X,) * self.n)
        self.validate()

    # -- derived geometry ------------------------------------------------

    def pulse_centers(self) -> np.ndarray:
        """Absolute pulse-center times in seconds."""
        return np.asarray(self.fractions) * self.total_duration

    def pulse_windows(self) -> list[tuple[float, float]]:
        """(start, end) of each pulse in seconds."""
        half = self.pulse_duration / 2.0
        return [(c - half, c + half) for c in self.pulse_centers()]

    def free_intervals(self) -> list[float]:
        """Lengths of the n+1 free-precession windows in seconds."""
        edges = [0.0]
        for a, b in self.pulse_windows():
            edges.extend((a, b))
        edges.append(self.total_duration)
        return [edges[2 * k + 1] - edges[2 * k] for k in range(self.n + 1)]

    def min_free_interval(self) -> float:
        return min(self.free_intervals())

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        """Raise LayoutError naming the first violated constraint."""
        n, tau, tau_pi = self.n, self.total_duration, self.pulse_duration
        if n < 0:
            raise LayoutError(f"pulse count must be >= 0, got {n}")
        if len(self.fractions) != n:
            raise LayoutError(f"expected {n} fractions, got {len(self.fractions)}")
        if tau <= 0.0:
            raise LayoutError(f"total duration must be > 0, got {tau}")
        if tau_pi < 0.0:
            raise LayoutError(f"pulse duration must be >= 0, got {tau_pi}")
        if n * tau_pi > tau:
            raise LayoutError(
                f"pulses do not fit: n*tau_pi = {n * tau_pi:g} s > tau = {tau:g} s"
            )
        if len(self.axis_plan) != n:
            raise LayoutError(f"axis plan length {len(self.axis_plan)} != n = {n}")
        for axis in self.axis_plan:
            if axis not in _AXES:
                raise LayoutError(f"unknown axis tag {axis!r}")
        fr = self.fractions
        if any(not (0.0 < f < 1.0) for f in fr):
            raise LayoutError(f"fractions must lie in (0, 1): {fr}")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise LayoutError(f"fractions must be strictly increasing: {fr}")
        tol = 1e-12 * max(tau, tau_pi)
        if n >= 1:
            if fr[0] * tau < tau_pi / 2.0 - tol:
                raise LayoutError(
                    f"first pulse clipped: delta_1*tau = {fr[0] * tau:g} s "
                    f"< tau_pi/2 = {tau_pi / 2:g} s"
                )
            if (1.0 - fr[-1]) * tau < tau_pi / 2.0 - tol:
                raise LayoutError(
                    f"last pulse clipped: (1-delta_n)*tau = {(1 - fr[-1]) * tau:g} s "
                    f"< tau_pi/2 = {tau_pi / 2:g} s"
                )
        for j, (a, b) in enumerate(zip(fr, fr[1:])):
            if (b - a) * tau < tau_pi - tol:
                raise LayoutError(
                    f"pulses {j + 1} and {j + 2} overlap: gap {(b - a) * tau:g} s "
                    f"< tau_pi = {tau_pi:g} s"
                )
        if self.grid_quantum is not None:
            q = self.grid_quantum
            if q <= 0.0:
                raise LayoutError(f"grid quantum must be > 0, got {q}")
            for j, g in enumerate(self.free_intervals()):
                m = round(g / q)
                if abs(g - m * q) > 1e-9 * max(q, g):
                    raise LayoutError(
                        f"free interval {j} = {g:g} s is not a multiple of "
                        f"the grid quantum {q:g} s"
                    )

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "n": self.n,
            "fractions": list(self.fractions),
            "tau_s": self.total_duration,
            "tau_pi_s": self.pulse_duration,
            "axis_plan": list(self.axis_plan),
            "primary_tail_s": self.primary_tail,
            "final_tail_s": self.final_tail,
        }
        if self.grid_quantum is not None:
            doc["grid_quantum_s"] = self.grid_quantum
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SequenceLayout":
        return cls(
            n=int(doc["n"]),
            fractions=tuple(doc["fractions"]),
            total_duration=float(doc["tau_s"]),
            pulse_duration=float(doc["tau_pi_s"]),
            axis_plan=tuple(doc["axis_plan"]),
            primary_tail=float(doc.get("primary_tail_s", 0.0)),
            final_tail=float(doc.get("final_tail_s", 0.0)),
            grid_quantum=doc.get("grid_quantum_s"),
            kind=doc.get("kind", "custom"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SequenceLayout":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SequenceFamily:
    """A parametrized sequence type: the fraction rule plus pulse geometry.

    ``kind`` is one of "cpmg", "udd" or "custom"; custom families carry
    explicit fractions. The axis plan template is either a single tag applied
    to every pulse or a full per-pulse tuple.
    """

    kind: str
    n: int
    pulse_duration: float = 0.0
    axis: str | tuple[str, ...] = AXIS_X
    fractions: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("cpmg", "udd", "custom"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.kind == "custom" and len(self.fractions) != self.n:
            raise ValueError("custom families need one fraction per pulse")

    def fraction_list(self) -> list[float]:
        if self.kind == "cpmg":
            return cpmg_fractions(self.n)
        if self.kind == "udd":
            return udd_fractions(self.n)
        return list(self.fractions)

    def axis_plan(self) -> tuple[str, ...]:
        if isinstance(self.axis, str):
            return (self.axis,) * self.n
        return tuple(self.axis)


def build_layout(
    family: SequenceFamily,
    total_duration: float,
    *,
    primary_tail: float = 0.0,
    final_tail: float = 0.0,
    grid_quantum: float | None = None,
) -> SequenceLayout:
    """Construct a validated layout for ``family`` spanning ``total_duration``.

    Tails default to zero; the deliberate-detuning bookkeeping values are
    configuration inputs. When ``grid_quantum`` is given, the layout is
    grid-rounded after construction.

    Raises
    ------
    LayoutError
        If the duration cannot accommodate the pulses, naming the violated
        constraint.
    """
    if total_duration <= family.n * family.pulse_duration:
        raise LayoutError(
            f"duration too short: tau = {total_duration:g} s <= n*tau_pi = "
            f"{family.n * family.pulse_duration:g} s"
        )
    layout = SequenceLayout(
        n=family.n,
        fractions=tuple(family.fraction_list()),
        total_duration=total_duration,
        pulse_duration=family.pulse_duration,
        axis_plan=family.axis_plan(),
        primary_tail=primary_tail,
        final_tail=final_tail,
        kind=family.kind,
    )
    if grid_quantum is not None:
        layout = round_to_grid(layout, grid_quantum)
    return layout


def round_to_grid(layout: SequenceLayout, quantum: float) -> SequenceLayout:
    """Round every free-precession interval to the nearest multiple of
    ``quantum`` (half away from zero).

    The total duration is preserved when the rounding residual happens to be
    a whole number of quanta (it is then absorbed into the final interval);
    otherwise tau changes to the sum of the rounded intervals. Pulse
    fractions are recomputed from the rounded intervals and the result is
    re-validated.
    """
    if quantum <= 0.0:
        raise ValueError(f"grid quantum must be > 0, got {quantum}")
    intervals = layout.free_intervals()
    rounded = []
    for j, g in enumerate(intervals):
        m = math.floor(g / quantum + 0.5)
        if m == 0 and g > 0.0:
            raise LayoutError(
                f"free interval {j} = {g:g} s rounds to zero on a "
                f"{quantum:g} s grid"
            )
        rounded.append(m * quantum)
    new_tau = sum(rounded) + layout.n * layout.pulse_duration
    residual = layout.total_duration - new_tau
    steps = residual / quantum
    if abs(steps - round(steps)) < 1e-9 and round(steps) != 0:
        adjusted = rounded[-1] + round(steps) * quantum
        if adjusted > 0.0:
            rounded[-1] = adjusted
            new_tau = sum(rounded) + layout.n * layout.pulse_duration
    centers = []
    t = 0.0
    for j in range(layout.n):
        t += rounded[j] + layout.pulse_duration / 2.0
        centers.append(t)
        t += layout.pulse_duration / 2.0
    fractions = tuple(c / new_tau for c in centers)
    return replace(
        layout,
        fractions=fractions,
        total_duration=new_tau,
        grid_quantum=quantum,
    )
