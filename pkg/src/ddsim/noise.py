"""One-sided dephasing-noise power spectral densities and time-domain
realizations.

Normalization contract (used by every module in this package)
--------------------------------------------------------------
Frequencies are angular (rad/s) and spectra S(omega) are one-sided, defined
so that the coherence integral

    chi(tau) = (2/pi) * integral_0^inf S(omega)/omega^2 * F(omega tau) domega

holds together with Gaussian phase statistics, W = exp(-<phi^2>/2). Those
two statements fix the variance of a synthesized process to

    Var[beta] = VARIANCE_FACTOR * integral_0^inf S(omega) domega,

with ``VARIANCE_FACTOR = 4/pi``. Trace synthesis and the periodogram both
use this convention, so a periodogram of synthesized traces reproduces the
model spectrum bin for bin. Amplitude knobs scale as power: the effective
spectrum of a model with ``amplitude_scale = v`` is v^2 times the spectrum
at v = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

# Var[beta] per unit integrated spectrum; see module docstring.
VARIANCE_FACTOR = 4.0 / math.pi

DEFAULT_BAND = (2.0 * math.pi * 1e-3, 2.0 * math.pi * 1e6)

# Default spur lineshape width: 1 Hz full width at half maximum.
DEFAULT_SPUR_SIGMA = 2.0 * math.pi * 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class SpectrumError(ValueError):
    """Invalid spectrum parameters or evaluation domain."""


def _check_omega(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0.0):
        raise SpectrumError("psd is defined for omega > 0 only")
    return w


@dataclass(frozen=True)
class PowerLaw:
    """S(omega) = amplitude * (omega/omega_ref)^exponent on [band_lo, band_hi].

    ``exponent = 0`` gives band-limited white noise. Negative exponents
    require a strictly positive lower band edge.
    """

    exponent: float
    amplitude: float
    omega_ref: float
    band: tuple[float, float] = DEFAULT_BAND
    amplitude_scale: float = 1.0

    def __post_init__(self):
        lo, hi = self.band
        if not (0.0 <= lo < hi):
            raise SpectrumError(f"invalid band {self.band}")
        if self.exponent < 0.0 and lo == 0.0:
            raise SpectrumError("negative exponents need band_lo > 0")
        if self.amplitude < 0.0 or self.omega_ref <= 0.0:
            raise SpectrumError("amplitude must be >= 0 and omega_ref > 0")

    def psd(self, omega) -> np.ndarray:
        w = _check_omega(omega)
        lo, hi = self.band
        inside = (w >= lo) & (w <= hi)
        vals = np.where(
            inside, self.amplitude * (w / self.omega_ref) ** self.exponent, 0.0
        )
        return self.amplitude_scale**2 * vals

    def support(self) -> tuple[float, float]:
        return self.band

    def synthesis_cutoff(self) -> float:
        lo, hi = self.band
        if self.exponent >= 0.0:
            return hi
        # spectrum falls steeply: frequencies carrying < 1e-10 of the peak
        # contribute nothing a trace needs to resolve
        return min(hi, lo * 10.0 ** (10.0 / abs(self.exponent)))


@dataclass(frozen=True)
class OhmicHardCutoff:
    """S(omega) = slope_amplitude * omega for omega <= cutoff, zero above."""

    slope_amplitude: float
    cutoff: float
    amplitude_scale: float = 1.0

    def __post_init__(self):
        if self.slope_amplitude < 0.0 or self.cutoff <= 0.0:
            raise SpectrumError("need slope_amplitude >= 0 and cutoff > 0")

    def psd(self, omega) -> np.ndarray:
        w = _check_omega(omega)
        vals = np.where(w <= self.cutoff, self.slope_amplitude * w, 0.0)
        return self.amplitude_scale**2 * vals

    def support(self) -> tuple[float, float]:
        return (0.0, self.cutoff)

    def synthesis_cutoff(self) -> float:
        return self.cutoff


@dataclass(frozen=True)
class Spur:
    """Narrow Gaussian spectral line at ``center`` whose integrated spectrum
    equals ``weight`` times the band-integrated base spectrum."""

    center: float
    weight: float
    sigma: float = DEFAULT_SPUR_SIGMA

    def __post_init__(self):
        if self.center <= 0.0 or self.weight < 0.0 or self.sigma <= 0.0:
            raise SpectrumError(f"invalid spur {self}")


@dataclass(frozen=True)
class Ambient:
    """Magnet-style background: S = alpha * [(omega_ref/omega)^4 + spurs].

    Spur terms are unit-area Gaussians scaled so each spur's integrated
    spectrum is its weight times the base power integrated over the band.
    """

    alpha: float
    spurs: tuple[Spur, ...] = ()
    omega_ref: float = 2.0 * math.pi * 1.0
    band: tuple[float, float] = DEFAULT_BAND
    amplitude_scale: float = 1.0

    def __post_init__(self):
        lo, hi = self.band
        if not (0.0 < lo < hi):
            raise SpectrumError(f"ambient band must have 0 < lo < hi, got {self.band}")
        if self.alpha < 0.0 or self.omega_ref <= 0.0:
            raise SpectrumError("alpha must be >= 0 and omega_ref > 0")

    def base_band_power(self) -> float:
        """Integral of the (unit-alpha) base term over the band."""
        lo, hi = self.band
        return self.omega_ref**4 / 3.0 * (lo**-3 - hi**-3)

    def psd(self, omega) -> np.ndarray:
        w = _check_omega(omega)
        lo, hi = self.band
        inside = (w >= lo) & (w <= hi)
        vals = (self.omega_ref / w) ** 4
        base_power = self.base_band_power()
        for spur in self.spurs:
            norm = spur.weight * base_power / (spur.sigma * math.sqrt(2.0 * math.pi))
            vals = vals + norm * np.exp(-0.5 * ((w - spur.center) / spur.sigma) ** 2)
        return self.amplitude_scale**2 * self.alpha * np.where(inside, vals, 0.0)

    def support(self) -> tuple[float, float]:
        return self.band

    def synthesis_cutoff(self) -> float:
        lo, hi = self.band
        cut = lo * 10.0 ** (10.0 / 4.0)
        for spur in self.spurs:
            cut = max(cut, spur.center + 8.0 * spur.sigma)
        return min(hi, cut)

    def without_spurs(self) -> "Ambient":
        return replace(self, spurs=())

    def spurs_only(self) -> "SpurOnly":
        """The spur part alone at unit weight scaling (for fit decomposition)."""
        return SpurOnly(base=replace(self, amplitude_scale=1.0))


@dataclass(frozen=True)
class SpurOnly:
    """Spur terms of an ambient model, without the power-law background."""

    base: Ambient
    amplitude_scale: float = 1.0

    def psd(self, omega) -> np.ndarray:
        full = self.base.psd(omega)
        bg = self.base.without_spurs().psd(omega)
        return self.amplitude_scale**2 * (full - bg)

    def support(self) -> tuple[float, float]:
        lo, hi = self.base.band
        spurs = self.base.spurs
        if spurs:
            lo = max(lo, min(s.center - 8.0 * s.sigma for s in spurs))
            hi = min(hi, max(s.center + 8.0 * s.sigma for s in spurs))
        return (lo, hi)

    def synthesis_cutoff(self) -> float:
        return self.support()[1]


@dataclass(frozen=True)
class Tabulated:
    """Sampled spectrum, interpolated linearly in log-log space; zero outside
    the tabulated range. Bins with zero value fall back to linear
    interpolation."""

    omegas: tuple[float, ...]
    values: tuple[float, ...]
    amplitude_scale: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.omegas)
        v = np.asarray(self.values)
        if w.size < 2:
            raise SpectrumError("tabulated spectra need at least two samples")
        if np.any(w <= 0.0) or np.any(np.diff(w) <= 0.0):
            raise SpectrumError("tabulated frequencies must be positive and increasing")
        if np.any(v < 0.0):
            raise SpectrumError("tabulated spectrum values must be >= 0")

    def psd(self, omega) -> np.ndarray:
        w = _check_omega(omega)
        xs = np.asarray(self.omegas)
        ys = np.asarray(self.values)
        scalar = w.ndim == 0
        w = np.atleast_1d(w)
        out = np.zeros_like(w)
        inside = (w >= xs[0]) & (w <= xs[-1])
        if np.any(inside):
            wi = w[inside]
            idx = np.clip(np.searchsorted(xs, wi, side="right") - 1, 0, xs.size - 2)
            x0, x1 = xs[idx], xs[idx + 1]
            y0, y1 = ys[idx], ys[idx + 1]
            frac = np.log(wi / x0) / np.log(x1 / x0)
            loggable = (y0 > 0.0) & (y1 > 0.0)
            interp = np.where(
                loggable,
                np.exp(
                    np.log(np.where(y0 > 0, y0, 1.0))
                    + frac
                    * (np.log(np.where(y1 > 0, y1, 1.0)) - np.log(np.where(y0 > 0, y0, 1.0)))
                ),
                y0 + (wi - x0) / (x1 - x0) * (y1 - y0),
            )
            out[inside] = interp
        out *= self.amplitude_scale**2
        return out[0] if scalar else out

    def support(self) -> tuple[float, float]:
        return (self.omegas[0], self.omegas[-1])

    def synthesis_cutoff(self) -> float:
        return self.omegas[-1]


SpectrumModel = PowerLaw | OhmicHardCutoff | Ambient | SpurOnly | Tabulated


def psd(model: SpectrumModel, omega):
    """Spectrum value(s) of ``model`` at angular frequency ``omega`` > 0."""
    return model.psd(omega)


def with_noise_scale(model: SpectrumModel, scale: float) -> SpectrumModel:
    """Copy of ``model`` with its power knob set to ``scale`` (power goes as
    scale squared)."""
    return replace(model, amplitude_scale=scale)


# -- time-domain synthesis -------------------------------------------------

@dataclass(frozen=True)
class NoiseTrace:
    """A sampled realization beta(t_k), t_k = k*dt, in rad/s."""

    dt: float
    samples: np.ndarray
    seed: int
    model: SpectrumModel | None = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise SpectrumError(f"dt must be > 0, got {self.dt}")
        if self.samples.size < 2:
            raise SpectrumError("traces need at least two samples")

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


def _next_pow2(n: int) -> int:
    return 1 << max(1, (n - 1).bit_length())


def synthesize_trace(
    model: SpectrumModel,
    duration: float,
    dt: float,
    seed: int,
    *,
    rng: np.random.Generator | None = None,
) -> NoiseTrace:
    """Draw one noise realization whose ensemble statistics follow ``model``.

    Each positive-frequency bin below Nyquist receives the deterministic
    magnitude matching the model spectrum and an independent uniform random
    phase; the DC bin is zero. The inverse transform runs on a power-of-two
    sample count rounded up from duration/dt and the result is truncated to
    the requested length. Deterministic for fixed (seed, duration, dt).

    Raises
    ------
    SpectrumError
        If the duration is shorter than two samples, or the model band lies
        entirely above the Nyquist rate so no bin can carry its power.
    """
    if duration < 2.0 * dt:
        raise SpectrumError(f"duration {duration:g} s must be >= 2*dt = {2 * dt:g} s")
    nyquist = math.pi / dt
    lo, hi = model.support()
    if lo > nyquist:
        raise SpectrumError(
            f"model band starts at {lo:g} rad/s, above the Nyquist angular "
            f"frequency {nyquist:g} rad/s for dt = {dt:g} s; decrease dt"
        )
    n_keep = int(math.ceil(duration / dt)) + 1
    n = _next_pow2(n_keep)
    domega = 2.0 * math.pi / (n * dt)
    omegas = domega * np.arange(1, n // 2)
    spectrum = model.psd(omegas)
    amplitudes = n * np.sqrt((2.0 / math.pi) * spectrum * domega)
    if rng is None:
        rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, n // 2 - 1)
    bins = np.zeros(n // 2 + 1, dtype=complex)
    bins[1 : n // 2] = amplitudes * np.exp(1j * phases)
    samples = np.fft.irfft(bins, n)[:n_keep]
    return NoiseTrace(dt=dt, samples=samples, seed=seed, model=model)


def periodogram(trace: NoiseTrace) -> Tabulated:
    """One-sided spectrum estimate of a trace, in the package normalization.

    The ensemble mean over independent seeds converges to the synthesis
    model's psd bin for bin.
    """
    x = np.asarray(trace.samples, dtype=float)
    n = x.size
    if n < 2:
        raise SpectrumError("periodogram needs at least two samples")
    spec = np.fft.rfft(x)
    m = np.arange(1, (n + 1) // 2)
    domega = 2.0 * math.pi / (n * trace.dt)
    omegas = domega * m
    values = np.abs(spec[m]) ** 2 * trace.dt / (4.0 * n)
    return Tabulated(omegas=tuple(omegas), values=tuple(values))


def trace_variance_target(model: SpectrumModel, n_grid: int = 200001) -> float:
    """Band-integrated Var[beta] implied by the normalization contract,
    via dense trapezoid quadrature of the model spectrum."""
    lo, hi = model.support()
    lo = max(lo, hi * 1e-12)
    w = np.linspace(lo, hi, n_grid)
    return VARIANCE_FACTOR * np.trapezoid(model.psd(w), w)


# -- file interfaces -------------------------------------------------------

_TABULATED_CONVENTION = "one-sided-angular"


def load_tabulated_csv(path) -> Tabulated:
    """Read a tabulated spectrum: a mandatory ``# convention=one-sided-angular``
    comment line, then a header row ``freq_hz,psd``. Frequencies are plain Hz
    and are converted to rad/s."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first.replace(" ", "") != f"#convention={_TABULATED_CONVENTION}":
            raise SpectrumError(
                f"tabulated spectrum must declare '# convention={_TABULATED_CONVENTION}' "
                f"on its first line, found {first!r}"
            )
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["freq_hz", "psd"]:
            raise SpectrumError(f"expected header freq_hz,psd, found {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    omegas = tuple(2.0 * math.pi * f for f, _ in rows)
    values = tuple(v for _, v in rows)
    return Tabulated(omegas=omegas, values=values)


def write_tabulated_csv(path, model: Tabulated) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# convention={_TABULATED_CONVENTION}\n")
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "psd"])
        scale = model.amplitude_scale**2
        for w, v in zip(model.omegas, model.values):
            writer.writerow([f"{w / (2.0 * math.pi):.17g}", f"{scale * v:.17g}"])


def write_trace_csv(path, trace: NoiseTrace) -> None:
    """Emit a trace as (t_s, beta_rad_s) CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "beta_rad_s"])
        for t, b in zip(trace.times(), trace.samples):
            writer.writerow([f"{t:.17g}", f"{b:.17g}"])


def read_trace_csv(path, *, dt: float | None = None, seed: int = 0) -> NoiseTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["t_s", "beta_rad_s"]:
            raise SpectrumError(f"expected header t_s,beta_rad_s, found {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    times = np.array([t for t, _ in rows])
    samples = np.array([b for _, b in rows])
    if dt is None:
        dt = float(times[1] - times[0])
    return NoiseTrace(dt=dt, samples=samples, seed=seed)


def model_to_dict(model: SpectrumModel) -> dict:
    """JSON-friendly description of a spectrum model (for manifests)."""
    if isinstance(model, PowerLaw):
        return {
            "variant": "power_law",
            "exponent": model.exponent,
            "amplitude": model.amplitude,
            "omega_ref": model.omega_ref,
            "band": list(model.band),
            "amplitude_scale": model.amplitude_scale,
        }
    if isinstance(model, OhmicHardCutoff):
        return {
            "variant": "ohmic_hard_cutoff",
            "slope_amplitude": model.slope_amplitude,
            "cutoff": model.cutoff,
            "amplitude_scale": model.amplitude_scale,
        }
    if isinstance(model, Ambient):
        return {
            "variant": "ambient",
            "alpha": model.alpha,
            "omega_ref": model.omega_ref,
            "band": list(model.band),
            "amplitude_scale": model.amplitude_scale,
            "spurs": [
                {"center": s.center, "weight": s.weight, "sigma": s.sigma}
                for s in model.spurs
            ],
        }
    if isinstance(model, SpurOnly):
        return {
            "variant": "spur_only",
            "base": model_to_dict(model.base),
            "amplitude_scale": model.amplitude_scale,
        }
    if isinstance(model, Tabulated):
        return {
            "variant": "tabulated",
            "omegas": list(model.omegas),
            "values": list(model.values),
            "amplitude_scale": model.amplitude_scale,
        }
    raise TypeError(f"unknown model type {type(model)!r}")


def model_from_dict(doc: dict) -> SpectrumModel:
    variant = doc["variant"]
    if variant == "power_law":
        return PowerLaw(
            exponent=doc["exponent"],
            amplitude=doc["amplitude"],
            omega_ref=doc["omega_ref"],
            band=tuple(doc.get("band", DEFAULT_BAND)),
            amplitude_scale=doc.get("amplitude_scale", 1.0),
        )
    if variant == "ohmic_hard_cutoff":
        return OhmicHardCutoff(
            slope_amplitude=doc["slope_amplitude"],
            cutoff=doc["cutoff"],
            amplitude_scale=doc.get("amplitude_scale", 1.0),
        )
    if variant == "ambient":
        return Ambient(
            alpha=doc["alpha"],
            spurs=tuple(
                Spur(center=s["center"], weight=s["weight"], sigma=s.get("sigma", DEFAULT_SPUR_SIGMA))
                for s in doc.get("spurs", [])
            ),
            omega_ref=doc.get("omega_ref", 2.0 * math.pi),
            band=tuple(doc.get("band", DEFAULT_BAND)),
            amplitude_scale=doc.get("amplitude_scale", 1.0),
        )
    if variant == "spur_only":
        return SpurOnly(
            base=model_from_dict(doc["base"]),
            amplitude_scale=doc.get("amplitude_scale", 1.0),
        )
    if variant == "tabulated":
        return Tabulated(
            omegas=tuple(doc["omegas"]),
            values=tuple(doc["values"]),
            amplitude_scale=doc.get("amplitude_scale", 1.0),
        )
    raise SpectrumError(f"unknown spectrum variant {variant!r}")
