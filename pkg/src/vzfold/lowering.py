"""Lowering of folded pulse schedules to sampled baseband drive fields.

The drive is stored post-RWA as a complex field ``F(t)`` such that

    H(t) = Re F(t) σx/2 + Im F(t) σy/2,

so a pulse with real envelope ``e(t)`` at phase ``φ`` realizes R_φ(∫e).

Sampling: the integrator is fixed-step RK4, so every step ``i`` covering
``[i dt, (i+1) dt]`` carries three samples (left node, midpoint, right node).
Node samples are one-sided limits taken from inside the step; a piecewise
constant term switching on a node, such as the gated amplitude error, is then
integrated exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from vzfold.frame import PhysicalPulse, PulseSchedule, TIME_TOL


# -- envelopes ---------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """Gaussian lifted to zero at the window edges (continuous at truncation).

    ``sigma`` and ``window`` in ns; ``None`` means t_g/4 and t_g.
    """

    sigma: float | None = None
    window: float | None = None


@dataclass(frozen=True)
class CosineRamp:
    """Raised cosine (1 + cos(2πu/t_g))/2 over the gate window."""


Envelope = Union[Gaussian, CosineRamp]


def _gauss_lifted(u: np.ndarray, sigma: float, half: float) -> np.ndarray:
    g = np.exp(-0.5 * (u / sigma) ** 2) - math.exp(-0.5 * (half / sigma) ** 2)
    return np.where(np.abs(u) <= half, g, 0.0)


def _gauss_lifted_area(sigma: float, half: float) -> float:
    return sigma * math.sqrt(2.0 * math.pi) * math.erf(half / (math.sqrt(2.0) * sigma)) - 2.0 * half * math.exp(
        -0.5 * (half / sigma) ** 2
    )


def _cos_ramp(u: np.ndarray, half: float) -> np.ndarray:
    c = 0.5 * (1.0 + np.cos(np.pi * u / half))
    return np.where(np.abs(u) <= half, c, 0.0)


@dataclass(frozen=True)
class PulseShape:
    gate_ns: float = 56.8
    envelope: Envelope = field(default_factory=Gaussian)

    def __post_init__(self) -> None:
        if not self.gate_ns > 0:
            raise ValueError("gate_ns must be > 0")
        if isinstance(self.envelope, Gaussian):
            if self.sigma <= 0 or self.half_window <= 0:
                raise ValueError("Gaussian sigma and window must be > 0")
            if self.half_window > 0.5 * self.gate_ns + TIME_TOL:
                raise ValueError("Gaussian window cannot exceed the gate duration")

    @property
    def sigma(self) -> float:
        e = self.envelope
        return e.sigma if isinstance(e, Gaussian) and e.sigma is not None else self.gate_ns / 4.0

    @property
    def half_window(self) -> float:
        e = self.envelope
        if isinstance(e, Gaussian) and e.window is not None:
            return 0.5 * e.window
        return 0.5 * self.gate_ns

    def unit_area(self) -> float:
        if isinstance(self.envelope, CosineRamp):
            return 0.5 * self.gate_ns
        return _gauss_lifted_area(self.sigma, self.half_window)

    @property
    def amplitude_scale(self) -> float:
        """Field amplitude per radian of nominal rotation."""
        return 1.0 / self.unit_area()

    def shape(self, u: np.ndarray) -> np.ndarray:
        """Uncalibrated envelope, ``u`` measured from the pulse peak."""
        u = np.asarray(u, dtype=float)
        if isinstance(self.envelope, CosineRamp):
            return _cos_ramp(u, 0.5 * self.gate_ns)
        return _gauss_lifted(u, self.sigma, self.half_window)

    def envelope_values(self, u: np.ndarray, angle: float) -> np.ndarray:
        return angle * self.amplitude_scale * self.shape(u)

    def extended_shape(self, u: np.ndarray, extension: float) -> np.ndarray:
        """Same family with its support widened by ``extension`` on each side, peak normalized to 1."""
        u = np.asarray(u, dtype=float)
        half = 0.5 * self.gate_ns + extension
        if isinstance(self.envelope, CosineRamp):
            return _cos_ramp(u, half)
        edge = math.exp(-0.5 * (half / self.sigma) ** 2)
        return _gauss_lifted(u, self.sigma, half) / (1.0 - edge)


# -- interference ------------------------------------------------------------


@dataclass(frozen=True)
class NoInterference:
    pass


@dataclass(frozen=True)
class TailOverlap:
    """Cross-talk between pulses whose extended windows overlap.

    Each pulse k has an extended profile ``x_k`` (its envelope family widened
    by ``extension`` per side, scaled to the pulse's peak amplitude and
    phase) and a normalized presence ``p_k = x_k / max|x_k|`` in [0, 1]. The
    realized field gains

        strength * sum_{k != j} x_k(t) p_j(t),

    i.e. a pulse's tail shows up only where another pulse is live, and two
    overlapping tails add coherently with their own phases. A lone pulse is
    left untouched, so lone-pulse calibration is unaffected; the term is
    exactly zero once peak separation reaches t_g + 2 * extension.
    ``extension=None`` means t_g/2.
    """

    extension: float | None = None
    strength: float = 1.0

    def __post_init__(self) -> None:
        if self.extension is not None and self.extension < 0:
            raise ValueError("TailOverlap extension must be >= 0")
        if self.strength < 0:
            raise ValueError("TailOverlap strength must be >= 0")

    def ext_for(self, shape: PulseShape) -> float:
        return 0.5 * shape.gate_ns if self.extension is None else self.extension


@dataclass(frozen=True)
class Echo:
    """Each pulse is followed by a delayed, attenuated, phase-shifted copy."""

    reflection_amplitude: float = 0.05
    delay: float = 30.0
    phase_shift: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.reflection_amplitude < 1.0:
            raise ValueError("Echo reflection_amplitude must lie in [0, 1)")
        if self.delay < 0:
            raise ValueError("Echo delay must be >= 0")


InterferenceModel = Union[NoInterference, TailOverlap, Echo]


# -- sampled fields ----------------------------------------------------------


@dataclass(frozen=True)
class DriveField:
    """Per-step samples of the complex drive on ``[step0 dt, (step0 + n) dt]``.

    ``samples[i]`` holds (left, mid, right) values for step ``step0 + i``.
    ``error_axis[i]`` is the unit drive direction e^{iφ}·sign(θ) of the pulse
    whose core contains that step, or 0 between pulse cores.
    """

    dt: float
    samples: np.ndarray
    error_axis: np.ndarray
    step0: int = 0

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def t0(self) -> float:
        return self.step0 * self.dt

    @property
    def span(self) -> float:
        return self.n_steps * self.dt

    def node_times(self) -> np.ndarray:
        return (self.step0 + np.arange(self.n_steps + 1)) * self.dt

    def node_values(self) -> np.ndarray:
        if self.n_steps == 0:
            return np.zeros(1, dtype=complex)
        return np.concatenate([self.samples[:, 0], self.samples[-1:, 2]])

    def area(self) -> complex:
        """Simpson integral of the field with the RK4 sample weights."""
        if self.n_steps == 0:
            return 0j
        w = np.array([1.0, 4.0, 1.0]) * (self.dt / 6.0)
        return complex(np.sum(self.samples @ w))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_ns", "re", "im"])
            for t, v in zip(self.node_times(), self.node_values()):
                w.writerow([f"{t:.9g}", f"{v.real:.9g}", f"{v.imag:.9g}"])


@dataclass(frozen=True)
class HamiltonianTrace:
    """H = (hx σx + hy σy + hz σz)/2 with per-step (left, mid, right) samples."""

    dt: float
    hx: np.ndarray
    hy: np.ndarray
    hz: float
    step0: int = 0

    @property
    def n_steps(self) -> int:
        return self.hx.shape[0]

    def matrix(self, i: int, k: int) -> np.ndarray:
        x, y, z = self.hx[i, k], self.hy[i, k], self.hz
        return 0.5 * np.array([[z, x - 1j * y], [x + 1j * y, -z]], dtype=complex)


def steps_for(duration: float, dt: float) -> int:
    n = int(round(duration / dt))
    if abs(n * dt - duration) > TIME_TOL:
        raise ValueError(f"dt={dt} ns does not divide {duration} ns")
    return n


def _check_grid(s: PulseSchedule, dt: float) -> None:
    for p in s.pulses:
        steps_for(p.start, dt)
        steps_for(p.duration, dt)


def _check_cores(s: PulseSchedule) -> None:
    for a, b in zip(s.pulses, s.pulses[1:]):
        sep = b.peak - a.peak
        need = 0.5 * (a.duration + b.duration)
        if sep < need - TIME_TOL:
            raise ValueError(
                f"overlapping pulse cores: peaks at {a.peak:g} and {b.peak:g} ns are closer than {need:g} ns"
            )


def _step_range(lo: float, hi: float, dt: float, i_lo: int, i_hi: int) -> tuple[int, int]:
    a = max(i_lo, int(math.floor(lo / dt + 1e-9)))
    b = min(i_hi, int(math.ceil(hi / dt - 1e-9)))
    return a, b


def _sample_times(a: int, b: int, dt: float) -> np.ndarray:
    i = np.arange(a, b, dtype=float)
    return np.stack([i * dt, (i + 0.5) * dt, (i + 1.0) * dt], axis=1)


def _phasor(p: PhysicalPulse) -> complex:
    return complex(math.cos(p.phase), math.sin(p.phase))


def lower(
    s: PulseSchedule,
    shape: PulseShape | None = None,
    interference: InterferenceModel | None = None,
    dt: float = 0.1,
    steps: tuple[int, int] | None = None,
) -> DriveField:
    """Sample the drive of a schedule on the RK4 grid.

    ``steps`` restricts sampling to a half-open step range; the values in that
    range are identical to those of the full lowering.

    Raises:
        ValueError: dt <= 0, timings not on the dt grid, or overlapping cores.
    """
    shape = shape or PulseShape()
    interference = interference or NoInterference()
    if not dt > 0:
        raise ValueError("dt must be > 0")
    n_total = steps_for(s.total_duration, dt)
    _check_grid(s, dt)
    _check_cores(s)
    i_lo, i_hi = (0, n_total) if steps is None else steps
    if not 0 <= i_lo <= i_hi <= n_total:
        raise ValueError(f"step range {steps} outside [0, {n_total}]")
    n = i_hi - i_lo
    samples = np.zeros((n, 3), dtype=complex)
    axis = np.zeros(n, dtype=complex)
    scale = shape.amplitude_scale

    for p in s.pulses:
        ph = _phasor(p)
        half = 0.5 * p.duration
        if p.end <= i_lo * dt or p.start >= i_hi * dt:
            continue
        a, b = _step_range(p.peak - half, p.peak + half, dt, i_lo, i_hi)
        if a < b:
            t = _sample_times(a, b, dt)
            samples[a - i_lo : b - i_lo] += (p.angle * scale * ph) * shape.shape(t - p.peak)
            axis[a - i_lo : b - i_lo] = ph * (1.0 if p.angle >= 0 else -1.0)

    if isinstance(interference, TailOverlap) and interference.strength > 0:
        _add_tail_overlap(samples, s, shape, interference, dt, i_lo, i_hi)
    elif isinstance(interference, Echo) and interference.reflection_amplitude > 0:
        rot = complex(math.cos(interference.phase_shift), math.sin(interference.phase_shift))
        for p in s.pulses:
            peak = p.peak + interference.delay
            half = 0.5 * p.duration
            a, b = _step_range(peak - half, peak + half, dt, i_lo, i_hi)
            if a < b:
                t = _sample_times(a, b, dt)
                amp = interference.reflection_amplitude * p.angle * scale * _phasor(p) * rot
                samples[a - i_lo : b - i_lo] += amp * shape.shape(t - peak)
    return DriveField(dt, samples, axis, i_lo)


def _add_tail_overlap(samples, s, shape, model: TailOverlap, dt, i_lo, i_hi) -> None:
    ext = model.ext_for(shape)
    scale = shape.amplitude_scale
    peak_unit = float(shape.shape(np.array([0.0]))[0])
    pulses = s.pulses
    t_lo, t_hi = i_lo * dt, i_hi * dt

    def overlap(p, q):
        lo = max(p.peak - 0.5 * p.duration, q.peak - 0.5 * q.duration) - ext
        hi = min(p.peak + 0.5 * p.duration, q.peak + 0.5 * q.duration) + ext
        return lo, hi

    for k, p in enumerate(pulses):
        reach = 0.5 * p.duration + ext
        if p.peak + reach <= t_lo or p.peak - reach >= t_hi:
            continue
        amp_k = model.strength * p.angle * scale * peak_unit * _phasor(p)
        for direction in (-1, 1):
            j = k + direction
            while 0 <= j < len(pulses):
                q = pulses[j]
                lo, hi = overlap(p, q)
                if hi <= lo:
                    break
                a, b = _step_range(lo, hi, dt, i_lo, i_hi)
                if a < b:
                    t = _sample_times(a, b, dt)
                    samples[a - i_lo : b - i_lo] += (
                        amp_k * shape.extended_shape(t - p.peak, ext) * shape.extended_shape(t - q.peak, ext)
                    )
                j += direction


def influence_start(p: PhysicalPulse, shape: PulseShape, interference: InterferenceModel) -> float:
    """Earliest time at which pulse ``p`` can change the sampled field."""
    t = p.start
    if isinstance(interference, TailOverlap):
        t = p.peak - 0.5 * p.duration - interference.ext_for(shape)
    return t


def inject_coherent_errors(f: DriveField, eps_err: float = 0.0, del_err: float = 0.0) -> HamiltonianTrace:
    """Add the rotation error ε_err along the live pulse's axis and the detuning δ_err.

    ε_err acts only on steps inside a pulse core, pointing along that pulse's
    drive direction, so a lone π pulse over-rotates by ε_err·t_g. δ_err is a
    qubit detuning and acts at all times.
    """
    hx = f.samples.real.copy()
    hy = f.samples.imag.copy()
    if eps_err != 0.0:
        hx += (eps_err * f.error_axis.real)[:, None]
        hy += (eps_err * f.error_axis.imag)[:, None]
    return HamiltonianTrace(f.dt, hx, hy, float(del_err), f.step0)
