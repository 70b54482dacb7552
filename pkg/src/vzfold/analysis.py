"""Decay fitting and oscillation quantification of fidelity curves."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

GRID_POINTS = 64
GRID_SPAN = 100.0  # candidates span [T/100, 100 T]
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
REL_TOL = 1e-10


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of a + b exp(-t / T_D); ``T_D_us`` in µs."""

    a: float
    b: float
    T_D_us: float
    rms_residual: float
    converged: bool

    def model(self, t_ns) -> np.ndarray:
        t = np.asarray(t_ns, dtype=float)
        if not math.isfinite(self.T_D_us):
            return np.full_like(t, self.a)
        return self.a + self.b * np.exp(-t / (self.T_D_us * 1e3))

    @property
    def in_sanity_band(self) -> bool:
        return -0.05 <= self.a + self.b <= 1.05


@dataclass(frozen=True)
class OscillationMetric:
    amplitude: float
    period_ns: float


def _curve_arrays(curve, use_sampled: bool = False) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(curve, tuple):
        t, f = curve
        return np.asarray(t, dtype=float), np.asarray(f, dtype=float)
    return curve.times, curve.sampled if use_sampled else curve.fidelities


def _linear_solve(e: np.ndarray, f: np.ndarray) -> tuple[float, float, float]:
    """Best (a, b) for f ≈ a + b e, and the residual sum of squares."""
    n = e.size
    se, sf = e.sum(), f.sum()
    see, sef = e @ e, e @ f
    det = n * see - se * se
    if det <= 1e-14 * max(n * see, 1e-300):
        a, b = sf / n, 0.0
    else:
        b = (n * sef - se * sf) / det
        a = (sf - b * se) / n
    r = f - a - b * e
    return float(a), float(b), float(r @ r)


def fit_decay(curve, use_sampled: bool = False) -> DecayFit:
    """Fit a + b exp(-t/T_D) by log-grid search then golden-section refinement.

    Accepts a ``FidelityCurve`` or a ``(times_ns, values)`` tuple. Time is
    normalized by the curve's total time before fitting, so rescaling the
    time axis rescales T_D and nothing else. A constant curve returns
    ``a = mean``, ``b = 0`` and ``converged = False``.

    Raises:
        ValueError: fewer than 6 points.
    """
    t, f = _curve_arrays(curve, use_sampled)
    ok = np.isfinite(f)
    t, f = t[ok], f[ok]
    if t.size < 6:
        raise ValueError(f"fit_decay needs at least 6 points, got {t.size}")
    total = float(t.max())
    if np.ptp(f) <= 1e-12 or total <= 0.0:
        mean = float(f.mean())
        rms = float(np.sqrt(np.mean((f - mean) ** 2)))
        return DecayFit(mean, 0.0, math.inf, rms, False)

    u = t / total
    floor = 1e-20 * float(f @ f)

    def ssr(log_tau: float) -> float:
        return _linear_solve(np.exp(-u / math.exp(log_tau)), f)[2]

    grid = np.linspace(-math.log(GRID_SPAN), math.log(GRID_SPAN), GRID_POINTS)
    vals = [ssr(g) for g in grid]
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, GRID_POINTS - 1)]

    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = ssr(x1), ssr(x2)
    best = min(vals[i], f1, f2)
    rel = math.inf
    for _ in range(200):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = ssr(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = ssr(x2)
        new_best = min(best, f1, f2)
        rel = (best - new_best) / max(best, floor)
        best = new_best
        if hi - lo < 1e-12:
            break
    x = x1 if f1 <= f2 else x2
    if vals[i] < min(f1, f2):
        x = grid[i]
    tau = math.exp(x)
    a, b, s = _linear_solve(np.exp(-u / tau), f)
    interior = 0 < i < GRID_POINTS - 1
    converged = bool(interior and rel < REL_TOL)
    return DecayFit(a, b, tau * total * 1e-3, math.sqrt(s / t.size), converged)


def oscillation_metric(curve, fit: DecayFit | None = None, use_sampled: bool = False) -> OscillationMetric:
    """Dominant non-DC Fourier component of the fit residuals.

    amplitude = 2|X_k|/N for the largest non-DC bin k, period = N Δt / k.
    With ``use_sampled`` the shot-noise floor 3/√shots is applied: smaller
    amplitudes are reported as 0.

    Raises:
        ValueError: non-uniform time sampling or fewer than 3 points.
    """
    t, f = _curve_arrays(curve, use_sampled)
    if t.size < 3:
        raise ValueError("oscillation_metric needs at least 3 points")
    dts = np.diff(t)
    step = float(dts.mean())
    if step <= 0 or np.max(np.abs(dts - step)) > 1e-6 * step:
        raise ValueError("oscillation_metric requires uniformly sampled times")
    if fit is None:
        fit = fit_decay(curve, use_sampled)
    r = f - fit.model(t)
    n = r.size
    spec = np.abs(np.fft.rfft(r))[1:]
    if spec.size == 0 or not np.any(spec > 0):
        return OscillationMetric(0.0, math.inf)
    k = int(np.argmax(spec)) + 1
    amp = 2.0 * float(spec[k - 1]) / n
    if use_sampled and not isinstance(curve, tuple) and curve.shots > 0:
        if amp < 3.0 / math.sqrt(curve.shots):
            amp = 0.0
    return OscillationMetric(amp, n * step / k)


@dataclass
class OrderingReport:
    """T_D per label and the fraction of ensemble members satisfying T_D(A) >= T_D(B)."""

    td_us: dict[str, list[float]]
    fraction_ge: dict[tuple[str, str], float] = field(default_factory=dict)

    def format(self) -> str:
        labels = list(self.td_us)
        lines = [f"{'label':<16} {'n':>4} {'mean T_D (us)':>14}"]
        for lab in labels:
            v = self.td_us[lab]
            lines.append(f"{lab:<16} {len(v):>4} {float(np.mean(v)):>14.4f}")
        for (a, b), frac in self.fraction_ge.items():
            lines.append(f"T_D({a}) >= T_D({b}): {100.0 * frac:.1f}%")
        return "\n".join(lines)


def compare_decay_constants(fits: Iterable[tuple[str, DecayFit]]) -> OrderingReport:
    """Pairwise T_D orderings across an ensemble.

    Fits sharing a label form that label's ensemble; members of different
    labels are paired by position. Ties count as satisfying >=.

    Raises:
        ValueError: fewer than two converged fits or ragged ensembles.
    """
    groups: "OrderedDict[str, list[float]]" = OrderedDict()
    n_conv = 0
    for label, fit in fits:
        groups.setdefault(label, []).append(fit.T_D_us)
        n_conv += bool(fit.converged)
    if n_conv < 2:
        raise ValueError("compare_decay_constants needs at least two converged fits")
    sizes = {len(v) for v in groups.values()}
    if len(sizes) != 1:
        raise ValueError(f"ensembles have different sizes: { {k: len(v) for k, v in groups.items()} }")
    report = OrderingReport(dict(groups))
    labels = list(groups)
    for a in labels:
        for b in labels:
            if a == b:
                continue
            va, vb = np.array(groups[a]), np.array(groups[b])
            report.fraction_ge[(a, b)] = float(np.mean(va >= vb))
    return report
