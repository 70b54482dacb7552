"""Open-system simulation of folded pulse schedules.

A schedule is lowered to a drive field, coherent errors are injected and the
Lindblad equation

    dρ/dt = -i[H(t), ρ] + (1/T1) D[σ-]ρ + (1/(2 Tphi)) D[σz]ρ

is integrated with fixed-step RK4 on the lowering grid. The fidelity
protocol prepares a state, runs ``n`` cycles of a sequence, undoes the
preparation and reports P(|0>).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from vzfold import _backend
from vzfold.frame import PulseSchedule, ScheduleConfig, fold, fold_cycles
from vzfold.gate_ir import (
    CompilationStrategy,
    Gate,
    GateSequence,
    PhysicalPulseGate,
    XbarVariant,
    build_sequence,
    pulse,
)
from vzfold.lowering import (
    HamiltonianTrace,
    InterferenceModel,
    PulseShape,
    TailOverlap,
    influence_start,
    inject_coherent_errors,
    lower,
    steps_for,
)
from vzfold.su2 import Rotation, rotation_unitary, rz_unitary

if TYPE_CHECKING:
    from vzfold.config_io import ExperimentConfig

PI = math.pi
GH_POINTS = 32

TRACE_DRIFT_MAX = 1e-8
NEGATIVITY_MAX = 1e-6


class IntegrationError(RuntimeError):
    """The integrator left the physical state space (dt too coarse)."""


# -- states ------------------------------------------------------------------


def validate_density(rho: np.ndarray, herm_tol: float = 1e-10, trace_tol: float = 1e-9, neg_tol: float = 1e-9) -> None:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"density matrix must be 2x2, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol or abs(np.trace(rho).imag) > trace_tol:
        raise ValueError(f"density matrix trace is {np.trace(rho)}, expected 1")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -neg_tol:
        raise ValueError("density matrix is not positive semidefinite")


# Preparation rotations from |0>, all √X-type (θ = π/2) pulses at some phase.
_PREP_ROTATIONS = {
    "zero": None,
    "plus": Rotation(PI / 2.0, PI / 2.0),  # R_y(π/2)|0> = |+>
    "plus_i": Rotation(PI, PI / 2.0),  # R_x(-π/2)|0> = |+i>
    "minus_i": Rotation(0.0, PI / 2.0),  # R_x(π/2)|0> = |-i>
}
INITIAL_STATES = tuple(_PREP_ROTATIONS)


def _check_initial(initial: str) -> None:
    if initial not in _PREP_ROTATIONS:
        raise ValueError(f"unknown initial state {initial!r}; expected one of {', '.join(INITIAL_STATES)}")


def prep_unitary(initial: str) -> np.ndarray:
    _check_initial(initial)
    r = _PREP_ROTATIONS[initial]
    return np.eye(2, dtype=complex) if r is None else rotation_unitary(r)


def prep_gates(initial: str) -> tuple[Gate, ...]:
    _check_initial(initial)
    r = _PREP_ROTATIONS[initial]
    return () if r is None else (PhysicalPulseGate(r),)


def unprep_gates(initial: str) -> tuple[Gate, ...]:
    """Logical inverse of the preparation as a positive-angle pulse (phase + π)."""
    _check_initial(initial)
    r = _PREP_ROTATIONS[initial]
    return () if r is None else (pulse(r.phi + PI, r.theta),)


def initial_density(initial: str, settings: "SimSettings | None" = None) -> np.ndarray:
    """State entering the sequence body, or |0> when preparation is physical."""
    u = prep_unitary(initial)
    if settings is not None and settings.physical_prep:
        u = np.eye(2, dtype=complex)
    ket = u[:, 0]
    return np.outer(ket, ket.conj())


# -- noise -------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Dissipation and coherent-error parameters.

    ``T1_us``/``Tphi_us`` in µs (``math.inf`` disables); ``eps_err``,
    ``del_err`` and ``quasistatic_sigma`` in rad/ns (GHz·rad).
    """

    T1_us: float = 100.0
    Tphi_us: float = 100.0
    eps_err: float = 0.01 / 56.8
    del_err: float = 0.01 * PI / 56.8
    quasistatic_sigma: float = 2.0 * PI * 5e-6
    interference: InterferenceModel = field(default_factory=TailOverlap)

    def __post_init__(self) -> None:
        for name in ("T1_us", "Tphi_us"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be > 0 or inf, got {v}")
        if not self.quasistatic_sigma >= 0:
            raise ValueError("quasistatic_sigma must be >= 0")

    @classmethod
    def from_errors(cls, delta_theta: float, delta_phi: float, gate_ns: float, **kw) -> "NoiseModel":
        """Set ε_err = δθ/t_g and δ_err = δφ·ε̄ with ε̄ = π/t_g, the mean π-pulse amplitude."""
        return cls(eps_err=delta_theta / gate_ns, del_err=delta_phi * PI / gate_ns, **kw)

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        from vzfold.lowering import NoInterference

        return cls(math.inf, math.inf, 0.0, 0.0, 0.0, NoInterference())

    @property
    def gamma1(self) -> float:
        return 0.0 if math.isinf(self.T1_us) else 1.0 / (self.T1_us * 1e3)

    @property
    def gamma_phi(self) -> float:
        """Coefficient of D[σz]: 1/(2 Tphi) in 1/ns."""
        return 0.0 if math.isinf(self.Tphi_us) else 0.5 / (self.Tphi_us * 1e3)

    def detuning_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Detuning offsets and weights of the quasi-static ensemble."""
        if self.quasistatic_sigma == 0.0:
            return np.zeros(1), np.ones(1)
        x, w = np.polynomial.hermite.hermgauss(GH_POINTS)
        return math.sqrt(2.0) * self.quasistatic_sigma * x, w / math.sqrt(PI)


# -- integration ---------------------------------------------------------------


def _finish(rho: np.ndarray) -> np.ndarray:
    tr = np.trace(rho)
    drift = abs(tr - 1.0)
    if not drift <= TRACE_DRIFT_MAX:
        raise IntegrationError(f"trace drifted by {drift:.3e} (> {TRACE_DRIFT_MAX:g}); reduce dt")
    rho = 0.5 * (rho + rho.conj().T) / tr.real
    lam = float(np.min(np.linalg.eigvalsh(rho)))
    if lam < -NEGATIVITY_MAX:
        raise IntegrationError(f"state lost positivity (min eigenvalue {lam:.3e}); reduce dt")
    return rho


def evolve(
    rho0: np.ndarray,
    trace: HamiltonianTrace,
    noise: NoiseModel,
    detuning: float = 0.0,
    record: Sequence[int] | None = None,
):
    """Integrate the master equation over every step of ``trace``.

    ``detuning`` is an extra constant σz coefficient (one member of the
    quasi-static ensemble). With ``record`` the states at the start of the
    listed local step indices are returned too, as ``(rho, snapshots)``.

    Raises:
        IntegrationError: trace drift above 1e-8 or negativity below -1e-6.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    rho, snaps = _backend.rk4_lindblad(
        rho0, trace.hx, trace.hy, trace.hz + detuning, trace.dt, noise.gamma1, noise.gamma_phi, record
    )
    rho = _finish(rho)
    if record is None:
        return rho
    return rho, snaps


# -- protocol ------------------------------------------------------------------


@dataclass(frozen=True)
class SimSettings:
    """Pulse and grid parameters shared by every simulated schedule."""

    shape: PulseShape = field(default_factory=PulseShape)
    dt_ns: float = 0.1
    physical_prep: bool = False

    @property
    def timing(self) -> ScheduleConfig:
        return ScheduleConfig(gate_ns=self.shape.gate_ns, interval_ns=self.shape.gate_ns)


@dataclass(frozen=True)
class CurvePoint:
    cycles: int
    time_ns: float
    fidelity_exact: float
    fidelity_sampled: float
    shots: int
    seed: int


@dataclass
class FidelityCurve:
    sequence: str
    strategy: str
    spacing_multiplier: float
    initial_state: str
    points: list[CurvePoint] = field(default_factory=list)
    fit: object | None = None  # analysis.DecayFit

    @property
    def label(self) -> str:
        s = self.sequence if self.strategy == "-" else f"{self.sequence}:{self.strategy}"
        return f"{s}@{self.spacing_multiplier:g}/{self.initial_state}"

    @property
    def cycles(self) -> np.ndarray:
        return np.array([p.cycles for p in self.points])

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time_ns for p in self.points], dtype=float)

    @property
    def fidelities(self) -> np.ndarray:
        return np.array([p.fidelity_exact for p in self.points], dtype=float)

    @property
    def sampled(self) -> np.ndarray:
        return np.array([p.fidelity_sampled for p in self.points], dtype=float)

    @property
    def shots(self) -> int:
        return self.points[0].shots if self.points else 0


def sample_fidelity(p: float, shots: int, seed: int) -> float:
    """Fraction of |0> outcomes in ``shots`` Bernoulli(p) draws; NaN when shots == 0."""
    if shots <= 0:
        return math.nan
    rng = np.random.default_rng(seed)
    return int(rng.binomial(shots, min(max(p, 0.0), 1.0))) / shots


def _p0(rho: np.ndarray) -> float:
    return float(min(max(rho[0, 0].real, 0.0), 1.0))


@dataclass
class _Plan:
    """Folded schedules and trace windows for one curve."""

    schedules: list[PulseSchedule]
    body_times: list[float]
    long_schedule: PulseSchedule
    split_steps: list[int]


def _first_difference(a: PulseSchedule, b: PulseSchedule) -> int:
    m = min(len(a.pulses), len(b.pulses))
    for i in range(m):
        if a.pulses[i] != b.pulses[i]:
            return i
    return m


def _plan(cycle: GateSequence, counts: Sequence[int], initial: str, settings: SimSettings, noise: NoiseModel) -> _Plan:
    timing = settings.timing
    if settings.physical_prep:
        prefix = prep_gates(initial)
        suffix = lambda _frame: unprep_gates(initial)  # noqa: E731
    else:
        prefix, suffix = (), None
    schedules = fold_cycles(cycle, counts, timing, prefix=prefix, suffix_factory=suffix)
    bodies = fold_cycles(cycle, counts, timing) if settings.physical_prep else schedules
    long_schedule = fold_cycles(cycle, [max(counts)], timing, prefix=prefix)[0]
    dt = settings.dt_ns
    split = []
    for s in schedules:
        m = _first_difference(s, long_schedule)
        t_div = s.total_duration
        for p in s.pulses[m:] + long_schedule.pulses[m:]:
            t_div = min(t_div, influence_start(p, settings.shape, noise.interference))
        n_s = steps_for(s.total_duration, dt)
        k = min(n_s, max(0, int(math.floor(t_div / dt + 1e-9))))
        split.append(k)
    return _Plan(schedules, [b.total_duration for b in bodies], long_schedule, split)


def _trace_for(s: PulseSchedule, settings: SimSettings, noise: NoiseModel, steps=None) -> HamiltonianTrace:
    f = lower(s, settings.shape, noise.interference, settings.dt_ns, steps=steps)
    return inject_coherent_errors(f, noise.eps_err, noise.del_err)


def simulate_curve(
    cycle: GateSequence,
    counts: Sequence[int],
    initial: str,
    noise: NoiseModel,
    settings: SimSettings | None = None,
) -> list[tuple[float, float]]:
    """Exact fidelity after ``n`` cycles for every ``n`` in ``counts``.

    Every count is an independent experiment (no pulses beyond its own n
    cycles), but the shared prefix of all of them is integrated only once:
    the longest run is checkpointed just before the first step at which a
    later pulse could influence the field, and each count is finished from
    its checkpoint over its own short tail window.

    Returns:
        ``[(time_ns, fidelity_exact), ...]`` in ``counts`` order.
    """
    settings = settings or SimSettings()
    counts = [int(n) for n in counts]
    if not counts:
        return []
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("cycle counts must be strictly increasing")
    _check_initial(initial)
    plan = _plan(cycle, counts, initial, settings, noise)
    long_trace = _trace_for(plan.long_schedule, settings, noise)
    tails = [
        _trace_for(s, settings, noise, steps=(k, steps_for(s.total_duration, settings.dt_ns)))
        for s, k in zip(plan.schedules, plan.split_steps)
    ]
    del_nodes, weights = noise.detuning_nodes()
    record = sorted(set(plan.split_steps))
    rho0 = initial_density(initial, settings)
    unprep = prep_unitary(initial).conj().T
    fid = np.zeros(len(counts))
    for delta, w in zip(del_nodes, weights):
        _, snaps = evolve(rho0, long_trace, noise, detuning=float(delta), record=record)
        by_step = dict(zip(record, snaps))
        for i, (s, tail) in enumerate(zip(plan.schedules, tails)):
            rho = evolve(by_step[plan.split_steps[i]], tail, noise, detuning=float(delta))
            if not settings.physical_prep:
                wmat = unprep @ rz_unitary(s.residual_frame)
                rho = wmat @ rho @ wmat.conj().T
            fid[i] += w * _p0(rho)
    return [(t, float(min(max(f, 0.0), 1.0))) for t, f in zip(plan.body_times, fid)]


def run_protocol(
    initial: str,
    seq: GateSequence,
    cycles: int,
    noise: NoiseModel,
    shots: int = 0,
    seed: int = 0,
    settings: SimSettings | None = None,
) -> tuple[float, float]:
    """Prepare, run ``cycles`` repetitions of ``seq``, unprepare, measure.

    Preparation is ideal and instantaneous unless ``settings.physical_prep``;
    the ideal unpreparation is applied after undoing the residual virtual
    frame, which commutes with the σz measurement but not with the
    unpreparation. With a quasi-static ensemble the exact fidelity is the
    Gauss-Hermite average over detunings.

    Returns:
        ``(fidelity_exact, fidelity_sampled)``; the sampled value is NaN when
        ``shots == 0``.
    """
    if cycles < 0:
        raise ValueError("cycles must be >= 0")
    if shots < 0:
        raise ValueError("shots must be >= 0")
    settings = settings or SimSettings()
    _check_initial(initial)
    gates = prep_gates(initial) if settings.physical_prep else ()
    body = fold(gates + seq.repeat(cycles).gates, settings.timing)
    if settings.physical_prep:
        s = fold(gates + seq.repeat(cycles).gates + unprep_gates(initial), settings.timing)
    else:
        s = body
    trace = _trace_for(s, settings, noise)
    rho0 = initial_density(initial, settings)
    unprep = prep_unitary(initial).conj().T
    total = 0.0
    for delta, w in zip(*noise.detuning_nodes()):
        rho = evolve(rho0, trace, noise, detuning=float(delta))
        if not settings.physical_prep:
            wmat = unprep @ rz_unitary(s.residual_frame)
            rho = wmat @ rho @ wmat.conj().T
        total += w * _p0(rho)
    exact = float(min(max(total, 0.0), 1.0))
    return exact, sample_fidelity(exact, shots, seed)


# -- sweeps ------------------------------------------------------------------


def equal_time_factor(cycle: GateSequence) -> int:
    """Repetitions per four-pulse cycle: 2 for YY and XXbar, 4 for FREE."""
    p = cycle.pulse_count
    if p == 0:
        return 4
    if 4 % p:
        raise ValueError(f"cannot align a {p}-pulse cycle to a four-pulse time grid")
    return 4 // p


@dataclass(frozen=True)
class _CurveTask:
    name: str
    strategy: str | None
    multiplier: float
    initial: str


def sweep(config: "ExperimentConfig", workers: int = 1) -> list[FidelityCurve]:
    """All curves of a configuration, in config order.

    Curves are ordered sequence, spacing multiplier, initial state; rows within
    a curve follow the cycle grid. The sampling stream of row ``r`` (global
    output index) is seeded with ``seed ^ r``, so the result does not depend
    on ``workers``.
    """
    settings = config.sim_settings()
    tasks = [
        _CurveTask(name, strat, m, init)
        for name, strat in config.sequences
        for m in config.spacing_multipliers
        for init in config.initial_states
    ]

    def run(task: _CurveTask) -> FidelityCurve:
        tau = config.tau_ns * task.multiplier
        cycle = build_sequence(task.name, task.strategy, tau, config.xbar_variant)
        factor = equal_time_factor(cycle) if config.equal_time else 1
        counts = [factor * n for n in config.cycle_counts]
        vals = simulate_curve(cycle, counts, task.initial, config.noise, settings)
        curve = FidelityCurve(task.name, task.strategy or "-", task.multiplier, task.initial)
        for n, (t, f) in zip(counts, vals):
            curve.points.append(CurvePoint(n, t, f, math.nan, config.shots, 0))
        return curve

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            curves = list(pool.map(run, tasks))
    else:
        curves = [run(t) for t in tasks]

    row = 0
    for curve in curves:
        pts = []
        for p in curve.points:
            row_seed = config.seed ^ row
            pts.append(replace(p, fidelity_sampled=sample_fidelity(p.fidelity_exact, config.shots, row_seed), seed=row_seed))
            row += 1
        curve.points = pts
    return curves
