"""Virtual-Z frame folding.

Every ``VirtualZ(alpha)`` is commuted to the end of the sequence. Passing a
pulse R_phi(theta) moves the frame as

    R_phi(theta) R_z(c) = R_z(c) R_{phi - c}(theta),

so with the accumulator ``c`` holding the sum of all alphas seen so far,
each pulse is emitted at absolute drive phase ``phi - c`` and the sequence
ends with a trailing virtual ``R_z(c)``: the residual frame. This sign is
pinned by R_x(π) R_z(±π) = -R_z(∓π) R_x(-π), which turns the asymmetric XY4
expansion into the pulse phases [0, π, π, 0] of UR4.

Timing: a pulse occupies one slot whose length is the free time accumulated
since the previous pulse (the sequence's f_tau), or ``interval_ns`` when no
free evolution precedes it. The pulse peak sits at the slot centre, so a
uniform f_tau puts the peaks on a grid of pitch tau with the first peak at
tau/2. Free time after the last pulse extends the schedule without a pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from vzfold.gate_ir import FreeEvolution, Gate, GateSequence, PhysicalPulseGate, VirtualZ
from vzfold.su2 import I2, TWO_PI, Rotation, rotation_unitary, rz_unitary, wrap_angle

TIME_TOL = 1e-6  # ns


@dataclass(frozen=True)
class ScheduleConfig:
    gate_ns: float = 56.8
    interval_ns: float = 56.8

    def __post_init__(self) -> None:
        if not self.gate_ns > 0:
            raise ValueError(f"gate_ns must be > 0, got {self.gate_ns}")
        if not self.interval_ns >= self.gate_ns - TIME_TOL:
            raise ValueError(
                f"interval_ns ({self.interval_ns}) must be >= gate_ns ({self.gate_ns})"
            )


@dataclass(frozen=True)
class PhysicalPulse:
    phase: float  # rad, absolute drive phase in [0, 2π)
    angle: float  # rad, signed nominal rotation
    start: float  # ns
    duration: float  # ns

    def __post_init__(self) -> None:
        object.__setattr__(self, "phase", wrap_angle(float(self.phase)))
        if self.start < -TIME_TOL:
            raise ValueError(f"pulse start must be >= 0, got {self.start}")

    @property
    def peak(self) -> float:
        return self.start + 0.5 * self.duration

    @property
    def end(self) -> float:
        return self.start + self.duration

    def as_gate(self) -> PhysicalPulseGate:
        return PhysicalPulseGate(Rotation(self.phase, self.angle))


@dataclass(frozen=True)
class PulseSchedule:
    pulses: tuple[PhysicalPulse, ...] = ()
    residual_frame: float = 0.0
    total_duration: float = 0.0
    # sign of R_z(c) relative to R_z(c mod 2π); -1 when the frame wound an odd
    # number of full turns, which is exactly the dropped global phase
    frame_sign: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "residual_frame", wrap_angle(float(self.residual_frame)))
        starts = [p.start for p in self.pulses]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("pulse starts must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "pulses": [
                {"phase_rad": p.phase, "angle_rad": p.angle, "start_ns": p.start, "duration_ns": p.duration}
                for p in self.pulses
            ],
            "residual_frame_rad": self.residual_frame,
            "total_duration_ns": self.total_duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSchedule":
        pulses = tuple(
            PhysicalPulse(p["phase_rad"], p["angle_rad"], p["start_ns"], p["duration_ns"])
            for p in d["pulses"]
        )
        return cls(pulses, d["residual_frame_rad"], d["total_duration_ns"])

    def as_sequence(self, name: str = "") -> GateSequence:
        """The schedule re-expressed as pure-physical gates plus the residual frame."""
        gates: list[Gate] = []
        cursor = 0.0
        for p in self.pulses:
            slot = 2.0 * (p.peak - cursor)
            gates.append(FreeEvolution(max(slot, 0.0)))
            gates.append(p.as_gate())
            cursor += slot
        tail = self.total_duration - cursor
        if tail > TIME_TOL:
            gates.append(FreeEvolution(tail))
        if self.residual_frame != 0.0:
            gates.append(VirtualZ(self.residual_frame))
        return GateSequence(tuple(gates), name)


@dataclass
class _FoldState:
    cursor: float = 0.0
    pending: float = 0.0
    frame: float = 0.0
    pulses: list = field(default_factory=list)

    def step(self, g: Gate, timing: ScheduleConfig) -> None:
        if isinstance(g, VirtualZ):
            self.frame += g.alpha
        elif isinstance(g, FreeEvolution):
            self.pending += g.duration
        elif isinstance(g, PhysicalPulseGate):
            slot = self.pending if self.pending > 0.0 else timing.interval_ns
            if slot < timing.gate_ns - TIME_TOL:
                raise ValueError(
                    f"pulse slot of {slot:g} ns is shorter than the gate duration {timing.gate_ns:g} ns"
                )
            peak = self.cursor + 0.5 * slot
            self.pulses.append(
                PhysicalPulse(g.phi - self.frame, g.theta, peak - 0.5 * timing.gate_ns, timing.gate_ns)
            )
            self.cursor += slot
            self.pending = 0.0
        else:
            raise TypeError(f"not a gate: {g!r}")

    def snapshot(self) -> PulseSchedule:
        turns = math.floor(self.frame / TWO_PI + 1e-12)
        frac = self.frame - turns * TWO_PI
        if TWO_PI - frac < 1e-12:
            turns += 1
        return PulseSchedule(
            tuple(self.pulses),
            self.frame,
            self.cursor + self.pending,
            -1 if turns % 2 else 1,
        )


def fold(seq: GateSequence | Iterable[Gate], timing: ScheduleConfig | None = None) -> PulseSchedule:
    """Fold all virtual-Z gates into absolute pulse phases."""
    timing = timing or ScheduleConfig()
    st = _FoldState()
    for g in seq:
        st.step(g, timing)
    return st.snapshot()


def fold_cycles(
    cycle: GateSequence,
    counts: Sequence[int],
    timing: ScheduleConfig | None = None,
    prefix: Iterable[Gate] = (),
    suffix_factory=None,
) -> list[PulseSchedule]:
    """Schedules for ``prefix + cycle * n`` for every ``n`` in ``counts``.

    Folds the longest repetition once and snapshots at cycle boundaries, which
    gives the same result as folding each repetition separately. When
    ``suffix_factory`` is given it is called with the fold state's frame and
    must return gates appended after the n-th cycle (used for physical
    unpreparation pulses).
    """
    timing = timing or ScheduleConfig()
    counts = list(counts)
    if any(n < 0 for n in counts):
        raise ValueError("cycle counts must be >= 0")
    wanted = set(counts)
    st = _FoldState()
    for g in prefix:
        st.step(g, timing)
    out: dict[int, PulseSchedule] = {}

    def capture(n: int) -> None:
        if suffix_factory is None:
            out[n] = st.snapshot()
            return
        branch = _FoldState(st.cursor, st.pending, st.frame, list(st.pulses))
        for g in suffix_factory(branch.frame):
            branch.step(g, timing)
        out[n] = branch.snapshot()

    if 0 in wanted:
        capture(0)
    top = max(counts, default=0)
    for n in range(1, top + 1):
        for g in cycle.gates:
            st.step(g, timing)
        if n in wanted:
            capture(n)
    return [out[n] for n in counts]


def schedule_unitary(s: PulseSchedule) -> np.ndarray:
    """Product of the pulse rotations followed by R_z(residual)."""
    u = I2.copy()
    for p in s.pulses:
        u = rotation_unitary(Rotation(p.phase, p.angle)) @ u
    return rz_unitary(s.residual_frame) @ u


def _angle_dist(a: float, b: float) -> float:
    d = math.fmod(abs(a - b), TWO_PI)
    return min(d, TWO_PI - d)


def _normalize(phase: float, angle: float) -> tuple[float, float]:
    if angle < 0:
        return wrap_angle(phase + math.pi), -angle
    return phase, angle


def physically_equivalent(
    a: PulseSchedule,
    b: PulseSchedule,
    tol: float = 1e-9,
    time_tol: float = TIME_TOL,
    allow_angle_flip: bool = False,
) -> bool:
    """Same executed pulses (phase, signed angle, timing) and same residual mod 2π.

    With ``allow_angle_flip`` a pulse (phase, -θ) matches (phase + π, θ).
    """
    if len(a.pulses) != len(b.pulses):
        return False
    for p, q in zip(a.pulses, b.pulses):
        pp, pa = (p.phase, p.angle)
        qp, qa = (q.phase, q.angle)
        if allow_angle_flip:
            pp, pa = _normalize(pp, pa)
            qp, qa = _normalize(qp, qa)
        if _angle_dist(pp, qp) > tol or abs(pa - qa) > tol:
            return False
        if abs(p.start - q.start) > time_tol or abs(p.duration - q.duration) > time_tol:
            return False
    if abs(a.total_duration - b.total_duration) > time_tol:
        return False
    return _angle_dist(a.residual_frame, b.residual_frame) <= tol


def format_schedule(s: PulseSchedule) -> str:
    from vzfold.gate_ir import _fmt_angle

    lines = [f"{'#':>3}  {'phase':>8}  {'angle':>8}  {'start_ns':>10}  {'duration_ns':>11}"]
    for i, p in enumerate(s.pulses):
        lines.append(
            f"{i:>3}  {_fmt_angle(p.phase):>8}  {_fmt_angle(p.angle):>8}  {p.start:>10.3f}  {p.duration:>11.3f}"
        )
    lines.append(f"residual frame: {_fmt_angle(s.residual_frame)}   total duration: {s.total_duration:.3f} ns")
    return "\n".join(lines)
