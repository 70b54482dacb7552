"""Gate-level IR, Y / X-bar compilation strategies and the DD sequence library.

Sequences are stored in TIME ORDER: ``gates[0]`` is applied first. This is
the reverse of operator-product notation, where ``Y f X f`` means "f, then X,
then f, then Y". Every builder in this module emits time order; nothing in
the package ever stores the product order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from vzfold.su2 import I2, Rotation, rotation_unitary, rz_unitary

PI = math.pi


@dataclass(frozen=True)
class PhysicalPulseGate:
    rotation: Rotation

    @property
    def phi(self) -> float:
        return self.rotation.phi

    @property
    def theta(self) -> float:
        return self.rotation.theta


@dataclass(frozen=True)
class VirtualZ:
    """Frame update R_z(alpha); instantaneous, carries no duration."""

    alpha: float


@dataclass(frozen=True)
class FreeEvolution:
    duration: float  # ns

    def __post_init__(self) -> None:
        if not self.duration >= 0.0:
            raise ValueError(f"FreeEvolution duration must be >= 0, got {self.duration}")


Gate = Union[PhysicalPulseGate, VirtualZ, FreeEvolution]


def pulse(phi: float, theta: float) -> PhysicalPulseGate:
    return PhysicalPulseGate(Rotation(phi, theta))


X = pulse(0.0, PI)
SQRT_X = pulse(0.0, PI / 2.0)


class CompilationStrategy(enum.Enum):
    SYMMETRIC = "sym"
    ASYMMETRIC = "asym"

    @classmethod
    def parse(cls, text: str | "CompilationStrategy") -> "CompilationStrategy":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        aliases = {"sym": cls.SYMMETRIC, "symmetric": cls.SYMMETRIC,
                   "asym": cls.ASYMMETRIC, "asymmetric": cls.ASYMMETRIC}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown compilation strategy {text!r} (expected 'sym' or 'asym')") from None


class XbarVariant(enum.Enum):
    """The two orderings of the symmetric X-bar construction.

    ``PLUS_FIRST`` is R_z(-π) X R_z(π) in operator order, i.e. time order
    [Rz(π), X, Rz(-π)]; ``MINUS_FIRST`` is the mirror ordering.
    """

    PLUS_FIRST = "plus_first"
    MINUS_FIRST = "minus_first"


SEQUENCE_NAMES = ("XY4", "UR4", "YY", "XXbar", "FREE")


@dataclass(frozen=True)
class GateSequence:
    gates: tuple[Gate, ...]
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other: "GateSequence") -> "GateSequence":
        return GateSequence(self.gates + other.gates, self.name or other.name)

    def repeat(self, n: int) -> "GateSequence":
        if n < 0:
            raise ValueError("repeat count must be >= 0")
        return GateSequence(self.gates * n, self.name)

    @property
    def pulse_count(self) -> int:
        return sum(isinstance(g, PhysicalPulseGate) for g in self.gates)


def compile_y(strategy: CompilationStrategy | str) -> GateSequence:
    """Y from the native set: asym = [Rz(-π), X], sym = [Rz(-π/2), X, Rz(π/2)]."""
    strategy = CompilationStrategy.parse(strategy)
    if strategy is CompilationStrategy.ASYMMETRIC:
        return GateSequence((VirtualZ(-PI), X), "Y:asym")
    return GateSequence((VirtualZ(-PI / 2.0), X, VirtualZ(PI / 2.0)), "Y:sym")


def compile_xbar(variant: XbarVariant | str = XbarVariant.PLUS_FIRST) -> GateSequence:
    """X-bar = R_x(-π) as a frame-conjugated X pulse."""
    variant = XbarVariant(variant)
    if variant is XbarVariant.PLUS_FIRST:
        return GateSequence((VirtualZ(PI), X, VirtualZ(-PI)), "Xbar")
    return GateSequence((VirtualZ(-PI), X, VirtualZ(PI)), "Xbar")


def compile_sqrt_x() -> GateSequence:
    return GateSequence((SQRT_X,), "SX")


def _interleave(tau: float, blocks: Iterable[Iterable[Gate]]) -> list[Gate]:
    out: list[Gate] = []
    for block in blocks:
        out.append(FreeEvolution(tau))
        out.extend(block)
    return out


def build_sequence(
    name: str,
    strategy: CompilationStrategy | str | None = None,
    tau: float = 0.0,
    xbar_variant: XbarVariant | str = XbarVariant.PLUS_FIRST,
) -> GateSequence:
    """One cycle of a named DD sequence, each pulse preceded by f_tau.

    XY4 is ``Y f X f Y f X f`` and UR4 is ``X f Xbar f Xbar f X f`` in
    operator order. YY takes the Y strategy; UR4 and XXbar only have the
    symmetric X-bar construction, so an explicit ``asym`` is rejected. FREE
    is a single pulse-free interval, used as a free-decay baseline.

    Raises:
        ValueError: unknown name, negative tau, or asym requested for a
            sequence that has no asymmetric form.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    strat = None if strategy is None else CompilationStrategy.parse(strategy)
    if name in ("UR4", "XXbar") and strat is CompilationStrategy.ASYMMETRIC:
        raise ValueError(f"{name} has no asymmetric compilation; X-bar is always built symmetrically")
    if strat is None:
        strat = CompilationStrategy.SYMMETRIC

    x = (X,)
    xbar = compile_xbar(xbar_variant).gates
    y = compile_y(strat).gates
    if name == "XY4":
        gates = _interleave(tau, [x, y, x, y])
        label = f"XY4:{strat.value}"
    elif name == "UR4":
        gates = _interleave(tau, [x, xbar, xbar, x])
        label = "UR4"
    elif name == "YY":
        gates = _interleave(tau, [y, y])
        label = f"YY:{strat.value}"
    elif name == "XXbar":
        gates = _interleave(tau, [x, xbar])
        label = "XXbar"
    elif name == "FREE":
        gates = [FreeEvolution(tau)]
        label = "FREE"
    else:
        raise ValueError(f"unknown sequence {name!r}; expected one of {', '.join(SEQUENCE_NAMES)}")
    return GateSequence(tuple(gates), label)


def gate_unitary(g: Gate) -> np.ndarray:
    if isinstance(g, PhysicalPulseGate):
        return rotation_unitary(g.rotation)
    if isinstance(g, VirtualZ):
        return rz_unitary(g.alpha)
    if isinstance(g, FreeEvolution):
        return I2.copy()
    raise TypeError(f"not a gate: {g!r}")


def ideal_unitary(seq: GateSequence | Iterable[Gate]) -> np.ndarray:
    """Noiseless product of the sequence; later gates multiply from the left."""
    u = I2.copy()
    for g in seq:
        if isinstance(g, FreeEvolution):
            continue
        u = gate_unitary(g) @ u
    return u


def _fmt_angle(a: float) -> str:
    for num, den in ((1, 1), (1, 2), (1, 4), (3, 2), (3, 4), (2, 1)):
        for sign in (1, -1):
            if abs(a - sign * num * PI / den) < 1e-12:
                s = "-" if sign < 0 else ""
                n = "" if num == 1 else str(num)
                d = "" if den == 1 else f"/{den}"
                return f"{s}{n}pi{d}"
    return f"{a:.6g}"


def format_gate(g: Gate) -> str:
    if isinstance(g, VirtualZ):
        return f"Rz({_fmt_angle(g.alpha)})"
    if isinstance(g, FreeEvolution):
        return f"f({g.duration:g}ns)"
    phi, theta = g.phi, g.theta
    if phi == 0.0 and abs(theta - PI) < 1e-12:
        return "X"
    if phi == 0.0 and abs(theta - PI / 2) < 1e-12:
        return "SX"
    return f"R[{_fmt_angle(phi)}]({_fmt_angle(theta)})"


def format_sequence(seq: GateSequence, show_free: bool = True) -> str:
    return ", ".join(format_gate(g) for g in seq if show_free or not isinstance(g, FreeEvolution))
