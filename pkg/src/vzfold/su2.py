"""Closed-form SU(2) algebra for single-qubit rotations.

Matrices are plain ``(2, 2)`` complex numpy arrays. Every constructor uses
half-angle formulas rather than a numerical matrix exponential, so algebraic
identities hold to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

DEFAULT_PHASE_TOL = 1e-10


def wrap_angle(a: float) -> float:
    """Reduce an angle to [0, 2π); values within 1e-12 of 2π snap to 0."""
    r = math.fmod(a, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    if TWO_PI - r < 1e-12 or r == 0.0:
        return 0.0
    return r


@dataclass(frozen=True)
class Rotation:
    """Rotation by ``theta`` about the in-plane axis at angle ``phi`` from x.

    ``phi`` is reduced mod 2π; ``theta`` keeps its sign because R_x(π) and
    R_x(-π) trace opposite Bloch trajectories.
    """

    phi: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))
        object.__setattr__(self, "theta", float(self.theta))


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


def rotation_unitary(r: Rotation) -> np.ndarray:
    """exp[-i θ/2 (cos φ σx + sin φ σy)] in closed form."""
    c = math.cos(r.theta / 2.0)
    s = math.sin(r.theta / 2.0)
    off_lo = -1j * s * complex(math.cos(r.phi), math.sin(r.phi))
    off_hi = -1j * s * complex(math.cos(r.phi), -math.sin(r.phi))
    return np.array([[c, off_hi], [off_lo, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    return rotation_unitary(Rotation(0.0, theta))


def ry(theta: float) -> np.ndarray:
    return rotation_unitary(Rotation(math.pi / 2.0, theta))


def rz_unitary(alpha: float) -> np.ndarray:
    """diag(e^{-iα/2}, e^{+iα/2})."""
    h = alpha / 2.0
    return np.array(
        [[complex(math.cos(h), -math.sin(h)), 0.0], [0.0, complex(math.cos(h), math.sin(h))]],
        dtype=complex,
    )


def is_unitary(u: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.max(np.abs(u.conj().T @ u - I2)) <= tol)


def global_phase(u: np.ndarray, v: np.ndarray) -> complex:
    """Unit scalar ``g`` minimizing ‖u - g v‖, i.e. Tr(v†u)/|Tr(v†u)|.

    Returns 0 when the overlap vanishes.
    """
    t = np.trace(v.conj().T @ u)
    a = abs(t)
    if a == 0.0:
        return 0j
    return complex(t / a)


def equal_up_to_global_phase(u: np.ndarray, v: np.ndarray, tol: float = DEFAULT_PHASE_TOL) -> bool:
    """True iff |Tr(u†v)| >= 2 - tol.

    Raises:
        ValueError: if either argument is not unitary within 1e-9.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != (2, 2) or v.shape != (2, 2):
        raise ValueError(f"expected 2x2 matrices, got {u.shape} and {v.shape}")
    if not (is_unitary(u) and is_unitary(v)):
        raise ValueError("equal_up_to_global_phase requires unitary arguments")
    return bool(abs(np.trace(u.conj().T @ v)) >= 2.0 - tol)


def bloch_of(rho: np.ndarray) -> BlochVector:
    """Pauli expectation values (Tr ρσx, Tr ρσy, Tr ρσz)."""
    rho = np.asarray(rho, dtype=complex)
    x = 2.0 * rho[0, 1].real
    y = -2.0 * rho[0, 1].imag
    z = (rho[0, 0] - rho[1, 1]).real
    return BlochVector(float(x), float(y), float(z))


def density_of(bloch: BlochVector | tuple[float, float, float]) -> np.ndarray:
    x, y, z = bloch
    return 0.5 * (I2 + x * SX + y * SY + z * SZ)


def ket_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(2)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())
