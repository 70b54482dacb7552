"""Pure-Python fixed-step RK4 for the single-qubit Lindblad equation.

Reference implementation of the compiled kernel in ``_rk4.pyx``; both must
produce the same numbers to rounding. Scalar complex arithmetic only, no
per-step numpy calls.

    dρ/dt = -i[H, ρ] + g1 D[σ-]ρ + gphi D[σz]ρ,   D[L]ρ = LρL† - {L†L, ρ}/2

with ρ = [[a, b], [c, d]] and H = (hx σx + hy σy + hz σz)/2.
"""

from __future__ import annotations

import numpy as np


def _rhs(a, b, c, d, x, y, z, g1, gphi):
    h01 = 0.5 * complex(x, -y)
    h10 = 0.5 * complex(x, y)
    hz = 0.5 * z
    # [H, ρ] with H = [[hz, h01], [h10, -hz]]
    k00 = h01 * c - b * h10
    k01 = 2.0 * hz * b + h01 * (d - a)
    k10 = h10 * (a - d) - 2.0 * hz * c
    k11 = h10 * b - c * h01
    damp = g1 * d
    coh = 0.5 * g1 + 2.0 * gphi
    return (
        -1j * k00 + damp,
        -1j * k01 - coh * b,
        -1j * k10 - coh * c,
        -1j * k11 - damp,
    )


def rk4_lindblad(rho0, hx, hy, hz, dt, g1, gphi, record=None):
    """Integrate over every step of the trace.

    Args:
        rho0: initial 2x2 density matrix.
        hx, hy: ``(n, 3)`` arrays of (left, mid, right) samples per step.
        hz: constant σz coefficient.
        dt: step in ns.
        g1, gphi: rates 1/T1 and 1/(2 Tphi) in 1/ns.
        record: sorted step indices in ``[0, n]``; the state at the start of
            each listed step (``n`` means the final state) is returned.

    Returns:
        ``(rho, snapshots)`` with ``snapshots`` of shape ``(len(record), 2, 2)``.
    """
    hx = np.ascontiguousarray(hx, dtype=float)
    hy = np.ascontiguousarray(hy, dtype=float)
    n = hx.shape[0]
    rec = [] if record is None else [int(r) for r in record]
    snaps = np.zeros((len(rec), 2, 2), dtype=complex)
    a, b, c, d = (complex(v) for v in np.asarray(rho0, dtype=complex).ravel())
    hx_l = hx.tolist()
    hy_l = hy.tolist()
    half = 0.5 * dt
    sixth = dt / 6.0
    ri = 0
    for i in range(n):
        while ri < len(rec) and rec[ri] == i:
            snaps[ri] = ((a, b), (c, d))
            ri += 1
        xl, xm, xr = hx_l[i]
        yl, ym, yr = hy_l[i]
        k1 = _rhs(a, b, c, d, xl, yl, hz, g1, gphi)
        k2 = _rhs(a + half * k1[0], b + half * k1[1], c + half * k1[2], d + half * k1[3], xm, ym, hz, g1, gphi)
        k3 = _rhs(a + half * k2[0], b + half * k2[1], c + half * k2[2], d + half * k2[3], xm, ym, hz, g1, gphi)
        k4 = _rhs(a + dt * k3[0], b + dt * k3[1], c + dt * k3[2], d + dt * k3[3], xr, yr, hz, g1, gphi)
        a += sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        b += sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        c += sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        d += sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    while ri < len(rec) and rec[ri] == n:
        snaps[ri] = ((a, b), (c, d))
        ri += 1
    if ri != len(rec):
        raise ValueError("record indices must be sorted and lie in [0, n]")
    return np.array([[a, b], [c, d]], dtype=complex), snaps
