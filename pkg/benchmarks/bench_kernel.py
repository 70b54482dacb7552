"""Compare the compiled RK4 Lindblad kernel with the pure-Python fallback.

    python3 benchmarks/bench_kernel.py [--steps N] [--repeat R]

Both kernels integrate the same lowered XY4 drive; the script reports time
per step and the maximum elementwise difference of the final states.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vzfold import _rk4_py
from vzfold.frame import ScheduleConfig, fold
from vzfold.gate_ir import build_sequence
from vzfold.lindblad import NoiseModel, SimSettings, _trace_for, initial_density


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=20000, help="RK4 steps per run")
    ap.add_argument("--repeat", type=int, default=3, help="runs per kernel; best time is reported")
    args = ap.parse_args(argv)

    noise = NoiseModel()
    cycles = max(1, args.steps // 2272 + 1)
    s = fold(build_sequence("XY4", "sym", 56.8).repeat(cycles), ScheduleConfig())
    tr = _trace_for(s, SimSettings(), noise)
    hx, hy = tr.hx[: args.steps], tr.hy[: args.steps]
    rho0 = initial_density("plus")
    call = (rho0, hx, hy, tr.hz, tr.dt, noise.gamma1, noise.gamma_phi)

    py = _time(lambda: _rk4_py.rk4_lindblad(*call), args.repeat)
    ref, _ = _rk4_py.rk4_lindblad(*call)
    print(f"steps: {hx.shape[0]}")
    print(f"python  {py / hx.shape[0] * 1e9:10.1f} ns/step")
    try:
        from vzfold import _rk4
    except ImportError:
        print("cython  not built (pip install -e . compiles it)")
        return
    cy = _time(lambda: _rk4.rk4_lindblad(*call), args.repeat)
    out, _ = _rk4.rk4_lindblad(*call)
    print(f"cython  {cy / hx.shape[0] * 1e9:10.1f} ns/step")
    print(f"speedup {py / cy:10.1f}x")
    print(f"max |difference| {np.max(np.abs(out - ref)):.3e}")


if __name__ == "__main__":
    main()
