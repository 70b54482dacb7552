from __future__ import annotations

import math

import numpy as np
import pytest

from vzfold import _backend, _rk4_py
from vzfold.frame import ScheduleConfig, fold
from vzfold.gate_ir import X, GateSequence, build_sequence
from vzfold.lindblad import (
    INITIAL_STATES,
    IntegrationError,
    NoiseModel,
    SimSettings,
    _trace_for,
    evolve,
    initial_density,
    run_protocol,
    sample_fidelity,
    simulate_curve,
    validate_density,
)
from vzfold.lowering import HamiltonianTrace, NoInterference, PulseShape, TailOverlap
from vzfold.su2 import bloch_of, ket_density

PI = math.pi
NOISELESS = NoiseModel.noiseless()
PURE_T1 = NoiseModel(100.0, math.inf, 0.0, 0.0, 0.0, NoInterference())


def free_trace(t_ns, dt=0.1, hz=0.0):
    n = int(round(t_ns / dt))
    return HamiltonianTrace(dt, np.zeros((n, 3)), np.zeros((n, 3)), hz)


def test_amplitude_damping_closed_form():
    t1 = 10.0
    noise = NoiseModel(t1, math.inf, 0.0, 0.0, 0.0, NoInterference())
    rho = evolve(ket_density([0, 1]), free_trace(t1 * 1e3), noise)
    assert rho[1, 1].real == pytest.approx(math.exp(-1.0), rel=1e-6)


def test_pure_dephasing_closed_form():
    tphi = 10.0
    noise = NoiseModel(math.inf, tphi, 0.0, 0.0, 0.0, NoInterference())
    for frac in (0.5, 1.0):
        rho = evolve(ket_density(np.array([1, 1]) / math.sqrt(2)), free_trace(frac * tphi * 1e3), noise)
        assert bloch_of(rho).x == pytest.approx(math.exp(-frac), rel=1e-6)
        assert rho[0, 0].real == pytest.approx(0.5, abs=1e-12)


def test_detuning_precession():
    d = 0.01
    rho = evolve(ket_density(np.array([1, 1]) / math.sqrt(2)), free_trace(100.0, hz=d), NOISELESS)
    b = bloch_of(rho)
    assert math.atan2(b.y, b.x) == pytest.approx(d * 100.0, abs=1e-9)


def test_pi_pulse_reaches_excited_state():
    s = fold(GateSequence((X,)), ScheduleConfig())
    rho = evolve(ket_density([1, 0]), _trace_for(s, SimSettings(), NOISELESS), NOISELESS)
    assert bloch_of(rho).z == pytest.approx(-1.0, abs=1e-8)


@pytest.mark.parametrize("initial", INITIAL_STATES)
@pytest.mark.parametrize("name,strategy", [("XY4", "sym"), ("XY4", "asym"), ("UR4", None), ("YY", "asym"), ("XXbar", None)])
def test_noiseless_fidelity_is_one(initial, name, strategy):
    seq = build_sequence(name, strategy, 56.8)
    for n in (0, 1, 3):
        exact, sampled = run_protocol(initial, seq, n, NOISELESS)
        assert exact == pytest.approx(1.0, abs=1e-7)
        assert math.isnan(sampled)


@pytest.mark.parametrize("initial", INITIAL_STATES)
def test_noiseless_physical_prep(initial):
    settings = SimSettings(physical_prep=True)
    assert np.array_equal(initial_density(initial, settings), ket_density([1, 0]))
    exact, _ = run_protocol(initial, build_sequence("XY4", "asym", 56.8), 2, NOISELESS, settings=settings)
    assert exact == pytest.approx(1.0, abs=1e-7)


def test_yy_asym_ordering_and_sym_symmetry():
    counts = list(range(1, 21))
    asym = build_sequence("YY", "asym", 56.8)
    sym = build_sequence("YY", "sym", 56.8)
    fa = [f for _, f in simulate_curve(asym, counts, "minus_i", PURE_T1)]
    fb = [f for _, f in simulate_curve(asym, counts, "plus_i", PURE_T1)]
    assert all(a > b for a, b in zip(fa, fb))
    sa = [f for _, f in simulate_curve(sym, counts, "minus_i", PURE_T1)]
    sb = [f for _, f in simulate_curve(sym, counts, "plus_i", PURE_T1)]
    assert max(abs(a - b) for a, b in zip(sa, sb)) < 1e-6


def _mean_excited(initial):
    s = fold(build_sequence("YY", "asym", 56.8), ScheduleConfig())
    tr = _trace_for(s, SimSettings(), NOISELESS)
    rec = list(range(tr.n_steps + 1))
    _, snaps = evolve(initial_density(initial), tr, NOISELESS, record=rec)
    return float(np.mean(snaps[:, 1, 1].real))


def test_ground_passage_ordering():
    # under YY^asym the |−i> trajectory passes nearer the ground state
    assert _mean_excited("minus_i") < _mean_excited("plus_i")


def test_cptp_at_every_output(rng):
    seq = build_sequence("XY4", "sym", 56.8)
    s = fold(seq.repeat(2), ScheduleConfig())
    for _ in range(5):
        noise = NoiseModel(
            float(rng.uniform(1, 200)), float(rng.uniform(1, 200)), float(rng.uniform(0, 1e-3)),
            float(rng.uniform(0, 1e-3)), 0.0, TailOverlap(),
        )
        tr = _trace_for(s, SimSettings(), noise)
        rec = list(range(0, tr.n_steps + 1, 97))
        rho, snaps = evolve(initial_density("plus_i"), tr, noise, record=rec)
        validate_density(rho)
        for r in snaps:
            validate_density(r, trace_tol=1e-9)


def test_dt_halving_converges():
    noise = NoiseModel(quasistatic_sigma=0.0)
    seq = build_sequence("XY4", "sym", 56.8)
    coarse = simulate_curve(seq, [1, 4, 10], "plus", noise, SimSettings(dt_ns=0.1))
    fine = simulate_curve(seq, [1, 4, 10], "plus", noise, SimSettings(dt_ns=0.05))
    for (_, a), (_, b) in zip(coarse, fine):
        assert abs(a - b) < 1e-6


@pytest.mark.parametrize("physical", [False, True])
def test_curve_matches_independent_runs(physical):
    settings = SimSettings(physical_prep=physical)
    noise = NoiseModel(quasistatic_sigma=0.0)
    seq = build_sequence("UR4", None, 56.8)
    counts = [1, 2, 5]
    curve = simulate_curve(seq, counts, "plus_i", noise, settings)
    for n, (_, f) in zip(counts, curve):
        exact, _ = run_protocol("plus_i", seq, n, noise, settings=settings)
        assert f == exact


def test_curve_times_and_validation():
    seq = build_sequence("XY4", "sym", 56.8)
    curve = simulate_curve(seq, [1, 2], "zero", NOISELESS)
    assert [t for t, _ in curve] == pytest.approx([4 * 56.8, 8 * 56.8])
    with pytest.raises(ValueError):
        simulate_curve(seq, [2, 1], "zero", NOISELESS)
    with pytest.raises(ValueError):
        run_protocol("minus", seq, 1, NOISELESS)


def test_quasistatic_nodes():
    n = NoiseModel()
    x, w = n.detuning_nodes()
    assert len(x) == 32
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert w @ x**2 == pytest.approx(n.quasistatic_sigma**2, rel=1e-12)
    assert NoiseModel(quasistatic_sigma=0.0).detuning_nodes()[0].tolist() == [0.0]


def test_quasistatic_dephasing_is_gaussian():
    # ensemble-averaged Ramsey coherence: exp(-(σ t)^2 / 2)
    sigma = 2 * PI * 1e-4
    noise = NoiseModel(math.inf, math.inf, 0.0, 0.0, sigma, NoInterference())
    seq = build_sequence("FREE", None, 5000.0)
    (_, f), = simulate_curve(seq, [1], "plus", noise)
    t = 5000.0
    assert f == pytest.approx(0.5 * (1 + math.exp(-0.5 * (sigma * t) ** 2)), abs=1e-10)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(T1_us=0.0)
    with pytest.raises(ValueError):
        NoiseModel(quasistatic_sigma=-1.0)
    n = NoiseModel.from_errors(0.01, 0.01, 56.8)
    assert n.eps_err == pytest.approx(0.01 / 56.8)
    assert n.del_err == pytest.approx(0.01 * PI / 56.8)
    assert NoiseModel(Tphi_us=100.0).gamma_phi == pytest.approx(1 / (2 * 100e3))


def test_sampling():
    assert math.isnan(sample_fidelity(0.9, 0, 1))
    a = sample_fidelity(0.9, 800, 7)
    assert a == sample_fidelity(0.9, 800, 7)
    assert (a * 800).is_integer() and 0 <= a <= 1
    draws = [sample_fidelity(0.8, 800, s) for s in range(200)]
    assert np.mean(draws) == pytest.approx(0.8, abs=0.005)


def test_integration_error_on_unresolved_field():
    n = 50
    tr = HamiltonianTrace(1.0, np.full((n, 3), 40.0), np.zeros((n, 3)), 0.0)
    noise = NoiseModel(1.0, 1.0, 0.0, 0.0, 0.0, NoInterference())
    with pytest.raises(IntegrationError):
        evolve(ket_density([1, 0]), tr, noise)


def test_compiled_and_python_kernels_agree(rng):
    if _backend.BACKEND != "cython":
        pytest.skip("compiled kernel not built")
    from vzfold import _rk4

    n = 3000
    hx = rng.normal(size=(n, 3)) * 0.05
    hy = rng.normal(size=(n, 3)) * 0.05
    rho0 = initial_density("plus_i")
    rec = [0, 17, 1500, n]
    a, sa = _rk4.rk4_lindblad(rho0, hx, hy, 0.003, 0.1, 1e-4, 3e-5, rec)
    b, sb = _rk4_py.rk4_lindblad(rho0, hx, hy, 0.003, 0.1, 1e-4, 3e-5, rec)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
    np.testing.assert_allclose(sa, sb, rtol=0, atol=1e-15)


def test_pure_python_fallback_selectable():
    import os
    import subprocess
    import sys

    env = dict(os.environ, VZFOLD_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from vzfold import _backend; print(_backend.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
