from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from vzfold.frame import PhysicalPulse, PulseSchedule, ScheduleConfig, fold
from vzfold.gate_ir import X, FreeEvolution, GateSequence, build_sequence
from vzfold.lindblad import NoiseModel, evolve
from vzfold.lowering import (
    CosineRamp,
    DriveField,
    Echo,
    Gaussian,
    NoInterference,
    PulseShape,
    TailOverlap,
    inject_coherent_errors,
    lower,
)
from vzfold.su2 import Rotation, ket_density, rotation_unitary

PI = math.pi
TG = 56.8
SHAPES = [PulseShape(TG), PulseShape(TG, CosineRamp())]
NOISELESS = NoiseModel.noiseless()


def lone_x(shape=SHAPES[0]):
    return fold(GateSequence((X,)), ScheduleConfig(shape.gate_ns, shape.gate_ns))


def two_pulses(sep, phase2=0.0):
    a = PhysicalPulse(0.0, PI, 0.0, TG)
    b = PhysicalPulse(phase2, PI, sep, TG)
    return PulseSchedule((a, b), 0.0, sep + TG)


@pytest.mark.parametrize("shape", SHAPES, ids=["gaussian", "cosine"])
def test_calibration_by_quadrature(shape):
    h = shape.half_window if isinstance(shape.envelope, Gaussian) else 0.5 * shape.gate_ns
    for theta in (PI, PI / 2, -0.3):
        area, _ = quad(lambda u: float(shape.envelope_values(np.array([u]), theta)[0]), -h, h, epsabs=1e-13)
        assert area == pytest.approx(theta, abs=1e-9)


def test_gaussian_defaults_and_continuity():
    s = PulseShape(TG)
    assert s.sigma == TG / 4 and s.half_window == TG / 2
    assert s.shape(np.array([TG / 2]))[0] == pytest.approx(0.0, abs=1e-15)
    # dt default resolves sigma with at least 10 samples
    assert s.sigma / 0.1 >= 10


@pytest.mark.parametrize("shape", SHAPES, ids=["gaussian", "cosine"])
def test_lone_pulse_area(shape):
    f = lower(lone_x(shape), shape, NoInterference(), 0.1)
    assert abs(f.area() - PI) < 1e-6


@pytest.mark.parametrize("shape", SHAPES, ids=["gaussian", "cosine"])
def test_pi_pulse_through_integrator(shape):
    tr = inject_coherent_errors(lower(lone_x(shape), shape, NoInterference(), 0.1))
    rho = evolve(ket_density([1, 0]), tr, NOISELESS)
    assert rho[1, 1].real >= 1 - 1e-8


def test_far_pulses_unaffected_by_tail_overlap():
    s = two_pulses(3 * TG)
    a = lower(s, SHAPES[0], TailOverlap(), 0.1).samples
    b = lower(s, SHAPES[0], NoInterference(), 0.1).samples
    assert np.max(np.abs(a - b)) <= 1e-6


def test_lone_pulse_unaffected_by_tail_overlap():
    a = lower(lone_x(), SHAPES[0], TailOverlap(), 0.1).samples
    b = lower(lone_x(), SHAPES[0], NoInterference(), 0.1).samples
    np.testing.assert_array_equal(a, b)


def _overlap_area_oracle(sep, ext):
    # independent quadrature of strength * sum_k x_k p_j for two in-phase π pulses
    shape = PulseShape(TG)
    sig, half = TG / 4, TG / 2 + ext
    edge = math.exp(-0.5 * (half / sig) ** 2)

    def prof(u):
        return (math.exp(-0.5 * (u / sig) ** 2) - edge) / (1 - edge) if abs(u) <= half else 0.0

    amp = PI * shape.amplitude_scale * float(shape.shape(np.array([0.0]))[0])
    lo, hi = sep - half, half
    val, _ = quad(lambda t: prof(t) * prof(t - sep), lo, hi, epsabs=1e-13, limit=200)
    return 2 * amp * val


def test_back_to_back_overlap_area_golden():
    # peaks at TG/2 and 3TG/2: separation t_g, extension t_g/2
    s = fold(GateSequence((X, X)), ScheduleConfig(TG, TG))
    f = lower(s, SHAPES[0], TailOverlap(), 0.1)
    dev = f.area().real - 2 * PI
    oracle = _overlap_area_oracle(TG, TG / 2)
    assert dev == pytest.approx(oracle, rel=1e-6)
    assert dev == pytest.approx(0.0924216, abs=1e-6)  # golden value for the default model


def test_opposite_phase_neighbours_cancel_area():
    f = lower(two_pulses(TG, PI), SHAPES[0], TailOverlap(), 0.1)
    assert abs(f.area()) < 1e-9


def test_tail_overlap_monotone_in_separation():
    devs = []
    for m in (1, 2, 3):
        s = two_pulses(m * TG)
        a = lower(s, SHAPES[0], TailOverlap(), 0.1).samples
        b = lower(s, SHAPES[0], NoInterference(), 0.1).samples
        devs.append(float(np.max(np.abs(a - b))))
    assert devs[0] > 0 and devs[0] >= devs[1] >= devs[2]
    assert devs[1] == 0.0  # separation t_g + 2·ext


@pytest.mark.parametrize("model", [NoInterference(), TailOverlap(), Echo(0.1, 20.0, 0.3)])
def test_phase_linearity(model):
    s = fold(build_sequence("XY4", "sym", TG).repeat(2), ScheduleConfig(TG, TG))
    beta = 0.77
    shifted = PulseSchedule(
        tuple(PhysicalPulse(p.phase + beta, p.angle, p.start, p.duration) for p in s.pulses),
        s.residual_frame,
        s.total_duration,
    )
    a = lower(s, SHAPES[0], model, 0.1).samples
    b = lower(shifted, SHAPES[0], model, 0.1).samples
    np.testing.assert_allclose(b, a * np.exp(1j * beta), atol=1e-12)


def test_windowed_lowering_matches_full():
    s = fold(build_sequence("XY4", "sym", TG).repeat(3), ScheduleConfig(TG, TG))
    full = lower(s, SHAPES[0], TailOverlap(), 0.1)
    part = lower(s, SHAPES[0], TailOverlap(), 0.1, steps=(1000, 1700))
    np.testing.assert_array_equal(part.samples, full.samples[1000:1700])
    np.testing.assert_array_equal(part.error_axis, full.error_axis[1000:1700])


def test_grid_and_overlap_errors():
    with pytest.raises(ValueError):
        lower(two_pulses(TG), SHAPES[0], dt=0.3)
    with pytest.raises(ValueError):
        lower(two_pulses(TG / 2), SHAPES[0])
    with pytest.raises(ValueError):
        Echo(reflection_amplitude=1.0)
    with pytest.raises(ValueError):
        TailOverlap(extension=-1.0)


def test_zero_errors_give_pure_drive():
    f = lower(lone_x(), SHAPES[0])
    tr = inject_coherent_errors(f, 0.0, 0.0)
    np.testing.assert_array_equal(tr.hx + 1j * tr.hy, f.samples)
    assert tr.hz == 0.0


def test_zero_field_detuning_only():
    s = fold(GateSequence((FreeEvolution(10.0),)), ScheduleConfig(TG, TG))
    f = lower(s, SHAPES[0])
    tr = inject_coherent_errors(f, 0.05, 0.3)
    for i in (0, 50, 99):
        np.testing.assert_allclose(tr.matrix(i, 1), 0.3 * np.diag([1, -1]) / 2, atol=0)


def test_rotation_error_over_rotates():
    eps = 0.02 / TG
    tr = inject_coherent_errors(lower(lone_x(), SHAPES[0], NoInterference(), 0.1), eps, 0.0)
    rho = evolve(ket_density([1, 0]), tr, NOISELESS)
    u = rotation_unitary(Rotation(0.0, PI + 0.02))
    ref = ket_density(u[:, 0])
    assert np.max(np.abs(rho - ref)) < 1e-4


def test_field_csv(tmp_path):
    f = lower(lone_x(), SHAPES[0])
    p = tmp_path / "field.csv"
    f.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t_ns,re,im"
    assert len(lines) == f.n_steps + 2
    assert isinstance(f, DriveField)
