import math

import numpy as np
import pytest

from homsim.calibration import (
    FiberChannel,
    PaddleSettings,
    calibrate,
    golden_section,
    leakage,
    line_minimize,
    measure_probe,
    paddle_stack,
    path_matrix,
    phase_error,
    random_fiber,
    with_fiber,
)
from homsim.engine import coincidence_probability, lab_geometry
from homsim.optics import H, V, half_waveplate, linear_state, waveplate

THETA_STAR_DEG = 70.52877936550931


def test_identity_channel_needs_nothing():
    res = calibrate(FiberChannel.identity(), 1e-3)
    assert res.converged
    assert res.evaluations == 0
    assert res.residual_hv_leakage == pytest.approx(0, abs=1e-30)
    assert res.residual_phase_error == pytest.approx(0, abs=1e-12)


def test_random_fiber_deterministic_and_unitary():
    a, b = random_fiber(3), random_fiber(3)
    assert a == b
    assert a != random_fiber(4)
    assert a.u_in_a.is_unitary()


def test_channel_rejects_lossy_lead():
    with pytest.raises(ValueError):
        FiberChannel(np.eye(2) * 0.9, np.eye(2), np.eye(2), np.eye(2))


def test_paddle_stack_matches_waveplates():
    q1, h, q2 = 0.3, 1.1, 2.0
    ref = (waveplate(math.pi / 2, math.degrees(q2)).array
           @ waveplate(math.pi, math.degrees(h)).array
           @ waveplate(math.pi / 2, math.degrees(q1)).array)
    np.testing.assert_allclose(paddle_stack((q1, h, q2)).array, ref, atol=1e-14)


def test_paddle_settings_wrap():
    s = PaddleSettings(fpc_a=(4.0, -1.0, 0.5), twist=7.0)
    assert all(0 <= x < math.pi for x in s.fpc_a)
    assert -math.pi < s.twist <= math.pi
    with pytest.raises(ValueError):
        PaddleSettings(fpc_a=(1.0, 2.0))


def test_measure_probe_bounds():
    ch = random_fiber(1)
    s = PaddleSettings()
    p_h = measure_probe(ch, s, H, 0.0, "2")
    p_v = measure_probe(ch, s, H, 90.0, "2")
    assert p_h + p_v == pytest.approx(1.0)
    with pytest.raises(ValueError):
        measure_probe(ch, s, H, 0.0, "3")
    with pytest.raises(ValueError):
        path_matrix(ch, s, "c", "1")


def test_single_hwp_channel():
    hwp = half_waveplate(22.5)
    ch = FiberChannel(hwp, np.eye(2), np.eye(2), np.eye(2))
    assert leakage(ch, PaddleSettings()) == pytest.approx(0.5)
    res = calibrate(ch, 1e-3)
    assert res.converged
    assert res.residual_hv_leakage < 1e-6


@pytest.mark.parametrize("seed", [7, 11, 42])
def test_random_channels_converge(seed):
    res = calibrate(random_fiber(seed), 1e-3, seed=seed)
    assert res.converged, res.message
    assert res.residual_hv_leakage < 1e-3
    assert res.residual_phase_error < 1e-3
    assert res.evaluations <= 10_000
    assert leakage(random_fiber(seed), res.settings) == res.residual_hv_leakage
    assert phase_error(random_fiber(seed), res.settings) == res.residual_phase_error


def test_zero_tolerance_reports_failure():
    res = calibrate(random_fiber(7), 0.0, seed=7)
    assert not res.converged
    assert res.message
    assert res.evaluations <= 10_000
    assert "converged=False" in res.report()


def test_negative_tolerance_rejected():
    with pytest.raises(ValueError):
        calibrate(random_fiber(0), -1.0)


def test_tiny_budget_keeps_best():
    ch = random_fiber(5)
    res = calibrate(ch, 1e-3, budget=50)
    assert not res.converged
    assert res.residual_hv_leakage <= res.initial_hv_leakage


def test_calibrated_fiber_restores_null():
    ch = random_fiber(7)
    res = calibrate(ch, 1e-3, seed=7)
    cfg = lab_geometry(0.1, THETA_STAR_DEG)
    raw = with_fiber(cfg, ch, PaddleSettings())
    fixed = with_fiber(cfg, ch, res.settings)
    assert coincidence_probability(raw, 0.0) > 1e-3
    assert coincidence_probability(fixed, 0.0) < 1e-6


def test_golden_section_and_line_search():
    f = lambda x: (x - 0.7) ** 2
    x, fx = golden_section(f, 0.0, 2.0)
    assert x == pytest.approx(0.7, abs=1e-6)
    g = lambda x: math.cos(x - 2.9) * -1
    x, fx = line_minimize(g, 0.0, g(0.0), -math.pi, math.pi, periodic=True)
    assert fx == pytest.approx(-1.0, abs=1e-10)


def test_measure_probe_identity_and_oracle():
    ident = FiberChannel.identity()
    s = PaddleSettings()
    assert measure_probe(ident, s, H, 0.0, "1") == pytest.approx(1.0)
    assert measure_probe(ident, s, H, 90.0, "1") == pytest.approx(0.0, abs=1e-30)
    ch = random_fiber(2)
    s = PaddleSettings(fpc_a=(0.1, 0.2, 0.3), fpc_1=(1.0, 2.0, 0.5), twist=0.4)
    probe = linear_state(33.0)
    # explicit chain of Jones products in propagation order
    m = (waveplate(0.4, 0.0).array @ paddle_stack(s.fpc_1).array @ ch.u_out_1.array
         @ ch.u_in_a.array @ paddle_stack(s.fpc_a).array)
    ref = abs(np.vdot(linear_state(-20.0).array, m @ probe.array)) ** 2
    assert measure_probe(ch, s, probe, -20.0, "1") == pytest.approx(ref, abs=1e-14)


def test_initial_leakage_generic():
    assert np.median([leakage(random_fiber(s), PaddleSettings()) for s in range(100)]) > 0.1


def test_calibration_deterministic():
    a = calibrate(random_fiber(13), 1e-3, seed=1)
    b = calibrate(random_fiber(13), 1e-3, seed=1)
    assert a == b


@pytest.mark.parametrize("seed", [3, 7])
def test_linear_probes_survive_calibrated_arm(seed):
    tol = 1e-3
    ch = random_fiber(seed)
    res = calibrate(ch, tol, seed=seed)
    assert res.converged
    m = path_matrix(ch, res.settings, "a", "1")
    for deg in (0, 30, 45, 60, 90):
        out = m @ linear_state(deg).array
        assert abs(np.vdot(linear_state(deg).array, out)) ** 2 >= 1 - 10 * tol


def test_hwp_lead_restores_compensated_null():
    ch = FiberChannel(half_waveplate(22.5), np.eye(2), np.eye(2), np.eye(2))
    res = calibrate(ch, 1e-3)
    cfg = lab_geometry(0.1, THETA_STAR_DEG)
    assert coincidence_probability(with_fiber(cfg, ch, res.settings), 0.0) < 1e-6
