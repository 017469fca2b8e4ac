import math

import numpy as np
import pytest

from homsim.analysis import (
    CountRecord,
    DegenerateDataError,
    FitError,
    FitResult,
    NoiseSettings,
    fit_gaussian_dip,
    gaussian_dip,
    read_dip_csv,
    synthesize_counts,
    visibility_sweep,
    write_counts_csv,
)
from homsim.engine import DipCurve, closed_form_visibility, dip_scan, lab_geometry

DELAYS = np.linspace(-300, 300, 41)
TAU_C_FS = 82.83349052640884


def test_noiseless_recovery_exact():
    curve = DipCurve(DELAYS, gaussian_dip(DELAYS, 3.0, 0.4, 12.0, 70.0))
    fit = fit_gaussian_dip(curve)
    assert fit.baseline == pytest.approx(3.0, abs=1e-9)
    assert fit.visibility == pytest.approx(0.4, abs=1e-9)
    assert fit.center == pytest.approx(12.0, abs=1e-6)
    assert fit.width == pytest.approx(70.0, abs=1e-6)
    assert fit.dip_depth == pytest.approx(1.2, abs=1e-9)


def test_fit_engine_curve():
    fit = fit_gaussian_dip(dip_scan(lab_geometry(0.1, 0.0), DELAYS))
    assert fit.visibility == pytest.approx(closed_form_visibility(0.1, 0.9, 0.0), abs=1e-9)
    assert fit.width == pytest.approx(TAU_C_FS, rel=1e-6)
    assert fit.baseline == pytest.approx(0.82, abs=1e-6)


def test_fit_peak_gives_negative_visibility():
    curve = DipCurve(DELAYS, gaussian_dip(DELAYS, 1.0, -0.6, 0.0, 80.0))
    fit = fit_gaussian_dip(curve)
    assert fit.visibility == pytest.approx(-0.6, abs=1e-9)
    assert fit.dip_depth < 0


def test_flat_data_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_gaussian_dip(DipCurve(DELAYS, np.full(41, 0.01)))


def test_too_few_points():
    with pytest.raises(FitError):
        fit_gaussian_dip(DipCurve(np.arange(3.0), np.array([1.0, 0.5, 1.0])))


def test_synthesize_counts_deterministic():
    curve = dip_scan(lab_geometry(0.1, 0.0), DELAYS)
    a = synthesize_counts(curve, 600.0, 1.0, seed=4)
    b = synthesize_counts(curve, 600.0, 1.0, seed=4)
    c = synthesize_counts(curve, 600.0, 1.0, seed=5)
    assert a == b
    assert a != c
    assert all(r.counts >= 0 for r in a)
    with pytest.raises(ValueError):
        synthesize_counts(curve, -1.0, 1.0, 0)


def test_count_record_validation():
    assert CountRecord(0.0, 10, 2.0).rate == 5.0
    with pytest.raises(ValueError):
        CountRecord(0.0, -1, 1.0)
    with pytest.raises(ValueError):
        CountRecord(0.0, 1, 0.0)
    with pytest.raises(ValueError):
        NoiseSettings(0.0, 1.0)


def test_sigma_calibrated():
    """Reported sigma tracks the scatter of fitted V over many seeds."""
    curve = dip_scan(lab_geometry(0.1, 0.0), DELAYS)
    vs, sigmas = [], []
    for seed in range(120):
        fit = fit_gaussian_dip(synthesize_counts(curve, 600.0, 1.0, seed))
        vs.append(fit.visibility)
        sigmas.append(fit.visibility_sigma)
    sd = np.std(vs, ddof=1)
    assert 0.7 < sd / np.mean(sigmas) < 1.3
    assert abs(np.mean(vs) - closed_form_visibility(0.1, 0.9, 0.0)) < 3 * sd / math.sqrt(len(vs))


def test_sweep_order_and_threads(monkeypatch):
    noise = NoiseSettings(600.0, 1.0, seed=11)
    angles = [0, 20, 40, 60]
    serial = [p.visibility for p in visibility_sweep(0.1, 0.9, angles, noise)]
    monkeypatch.setenv("HOMSIM_THREADS", "4")
    threaded = [p.visibility for p in visibility_sweep(0.1, 0.9, angles, noise)]
    assert serial == threaded


def test_sweep_flat_point_is_zero():
    pts = visibility_sweep(0.1, 0.9, [90.0])
    assert pts[0].fit is None
    assert isinstance(pts[0].error, DegenerateDataError)
    assert pts[0].visibility == 0.0


def test_sweep_validation():
    with pytest.raises(ValueError):
        visibility_sweep(0.1, 0.8, [0])
    with pytest.raises(ValueError):
        visibility_sweep(0.1, 0.9, [])


def test_csv_round_trip(tmp_path):
    curve = dip_scan(lab_geometry(0.1, 0.0), DELAYS)
    recs = synthesize_counts(curve, 600.0, 2.0, 1)
    path = tmp_path / "counts.csv"
    write_counts_csv(path, recs, comment="synthetic")
    assert path.read_text().startswith("# synthetic\ndelay_fs,counts,duration_s\n")
    assert read_dip_csv(path) == recs


def test_read_probability_csv(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("# c\ndelay_fs,probability\n-1,0.5\n0,0.2\n1,0.5\n")
    curve = read_dip_csv(path)
    assert isinstance(curve, DipCurve)
    np.testing.assert_array_equal(curve.values, [0.5, 0.2, 0.5])


@pytest.mark.parametrize("text", [
    "",
    "# only a comment\n",
    "x,y\n1,2\n",
    "delay_fs,counts,duration_s\n0,abc,1\n",
    "delay_fs,counts,duration_s\n0,-3,1\n",
    "delay_fs,foo\n0,1\n",
])
def test_read_malformed_csv(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValueError):
        read_dip_csv(path)


def test_fit_result_report():
    fit = fit_gaussian_dip(DipCurve(DELAYS, gaussian_dip(DELAYS, 1.0, 0.5, 0.0, 80.0)))
    lines = fit.report().splitlines()
    assert lines[0].startswith("baseline=")
    assert any(ln.startswith("visibility_sigma=") for ln in lines)
    assert len(fit.csv_row()) == len(FitResult.csv_header())
