import math

import numpy as np
import pytest

from generators import ALIGNED, COMPENSATED, mutate, random_source
from homsim.dsl import Diagnostic, ParseError, ScanSettings, check, parse, serialize
from homsim.engine import ExperimentConfig, engine_visibility, lab_geometry
from homsim.optics import Delay, JonesVector, Polarizer


def only(text):
    diags = check(text)
    assert len(diags) == 1, diags
    return diags[0]


def test_compensated_source():
    exp = parse(COMPENSATED)
    assert exp.config.splitter.R == 0.1
    assert exp.scan == ScanSettings(-300.0, 300.0, 41)
    assert exp.noise is None
    assert engine_visibility(exp.config) == pytest.approx(1.0, abs=1e-9)


def test_aligned_source_matches_lab_geometry():
    exp = parse(ALIGNED)
    assert exp.config == lab_geometry(0.1, 0.0)


def test_units_and_comments():
    text = COMPENSATED.replace("photon B pol=0deg", "photon B pol=0rad   # horizontal")
    text += "noise rate=500hz dwell=2s seed=3\n"
    exp = parse(text)
    assert exp.noise.rate == 500 and exp.noise.dwell == 2 and exp.noise.seed == 3
    assert parse(COMPENSATED.replace("70.528779deg", "70.528779")).config == exp.config


def test_elements_parsed_in_order():
    text = ALIGNED + (
        "element hwp arm=a axis=22.5deg\n"
        "element qwp arm=a axis=0deg\n"
        "element plate arm=b retardance=1.0rad axis=10deg\n"
        "element fiber arm=2 m00=1 m01=0 m10=0 m11=1j\n"
    )
    # the analyzers in ALIGNED come first on their arms, so move them last
    text = text.replace("element polarizer arm=1 axis=0deg\n", "") + "element polarizer arm=1 axis=0deg\n"
    text = text.replace("element polarizer arm=2 axis=0deg\n", "") + "element polarizer arm=2 axis=0deg\n"
    cfg = parse(text).config
    kinds = [(type(e).__name__, e.arm) for e in cfg.elements]
    assert kinds == [("Waveplate", "a"), ("Waveplate", "a"), ("Waveplate", "b"), ("FiberSegment", "2")]
    assert cfg.elements[0].retardance == math.pi
    assert cfg.elements[2].retardance == 1.0


def test_extra_polarizer_stays_an_element():
    text = ALIGNED.replace("element polarizer arm=1 axis=0deg",
                           "element polarizer arm=1 axis=30deg\nelement polarizer arm=1 axis=0deg")
    cfg = parse(text).config
    assert cfg.elements == (Polarizer(30.0, "1"),)


@pytest.mark.parametrize("text,line,col,fragment", [
    ("", 1, 1, "missing splitter"),
    ("splitter R=1.2\n", 1, 12, "R must be in (0,1)"),
    ("splitter R=0.1\nsplitter R=0.2\n", 2, 1, "duplicate splitter"),
    ("element hwp arm=c axis=0\n", 1, 17, "unknown arm"),
    ("element hwp arm=a angle=0\n", 1, 19, "unknown key"),
    ("element laser arm=a\n", 1, 9, "unknown element kind"),
    ("photon A pol=1,5deg\n", 1, 14, "malformed number"),
    ("photon A pol=10grad\n", 1, 16, "unknown unit"),
    ("scan from=0fs to=-1fs steps=3\n", 1, 18, "scan end"),
    ("scan from=0fs to=1fs steps=x\n", 1, 28, "expected an integer"),
    ("element polarizer arm=a axis=0\n", 1, 23, "output arms"),
    ("frobnicate\n", 1, 1, "unknown statement"),
    ("photon C pol=0\n", 1, 8, "photon needs an input label"),
    ("source laser\n", 1, 8, "only 'source pdc'"),
    ("noise rate=0 dwell=1\n", 1, 12, "rate must be positive"),
    ("element fiber arm=a m00=2 m01=0 m10=0 m11=1\n", 1, 1, "must not amplify"),
])
def test_located_diagnostics(text, line, col, fragment):
    diags = [d for d in check(text) if fragment in d.message]
    assert diags, check(text)
    assert (diags[0].line, diags[0].column) == (line, col)


def test_all_errors_reported_at_once():
    text = "splitter R=2\nphoton A pol=x\nbogus\n"
    with pytest.raises(ParseError) as err:
        parse(text)
    lines = {d.line for d in err.value.diagnostics}
    assert {1, 2, 3} <= lines
    assert all(isinstance(d, Diagnostic) for d in err.value.diagnostics)
    assert "1:12: error" in str(err.value)


def test_output_arm_must_end_in_polarizer():
    text = ALIGNED + "element hwp arm=1 axis=0deg\n"
    d = only(text)
    assert "arm 1 must end with a polarizer" in d.message
    assert d.line == len(text.splitlines())


def test_eof_position():
    text = "photon A pol=0\nphoton B pol=0"
    diags = check(text)
    assert all((d.line, d.column) == (2, 15) for d in diags)


def test_serialize_canonical():
    out = serialize(parse(COMPENSATED))
    assert out.splitlines() == [
        "source pdc wavelength=814.0nm bandwidth=10.0nm",
        "photon A pol=70.528779deg",
        "photon B pol=0.000000deg",
        "element polarizer arm=1 axis=70.528779deg",
        "element polarizer arm=2 axis=0.000000deg",
        "splitter R=0.1",
        "scan from=-300.0fs to=300.0fs steps=41",
    ]


def test_serialize_rejects_unrepresentable():
    exp = parse(ALIGNED)
    cfg = exp.config
    delayed = ExperimentConfig(cfg.pair, cfg.splitter, cfg.polarizer_1, cfg.polarizer_2, (Delay(1.0, "a"),))
    with pytest.raises(ValueError):
        serialize(type(exp)(delayed, exp.scan, exp.noise))
    circ = type(cfg.pair)(JonesVector(1 / math.sqrt(2), 1j / math.sqrt(2)), cfg.pair.psi_b)
    with pytest.raises(ValueError):
        serialize(type(exp)(type(cfg)(circ, cfg.splitter, 0.0, 0.0), exp.scan, exp.noise))


def test_round_trip_generated():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        exp = parse(random_source(rng))
        text = serialize(exp)
        assert parse(text) == exp
        assert serialize(parse(text)) == text


def test_fuzz_never_crashes():
    rng = np.random.default_rng(99)
    base = [COMPENSATED, ALIGNED] + [random_source(rng) for _ in range(8)]
    for k in range(600):
        text = base[k % len(base)]
        for _ in range(rng.integers(1, 4)):
            text = mutate(text, rng)
        n_lines = max(1, len(text.splitlines()))
        try:
            parse(text)
        except ParseError as err:
            assert err.diagnostics
            for d in err.diagnostics:
                assert 1 <= d.line <= n_lines
                assert d.column >= 1
                assert d.message
