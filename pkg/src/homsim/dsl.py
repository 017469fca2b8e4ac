"""Line-oriented description language for two-photon experiments (``.hom`` files).

One statement per line, ``#`` starts a comment::

    source pdc wavelength=814nm bandwidth=10nm
    photon A pol=70.528779deg
    photon B pol=0deg
    element hwp arm=a axis=0deg
    element polarizer arm=1 axis=70.528779deg
    element polarizer arm=2 axis=0deg
    splitter R=0.1
    scan from=-300fs to=300fs steps=41
    noise rate=1000 dwell=1s seed=7

Element kinds: ``hwp``/``qwp`` (key ``axis``), ``plate`` (``retardance``,
``axis``), ``fiber`` (complex entries ``m00 m01 m10 m11``) and
``polarizer`` (``axis``). Each output arm must end in a
polarizer, the analyzer in front of that arm's detector; earlier polarizers
on the arm are ordinary elements.
Unsuffixed angles are degrees.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import NoiseSettings
from .engine import ExperimentConfig, PhotonPairSpec
from .optics import (
    Angle,
    Delay,
    FiberSegment,
    JonesMatrix,
    Polarizer,
    Waveplate,
    linear_state,
    make_beamsplitter,
)

_NUMBER = re.compile(r"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([A-Za-z]*)")
_COMPLEX = re.compile(r"[0-9eE.+\-j]+")


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    column: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ParseError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class ScanSettings:
    start_fs: float = -300.0
    stop_fs: float = 300.0
    steps: int = 41

    def delays(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.start_fs])
        return np.linspace(self.start_fs, self.stop_fs, self.steps)


@dataclass(frozen=True)
class ParsedExperiment:
    config: ExperimentConfig
    scan: ScanSettings = field(default_factory=ScanSettings)
    noise: Optional[NoiseSettings] = None


class _Bad(Exception):
    def __init__(self, col, message):
        self.col = col
        self.message = message


def _number(text, col, units, default_unit):
    m = _NUMBER.fullmatch(text)
    if not m:
        raise _Bad(col, f"malformed number {text!r}")
    unit = m.group(2) or default_unit
    if unit not in units:
        raise _Bad(col + len(m.group(1)), f"unknown unit {m.group(2)!r}; expected one of {sorted(units)}")
    value = float(m.group(1))
    if not math.isfinite(value):
        raise _Bad(col, f"number out of range {text!r}")
    return value * units[unit]


def _angle(text, col):
    m = _NUMBER.fullmatch(text)
    if m and m.group(2) == "rad":
        return Angle(_number(text, col, {"rad": 1.0}, "rad"))
    return Angle.deg(_number(text, col, {"deg": 1.0}, "deg"))


def _length(text, col):
    v = _number(text, col, {"nm": 1.0}, "nm")
    if not v > 0:
        raise _Bad(col, "length must be positive")
    return v


def _fs(text, col):
    return _number(text, col, {"fs": 1.0}, "fs")


def _int(text, col):
    if not re.fullmatch(r"[+-]?\d+", text):
        raise _Bad(col, f"expected an integer, got {text!r}")
    return int(text)


def _complex(text, col):
    if not _COMPLEX.fullmatch(text):
        raise _Bad(col, f"malformed complex number {text!r}")
    try:
        z = complex(text)
    except ValueError:
        raise _Bad(col, f"malformed complex number {text!r}") from None
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise _Bad(col, f"complex number out of range {text!r}")
    return z


_ELEMENT_KEYS = {
    "hwp": ("axis",),
    "qwp": ("axis",),
    "plate": ("retardance", "axis"),
    "fiber": ("m00", "m01", "m10", "m11"),
    "polarizer": ("axis",),
}

_STATEMENT_KEYS = {
    "source": ({"wavelength", "bandwidth"}, set()),
    "photon": ({"pol"}, {"pol"}),
    "splitter": ({"R"}, {"R"}),
    "scan": ({"from", "to", "steps"}, {"from", "to", "steps"}),
    "noise": ({"rate", "dwell", "seed"}, {"rate", "dwell"}),
}


def _tokens(line):
    code = line.split("#", 1)[0]
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", code)]


def _keyvals(tokens, allowed, required, stmt_col):
    out = {}
    for tok, col in tokens:
        key, eq, val = tok.partition("=")
        if not eq or not key or not val:
            raise _Bad(col, f"expected key=value, got {tok!r}")
        if key not in allowed:
            raise _Bad(col, f"unknown key {key!r}; expected one of {sorted(allowed)}")
        if key in out:
            raise _Bad(col, f"duplicate key {key!r}")
        out[key] = (val, col + len(key) + 1)
    for key in sorted(required):
        if key not in out:
            raise _Bad(stmt_col, f"missing key {key!r}")
    return out


def parse(text: str) -> ParsedExperiment:
    """Parse ``.hom`` source, raising :class:`ParseError` with every diagnostic found."""
    lines = text.splitlines()
    diags = []
    seen = {}
    source = {"wavelength": 814.0, "bandwidth": 10.0}
    photons = {}
    elements = {"a": [], "b": [], "1": [], "2": []}
    analyzers = {}
    last_line = {}
    splitter = None
    scan = ScanSettings()
    noise = None

    def once(kind, lineno, col):
        if kind in seen:
            raise _Bad(col, f"duplicate {kind} statement (first on line {seen[kind]})")
        seen[kind] = lineno

    for lineno, line in enumerate(lines, start=1):
        toks = _tokens(line)
        if not toks:
            continue
        head, hcol = toks[0]
        try:
            if head == "element":
                if len(toks) < 2:
                    raise _Bad(hcol, "element needs a kind")
                kind, kcol = toks[1]
                if kind not in _ELEMENT_KEYS:
                    raise _Bad(kcol, f"unknown element kind {kind!r}; expected one of {sorted(_ELEMENT_KEYS)}")
                keys = set(_ELEMENT_KEYS[kind]) | {"arm"}
                kv = _keyvals(toks[2:], keys, keys, hcol)
                arm, acol = kv["arm"]
                if arm not in elements:
                    raise _Bad(acol, f"unknown arm {arm!r}; expected a, b, 1 or 2")
                if kind == "polarizer":
                    if arm not in ("1", "2"):
                        raise _Bad(acol, "polarizer allowed only on output arms 1 and 2")
                    elements[arm].append(Polarizer(_angle(*kv["axis"]), arm))
                elif kind in ("hwp", "qwp"):
                    ret = math.pi if kind == "hwp" else math.pi / 2
                    elements[arm].append(Waveplate(ret, _angle(*kv["axis"]), arm))
                elif kind == "plate":
                    elements[arm].append(Waveplate(_angle(*kv["retardance"]).rad, _angle(*kv["axis"]), arm))
                else:
                    m = JonesMatrix(tuple(_complex(*kv[k]) for k in _ELEMENT_KEYS["fiber"]))
                    if not m.is_contraction():
                        raise _Bad(hcol, "fiber matrix must not amplify light")
                    elements[arm].append(FiberSegment(m, arm))
                last_line[arm] = (lineno, hcol)
            elif head == "photon":
                if len(toks) < 2 or toks[1][0] not in ("A", "B"):
                    col = toks[1][1] if len(toks) > 1 else hcol + len(head)
                    raise _Bad(col, "photon needs an input label A or B")
                label = toks[1][0]
                once(f"photon {label}", lineno, hcol)
                kv = _keyvals(toks[2:], *_STATEMENT_KEYS["photon"], hcol)
                photons[label] = _angle(*kv["pol"])
            elif head in _STATEMENT_KEYS:
                rest = toks[1:]
                if head == "source":
                    if not rest or rest[0][0] != "pdc":
                        col = rest[0][1] if rest else hcol + len(head)
                        raise _Bad(col, "only 'source pdc' is supported")
                    rest = rest[1:]
                once(head, lineno, hcol)
                kv = _keyvals(rest, *_STATEMENT_KEYS[head], hcol)
                if head == "source":
                    for key in kv:
                        source[key] = _length(*kv[key])
                elif head == "splitter":
                    val, vcol = kv["R"]
                    R = _number(val, vcol, {"": 1.0}, "")
                    if not 0.0 < R < 1.0:
                        raise _Bad(vcol, "R must be in (0,1)")
                    splitter = make_beamsplitter(R)
                elif head == "scan":
                    start, stop = _fs(*kv["from"]), _fs(*kv["to"])
                    steps = _int(*kv["steps"])
                    if steps < 1:
                        raise _Bad(kv["steps"][1], "steps must be at least 1")
                    if steps > 1 and not start < stop:
                        raise _Bad(kv["to"][1], "scan end must exceed its start")
                    scan = ScanSettings(start, stop, steps)
                else:
                    rate = _number(*kv["rate"], {"": 1.0, "hz": 1.0, "Hz": 1.0}, "")
                    dwell = _number(*kv["dwell"], {"": 1.0, "s": 1.0}, "")
                    if not rate > 0:
                        raise _Bad(kv["rate"][1], "rate must be positive")
                    if not dwell > 0:
                        raise _Bad(kv["dwell"][1], "dwell must be positive")
                    seed = _int(*kv["seed"]) if "seed" in kv else 0
                    if seed < 0:
                        raise _Bad(kv["seed"][1], "seed must be non-negative")
                    noise = NoiseSettings(rate, dwell, seed)
            else:
                raise _Bad(hcol, f"unknown statement {head!r}")
        except _Bad as bad:
            diags.append(Diagnostic("error", lineno, bad.col, bad.message))
        except (ValueError, OverflowError) as exc:
            diags.append(Diagnostic("error", lineno, hcol, str(exc)))

    eof_line = max(1, len(lines))
    eof_col = (len(lines[-1]) if lines else 0) + 1
    if splitter is None and "splitter" not in seen:
        diags.append(Diagnostic("error", eof_line, eof_col, "missing splitter statement"))
    for label in ("A", "B"):
        if f"photon {label}" not in seen:
            diags.append(Diagnostic("error", eof_line, eof_col, f"missing photon {label} statement"))
    # the last element of each output arm is the analyzer in front of its detector
    for arm in ("1", "2"):
        if elements[arm] and isinstance(elements[arm][-1], Polarizer):
            analyzers[arm] = elements[arm].pop().axis
        elif elements[arm]:
            line_, col_ = last_line[arm]
            diags.append(Diagnostic("error", line_, col_, f"arm {arm} must end with a polarizer"))
        else:
            diags.append(Diagnostic("error", eof_line, eof_col, f"missing polarizer on arm {arm}"))
    if diags:
        raise ParseError(diags)

    pair = PhotonPairSpec(
        linear_state(photons["A"]),
        linear_state(photons["B"]),
        center_wavelength_nm=source["wavelength"],
        filter_fwhm_nm=source["bandwidth"],
    )
    elems = tuple(e for arm in ("a", "b", "1", "2") for e in elements[arm])
    config = ExperimentConfig(pair, splitter, analyzers["1"], analyzers["2"], elems)
    return ParsedExperiment(config, scan, noise)


def check(text: str) -> list:
    """Diagnostics for ``text``; empty when it parses."""
    try:
        parse(text)
    except ParseError as err:
        return err.diagnostics
    return []


def _fmt_angle(a: Angle) -> str:
    return f"{a.degrees:.6f}deg"


def _fmt_complex(z: complex) -> str:
    im = repr(z.imag)
    return f"{z.real!r}{'' if im.startswith('-') else '+'}{im}j"


def _pol_angle(psi) -> Angle:
    if abs(psi.h.imag) > 1e-12 or abs(psi.v.imag) > 1e-12:
        raise ValueError("only linear input polarizations can be written")
    return Angle(math.atan2(psi.v.real, psi.h.real))


def serialize(exp: ParsedExperiment) -> str:
    """Canonical text: fixed statement order, angles in degrees to 6 decimals."""
    cfg = exp.config
    pair = cfg.pair
    out = [
        f"source pdc wavelength={pair.center_wavelength_nm!r}nm bandwidth={pair.filter_fwhm_nm!r}nm",
        f"photon A pol={_fmt_angle(_pol_angle(pair.psi_a))}",
        f"photon B pol={_fmt_angle(_pol_angle(pair.psi_b))}",
    ]
    for arm in ("a", "b", "1", "2"):
        for e in cfg.arm_elements(arm):
            if isinstance(e, Waveplate):
                if e.retardance == math.pi:
                    out.append(f"element hwp arm={arm} axis={_fmt_angle(e.fast_axis)}")
                elif e.retardance == math.pi / 2:
                    out.append(f"element qwp arm={arm} axis={_fmt_angle(e.fast_axis)}")
                else:
                    out.append(
                        f"element plate arm={arm} retardance={_fmt_angle(Angle(e.retardance))}"
                        f" axis={_fmt_angle(e.fast_axis)}"
                    )
            elif isinstance(e, FiberSegment):
                entries = " ".join(
                    f"{k}={_fmt_complex(z)}" for k, z in zip(_ELEMENT_KEYS["fiber"], e.matrix.entries)
                )
                out.append(f"element fiber arm={arm} {entries}")
            elif isinstance(e, Polarizer):
                out.append(f"element polarizer arm={arm} axis={_fmt_angle(e.axis)}")
            elif isinstance(e, Delay):
                raise ValueError("delay elements have no .hom representation")
        if arm == "1":
            out.append(f"element polarizer arm=1 axis={_fmt_angle(cfg.polarizer_1)}")
        elif arm == "2":
            out.append(f"element polarizer arm=2 axis={_fmt_angle(cfg.polarizer_2)}")
    out.append(f"splitter R={cfg.splitter.R!r}")
    s = exp.scan
    out.append(f"scan from={s.start_fs!r}fs to={s.stop_fs!r}fs steps={s.steps}")
    if exp.noise is not None:
        n = exp.noise
        out.append(f"noise rate={n.rate!r} dwell={n.dwell!r}s seed={n.seed}")
    return "\n".join(out) + "\n"
