"""Two-photon amplitudes, coincidence probabilities and the closed-form laws.

Geometry: photon A enters input ``a``, photon B input ``b``. Reflection
sends A to output 1 (detector D1) and B to output 2 (D2). Each output arm
ends in an analyzer polarizer in front of its detector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .optics import (
    INPUT_ARMS,
    OUTPUT_ARMS,
    Angle,
    AngleLike,
    Delay,
    JonesMatrix,
    JonesVector,
    OpticalElement,
    Polarizer,
    SplitterSpec,
    as_angle,
    linear_state,
    make_beamsplitter,
    polarizer,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
SUM_TOL = 1e-9


class ConfigurationError(ValueError):
    """The experiment description cannot be simulated."""


class InfeasibleError(ValueError):
    """No compensation angle exists for the requested splitter."""


@dataclass(frozen=True)
class PhotonPairSpec:
    psi_a: JonesVector
    psi_b: JonesVector
    center_wavelength_nm: float = 814.0
    filter_fwhm_nm: float = 10.0

    def __post_init__(self):
        for name in ("psi_a", "psi_b"):
            n2 = getattr(self, name).norm2
            if abs(n2 - 1.0) > 1e-9:
                raise ConfigurationError(f"{name} must be unit norm, got |psi|^2={n2}")
        if not self.filter_fwhm_nm > 0:
            raise ConfigurationError("filter_fwhm_nm must be positive")
        if not self.center_wavelength_nm > 0:
            raise ConfigurationError("center_wavelength_nm must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    pair: PhotonPairSpec
    splitter: SplitterSpec
    polarizer_1: Angle
    polarizer_2: Angle
    elements: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "polarizer_1", as_angle(self.polarizer_1))
        object.__setattr__(self, "polarizer_2", as_angle(self.polarizer_2))
        object.__setattr__(self, "elements", tuple(self.elements))

    def arm_elements(self, arm: str) -> list:
        return [e for e in self.elements if e.arm == arm]


@dataclass(frozen=True)
class TwoPhotonAmplitudes:
    a_rr: complex
    a_tt: complex


@dataclass(frozen=True)
class DipCurve:
    delays: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if d.shape != v.shape or d.ndim != 1:
            raise ValueError("delays and values must be 1-d and the same length")
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("curve values must be non-negative")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.delays.size


def lab_geometry(R: float, delta_theta: AngleLike, *, pair_kwargs=None) -> ExperimentConfig:
    """The lab arrangement: B horizontal, A at delta_theta, analyzers follow the inputs."""
    dt = as_angle(delta_theta)
    pair = PhotonPairSpec(linear_state(dt), linear_state(0.0), **(pair_kwargs or {}))
    return ExperimentConfig(pair, make_beamsplitter(R), polarizer_1=dt, polarizer_2=Angle(0.0))


def _arm_matrix(config: ExperimentConfig, arm: str) -> JonesMatrix:
    m = JonesMatrix.identity()
    seen_polarizer = False
    for e in config.arm_elements(arm):
        if isinstance(e, Delay) and seen_polarizer:
            raise ConfigurationError(f"delay element after a polarizer on arm {arm} is unsupported")
        if isinstance(e, Polarizer):
            seen_polarizer = True
        m = e.jones() @ m
    return m


def _input_delay(config: ExperimentConfig) -> float:
    """Extra delay of photon A relative to photon B from delay elements on the inputs."""
    da = sum(e.fs for e in config.arm_elements("a") if isinstance(e, Delay))
    db = sum(e.fs for e in config.arm_elements("b") if isinstance(e, Delay))
    return da - db


def enumerate_amplitudes(config: ExperimentConfig) -> TwoPhotonAmplitudes:
    ua, ub = _arm_matrix(config, "a"), _arm_matrix(config, "b")
    u1, u2 = _arm_matrix(config, "1"), _arm_matrix(config, "2")
    p1, p2 = linear_state(config.polarizer_1), linear_state(config.polarizer_2)
    sa = ua @ config.pair.psi_a
    sb = ub @ config.pair.psi_b
    bs = config.splitter
    a_rr = bs.r * bs.r_b * p1.overlap(u1 @ sa) * p2.overlap(u2 @ sb)
    a_tt = bs.t * bs.t_b * p2.overlap(u2 @ sa) * p1.overlap(u1 @ sb)
    return TwoPhotonAmplitudes(complex(a_rr), complex(a_tt))


def coherence_time_fs(pair: PhotonPairSpec) -> float:
    """1/e half-width of the overlap envelope for identical Gaussian filters.

    Each filter passes intensity exp(-w^2 / (2 s^2)) around the degenerate
    frequency, with s set by the FWHM converted from wavelength. For a CW
    pumped pair the joint spectrum is the product of both filters,
    exp(-w^2 / s^2), whose Fourier transform in the relative delay is
    exp(-(s*tau)^2), so the half-width is 1/s.
    """
    lam = pair.center_wavelength_nm * 1e-9
    dlam = pair.filter_fwhm_nm * 1e-9
    fwhm_omega = 2 * math.pi * SPEED_OF_LIGHT * dlam / lam**2
    sigma = fwhm_omega / (2 * math.sqrt(2 * math.log(2)))
    return 1e15 / sigma


def temporal_overlap(delay, pair: PhotonPairSpec):
    """Normalized spectral-overlap magnitude at a relative delay (fs)."""
    tc = coherence_time_fs(pair)
    d = np.asarray(delay, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-((d / tc) ** 2))
    return float(out) if out.ndim == 0 else out


def coincidence_probability(config: ExperimentConfig, delay):
    """Probability of one detection at each of D1 and D2 per emitted pair."""
    amp = enumerate_amplitudes(config)
    o = temporal_overlap(np.asarray(delay, dtype=float) + _input_delay(config), config.pair)
    cross = (amp.a_rr.conjugate() * amp.a_tt).real
    p = abs(amp.a_rr) ** 2 + abs(amp.a_tt) ** 2 + 2.0 * cross * np.asarray(o)
    p = np.maximum(p, 0.0)
    return float(p) if np.ndim(p) == 0 else p


def baseline_probability(config: ExperimentConfig) -> float:
    """Coincidence probability for fully distinguishable photons (infinite delay)."""
    amp = enumerate_amplitudes(config)
    return abs(amp.a_rr) ** 2 + abs(amp.a_tt) ** 2


def dip_scan(config: ExperimentConfig, delays: Sequence[float]) -> DipCurve:
    d = np.asarray(delays, dtype=float).ravel()
    if d.size > 1 and np.any(np.diff(d) <= 0):
        raise ValueError("delays must be strictly increasing")
    return DipCurve(d, np.atleast_1d(coincidence_probability(config, d)))


def engine_visibility(config: ExperimentConfig) -> float:
    """Dip visibility (baseline - value at zero delay) / baseline.

    Zero for a flat curve; negative when the configuration gives a peak.
    """
    base = baseline_probability(config)
    if base == 0.0:
        return 0.0
    centre = coincidence_probability(config, -_input_delay(config))
    return (base - centre) / base


def peak_ratio(config: ExperimentConfig) -> float:
    """Zero-delay coincidence over the large-delay baseline (> 1 for a peak)."""
    base = baseline_probability(config)
    return coincidence_probability(config, -_input_delay(config)) / base



def peak_visibility(config: ExperimentConfig) -> float:
    """Height of a zero-delay peak above the baseline, (max - baseline) / baseline."""
    return peak_ratio(config) - 1.0


@dataclass(frozen=True)
class PeakSearchResult:
    config: ExperimentConfig
    ratio: float


MIN_BASELINE = 1e-6


def search_peak(R: float, theta_a: AngleLike, theta_b: AngleLike = 0.0,
                coarse_deg: float = 2.0, fine_deg: float = 0.05) -> PeakSearchResult:
    """Grid search over both analyzer axes for the largest zero-delay peak.

    A coarse pass covers [0, 180) x [0, 180); a fine pass refines around the
    best coarse point. Analyzer pairs passing less than ``MIN_BASELINE`` of
    the pairs are skipped so the ratio is not dominated by rounding.
    """
    pair = PhotonPairSpec(linear_state(theta_a), linear_state(theta_b))
    bs = make_beamsplitter(R)

    def ratio(p1, p2):
        cfg = ExperimentConfig(pair, bs, Angle.deg(p1), Angle.deg(p2))
        if baseline_probability(cfg) < MIN_BASELINE:
            return -math.inf, cfg
        return peak_ratio(cfg), cfg

    def best_on(g1, g2):
        return max((ratio(a, b) for a in g1 for b in g2), key=lambda rc: rc[0])

    coarse = np.arange(0.0, 180.0, coarse_deg)
    r0, c0 = best_on(coarse, coarse)
    p1, p2 = c0.polarizer_1.degrees, c0.polarizer_2.degrees
    fine = np.arange(-coarse_deg, coarse_deg + fine_deg / 2, fine_deg)
    r1, c1 = best_on(p1 + fine, p2 + fine)
    r, c = (r1, c1) if r1 >= r0 else (r0, c0)
    return PeakSearchResult(c, float(r))

# -- full outcome distribution ---------------------------------------------

OUTCOMES = ("coincidence", "both_1", "both_2", "lost_1", "lost_2", "both_lost")


def _loss_operator(m: np.ndarray) -> np.ndarray:
    """sqrt(I - M^dag M): where the light a contraction M removes ends up."""
    w, v = np.linalg.eigh(np.eye(2) - m.conj().T @ m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _photon_vectors(config: ExperimentConfig):
    """Single-photon output vectors over [out1 H,V | out2 H,V | loss modes...].

    Every non-unitary element (and each analyzer) gets its own pair of loss
    modes, so the map from inputs is an isometry and nothing goes missing.
    """
    blocks = {}
    for arm in INPUT_ARMS + OUTPUT_ARMS:
        mats = [e.jones().array for e in config.arm_elements(arm)]
        if arm == "1":
            mats.append(polarizer(config.polarizer_1).array)
        elif arm == "2":
            mats.append(polarizer(config.polarizer_2).array)
        blocks[arm] = mats
    n_loss = 0
    slots = {}
    for arm, mats in blocks.items():
        for i, m in enumerate(mats):
            if not JonesMatrix.from_array(m).is_unitary():
                slots[(arm, i)] = 4 + 2 * n_loss
                n_loss += 1
    size = 4 + 2 * n_loss

    def run_arm(arm, state, vec):
        for i, m in enumerate(blocks[arm]):
            if (arm, i) in slots:
                k = slots[(arm, i)]
                vec[k:k + 2] += _loss_operator(m) @ state
            state = m @ state
        return state

    bs = config.splitter
    out = []
    for arm, psi, r, t in (
        ("a", config.pair.psi_a, bs.r, bs.t),
        ("b", config.pair.psi_b, bs.r_b, bs.t_b),
    ):
        vec = np.zeros(size, dtype=complex)
        s = run_arm(arm, psi.array, vec)
        to1, to2 = (r, t) if arm == "a" else (t, r)
        vec[0:2] += run_arm("1", to1 * s, vec)
        vec[2:4] += run_arm("2", to2 * s, vec)
        out.append(vec)
    return out[0], out[1], size


def outcome_probabilities(config: ExperimentConfig, delay: float) -> dict:
    """Probabilities of all detection outcomes of the pair, including absorption.

    Partial distinguishability enters as a mixture: with weight equal to the
    temporal overlap the photons behave as identical bosons, otherwise as
    distinguishable particles.
    """
    alpha, beta, size = _photon_vectors(config)
    o = float(temporal_overlap(float(delay) + _input_delay(config), config.pair))
    groups = {"1": slice(0, 2), "2": slice(2, 4), "L": slice(4, size)}
    pa = {g: float(np.sum(np.abs(alpha[s]) ** 2)) for g, s in groups.items()}
    pb = {g: float(np.sum(np.abs(beta[s]) ** 2)) for g, s in groups.items()}
    S = np.outer(alpha, beta)
    S = S + S.T
    S2 = np.abs(S) ** 2

    def pair_prob(x, y):
        sx, sy = groups[x], groups[y]
        if x == y:
            dist = pa[x] * pb[x]
            indist = 0.5 * float(np.sum(S2[sx, sx]))
        else:
            dist = pa[x] * pb[y] + pa[y] * pb[x]
            indist = float(np.sum(S2[sx, sy]))
        return (1.0 - o) * dist + o * indist

    return {
        "coincidence": pair_prob("1", "2"),
        "both_1": pair_prob("1", "1"),
        "both_2": pair_prob("2", "2"),
        "lost_1": pair_prob("1", "L"),
        "lost_2": pair_prob("2", "L"),
        "both_lost": pair_prob("L", "L"),
    }


# -- closed-form laws -------------------------------------------------------

def _check_split(R: float, T: float) -> None:
    if not (0.0 < R < 1.0 and 0.0 < T < 1.0):
        raise ValueError(f"R and T must lie in (0,1), got R={R}, T={T}")
    if abs(R + T - 1.0) > SUM_TOL:
        raise ValueError(f"R + T must equal 1, got {R + T}")


def closed_form_visibility(R: float, T: float, delta_theta: AngleLike) -> float:
    """Dip visibility 2RT cos^2 / (R^2 + T^2 cos^4) for analyzers aligned with the inputs."""
    _check_split(R, T)
    c2 = math.cos(as_angle(delta_theta).rad) ** 2
    return 2 * R * T * c2 / (R * R + T * T * c2 * c2)


def relative_rate(R: float, T: float, delta_theta: AngleLike) -> float:
    """Large-delay coincidence rate R^2 + T^2 cos^4, relative to one pair per trial."""
    _check_split(R, T)
    c2 = math.cos(as_angle(delta_theta).rad) ** 2
    return R * R + T * T * c2 * c2


def compensation_angle(R: float, T: float) -> Angle:
    """Angle in [0, 90 deg] where polarizer loss on A_tt balances it against A_rr."""
    _check_split(R, T)
    if R > T:
        raise InfeasibleError(
            f"R={R} > T={T}: attenuating the transmitted amplitude cannot balance it"
        )
    return Angle(math.acos(math.sqrt(R / T)))
