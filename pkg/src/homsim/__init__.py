"""Two-photon interference at asymmetric beamsplitters.

Amplitude-level simulation of Hong-Ou-Mandel dips and peaks, the closed-form
visibility and rate laws for polarization-compensated splitters, Gaussian
dip fitting under Poisson noise, a simulated fiber birefringence
calibration, and the ``.hom`` experiment description language.
"""
from .analysis import (
    CountRecord,
    DegenerateDataError,
    FitConvergenceError,
    FitError,
    FitResult,
    NoiseSettings,
    fit_gaussian_dip,
    synthesize_counts,
    visibility_sweep,
)
from .calibration import (
    CalibrationResult,
    FiberChannel,
    PaddleSettings,
    calibrate,
    measure_probe,
    random_fiber,
    with_fiber,
)
from .dsl import Diagnostic, ParseError, ParsedExperiment, ScanSettings, parse, serialize
from .engine import (
    ConfigurationError,
    DipCurve,
    ExperimentConfig,
    InfeasibleError,
    PhotonPairSpec,
    TwoPhotonAmplitudes,
    baseline_probability,
    closed_form_visibility,
    coincidence_probability,
    compensation_angle,
    dip_scan,
    engine_visibility,
    enumerate_amplitudes,
    outcome_probabilities,
    lab_geometry,
    peak_ratio,
    peak_visibility,
    search_peak,
    relative_rate,
    temporal_overlap,
)
from .optics import (
    Angle,
    Delay,
    FiberSegment,
    JonesMatrix,
    JonesVector,
    Polarizer,
    SplitterSpec,
    Waveplate,
    linear_state,
    make_beamsplitter,
    polarizer,
    waveplate,
)

__version__ = "0.1.0"
