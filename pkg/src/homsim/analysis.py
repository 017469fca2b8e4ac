"""Synthetic counting data and Gaussian dip fitting."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares

from .engine import DipCurve, dip_scan, lab_geometry
from .optics import Angle, AngleLike, as_angle

DEFAULT_DELAYS = np.linspace(-300.0, 300.0, 41)
MAX_ITER = 200
STEP_TOL = 1e-10
FLAT_TOL = 1e-12


class FitError(RuntimeError):
    pass


class DegenerateDataError(FitError):
    """No dip or peak in the data, so the width cannot be identified."""


class FitConvergenceError(FitError):
    def __init__(self, message, best_residual):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class CountRecord:
    delay: float
    counts: int
    duration: float

    def __post_init__(self):
        if self.counts < 0:
            raise ValueError("counts must be non-negative")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def rate(self) -> float:
        return self.counts / self.duration


@dataclass(frozen=True)
class NoiseSettings:
    rate: float  # emitted pairs per second
    dwell: float  # seconds per scan point
    seed: int = 0

    def __post_init__(self):
        if not (self.rate > 0 and self.dwell > 0):
            raise ValueError("noise rate and dwell must be positive")


@dataclass(frozen=True)
class FitResult:
    baseline: float
    dip_depth: float
    center: float
    width: float
    visibility: float
    visibility_sigma: float
    residual_norm: float
    n_points: int = 0
    iterations: int = 0

    def report(self) -> str:
        """key=value lines, one per field."""
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))

    @staticmethod
    def csv_header() -> list:
        return [f.name for f in fields(FitResult)]

    def csv_row(self) -> list:
        return [repr(v) for v in asdict(self).values()]


def max_workers() -> int:
    """Worker cap from HOMSIM_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("HOMSIM_THREADS", "1")))
    except ValueError:
        return 1


def synthesize_counts(curve: DipCurve, pair_rate: float, duration_per_point: float, seed: int) -> list:
    """Poisson counts with mean curve value * pair_rate * duration at each delay."""
    if not (pair_rate > 0 and duration_per_point > 0):
        raise ValueError("pair_rate and duration_per_point must be positive")
    rng = np.random.default_rng(seed)
    means = curve.values * pair_rate * duration_per_point
    counts = rng.poisson(means)
    return [
        CountRecord(float(d), int(c), float(duration_per_point))
        for d, c in zip(curve.delays, counts)
    ]


def gaussian_dip(x, baseline, visibility, center, width):
    x = np.asarray(x, dtype=float)
    return baseline * (1.0 - visibility * np.exp(-((x - center) / width) ** 2))


def _jacobian(p, x):
    b, v, c, w = p
    u = (x - c) / w
    g = np.exp(-u * u)
    return np.column_stack([
        1.0 - v * g,
        -b * g,
        -b * v * g * 2.0 * u / w,
        -b * v * g * 2.0 * u * u / w,
    ])


def _as_xy(data):
    if isinstance(data, DipCurve):
        return data.delays.copy(), data.values.copy()
    recs = list(data)
    x = np.array([r.delay for r in recs], dtype=float)
    y = np.array([r.rate for r in recs], dtype=float)
    order = np.argsort(x, kind="stable")
    return x[order], y[order]


def initial_guess(x, y):
    n = x.size
    k = max(1, int(math.ceil(0.1 * n)))
    base = float(np.mean(np.concatenate([y[:k], y[-k:]])))
    i = int(np.argmax(np.abs(y - base)))
    vis = (base - y[i]) / base if base > 0 else 0.0
    width = 0.5 * (x[-1] - x[0])
    return np.array([base, min(vis, 0.999), x[i], width])


def fit_gaussian_dip(data: Union[DipCurve, Sequence[CountRecord]]) -> FitResult:
    """Least-squares fit of baseline * (1 - V exp(-((x - c)/w)^2)) to count rates.

    ``data`` is either a list of :class:`CountRecord` (rates = counts/duration)
    or a noiseless :class:`DipCurve`. Visibility is bounded above by 1; it is
    negative for a peak. The 1-sigma error comes from the Gauss-Newton
    normal matrix scaled by the residual variance.
    """
    x, y = _as_xy(data)
    if x.size < 5:
        raise FitError(f"need at least 5 points, got {x.size}")
    if not np.all(np.isfinite(y)):
        raise FitError("non-finite rates in data")
    ymax = float(np.max(np.abs(y)))
    if ymax == 0.0 or (np.max(y) - np.min(y)) <= FLAT_TOL * ymax:
        raise DegenerateDataError("data are flat; no feature to fit")

    span = x[-1] - x[0]
    p0 = initial_guess(x, y)
    if p0[0] <= 0:
        raise DegenerateDataError("baseline estimate is not positive")
    lower = [0.0, -np.inf, x[0] - span, 1e-6 * span]
    upper = [np.inf, 1.0, x[-1] + span, 10.0 * span]

    def resid(p):
        return gaussian_dip(x, *p) - y

    best = None
    for shrink in (1.0, 0.5, 0.25):
        start = p0.copy()
        start[3] *= shrink
        sol = least_squares(
            resid, start, jac=lambda p: _jacobian(p, x), bounds=(lower, upper),
            method="trf", x_scale="jac", xtol=STEP_TOL, ftol=1e-15, gtol=1e-15,
            max_nfev=MAX_ITER,
        )
        if best is None or sol.cost < best.cost:
            best = sol
    if best.status == 0:
        raise FitConvergenceError(
            f"fit did not converge in {MAX_ITER} iterations",
            best_residual=float(np.sqrt(2 * best.cost)),
        )

    b, v, c, w = best.x
    J = _jacobian(best.x, x)
    dof = max(1, x.size - 4)
    s2 = 2.0 * best.cost / dof
    try:
        cov = np.linalg.inv(J.T @ J) * s2
        sigma_v = float(math.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        sigma_v = float("nan")
    if not math.isfinite(sigma_v):
        raise DegenerateDataError("width is unidentifiable from these data")
    return FitResult(
        baseline=float(b),
        dip_depth=float(b * v),
        center=float(c),
        width=float(w),
        visibility=float(v),
        visibility_sigma=sigma_v,
        residual_norm=float(np.sqrt(2 * best.cost)),
        n_points=int(x.size),
        iterations=int(best.nfev),
    )


@dataclass(frozen=True)
class SweepPoint:
    angle: Angle
    fit: Optional[FitResult]
    error: Optional[Exception] = None

    @property
    def visibility(self) -> float:
        """Fitted visibility; 0 for a flat curve, nan for any other failure."""
        if self.fit is not None:
            return self.fit.visibility
        if isinstance(self.error, DegenerateDataError):
            return 0.0
        return float("nan")


def _sweep_one(args):
    R, T, i, angle, noise, delays = args
    curve = dip_scan(lab_geometry(R, angle), delays)
    try:
        if noise is None:
            return SweepPoint(angle, fit_gaussian_dip(curve))
        recs = synthesize_counts(curve, noise.rate, noise.dwell, noise.seed + i)
        return SweepPoint(angle, fit_gaussian_dip(recs))
    except FitError as exc:
        return SweepPoint(angle, None, exc)


def visibility_sweep(
    R: float,
    T: float,
    angles: Sequence[AngleLike],
    noise: Optional[NoiseSettings] = None,
    delays=DEFAULT_DELAYS,
) -> list:
    """Fit a dip for each input-polarization difference in the lab geometry.

    Point ``i`` of a noisy sweep uses seed ``noise.seed + i``. Fit failures
    are recorded on the point rather than raised.
    """
    if abs(R + T - 1.0) > 1e-9:
        raise ValueError("R + T must equal 1")
    angles = [as_angle(a) for a in angles]
    if not angles:
        raise ValueError("angles must be non-empty")
    jobs = [(R, T, i, a, noise, delays) for i, a in enumerate(angles)]
    n = min(max_workers(), len(jobs))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(j) for j in jobs]


# -- CSV ---------------------------------------------------------------------

COUNT_COLUMNS = ("delay_fs", "counts", "duration_s")


def write_counts_csv(path, records, comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNT_COLUMNS)
        for r in records:
            w.writerow([repr(r.delay), r.counts, repr(r.duration)])


def read_dip_csv(path):
    """Read counting data or a probability curve.

    Files with ``counts`` and ``duration_s`` columns give a list of
    CountRecord; files with only ``probability`` give a DipCurve. Lines
    starting with ``#`` are ignored. Raises ValueError on malformed input.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no data")
    rows = list(csv.DictReader(lines))
    cols = set(rows[0].keys()) if rows else set()
    if "delay_fs" not in cols:
        raise ValueError(f"{path}: missing delay_fs column")
    try:
        if {"counts", "duration_s"} <= cols:
            return [
                CountRecord(float(r["delay_fs"]), int(r["counts"]), float(r["duration_s"]))
                for r in rows
            ]
        if "probability" in cols:
            d = [float(r["delay_fs"]) for r in rows]
            p = [float(r["probability"]) for r in rows]
            return DipCurve(np.array(d), np.array(p))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    raise ValueError(f"{path}: need counts,duration_s or probability columns")
