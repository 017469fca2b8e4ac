"""Birefringence cancellation in a fiber coupler, simulated.

The coupler leads carry unknown unitaries. Three paddle controllers (one on
each input lead and one on the upper output lead) and a twistable waveplate
on the upper output are tuned using only power readings of a probe laser
behind an analyzer, in the same order as on the bench: first make H and V
come through intact, then null the residual H/V phase on the upper port.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import unitary_group

from .engine import ExperimentConfig
from .optics import (
    H,
    V,
    Angle,
    FiberSegment,
    JonesMatrix,
    JonesVector,
    Waveplate,
    linear_state,
    waveplate,
)

GOLDEN = (math.sqrt(5) - 1) / 2
EVAL_BUDGET = 10_000
GRID = 8
ANGLE_TOL = 1e-8
PATHS = (("a", "1"), ("a", "2"), ("b", "1"), ("b", "2"))


@dataclass(frozen=True)
class FiberChannel:
    u_in_a: JonesMatrix
    u_in_b: JonesMatrix
    u_out_1: JonesMatrix
    u_out_2: JonesMatrix

    def __post_init__(self):
        for name in ("u_in_a", "u_in_b", "u_out_1", "u_out_2"):
            m = getattr(self, name)
            if not isinstance(m, JonesMatrix):
                m = JonesMatrix.from_array(m)
                object.__setattr__(self, name, m)
            if not m.is_unitary():
                raise ValueError(f"{name} must be unitary")

    @classmethod
    def identity(cls) -> "FiberChannel":
        i = JonesMatrix.identity()
        return cls(i, i, i, i)


def random_fiber(seed: int) -> FiberChannel:
    """Four independent Haar-random lead unitaries."""
    us = unitary_group.rvs(2, size=4, random_state=np.random.default_rng(seed))
    return FiberChannel(*(JonesMatrix.from_array(u) for u in us))


@dataclass(frozen=True)
class PaddleSettings:
    """Paddle rotations (radians) for the three controllers plus the output twist.

    Each controller is a quarter/half/quarter paddle stack; light meets the
    first angle of the triple first. ``twist`` is the retardance (radians)
    of the upper-output plate, fast axis horizontal.
    """

    fpc_a: tuple = (0.0, 0.0, 0.0)
    fpc_b: tuple = (0.0, 0.0, 0.0)
    fpc_1: tuple = (0.0, 0.0, 0.0)
    twist: float = 0.0

    def __post_init__(self):
        for name in ("fpc_a", "fpc_b", "fpc_1"):
            angles = tuple(float(a) % math.pi for a in getattr(self, name))
            if len(angles) != 3:
                raise ValueError(f"{name} needs three paddle angles")
            object.__setattr__(self, name, angles)
        tw = math.remainder(float(self.twist), 2 * math.pi)
        object.__setattr__(self, "twist", math.pi if tw == -math.pi else tw)

    def vector(self) -> list:
        return [*self.fpc_a, *self.fpc_b, *self.fpc_1]


def _retarder(d: float, phi: float) -> np.ndarray:
    # same convention as optics.waveplate, without the value-object overhead
    c, s = math.cos(phi), math.sin(phi)
    em, ep = complex(math.cos(d / 2), -math.sin(d / 2)), complex(math.cos(d / 2), math.sin(d / 2))
    return np.array([
        [c * c * em + s * s * ep, c * s * (em - ep)],
        [c * s * (em - ep), s * s * em + c * c * ep],
    ])


def _stack(angles) -> np.ndarray:
    q1, h, q2 = angles
    return _retarder(math.pi / 2, q2) @ _retarder(math.pi, h) @ _retarder(math.pi / 2, q1)


def paddle_stack(angles) -> JonesMatrix:
    """Quarter-half-quarter paddle controller; angles in radians."""
    return JonesMatrix.from_array(_stack(angles))


def twist_plate(twist: float) -> JonesMatrix:
    return waveplate(twist, Angle(0.0))


def path_matrix(channel: FiberChannel, settings: PaddleSettings, input_arm: str, arm: str) -> np.ndarray:
    """Polarization transfer along one input->output path, splitter amplitude excluded."""
    if input_arm == "a":
        m = channel.u_in_a.array @ _stack(settings.fpc_a)
    elif input_arm == "b":
        m = channel.u_in_b.array @ _stack(settings.fpc_b)
    else:
        raise ValueError(f"input arm must be 'a' or 'b', got {input_arm!r}")
    if arm == "1":
        m = channel.u_out_1.array @ m
        m = _retarder(settings.twist, 0.0) @ _stack(settings.fpc_1) @ m
    elif arm == "2":
        m = channel.u_out_2.array @ m
    else:
        raise ValueError(f"output arm must be '1' or '2', got {arm!r}")
    return m


def measure_probe(
    channel: FiberChannel,
    settings: PaddleSettings,
    probe: JonesVector,
    analyzer,
    arm: str,
    input_arm: str = "a",
) -> float:
    """Power of a unit probe behind the analyzer on an output arm."""
    if abs(probe.norm2 - 1.0) > 1e-9:
        raise ValueError("probe must be unit norm")
    out = path_matrix(channel, settings, input_arm, arm) @ probe.array
    amp = np.vdot(linear_state(analyzer).array, out)
    return float(min(1.0, abs(amp) ** 2))


def leakage(channel, settings, paths=PATHS) -> float:
    """Worst crossed-analyzer power for H and V probes over the given paths."""
    worst = 0.0
    for src, arm in paths:
        worst = max(
            worst,
            measure_probe(channel, settings, H, 90.0, arm, src),
            measure_probe(channel, settings, V, 0.0, arm, src),
        )
    return worst


def phase_error(channel, settings) -> float:
    """Residual H/V phase (radians) on the a->1 path, read off a 45 deg probe."""
    p = measure_probe(channel, settings, linear_state(45.0), -45.0, "1", "a")
    return 2.0 * math.asin(math.sqrt(max(0.0, min(1.0, p))))


@dataclass(frozen=True)
class CalibrationResult:
    settings: PaddleSettings
    residual_hv_leakage: float
    residual_phase_error: float
    iterations: int
    evaluations: int = 0
    converged: bool = True
    initial_hv_leakage: float = 0.0
    message: str = ""

    def report(self) -> str:
        deg = lambda xs: "(" + ", ".join(f"{math.degrees(x):.6f}" for x in xs) + ")"
        s = self.settings
        lines = [
            f"converged={self.converged}",
            f"residual_hv_leakage={self.residual_hv_leakage!r}",
            f"residual_phase_error={self.residual_phase_error!r}",
            f"initial_hv_leakage={self.initial_hv_leakage!r}",
            f"iterations={self.iterations}",
            f"evaluations={self.evaluations}",
            f"fpc_a_deg={deg(s.fpc_a)}",
            f"fpc_b_deg={deg(s.fpc_b)}",
            f"fpc_1_deg={deg(s.fpc_1)}",
            f"twist_rad={s.twist!r}",
        ]
        if self.message:
            lines.append(f"message={self.message}")
        return "\n".join(lines) + "\n"


class _BudgetExceeded(Exception):
    pass


@dataclass
class _Counter:
    budget: int
    used: int = 0

    def wrap(self, f):
        def g(x):
            if self.used >= self.budget:
                raise _BudgetExceeded
            self.used += 1
            return f(x)
        return g


def golden_section(f, lo, hi, tol=ANGLE_TOL, f_lo=None, f_hi=None):
    """Minimize a unimodal f on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    cands = [(f1, x1), (f2, x2)]
    if f_lo is not None:
        cands.append((f_lo, lo))
    if f_hi is not None:
        cands.append((f_hi, hi))
    fx, x = min(cands)
    return x, fx


def line_minimize(f, x0, f0, lo, hi, grid=GRID, periodic=True):
    """Coarse grid over [lo, hi) then golden section around the best sample.

    Returns the better of the refined point and ``x0``.
    """
    step = (hi - lo) / grid
    xs = [lo + i * step for i in range(grid)] if periodic else list(np.linspace(lo, hi, grid + 1))
    fs = [f(x) for x in xs]
    i = int(np.argmin(fs))
    a, b = xs[i] - step, xs[i] + step
    if not periodic:
        a, b = max(a, lo), min(b, hi)
    x, fx = golden_section(f, a, b)
    if fs[i] < fx:
        x, fx = xs[i], fs[i]
    if f0 <= fx:
        return x0, f0
    return x, fx


def _line_search(f, x, fx, u, half_width, grid):
    """Minimize f(x + t*u) over t in [-half_width, half_width]."""
    def along(t):
        return f([xi + t * ui for xi, ui in zip(x, u)])

    t, ft = line_minimize(along, 0.0, fx, -half_width, half_width, grid=grid, periodic=False)
    return [xi + t * ui for xi, ui in zip(x, u)], ft, t


def coordinate_descent(f, x, target, counter, max_sweeps=60):
    """Coordinate search on pi-periodic angles with golden-section line steps.

    Each sweep minimizes along every coordinate in turn, then along the
    sweep's net displacement, which replaces the direction that gave the
    largest drop (Powell's update). The extra direction follows the narrow
    valleys where paddles trade off against each other; pure cyclic
    coordinate steps crawl there. The first sweep scans each coordinate over
    its full period; later sweeps search a bracket scaled to recent moves.
    Returns (x, f(x), sweeps).
    """
    n = len(x)
    x = list(x)
    fx = f(x)
    dirs = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    moves = [math.pi / 2] * n
    sweeps = 0
    while fx > target and sweeps < max_sweeps:
        sweeps += 1
        x0, f0 = list(x), fx
        drops = []
        for k, u in enumerate(dirs):
            width = math.pi / 2 if sweeps == 1 else min(math.pi / 2, max(4 * moves[k], 1e-6))
            before = fx
            x, fx, t = _line_search(f, x, fx, u, width, GRID if sweeps == 1 else 4)
            moves[k] = abs(t)
            drops.append(before - fx)
            if fx <= target:
                return x, fx, sweeps
        d = [a - b for a, b in zip(x, x0)]
        size = max(abs(v) for v in d)
        # under 1% gain per sweep means a local minimum: let the caller restart
        if size < ANGLE_TOL or f0 - fx <= 1e-2 * f0:
            break
        u = [v / size for v in d]
        x, fx, t = _line_search(f, x, fx, u, max(2 * size, 1e-6), 4)
        k = int(np.argmax(drops))
        dirs[k] = u
        moves[k] = abs(t) + size
    return x, fx, sweeps


def _around(channel, settings, name, src, arm):
    """Fixed factors (left, right) so that path_matrix = left @ stack(name) @ right."""
    eye = np.eye(2, dtype=complex)
    u_in = channel.u_in_a.array if src == "a" else channel.u_in_b.array
    if name in ("fpc_a", "fpc_b"):
        if arm == "2":
            left = channel.u_out_2.array @ u_in
        else:
            left = (_retarder(settings.twist, 0.0) @ _stack(settings.fpc_1)
                    @ channel.u_out_1.array @ u_in)
        return left, eye
    fpc_in = _stack(settings.fpc_a if src == "a" else settings.fpc_b)
    return _retarder(settings.twist, 0.0), channel.u_out_1.array @ u_in @ fpc_in


def calibrate(channel: FiberChannel, tolerance: float, seed: int = 0,
              budget: int = EVAL_BUDGET) -> CalibrationResult:
    """Tune paddles then the output twist until both residuals are within tolerance.

    Never raises on failure: a non-converged result carries the best
    settings found and ``converged=False``. ``seed`` drives restarts from
    random paddle positions when a descent stalls in a local minimum.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    rng = np.random.default_rng(seed)
    counter = _Counter(budget)
    start = PaddleSettings()
    initial = leakage(channel, start)

    def done(s):
        return leakage(channel, s) <= tolerance and phase_error(channel, s) <= tolerance

    if done(start):
        return CalibrationResult(start, initial, phase_error(channel, start), 0, 0, True, initial)

    # the 45 deg phase reading picks up ~2*sqrt(leakage), so stage 1 must go to ~tol^2
    target = min(tolerance / 10.0, tolerance**2 / 16.0)
    # best settings so far; survives a budget overrun mid-search
    state = {"settings": start}
    sweeps = 0

    def sub_problem(name, paths, stages_left):
        nonlocal sweeps
        # soft share of what is left, so an unreachable target cannot starve later stages
        soft_limit = counter.used + (budget - counter.used) // stages_left
        base = state["settings"]
        factors = [_around(channel, base, name, src, arm) for src, arm in paths]
        best = [math.inf, list(getattr(base, name))]

        def obj(angles):
            st = _stack(angles)
            total = 0.0
            for left, right in factors:
                m = left @ st @ right
                total += abs(m[1, 0]) ** 2 + abs(m[0, 1]) ** 2
            if total < best[0]:
                best[:] = [total, list(angles)]
                state["settings"] = replace(base, **{name: tuple(angles)})
            return total

        f = counter.wrap(obj)
        x = best[1]
        for tries in range(1, 13):
            x, _, n = coordinate_descent(f, x, target, counter)
            sweeps += n
            if best[0] <= target or counter.used >= soft_limit:
                break
            # alternate: fresh directions from the best point, then a random start
            x = list(best[1]) if tries % 2 else list(rng.uniform(0, math.pi, size=3))

    def twist_stage():
        base = state["settings"]
        best = [math.inf]

        def obj(tw):
            s = replace(base, twist=tw)
            p = measure_probe(channel, s, linear_state(45.0), -45.0, "1", "a")
            if p < best[0]:
                best[0] = p
                state["settings"] = s
            return p

        f = counter.wrap(obj)
        # retardance is 2*pi periodic up to a global phase
        line_minimize(f, base.twist, f(base.twist), -math.pi, math.pi, grid=16)

    message = ""
    try:
        # stage 1: H and V must emerge intact on every path
        sub_problem("fpc_a", [("a", "2")], 4)
        sub_problem("fpc_b", [("b", "2")], 3)
        sub_problem("fpc_1", [("a", "1"), ("b", "1")], 2)
        # stage 2: twist the upper-output plate to cancel the H/V phase
        twist_stage()
    except _BudgetExceeded:
        message = f"evaluation budget of {budget} exhausted"

    settings = state["settings"]
    leak = leakage(channel, settings)
    if leak > initial:
        settings, leak = start, initial
    phase = phase_error(channel, settings)
    ok = leak <= tolerance and phase <= tolerance
    if not ok and not message:
        message = "residuals above tolerance"
    return CalibrationResult(settings, leak, phase, sweeps, counter.used, ok, initial, message)


def calibrated_elements(channel: FiberChannel, settings: PaddleSettings) -> dict:
    """Jones elements the fiber and controllers add to each arm, in propagation order."""
    return {
        "a": [FiberSegment(paddle_stack(settings.fpc_a), "a"), FiberSegment(channel.u_in_a, "a")],
        "b": [FiberSegment(paddle_stack(settings.fpc_b), "b"), FiberSegment(channel.u_in_b, "b")],
        "1": [
            FiberSegment(channel.u_out_1, "1"),
            FiberSegment(paddle_stack(settings.fpc_1), "1"),
            Waveplate(settings.twist, Angle(0.0), "1"),
        ],
        "2": [FiberSegment(channel.u_out_2, "2")],
    }


def with_fiber(config: ExperimentConfig, channel: FiberChannel, settings: PaddleSettings) -> ExperimentConfig:
    """Insert the coupler leads and controllers into an experiment.

    Free-space elements already on an input arm stay upstream of the fiber;
    those on an output arm stay downstream of it.
    """
    fib = calibrated_elements(channel, settings)
    elems = []
    for arm in ("a", "b"):
        elems += config.arm_elements(arm) + fib[arm]
    for arm in ("1", "2"):
        elems += fib[arm] + config.arm_elements(arm)
    return replace(config, elements=tuple(elems))
