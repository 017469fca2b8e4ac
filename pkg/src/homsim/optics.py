"""Polarization states and optical elements in the {H, V} Jones basis.

All values here are immutable. Angles are held in radians; plain numbers
passed where an :class:`Angle` is expected are read as degrees, which is
how the lab quotes them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

UNITARY_TOL = 1e-12


@dataclass(frozen=True, order=True)
class Angle:
    rad: float

    @classmethod
    def deg(cls, degrees: float) -> "Angle":
        return cls(math.radians(degrees))

    @property
    def degrees(self) -> float:
        return math.degrees(self.rad)

    def axis(self) -> "Angle":
        """Same angle reduced to [0, pi), the range of a polarizer axis."""
        r = math.fmod(self.rad, math.pi)
        if r < 0:
            r += math.pi
        if r >= math.pi:
            r = 0.0
        return Angle(r)

    def fast_axis(self) -> "Angle":
        """Same angle reduced to (-pi, pi] for waveplate fast axes."""
        r = math.remainder(self.rad, 2 * math.pi)
        if r <= -math.pi:
            r += 2 * math.pi
        return Angle(r)

    def __add__(self, other: "Angle") -> "Angle":
        return Angle(self.rad + as_angle(other).rad)

    def __sub__(self, other: "Angle") -> "Angle":
        return Angle(self.rad - as_angle(other).rad)

    def __neg__(self) -> "Angle":
        return Angle(-self.rad)


AngleLike = Union[Angle, float, int]


def as_angle(x: AngleLike) -> Angle:
    """Coerce to Angle; bare numbers are degrees."""
    if isinstance(x, Angle):
        return x
    return Angle.deg(float(x))


@dataclass(frozen=True)
class JonesVector:
    h: complex
    v: complex

    @classmethod
    def from_array(cls, a) -> "JonesVector":
        return cls(complex(a[0]), complex(a[1]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.h, self.v], dtype=complex)

    @property
    def norm2(self) -> float:
        return abs(self.h) ** 2 + abs(self.v) ** 2

    def overlap(self, other: "JonesVector") -> complex:
        """Inner product <self|other>."""
        return self.h.conjugate() * other.h + self.v.conjugate() * other.v


H = JonesVector(1 + 0j, 0j)
V = JonesVector(0j, 1 + 0j)


@dataclass(frozen=True)
class JonesMatrix:
    """2x2 complex matrix, stored row-major as a 4-tuple so it stays hashable."""

    entries: tuple

    def __post_init__(self):
        if len(self.entries) != 4:
            raise ValueError("JonesMatrix needs exactly 4 entries")
        object.__setattr__(self, "entries", tuple(complex(z) for z in self.entries))

    @classmethod
    def from_array(cls, a) -> "JonesMatrix":
        a = np.asarray(a, dtype=complex)
        if a.shape != (2, 2):
            raise ValueError(f"expected a 2x2 array, got shape {a.shape}")
        return cls(tuple(a.ravel()))

    @classmethod
    def identity(cls) -> "JonesMatrix":
        return cls((1, 0, 0, 1))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=complex).reshape(2, 2)

    def __matmul__(self, other):
        if isinstance(other, JonesMatrix):
            return JonesMatrix.from_array(self.array @ other.array)
        if isinstance(other, JonesVector):
            return JonesVector.from_array(self.array @ other.array)
        return NotImplemented

    def dagger(self) -> "JonesMatrix":
        return JonesMatrix.from_array(self.array.conj().T)

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        a = self.array
        return bool(np.max(np.abs(a.conj().T @ a - np.eye(2))) <= tol)

    def is_contraction(self, tol: float = UNITARY_TOL) -> bool:
        return bool(np.linalg.norm(self.array, 2) <= 1 + tol)


@dataclass(frozen=True)
class SplitterSpec:
    """Lossless, polarization-independent 2x2 beamsplitter.

    ``matrix[out, in]`` maps input modes (a, b) to output modes (1, 2).
    Photon A reflects toward output 1 and transmits toward output 2;
    photon B does the reverse. ``R`` is kept as given so that R + T = 1
    holds exactly; it must agree with |r|^2.
    """

    matrix: JonesMatrix
    R: float = None

    def __post_init__(self):
        if not self.matrix.is_unitary():
            raise ValueError("beamsplitter matrix must be unitary")
        if self.R is None:
            object.__setattr__(self, "R", abs(self.r) ** 2)
        elif abs(abs(self.r) ** 2 - self.R) > UNITARY_TOL:
            raise ValueError("R does not match |r|^2")

    @property
    def r(self) -> complex:
        return self.matrix.entries[0]

    @property
    def t(self) -> complex:
        return self.matrix.entries[2]

    # amplitudes seen by photon B (input b): reflect to 2, transmit to 1
    @property
    def r_b(self) -> complex:
        return self.matrix.entries[3]

    @property
    def t_b(self) -> complex:
        return self.matrix.entries[1]

    @property
    def T(self) -> float:
        return 1.0 - self.R


def make_beamsplitter(R: float) -> SplitterSpec:
    """Symmetric-convention splitter with r = i*sqrt(R), t = sqrt(1 - R)."""
    R = float(R)
    if not 0.0 < R < 1.0:
        raise ValueError(f"R must be in (0,1), got {R}")
    r = 1j * math.sqrt(R)
    t = complex(math.sqrt(1.0 - R))
    return SplitterSpec(JonesMatrix((r, t, t, r)), R)


def linear_state(theta: AngleLike) -> JonesVector:
    th = as_angle(theta).rad
    return JonesVector(complex(math.cos(th)), complex(math.sin(th)))


def polarizer(axis: AngleLike) -> JonesMatrix:
    """Ideal linear polarizer: the projector onto ``linear_state(axis)``."""
    th = as_angle(axis).axis().rad
    c, s = math.cos(th), math.sin(th)
    return JonesMatrix((c * c, c * s, c * s, s * s))


def rotation(theta: AngleLike) -> JonesMatrix:
    """Coordinate rotation taking lab H/V into a frame at angle theta."""
    th = as_angle(theta).rad
    c, s = math.cos(th), math.sin(th)
    return JonesMatrix((c, s, -s, c))


def waveplate(retardance: float, fast_axis: AngleLike) -> JonesMatrix:
    """Linear retarder; ``retardance`` in radians.

    The fast axis picks up exp(-i*d/2) and the slow axis exp(+i*d/2), so a
    half-wave plate at phi sends a linear state at theta to 2*phi - theta.
    """
    phi = as_angle(fast_axis).fast_axis()
    rot = rotation(phi).array
    d = float(retardance)
    core = np.diag([np.exp(-0.5j * d), np.exp(0.5j * d)])
    return JonesMatrix.from_array(rot.T @ core @ rot)


def half_waveplate(fast_axis: AngleLike) -> JonesMatrix:
    return waveplate(math.pi, fast_axis)


def quarter_waveplate(fast_axis: AngleLike) -> JonesMatrix:
    return waveplate(math.pi / 2, fast_axis)


# -- optical elements placed on an arm -------------------------------------

ARMS = ("a", "b", "1", "2")
INPUT_ARMS = ("a", "b")
OUTPUT_ARMS = ("1", "2")


def _check_arm(arm: str) -> None:
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}; expected one of {ARMS}")


@dataclass(frozen=True)
class Waveplate:
    retardance: float
    fast_axis: Angle
    arm: str

    def __post_init__(self):
        _check_arm(self.arm)
        object.__setattr__(self, "fast_axis", as_angle(self.fast_axis))

    def jones(self) -> JonesMatrix:
        return waveplate(self.retardance, self.fast_axis)


@dataclass(frozen=True)
class Polarizer:
    axis: Angle
    arm: str

    def __post_init__(self):
        _check_arm(self.arm)
        object.__setattr__(self, "axis", as_angle(self.axis))

    def jones(self) -> JonesMatrix:
        return polarizer(self.axis)


@dataclass(frozen=True)
class FiberSegment:
    """Arbitrary birefringent (or lossy) section given by its Jones matrix."""

    matrix: JonesMatrix
    arm: str

    def __post_init__(self):
        _check_arm(self.arm)
        if not isinstance(self.matrix, JonesMatrix):
            object.__setattr__(self, "matrix", JonesMatrix.from_array(self.matrix))
        if not self.matrix.is_contraction():
            raise ValueError("fiber segment matrix must not amplify light")

    def jones(self) -> JonesMatrix:
        return self.matrix


@dataclass(frozen=True)
class Delay:
    """Free-space delay in femtoseconds; polarization-neutral."""

    fs: float
    arm: str

    def __post_init__(self):
        _check_arm(self.arm)

    def jones(self) -> JonesMatrix:
        return JonesMatrix.identity()


OpticalElement = Union[Waveplate, Polarizer, FiberSegment, Delay]
