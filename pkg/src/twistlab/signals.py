"""Periodic perturbation models and their rates.

Two families: a synthetic disturbance whose rate is a pure sinusoid, and the
motor load torque built from smoothed Coulomb + viscous friction plus
position-periodic cogging harmonics.  Helpers extract the rate bound and the
period mean that the gain calculus consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

__all__ = [
    "TWO_PI",
    "SinusoidPerturbation",
    "FrictionCoggingModel",
    "MotionProfile",
    "eval_d",
    "eval_q",
    "bound_L",
    "mean_rate",
    "constant_speed_characterization",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SinusoidPerturbation:
    """Disturbance whose rate is q(t) = rate_amplitude * sin(2*pi*t/period + phase)."""

    rate_amplitude: float
    period: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not (self.period > 0.0 and math.isfinite(self.period)):
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def rate_bound(self) -> float:
        return abs(self.rate_amplitude)

    def q(self, t):
        return self.rate_amplitude * np.sin(TWO_PI * t / self.period + self.phase)

    def d(self, t):
        """Disturbance itself, integrated from q with d(0) = 0."""
        w = TWO_PI / self.period
        return self.rate_amplitude / w * (math.cos(self.phase) - np.cos(w * t + self.phase))

    def describe(self) -> str:
        return f"sinusoid rate L={self.rate_amplitude:g} T={self.period:g}"


@dataclass(frozen=True)
class FrictionCoggingModel:
    """Motor load torque: smoothed Coulomb + viscous friction + cogging ripple.

        d = coulomb*(2/pi)*arctan(steepness*omega) + viscous*omega
            + sum_i amp_i*sin(theta + phase_i)

    Defaults are the desk calibration: one dominant cogging harmonic of
    0.5 N*m so the constant-speed rate bound |omega_r * sum(amp)| covers the
    8-11.5 N*m/s range across omega_r in [16, 23] rad/s.  All fields are
    config-overridable.
    """

    coulomb: float = 0.4          # N*m
    steepness: float = 100.0      # s/rad, >> 1 so arctan approximates sgn(omega)
    viscous: float = 0.01         # N*m*s/rad
    harmonics: tuple[tuple[float, float], ...] = ((0.5, 0.0),)  # (N*m, rad)

    def __post_init__(self) -> None:
        if self.steepness <= 0.0:
            raise ValueError(f"steepness must be positive, got {self.steepness}")
        if self.coulomb < 0.0 or self.viscous < 0.0:
            raise ValueError("friction coefficients must be non-negative")
        object.__setattr__(self, "harmonics", tuple((float(a), float(p)) for a, p in self.harmonics))

    @property
    def harmonic_sum(self) -> float:
        """Sum of cogging amplitudes; scales the constant-speed rate bound."""
        return float(sum(a for a, _ in self.harmonics))

    def torque(self, omega, theta):
        """Load torque at angular velocity ``omega`` and position ``theta``."""
        d = self.coulomb * (2.0 / math.pi) * np.arctan(self.steepness * omega)
        d = d + self.viscous * omega
        for amp, phase in self.harmonics:
            d = d + amp * np.sin(theta + phase)
        return d

    def rate(self, omega, omega_dot, theta):
        """Time derivative of :meth:`torque` along a motion (omega, omega_dot, theta)."""
        a = self.steepness
        q = (2.0 * self.coulomb * a / (math.pi * (1.0 + (a * omega) ** 2)) + self.viscous) * omega_dot
        cog = 0.0
        for amp, phase in self.harmonics:
            cog = cog + amp * np.cos(theta + phase)
        return q + omega * cog

    def describe(self) -> str:
        return (f"friction+cogging coulomb={self.coulomb:g} steepness={self.steepness:g} "
                f"viscous={self.viscous:g} harmonics={self.harmonics!r}")


@dataclass(frozen=True)
class MotionProfile:
    """Reference motion given as callables omega(t), theta(t), omega_dot(t)."""

    omega: Callable[[float], float]
    theta: Callable[[float], float]
    omega_dot: Callable[[float], float]
    descriptor: str = ""

    @classmethod
    def constant_speed(cls, omega_r: float, theta0: float = 0.0) -> "MotionProfile":
        """Constant set-point: theta advances as omega_r * t + theta0."""
        return cls(
            omega=lambda t: omega_r + 0.0 * t,
            theta=lambda t: omega_r * t + theta0,
            omega_dot=lambda t: 0.0 * t,
            descriptor=f"constant speed omega_r={omega_r:g}",
        )

    @classmethod
    def sinusoidal_velocity(cls, frequency_hz: float, accel_peak: float = 100.0) -> "MotionProfile":
        """Zero-mean sinusoidal velocity with a frequency-independent acceleration peak.

        omega(t) = (accel_peak / 2*pi*f) * cos(2*pi*f*t), so the acceleration
        amplitude stays at ``accel_peak`` for every frequency.
        """
        if frequency_hz <= 0.0:
            raise ValueError(f"frequency must be positive, got {frequency_hz}")
        w = TWO_PI * frequency_hz
        amp = accel_peak / w
        return cls(
            omega=lambda t: amp * np.cos(w * t),
            theta=lambda t: amp / w * np.sin(w * t),
            omega_dot=lambda t: -accel_peak * np.sin(w * t),
            descriptor=f"sinusoidal velocity f={frequency_hz:g}Hz accel_peak={accel_peak:g}",
        )

    def consistency_error(self, t_end: float, samples: int = 2001) -> float:
        """Max |theta(t) - theta(0) - integral(omega)| on a sample grid.

        Uses cumulative trapezoid quadrature; callers assert this stays at
        integration-error scale to validate hand-built profiles.
        """
        t = np.linspace(0.0, t_end, samples)
        w = np.asarray([float(self.omega(ti)) for ti in t])
        th = np.asarray([float(self.theta(ti)) for ti in t])
        dt = t[1] - t[0]
        integral = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * dt)))
        return float(np.max(np.abs(th - th[0] - integral)))


def eval_d(model: FrictionCoggingModel, profile: MotionProfile, t):
    """Disturbance torque along a motion profile."""
    return model.torque(profile.omega(t), profile.theta(t))


def eval_q(model: FrictionCoggingModel, profile: MotionProfile, t):
    """Disturbance torque rate along a motion profile."""
    return model.rate(profile.omega(t), profile.omega_dot(t), profile.theta(t))


def bound_L(q: Callable[[float], float], period: float, samples: int = 10000) -> float:
    """Sup of |q| over one period by dense sampling plus one refinement pass.

    Works for arbitrary rate signals, which is why sampling is used instead
    of symbolic analysis.  Non-finite samples raise ValueError.
    """
    if period <= 0.0:
        raise ValueError(f"period must be positive, got {period}")
    if samples < 2:
        raise ValueError("need at least two samples")
    t = np.linspace(0.0, period, samples, endpoint=False)
    values = np.abs(np.asarray([float(q(ti)) for ti in t]))
    if not np.all(np.isfinite(values)):
        raise ValueError("rate signal produced non-finite samples")
    k = int(np.argmax(values))
    # refine on one grid cell around the coarse argmax
    spacing = period / samples
    fine = np.linspace(t[k] - spacing, t[k] + spacing, 1001)
    fine_values = np.abs(np.asarray([float(q(ti)) for ti in fine]))
    if not np.all(np.isfinite(fine_values)):
        raise ValueError("rate signal produced non-finite samples")
    return float(max(values[k], fine_values.max()))


def mean_rate(q: Callable[[float], float], period: float) -> float:
    """Period average (1/T) * integral of q over [0, T], rel. tolerance 1e-6."""
    if period <= 0.0:
        raise ValueError(f"period must be positive, got {period}")
    integral, _ = quad(q, 0.0, period, epsrel=1e-6, epsabs=1e-12, limit=500)
    return integral / period


def constant_speed_characterization(model: FrictionCoggingModel, omega_r: float) -> tuple[float, float]:
    """Rate bound and period of the load torque at a constant speed set-point.

    At constant speed the friction terms contribute no rate, so
    L = |omega_r * sum(cogging amplitudes)| and T = 2*pi / |omega_r|.
    """
    if omega_r == 0.0:
        raise ValueError("constant-speed characterization requires omega_r != 0")
    L = abs(omega_r * model.harmonic_sum)
    T = TWO_PI / abs(omega_r)
    return L, T
