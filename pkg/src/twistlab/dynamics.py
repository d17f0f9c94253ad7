"""Control laws and closed-loop vector fields of the super-twisting speed loop.

Every function here is a pure map from its arguments to derivatives or
control values.  In particular the controller's integral state is owned by
whoever integrates the loop, so all evaluators can be shared freely between
workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DEFAULT_DELTA",
    "Gains",
    "SimState",
    "PhaseState",
    "PlantFunctions",
    "SingularInputGainError",
    "NearSingularityError",
    "default_layer_width",
    "saturation",
    "control_action",
    "feedback_linearize",
    "eval_regularized",
    "eval_discontinuous",
    "eval_averaged",
    "eval_phase",
    "regularized_field",
    "discontinuous_field",
]

#: Fallback boundary-layer width when no accuracy target is active.
DEFAULT_DELTA = 1e-4


class SingularInputGainError(ValueError):
    """The input gain g(t, y) is too close to zero to invert."""


class NearSingularityError(ValueError):
    """Phase-form evaluation requested too close to the w1 = 0 axis."""


def default_layer_width(accuracy: float | None = None) -> float:
    """Boundary-layer width kept far below the amplitudes a run must resolve.

    With an accuracy target ``eta`` the width is ``min(1e-4, 1e-3 * eta)`` so
    the layer never dominates the measured cycle; without one it falls back
    to :data:`DEFAULT_DELTA`.
    """
    if accuracy is None:
        return DEFAULT_DELTA
    if accuracy <= 0.0:
        raise ValueError(f"accuracy target must be positive, got {accuracy}")
    return min(DEFAULT_DELTA, 1e-3 * accuracy)


@dataclass(frozen=True)
class Gains:
    """Super-twisting gains (k1: sqrt-term, k2: integral) plus layer width."""

    k1: float
    k2: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self) -> None:
        if not (self.k1 > 0.0 and math.isfinite(self.k1)):
            raise ValueError(f"k1 must be positive and finite, got {self.k1}")
        if not (self.k2 > 0.0 and math.isfinite(self.k2)):
            raise ValueError(f"k2 must be positive and finite, got {self.k2}")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")


@dataclass(frozen=True)
class SimState:
    """Closed-loop state: error x1 and integral-plus-disturbance state x2."""

    t: float
    x1: float
    x2: float

    def __post_init__(self) -> None:
        for name in ("t", "x1", "x2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class PhaseState:
    """Phase-plane state: error w1 and error rate w2."""

    w1: float
    w2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.w1) and math.isfinite(self.w2)):
            raise ValueError("phase state must be finite")


@dataclass(frozen=True)
class PlantFunctions:
    """First-order plant data for ``dy/dt = drift(t,y) + input_gain(t,y)*u0``.

    ``input_gain`` must stay away from zero; evaluations with magnitude below
    ``gain_floor`` raise :class:`SingularInputGainError`.
    """

    drift: Callable[[float, float], float]
    input_gain: Callable[[float, float], float]
    gain_floor: float = 1e-12


def saturation(q, delta):
    """Boundary-layer replacement for sgn: clip(q / delta, -1, 1).

    Continuous, odd and non-decreasing in ``q``; equals the sign function
    exactly for |q| >= delta.  Accepts scalars or arrays.
    """
    if delta <= 0.0:
        raise ValueError(f"layer width delta must be positive, got {delta}")
    return np.clip(q / delta, -1.0, 1.0)


def control_action(x1: float, integral_state: float, gains: Gains,
                   regularized: bool = True) -> float:
    """Super-twisting control u = -k1*sqrt(|x1|)*s(x1) + integral_state.

    ``s`` is the layer saturation when ``regularized`` else exact sign.  The
    integral state is maintained by the caller as the integral of
    ``-k2*s(x1)``; keeping it outside makes the law replayable.
    """
    s = saturation(x1, gains.delta) if regularized else np.sign(x1)
    return float(-gains.k1 * math.sqrt(abs(x1)) * s + integral_state)


def feedback_linearize(u: float, plant: PlantFunctions, t: float, y: float) -> float:
    """Map the outer control u onto the plant input: (u - drift) / input_gain."""
    g = plant.input_gain(t, y)
    if abs(g) < plant.gain_floor:
        raise SingularInputGainError(
            f"input gain {g!r} at (t={t}, y={y}) is below the floor {plant.gain_floor}"
        )
    return (u - plant.drift(t, y)) / g


def eval_regularized(state: SimState, gains: Gains, q_at_t: float) -> tuple[float, float]:
    """Regularized closed loop: the simulation ground truth.

    dx1 = -k1*sqrt(|x1|)*sat(x1/delta) + x2
    dx2 = -k2*sat(x1/delta) + q(t)
    """
    s = float(saturation(state.x1, gains.delta))
    dx1 = -gains.k1 * math.sqrt(abs(state.x1)) * s + state.x2
    dx2 = -gains.k2 * s + q_at_t
    return dx1, dx2


def eval_discontinuous(state: SimState, gains: Gains, q_at_t: float) -> tuple[float, float]:
    """Switching closed loop (sgn in place of the layer; sgn(0) = 0).

    Provided for delta -> 0 comparisons; simulate the regularized form.
    """
    s = float(np.sign(state.x1))
    dx1 = -gains.k1 * math.sqrt(abs(state.x1)) * s + state.x2
    dx2 = -gains.k2 * s + q_at_t
    return dx1, dx2


def eval_averaged(chi: SimState, gains: Gains, mean_q: float) -> tuple[float, float]:
    """Period-averaged loop: same field with the rate replaced by its mean."""
    return eval_regularized(chi, gains, mean_q)


def eval_phase(state: PhaseState, gains: Gains, q_at_t: float,
               singularity_floor: float = 1e-9) -> tuple[float, float]:
    """Phase-coordinate form (w1, w2) = (x1, dx1/dt); singular at w1 = 0.

    dw1 = w2
    dw2 = -(k1/2)*|w1|^(-1/2)*w2 - k2*sgn(w1) + q(t)

    Analysis cross-checks only: simulate in (x1, x2) and map instead.
    """
    if abs(state.w1) < singularity_floor:
        raise NearSingularityError(
            f"|w1| = {abs(state.w1)} is below the singularity floor {singularity_floor}"
        )
    dw1 = state.w2
    dw2 = (-0.5 * gains.k1 * state.w2 / math.sqrt(abs(state.w1))
           - gains.k2 * float(np.sign(state.w1)) + q_at_t)
    return dw1, dw2


def regularized_field(gains: Gains, rate: Callable[[float], float]):
    """Closed-loop field (t, (x1, x2)) -> derivatives for the integrator.

    Inlines the layer saturation so a long fixed-step run stays cheap.
    """
    k1, k2, delta = gains.k1, gains.k2, gains.delta
    sqrt = math.sqrt

    def field(t: float, x) -> tuple[float, float]:
        x1, x2 = x
        s = x1 / delta
        if s > 1.0:
            s = 1.0
        elif s < -1.0:
            s = -1.0
        return (-k1 * sqrt(abs(x1)) * s + x2, -k2 * s + rate(t))

    return field


def discontinuous_field(gains: Gains, rate: Callable[[float], float]):
    """Switching counterpart of :func:`regularized_field` (sgn(0) = 0)."""
    k1, k2 = gains.k1, gains.k2
    sqrt = math.sqrt

    def field(t: float, x) -> tuple[float, float]:
        x1, x2 = x
        s = 1.0 if x1 > 0.0 else (-1.0 if x1 < 0.0 else 0.0)
        return (-k1 * sqrt(abs(x1)) * s + x2, -k2 * s + rate(t))

    return field
