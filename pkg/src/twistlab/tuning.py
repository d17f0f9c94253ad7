"""Closed-form gain and bound calculus for the super-twisting loop.

Covers both regimes: finite-time tuning (integral gain above the rate
bound) and the under-tuned regime, where the loop settles on a periodic
cycle whose width can be budgeted against an accuracy target instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dynamics import Gains, default_layer_width

__all__ = [
    "AccuracySpec",
    "InfeasibleSpecError",
    "RegimeError",
    "finite_time_gains",
    "check_averaged_conditions",
    "cycle_width_bound",
    "tight_bound_feasible",
    "tight_width_bound",
    "tune_k2",
    "optimize_gains",
]


class InfeasibleSpecError(ValueError):
    """No gain pair can satisfy the requested accuracy specification."""


class RegimeError(ValueError):
    """Operation called outside the regime where its formula is valid."""


@dataclass(frozen=True)
class AccuracySpec:
    """Accuracy target: keep |x1| below eta against a (rate_bound, period) forcing.

    ``n`` is the fraction of a period a trajectory may spend on one side of
    the error axis; 1/2 is the safe default used throughout.
    """

    eta: float
    rate_bound: float
    period: float
    n: float = 0.5

    def __post_init__(self) -> None:
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (0.0 < self.n <= 0.5):
            raise ValueError(f"n must lie in (0, 0.5], got {self.n}")
        if not (self.rate_bound > 0.0 and math.isfinite(self.rate_bound)):
            raise ValueError(f"rate_bound must be positive, got {self.rate_bound}")
        if not (self.period > 0.0 and math.isfinite(self.period)):
            raise ValueError(f"period must be positive, got {self.period}")


def finite_time_gains(rate_bound: float, margin: float = 1.1,
                      delta: float | None = None) -> Gains:
    """Gains that make the origin finite-time stable: k2 = margin*L, k1 = 1.8*sqrt(k2+L).

    ``margin`` must exceed 1 strictly; the default 1.1 reproduces the usual
    10% headroom over the rate bound.
    """
    if rate_bound <= 0.0:
        raise ValueError(f"rate_bound must be positive, got {rate_bound}")
    if margin <= 1.0:
        raise ValueError(f"margin must exceed 1 for finite-time convergence, got {margin}")
    k2 = margin * rate_bound
    k1 = 1.8 * math.sqrt(k2 + rate_bound)
    return Gains(k1=k1, k2=k2, delta=default_layer_width() if delta is None else delta)


def check_averaged_conditions(gains: Gains, mean_rate: float) -> bool:
    """Sufficient conditions on the period-averaged loop for cycle convergence.

    True iff k2 > |mean_rate| and k1 >= 1.8*sqrt(k2 + |mean_rate|).  These are
    sufficient only; loops violating the k1 part are routinely observed to
    converge, so callers should report rather than enforce this flag.
    """
    m = abs(mean_rate)
    return gains.k2 > m and gains.k1 >= 1.8 * math.sqrt(gains.k2 + m)


def cycle_width_bound(k2: float, rate_bound: float, n: float, period: float) -> float:
    """Cycle width bound (k2 + L) * n^2 * T^2 / 2 from period averaging.

    Grows with the integral gain and the rate bound, shrinks quadratically
    with the forcing period: faster perturbations average out better.
    """
    if not (0.0 < n <= 0.5):
        raise ValueError(f"n must lie in (0, 0.5], got {n}")
    if period <= 0.0:
        raise ValueError(f"period must be positive, got {period}")
    return 0.5 * (k2 + rate_bound) * n * n * period * period


def tight_bound_feasible(k1: float, k2: float, rate_bound: float) -> bool:
    """Whether k1 > sqrt(2*(L - k2)), the premise of the tight width bound.

    Only meaningful in the under-tuned regime L > k2; otherwise raises
    :class:`RegimeError` (use the finite-time analysis instead).
    """
    if rate_bound <= k2:
        raise RegimeError(
            f"rate bound {rate_bound} does not exceed k2 = {k2}; not under-tuned"
        )
    return k1 > math.sqrt(2.0 * (rate_bound - k2))


def tight_width_bound(k1: float, k2: float, rate_bound: float, n: float, period: float) -> float:
    """Non-conservative cycle width bound for an under-tuned loop.

        k1^4 * (L - k2)^2 * n^2 * T^2 / (k1^2 - 2*(L - k2))^2

    Requires the under-tuned regime and the k1 premise checked by
    :func:`tight_bound_feasible`.
    """
    if not (0.0 < n <= 0.5):
        raise ValueError(f"n must lie in (0, 0.5], got {n}")
    if period <= 0.0:
        raise ValueError(f"period must be positive, got {period}")
    if not tight_bound_feasible(k1, k2, rate_bound):
        raise RegimeError(
            f"k1 = {k1} does not exceed sqrt(2*(L - k2)) = "
            f"{math.sqrt(2.0 * (rate_bound - k2)):.6g}; tight bound invalid"
        )
    excess = rate_bound - k2
    denom = k1 * k1 - 2.0 * excess
    return (k1 ** 4) * excess * excess * n * n * period * period / (denom * denom)


def tune_k2(k1: float, spec: AccuracySpec) -> float:
    """Smallest integral gain meeting an accuracy spec for a fixed k1.

        k2 = L - sqrt(eta) * k1^2 / (2*sqrt(eta) + k1*n*T)

    Closed form of the tight-bound inversion used in the actuator-limited
    workflow (cap k1, solve for k2).  The tight bound evaluated at the
    returned pair comes out as eta * k1^2, so the result meets the spec with
    margin whenever k1 <= 1; for larger k1 verify with
    :func:`tight_width_bound` or use :func:`optimize_gains`, which re-checks
    the bound explicitly.  Callers should also re-verify
    :func:`tight_bound_feasible` and k2 > 0.
    """
    if k1 <= 0.0:
        raise ValueError(f"k1 must be positive, got {k1}")
    root_eta = math.sqrt(spec.eta)
    k2 = spec.rate_bound - root_eta * k1 * k1 / (2.0 * root_eta + k1 * spec.n * spec.period)
    if k2 <= 0.0:
        raise InfeasibleSpecError(
            f"accuracy eta={spec.eta} with k1={k1} needs k2={k2:.6g} <= 0; "
            "raise k1 or relax the spec"
        )
    return k2


def _feasible_pair(k1: float, spec: AccuracySpec) -> tuple[float, float] | None:
    """k2 and the tight bound for one k1 candidate, or None when infeasible."""
    try:
        k2 = tune_k2(k1, spec)
    except InfeasibleSpecError:
        return None
    if spec.rate_bound <= k2:
        return None
    if not tight_bound_feasible(k1, k2, spec.rate_bound):
        return None
    bound = tight_width_bound(k1, k2, spec.rate_bound, spec.n, spec.period)
    if bound > spec.eta * (1.0 + 1e-12):
        return None
    return k2, bound


def optimize_gains(spec: AccuracySpec, k1_max: float, objective: str = "k2",
                   grid: int = 200) -> Gains:
    """Deterministic grid-plus-refinement gain search against an accuracy spec.

    Candidates are k1 values in (0, k1_max]; each gets its k2 from
    :func:`tune_k2` and survives only if the tight width bound holds at or
    below eta with k2 > 0 in the under-tuned regime.

    ``objective`` selects what to minimize among survivors:

    * ``"k2"`` (default): smallest integral gain, i.e. least switching
      aggressiveness.  Since k2 falls as k1 rises, this drives k1 to the
      actuation cap, matching the cap-k1-solve-k2 workflow.
    * ``"k1"``: smallest sqrt-term gain, i.e. least proportional actuation.

    Ties break toward smaller k1, then smaller k2.  Raises
    :class:`InfeasibleSpecError` when no candidate survives.
    """
    if k1_max <= 0.0:
        raise ValueError(f"k1_max must be positive, got {k1_max}")
    if objective not in ("k1", "k2"):
        raise ValueError(f"unknown objective {objective!r}; expected 'k1' or 'k2'")

    def search(lo: float, hi: float) -> tuple[float, float] | None:
        best: tuple[float, float, float] | None = None  # (score, k1, k2)
        for i in range(1, grid + 1):
            k1 = lo + (hi - lo) * i / grid
            if not 0.0 < k1 <= k1_max:
                continue
            pair = _feasible_pair(k1, spec)
            if pair is None:
                continue
            k2, _ = pair
            score = k1 if objective == "k1" else k2
            if best is None or score < best[0] - 1e-15 or (
                    abs(score - best[0]) <= 1e-15
                    and (k1 < best[1] or (k1 == best[1] and k2 < best[2]))):
                best = (score, k1, k2)
        return None if best is None else (best[1], best[2])

    coarse = search(0.0, k1_max)
    if coarse is None:
        raise InfeasibleSpecError(
            f"no feasible (k1, k2) with k1 <= {k1_max} for eta={spec.eta}, "
            f"L={spec.rate_bound}, T={spec.period}"
        )
    cell = k1_max / grid
    refined = search(max(0.0, coarse[0] - cell), min(k1_max, coarse[0] + cell))
    k1, k2 = refined if refined is not None else coarse
    return Gains(k1=k1, k2=k2, delta=default_layer_width(spec.eta))
