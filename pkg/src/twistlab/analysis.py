"""Limit-cycle detection and measurement on recorded trajectories.

Convergence is established empirically through contraction of the
period-strobed samples; no Floquet machinery.  Amplitudes are read off the
recorded samples directly, which at 2000 steps per period resolves the
2-5% tolerances used downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Gains
from .integrator import Trajectory, detect_crossings
from .tuning import RegimeError, cycle_width_bound, tight_width_bound

__all__ = [
    "InsufficientDataError",
    "AperiodicSignalError",
    "LimitCycleReport",
    "BoundRow",
    "BoundTable",
    "default_tolerance",
    "stroboscopic_convergence",
    "cycle_amplitude",
    "estimate_period",
    "scaling_fit",
    "bound_comparison_table",
    "build_report",
]

#: Contractions of the strobe map required in a row before declaring convergence.
CONSECUTIVE_CONTRACTIONS = 3

#: Periods of signal used for period estimation (excludes transients).
PERIOD_WINDOW_CYCLES = 5


class InsufficientDataError(ValueError):
    """Trajectory too short for the requested analysis."""


class AperiodicSignalError(RuntimeError):
    """No significant periodicity found in the signal."""


@dataclass
class LimitCycleReport:
    """Verdict and measurements for one run.

    ``coarse_bound`` is the averaging-based width bound (k2+L)n^2T^2/2;
    ``tight_bound`` its under-tuned refinement, None when the run is not in
    the under-tuned regime or the k1 premise fails.
    """

    converged: bool
    cycle_start_time: float | None = None
    measured_period: float | None = None
    amplitude: float | None = None
    coarse_bound: float | None = None
    tight_bound: float | None = None
    crossings_per_period: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.converged:
            if self.amplitude is not None and self.amplitude < 0.0:
                raise ValueError("amplitude must be non-negative")
            if self.measured_period is not None and self.measured_period <= 0.0:
                raise ValueError("measured_period must be positive")


def default_tolerance(delta: float) -> float:
    """Strobe contraction tolerance: nothing below the boundary layer resolves."""
    return max(10.0 * delta, 1e-6)


def _strobe_stride(traj: Trajectory, period: float) -> int:
    """Record stride corresponding to one forcing period; must divide evenly."""
    sample_dt = traj.sample_dt
    stride = period / sample_dt
    stride_int = round(stride)
    if stride_int < 1 or abs(stride - stride_int) > 1e-6 * max(stride, 1.0):
        raise ValueError(
            f"samples not aligned to the period: T/sample_dt = {stride!r}"
        )
    return stride_int


def stroboscopic_convergence(traj: Trajectory, period: float,
                             tol: float) -> tuple[bool, float | None]:
    """Detect contraction of the once-per-period samples onto a fixed point.

    Converged when the Euclidean distance between consecutive strobe samples
    stays below ``tol`` for three consecutive periods; returns the time of
    the first strobe sample opening such a window.  Requires at least 10
    recorded periods.
    """
    stride = _strobe_stride(traj, period)
    n_periods = (len(traj) - 1) // stride
    if n_periods < 10:
        raise InsufficientDataError(
            f"trajectory covers {n_periods} periods; need at least 10"
        )
    idx = np.arange(0, n_periods + 1) * stride
    pts = np.column_stack((traj.x1[idx], traj.x2[idx]))
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    run = 0
    for k, gap in enumerate(gaps):
        run = run + 1 if gap < tol else 0
        if run >= CONSECUTIVE_CONTRACTIONS:
            start = k - CONSECUTIVE_CONTRACTIONS + 1
            return True, float(traj.t[idx[start]])
    return False, None


def cycle_amplitude(traj: Trajectory, cycle_start_time: float, period: float) -> float:
    """Max |x1| over one period of recorded samples starting at ``cycle_start_time``."""
    lo = np.searchsorted(traj.t, cycle_start_time - 1e-12)
    hi = np.searchsorted(traj.t, cycle_start_time + period + 1e-12)
    if hi - lo < 2:
        raise InsufficientDataError("cycle window contains fewer than two samples")
    return float(np.max(np.abs(traj.x1[lo:hi])))


def estimate_period(samples: np.ndarray, dt: float, min_peak: float = 0.2) -> float:
    """Dominant period via the autocorrelation peak, parabolically refined.

    The search starts past the first non-positive autocorrelation lag so the
    trivial lag-0 peak is excluded.  A normalized peak below ``min_peak``
    (or no interior peak at all) raises :class:`AperiodicSignalError`.
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < 8:
        raise InsufficientDataError("need at least 8 samples to estimate a period")
    x = x - x.mean()
    power = float(np.dot(x, x))
    if power == 0.0:
        raise AperiodicSignalError("signal is constant")
    corr = np.correlate(x, x, mode="full")[len(x) - 1:] / power

    nonpos = np.nonzero(corr <= 0.0)[0]
    if len(nonpos) == 0:
        raise AperiodicSignalError("autocorrelation never decays; no cycle resolved")
    start = int(nonpos[0])
    search = corr[start:len(x) // 2 + 1]
    if len(search) < 3:
        raise AperiodicSignalError("window too short past the autocorrelation decay")
    k = start + int(np.argmax(search))
    if corr[k] < min_peak:
        raise AperiodicSignalError(
            f"strongest autocorrelation peak {corr[k]:.3f} is below {min_peak}"
        )
    if 0 < k < len(corr) - 1:
        denom = corr[k - 1] - 2.0 * corr[k] + corr[k + 1]
        shift = 0.5 * (corr[k - 1] - corr[k + 1]) / denom if denom != 0.0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
    else:
        shift = 0.0
    return (k + shift) * dt


def scaling_fit(points) -> tuple[float, float, float]:
    """Power-law fit amplitude = coefficient * period^exponent on >= 4 points.

    Least squares in log-log space; returns (exponent, coefficient,
    r_squared).  Non-positive periods or amplitudes are a domain error.
    """
    pts = [(float(T), float(amp)) for T, amp in points]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points for a scaling fit, got {len(pts)}")
    if any(T <= 0.0 or amp <= 0.0 for T, amp in pts):
        raise ValueError("scaling fit requires positive periods and amplitudes")
    log_T = np.log([T for T, _ in pts])
    log_a = np.log([amp for _, amp in pts])
    exponent, intercept = np.polyfit(log_T, log_a, 1)
    fitted = exponent * log_T + intercept
    ss_res = float(np.sum((log_a - fitted) ** 2))
    ss_tot = float(np.sum((log_a - log_a.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(exponent), float(math.exp(intercept)), r_squared


@dataclass
class BoundRow:
    label: str
    amplitude: float
    coarse_bound: float
    tight_bound: float | None
    satisfied: bool


@dataclass
class BoundTable:
    """Measured-versus-predicted cycle widths, one row per converged run."""

    rows: list[BoundRow]

    def render(self) -> str:
        header = f"{'label':<16}{'amplitude':>12}{'coarse_bound':>14}{'tight_bound':>13}  ok"
        lines = [header]
        for r in self.rows:
            tight = f"{r.tight_bound:.6g}" if r.tight_bound is not None else "-"
            lines.append(
                f"{r.label:<16}{r.amplitude:>12.6g}{r.coarse_bound:>14.6g}"
                f"{tight:>13}  {'yes' if r.satisfied else 'NO'}"
            )
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("label,amplitude,coarse_bound,tight_bound,satisfied\n")
            for r in self.rows:
                tight = repr(float(r.tight_bound)) if r.tight_bound is not None else ""
                fh.write(
                    f"{r.label},{float(r.amplitude)!r},{float(r.coarse_bound)!r},"
                    f"{tight},{int(r.satisfied)}\n"
                )


def bound_comparison_table(reports, labels) -> BoundTable:
    """Tabulate measured amplitudes against their predicted bounds.

    All reports must be converged; ``satisfied`` flags amplitude <= coarse
    bound.  Empty input yields an empty table.
    """
    rows = []
    for label, report in zip(labels, reports):
        if not report.converged:
            raise ValueError(f"report {label!r} did not converge")
        rows.append(BoundRow(
            label=str(label),
            amplitude=report.amplitude,
            coarse_bound=report.coarse_bound,
            tight_bound=report.tight_bound,
            satisfied=report.amplitude <= report.coarse_bound,
        ))
    return BoundTable(rows=rows)


def build_report(traj: Trajectory, period: float, rate_bound: float, gains: Gains,
                 n: float = 0.5, tol: float | None = None) -> LimitCycleReport:
    """Full per-run measurement: convergence, amplitude, period, bounds, crossings.

    The amplitude is measured over the final recorded period (steady state);
    the measurement window is noted in the report metadata.  The period is
    estimated from the last five periods of the error channel.
    """
    if tol is None:
        tol = default_tolerance(gains.delta)
    converged, start = stroboscopic_convergence(traj, period, tol)

    coarse = cycle_width_bound(gains.k2, rate_bound, n, period)
    tight = None
    if rate_bound > gains.k2:
        try:
            tight = tight_width_bound(gains.k1, gains.k2, rate_bound, n, period)
        except RegimeError:
            tight = None

    if not converged:
        return LimitCycleReport(
            converged=False, coarse_bound=coarse, tight_bound=tight,
            metadata={"tolerance": tol, "forcing_period": period, "rate_bound": rate_bound},
        )

    t_end = float(traj.t[-1])
    window_start = t_end - period
    amplitude = cycle_amplitude(traj, window_start, period)

    tail = traj.t >= t_end - PERIOD_WINDOW_CYCLES * period - 1e-12
    try:
        measured_period = estimate_period(traj.x1[tail], traj.sample_dt)
    except AperiodicSignalError:
        measured_period = None

    crossings = detect_crossings(traj, "x1")
    per_cycle = sum(1 for tc, _ in crossings if window_start <= tc <= t_end)

    return LimitCycleReport(
        converged=True,
        cycle_start_time=start,
        measured_period=measured_period,
        amplitude=amplitude,
        coarse_bound=coarse,
        tight_bound=tight,
        crossings_per_period=per_cycle,
        metadata={
            "tolerance": tol,
            "forcing_period": period,
            "rate_bound": rate_bound,
            "amplitude_window": (window_start, t_end),
            "amplitude_window_note": "one steady-state period at the end of the run",
        },
    )
