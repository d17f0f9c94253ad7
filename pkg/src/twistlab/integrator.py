"""Deterministic fixed-step RK4 integration with dense records.

Fixed stepping is deliberate: the regularized loop has a steep but bounded
slope inside the boundary layer, and period-map analysis needs samples that
land exactly on multiples of the perturbation period.  Adaptive stepping
would break both.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import SimState

__all__ = [
    "DivergenceError",
    "IntegrationConfig",
    "Trajectory",
    "rk4_solve",
    "integrate",
    "detect_crossings",
]

CSV_HEADER = "t,x1,x2,u,d,q"


class DivergenceError(RuntimeError):
    """A state component became non-finite; carries the blow-up time."""

    def __init__(self, time: float):
        super().__init__(f"integration diverged at t={time:g}")
        self.time = time


@dataclass(frozen=True)
class IntegrationConfig:
    """Step size, horizon and record decimation for one integration run."""

    dt: float
    t_end: float
    record_stride: int = 1

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.record_stride < 1 or self.record_stride != int(self.record_stride):
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        if self.n_steps < 1:
            raise ValueError("horizon shorter than one step")
        if self.n_steps % self.record_stride != 0:
            raise ValueError(
                f"step count {self.n_steps} is not a multiple of record_stride {self.record_stride}"
            )

    @property
    def n_steps(self) -> int:
        """Realised step count; the horizon is n_steps * dt."""
        return round(self.t_end / self.dt)

    @classmethod
    def for_period(cls, period: float, steps_per_period: int = 2000,
                   periods: int = 20, record_stride: int = 1) -> "IntegrationConfig":
        """Config aligned to a forcing period: dt = period / steps_per_period.

        Samples then land exactly on period multiples, which the stroboscopic
        map requires.  A step coarser than period/200 draws a warning.
        """
        if steps_per_period < 1 or periods < 1:
            raise ValueError("steps_per_period and periods must be positive")
        if steps_per_period < 200:
            warnings.warn(
                f"dt = T/{steps_per_period} is coarser than T/200; "
                "the boundary layer may be under-resolved",
                stacklevel=2,
            )
        dt = period / steps_per_period
        n_steps = steps_per_period * periods
        return cls(dt=dt, t_end=n_steps * dt, record_stride=record_stride)


@dataclass
class Trajectory:
    """Uniformly sampled run record with control and disturbance channels.

    ``u`` holds the input actually applied to the plant (the inner
    super-twisting action for reduced-loop runs, the motor torque command
    for virtual-motor runs).  ``extras`` carries channels outside the
    canonical CSV schema, e.g. the motor's omega/theta.
    """

    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u: np.ndarray
    d: np.ndarray
    q: np.ndarray
    metadata: dict
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.t)
        for name in ("x1", "x2", "u", "d", "q"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"channel {name} length mismatch")
        if n >= 2 and not np.all(np.diff(self.t) > 0.0):
            raise ValueError("time stamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def sample_dt(self) -> float:
        """Spacing between records (record_stride * dt)."""
        return float(self.metadata["dt"] * self.metadata.get("record_stride", 1))

    def channel(self, name: str) -> np.ndarray:
        if name in ("t", "x1", "x2", "u", "d", "q"):
            return getattr(self, name)
        return self.extras[name]

    def to_csv(self, path) -> None:
        """Write the canonical `t,x1,x2,u,d,q` table (shortest round-trip floats)."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in zip(self.t, self.x1, self.x2, self.u, self.d, self.q):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def rk4_solve(field: Callable, x0: Sequence[float], t0: float, dt: float,
              n_steps: int, record_stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 over ``n_steps`` fixed steps; returns (times, states).

    ``field(t, x)`` receives the state as a tuple and returns the derivative
    tuple.  Pure Python floats in the hot loop keep a 2-state step near 2 us.
    Raises :class:`DivergenceError` as soon as a component goes non-finite.
    """
    x = tuple(float(v) for v in x0)
    m = len(x)
    n_records = n_steps // record_stride + 1
    times = np.empty(n_records)
    states = np.empty((n_records, m))
    times[0] = t0
    states[0] = x

    half = 0.5 * dt
    sixth = dt / 6.0
    isfinite = math.isfinite
    rec = 1
    for k in range(n_steps):
        t = t0 + k * dt
        a = field(t, x)
        b = field(t + half, tuple(x[i] + half * a[i] for i in range(m)))
        c = field(t + half, tuple(x[i] + half * b[i] for i in range(m)))
        e = field(t + dt, tuple(x[i] + dt * c[i] for i in range(m)))
        x = tuple(x[i] + sixth * (a[i] + 2.0 * (b[i] + c[i]) + e[i]) for i in range(m))
        for v in x:
            if not isfinite(v):
                raise DivergenceError(t + dt)
        if (k + 1) % record_stride == 0:
            times[rec] = t0 + (k + 1) * dt
            states[rec] = x
            rec += 1
    return times, states


def integrate(field: Callable, x0, cfg: IntegrationConfig,
              channels: Callable[[np.ndarray, np.ndarray], dict] | None = None,
              metadata: dict | None = None) -> Trajectory:
    """Integrate a planar field and package the run as a :class:`Trajectory`.

    ``x0`` may be a :class:`SimState` (its time stamp becomes t0) or a plain
    ``(x1, x2)`` pair starting at t = 0.  ``channels(t, X)`` may supply the
    u/d/q channels (vectorized, evaluated on the records); any other keys it
    returns are stored under ``extras``.  Channels default to zeros.
    """
    if isinstance(x0, SimState):
        t0, start = x0.t, (x0.x1, x0.x2)
    else:
        t0, start = 0.0, tuple(float(v) for v in x0)
    if len(start) != 2:
        raise ValueError("integrate expects a planar state; use rk4_solve for other sizes")

    times, states = rk4_solve(field, start, t0, cfg.dt, cfg.n_steps, cfg.record_stride)
    x1 = states[:, 0].copy()
    x2 = states[:, 1].copy()

    derived = dict(channels(times, states)) if channels is not None else {}
    u = np.asarray(derived.pop("u", np.zeros_like(times)), dtype=float)
    d = np.asarray(derived.pop("d", np.zeros_like(times)), dtype=float)
    q = np.asarray(derived.pop("q", np.zeros_like(times)), dtype=float)
    extras = {k: np.asarray(v, dtype=float) for k, v in derived.items()}

    meta = {"dt": cfg.dt, "record_stride": cfg.record_stride, "t0": t0}
    if metadata:
        meta.update(metadata)
    return Trajectory(t=times, x1=x1, x2=x2, u=u, d=d, q=q, metadata=meta, extras=extras)


def detect_crossings(traj: Trajectory, component: str = "x1",
                     layer_width: float | None = None) -> list[tuple[float, int]]:
    """Linear-interpolated zero crossings of a channel, as (time, direction).

    ``direction`` is the sign of the channel after the crossing.  Crossing
    clusters whose intermediate samples stay inside the boundary layer
    (|value| < layer_width for more than one step) are coalesced into a
    single event: that chatter is a regularization artifact, not cycle
    structure.  ``layer_width`` defaults to the trajectory's ``delta``
    metadata when present.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    values = traj.channel(component)
    t = traj.t
    if layer_width is None:
        layer_width = float(traj.metadata.get("delta", 0.0))

    raw: list[tuple[float, int, int, int]] = []  # (t_cross, direction, left, right)
    last_sign = 0.0
    last_idx = 0
    for i, v in enumerate(values):
        s = 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0)
        if s == 0.0:
            continue
        if last_sign != 0.0 and s != last_sign:
            a, b = last_idx, i
            # root of the linear interpolant between the bracketing samples
            frac = values[a] / (values[a] - values[b])
            raw.append((float(t[a] + frac * (t[b] - t[a])), int(s), a, b))
        last_sign = s
        last_idx = i

    if not raw or layer_width <= 0.0:
        return [(tc, dirn) for tc, dirn, _, _ in raw]

    # merge consecutive crossings whose whole span stays inside the layer:
    # such a dwell lasts more than one step and is chatter, not structure
    events: list[tuple[float, int]] = []
    group_start = 0
    for j in range(1, len(raw) + 1):
        if j < len(raw):
            span = values[raw[j - 1][2]:raw[j][3] + 1]
            if np.all(np.abs(span) < layer_width):
                continue
        events.append((raw[group_start][0], raw[j - 1][1]))
        group_start = j
    return events
