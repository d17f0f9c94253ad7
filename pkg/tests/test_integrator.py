"""Fixed-step integrator and crossing-detector tests."""

import math

import numpy as np
import pytest

from twistlab.dynamics import Gains, regularized_field
from twistlab.integrator import (DivergenceError, IntegrationConfig,
                                 Trajectory, detect_crossings, integrate,
                                 rk4_solve)


def _make_traj(t, x1, metadata=None):
    zeros = np.zeros_like(t)
    return Trajectory(t=np.asarray(t, float), x1=np.asarray(x1, float),
                      x2=zeros.copy(), u=zeros.copy(), d=zeros.copy(), q=zeros.copy(),
                      metadata={"dt": float(t[1] - t[0]), "record_stride": 1,
                                **(metadata or {})})


def test_linear_drift():
    cfg = IntegrationConfig(dt=1e-3, t_end=1.0)
    traj = integrate(lambda t, x: (x[1], 0.0), (0.0, 1.0), cfg)
    assert traj.x1[-1] == pytest.approx(1.0, abs=1e-10)


def test_exponential_decay():
    cfg = IntegrationConfig(dt=1e-3, t_end=1.0)
    traj = integrate(lambda t, x: (-x[0], -x[1]), (1.0, 1.0), cfg)
    assert traj.x1[-1] == pytest.approx(math.exp(-1.0), abs=1e-8)
    assert traj.x2[-1] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_overtuned_loop_reaches_layer():
    """With k2 above the rate bound the error ends delta-close to zero.

    Cross-checked against a halved-step integration of the same loop.
    """
    gains = Gains(k1=9.04, k2=13.2, delta=1e-4)
    L, T = 12.0, 0.35
    w = 2 * math.pi / T
    rate = lambda t: L * math.sin(w * t)
    field = regularized_field(gains, rate)
    coarse = integrate(field, (1.0, 0.0), IntegrationConfig.for_period(T, 2000, 12))
    fine = integrate(field, (1.0, 0.0), IntegrationConfig.for_period(T, 4000, 12))
    assert abs(coarse.x1[-1]) < 10 * gains.delta
    assert abs(fine.x1[-1]) < 10 * gains.delta
    assert abs(coarse.x1[-1] - fine.x1[-1]) < gains.delta


def test_determinism():
    cfg = IntegrationConfig(dt=1e-3, t_end=0.5)
    field = lambda t, x: (x[1], -math.sin(x[0]) - 0.3 * x[1] + math.cos(5 * t))
    a = integrate(field, (0.4, -0.2), cfg)
    b = integrate(field, (0.4, -0.2), cfg)
    assert np.array_equal(a.x1, b.x1)
    assert np.array_equal(a.x2, b.x2)
    assert np.array_equal(a.t, b.t)


def test_rk4_order():
    """Halving the step shrinks the terminal error about sixteen-fold."""
    field = lambda t, x: (x[1], -x[0])
    exact = (math.cos(1.0), -math.sin(1.0))
    errors = []
    for n in (50, 100, 200):
        _, states = rk4_solve(field, (1.0, 0.0), 0.0, 1.0 / n, n)
        errors.append(math.hypot(states[-1, 0] - exact[0], states[-1, 1] - exact[1]))
    assert errors[0] / errors[1] == pytest.approx(16.0, abs=3.0)
    assert errors[1] / errors[2] == pytest.approx(16.0, abs=3.0)


def test_divergence_error_carries_time():
    with pytest.raises(DivergenceError) as info:
        integrate(lambda t, x: (x[0] * x[0], 0.0), (1.0, 0.0),
                  IntegrationConfig(dt=1e-3, t_end=2.0))
    assert 0.0 < info.value.time <= 2.0


def test_records_are_finite_and_uniform():
    cfg = IntegrationConfig(dt=1e-3, t_end=0.4, record_stride=4)
    traj = integrate(lambda t, x: (x[1], -x[0]), (1.0, 0.0), cfg)
    assert len(traj) == 101
    assert np.all(np.isfinite(traj.x1)) and np.all(np.isfinite(traj.x2))
    spacing = np.diff(traj.t)
    assert np.allclose(spacing, 4e-3, rtol=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegrationConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        IntegrationConfig(dt=1e-3, t_end=-1.0)
    with pytest.raises(ValueError):
        IntegrationConfig(dt=1e-3, t_end=1.0, record_stride=3)  # 1000 % 3 != 0
    with pytest.warns(UserWarning):
        IntegrationConfig.for_period(1.0, steps_per_period=100, periods=2)


def test_for_period_alignment():
    cfg = IntegrationConfig.for_period(0.35, steps_per_period=2000, periods=7)
    assert cfg.n_steps == 14000
    assert cfg.n_steps * cfg.dt == pytest.approx(7 * 0.35, rel=1e-12)


def test_csv_round_trip(tmp_path):
    cfg = IntegrationConfig(dt=1e-3, t_end=0.1)
    traj = integrate(lambda t, x: (x[1], -x[0]), (1.0, 0.0), cfg,
                     channels=lambda t, X: {"u": np.sin(t), "d": t, "q": 0 * t})
    path = tmp_path / "trajectory.csv"
    traj.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "t,x1,x2,u,d,q"
    assert np.array_equal(data[:, 0], traj.t)
    assert np.array_equal(data[:, 1], traj.x1)
    assert np.array_equal(data[:, 3], traj.u)


def test_detect_crossings_sine():
    t = np.linspace(0.0, 1.05, 2101)
    crossings = detect_crossings(_make_traj(t, np.sin(2 * math.pi * t)))
    assert len(crossings) == 2
    (t1, d1), (t2, d2) = crossings
    assert t1 == pytest.approx(0.5, abs=1e-3)
    assert t2 == pytest.approx(1.0, abs=1e-3)
    assert (d1, d2) == (-1, 1)


def test_detect_crossings_all_positive():
    t = np.linspace(0.0, 1.0, 101)
    assert detect_crossings(_make_traj(t, np.cos(t) + 2.0)) == []


def test_detect_crossings_coalesces_layer_chatter():
    """Wiggles that stay inside the layer collapse to one event."""
    delta = 0.1
    t = np.arange(30) * 0.01
    x = np.concatenate([
        np.full(10, 1.0),                                # solidly positive
        0.02 * np.array([1, -1, 1, -1, 1, -1, 1, -1, 1, -1.0]),  # chatter inside layer
        np.full(10, -1.0),                               # solidly negative
    ])
    traj = _make_traj(t, x, metadata={"delta": delta})
    events = detect_crossings(traj)
    assert len(events) == 1
    assert events[0][1] == -1
    # without layer metadata every wiggle counts
    assert len(detect_crossings(traj, layer_width=0.0)) == 9


def test_trajectory_validation():
    t = np.array([0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        _make_traj(t, np.zeros(3))
    with pytest.raises(ValueError):
        Trajectory(t=np.array([0.0, 1.0]), x1=np.zeros(3), x2=np.zeros(2),
                   u=np.zeros(2), d=np.zeros(2), q=np.zeros(2), metadata={"dt": 1.0})
