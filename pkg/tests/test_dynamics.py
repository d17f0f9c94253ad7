"""Control-law and vector-field unit tests."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from twistlab.dynamics import (Gains, NearSingularityError, PhaseState,
                               PlantFunctions, SimState,
                               SingularInputGainError, control_action,
                               default_layer_width, eval_averaged,
                               eval_discontinuous, eval_phase,
                               eval_regularized, feedback_linearize,
                               regularized_field, saturation)
from twistlab.integrator import IntegrationConfig, integrate

GAINS = Gains(k1=0.9, k2=11.65, delta=1e-4)


def test_saturation_examples():
    """Interior slope, saturation, and the exact boundary point."""
    assert saturation(0.5, 1.0) == 0.5
    assert saturation(2.0, 1.0) == 1.0
    assert saturation(-0.5, 0.5) == -1.0


def test_saturation_rejects_bad_delta():
    with pytest.raises(ValueError):
        saturation(0.1, 0.0)
    with pytest.raises(ValueError):
        saturation(0.1, -1e-3)


def test_saturation_properties():
    """Odd, non-decreasing, bounded by 1, equals sgn outside the layer."""
    rng = np.random.default_rng(7)
    for _ in range(200):
        delta = rng.uniform(1e-6, 2.0)
        q = rng.uniform(-5.0, 5.0)
        s = saturation(q, delta)
        assert -1.0 <= s <= 1.0
        assert saturation(-q, delta) == -s
        if abs(q) >= delta:
            assert s == np.sign(q)
    grid = np.linspace(-3.0, 3.0, 301)
    values = saturation(grid, 0.7)
    assert np.all(np.diff(values) >= 0.0)


def test_control_action_examples():
    assert control_action(0.0, 0.0, GAINS) == 0.0
    assert control_action(1.0, 0.0, GAINS) == pytest.approx(-0.9)
    assert control_action(4.0, 1.0, GAINS) == pytest.approx(-0.8)
    # switching variant agrees outside the layer
    assert control_action(4.0, 1.0, GAINS, regularized=False) == pytest.approx(-0.8)


def test_feedback_linearize():
    identity = PlantFunctions(drift=lambda t, y: 0.0, input_gain=lambda t, y: 1.0)
    assert feedback_linearize(5.0, identity, 0.0, 0.0) == 5.0
    affine = PlantFunctions(drift=lambda t, y: 2.0, input_gain=lambda t, y: 2.0)
    assert feedback_linearize(0.0, affine, 0.0, 0.0) == -1.0
    singular = PlantFunctions(drift=lambda t, y: 0.0, input_gain=lambda t, y: 0.0)
    with pytest.raises(SingularInputGainError):
        feedback_linearize(1.0, singular, 0.0, 0.0)


def test_eval_regularized_examples():
    assert eval_regularized(SimState(0.0, 0.0, 0.0), GAINS, 0.0) == (0.0, 0.0)
    dx1, dx2 = eval_regularized(SimState(0.0, 1.0, 0.0), GAINS, 0.0)
    assert dx1 == pytest.approx(-0.9)
    assert dx2 == pytest.approx(-11.65)
    # interior of the boundary layer: saturation at one half
    delta = GAINS.delta
    L = 12.0
    dx1, dx2 = eval_regularized(SimState(0.0, delta / 2, 1.0), GAINS, L)
    assert dx1 == pytest.approx(-0.9 * math.sqrt(delta / 2) * 0.5 + 1.0)
    assert dx2 == pytest.approx(-0.5 * 11.65 + L)


def test_eval_discontinuous_examples():
    assert eval_discontinuous(SimState(0.0, 1.0, 0.0), GAINS, 0.0) == pytest.approx((-0.9, -11.65))
    assert eval_discontinuous(SimState(0.0, -1.0, 0.0), GAINS, 0.0) == pytest.approx((0.9, 11.65))
    # sgn(0) = 0 convention: only the rate survives at x1 = 0
    dx1, dx2 = eval_discontinuous(SimState(0.0, 0.0, 0.3), GAINS, 4.2)
    assert dx1 == 0.3
    assert dx2 == 4.2


def test_regularized_matches_discontinuous_outside_layer():
    """The layer approximation is exact once delta < |x1|."""
    rng = np.random.default_rng(11)
    for _ in range(200):
        x1 = rng.uniform(-3.0, 3.0)
        if abs(x1) < 1e-3:
            continue
        x2 = rng.uniform(-5.0, 5.0)
        q = rng.uniform(-20.0, 20.0)
        gains = Gains(k1=rng.uniform(0.1, 5.0), k2=rng.uniform(0.1, 20.0),
                      delta=abs(x1) * 0.5)
        state = SimState(0.0, x1, x2)
        assert eval_regularized(state, gains, q) == eval_discontinuous(state, gains, q)


def test_odd_symmetry():
    """eval_regularized(-x, -q) = -eval_regularized(x, q) componentwise."""
    rng = np.random.default_rng(3)
    for _ in range(200):
        state = SimState(0.0, rng.uniform(-2, 2), rng.uniform(-5, 5))
        q = rng.uniform(-15, 15)
        fwd = eval_regularized(state, GAINS, q)
        mirrored = eval_regularized(SimState(0.0, -state.x1, -state.x2), GAINS, -q)
        assert mirrored[0] == pytest.approx(-fwd[0], abs=1e-15)
        assert mirrored[1] == pytest.approx(-fwd[1], abs=1e-15)


def test_eval_averaged_constant_rate():
    """With a constant rate the averaged field is the regularized field."""
    state = SimState(0.0, 0.0, 0.0)
    assert eval_averaged(state, GAINS, 0.0) == (0.0, 0.0)
    state = SimState(0.0, 0.37, -1.2)
    assert eval_averaged(state, GAINS, 3.3) == eval_regularized(state, GAINS, 3.3)


def test_eval_averaged_quadrature_oracle():
    """Time average of the forced field at a frozen state equals the averaged field.

    Oracle: numeric quadrature of each component over one period of a
    zero-mean sinusoidal rate.
    """
    x1, x2 = 0.3, -0.7
    L, T = 12.0, 0.25
    state = SimState(0.0, x1, x2)

    def component(i):
        def f(t):
            return eval_regularized(state, GAINS, L * math.sin(2 * math.pi * t / T))[i]
        return f

    mean_dx1 = quad(component(0), 0.0, T, epsrel=1e-10)[0] / T
    mean_dx2 = quad(component(1), 0.0, T, epsrel=1e-10)[0] / T
    averaged = eval_averaged(state, GAINS, 0.0)
    assert averaged[0] == pytest.approx(mean_dx1, abs=1e-9)
    assert averaged[1] == pytest.approx(mean_dx2, abs=1e-9)


def test_eval_phase_examples():
    dw1, dw2 = eval_phase(PhaseState(1.0, 0.0), GAINS, 0.0)
    assert (dw1, dw2) == (0.0, pytest.approx(-11.65))
    gains = Gains(k1=2.0, k2=1.0)
    assert eval_phase(PhaseState(1.0, 2.0), gains, 0.0) == pytest.approx((2.0, -3.0))
    with pytest.raises(NearSingularityError):
        eval_phase(PhaseState(1e-12, 0.0), GAINS, 0.0)


def test_phase_state_consistency_along_trajectory():
    """(x1, dx1) from a simulated loop obeys the phase form where |x1| >> delta.

    w2 is reconstructed from the recorded channels (it equals dx1 exactly);
    its finite-difference slope must match the phase-form dw2.
    """
    gains = Gains(k1=3.6, k2=6.0, delta=1e-6)
    L, T = 12.0, 0.4
    w = 2 * math.pi / T
    cfg = IntegrationConfig.for_period(T, 4000, 20)
    traj = integrate(regularized_field(gains, lambda t: L * math.sin(w * t)),
                     (0.0, 0.0), cfg)
    x1 = traj.x1
    s = np.asarray(saturation(x1, gains.delta))
    w2 = -gains.k1 * np.sqrt(np.abs(x1)) * s + traj.x2
    dt = traj.sample_dt
    dw2_fd = (w2[2:] - w2[:-2]) / (2 * dt)
    q = L * np.sin(w * traj.t)

    amplitude = np.abs(x1).max()
    scale = np.abs(dw2_fd).max()
    checked = 0
    for i in range(1 + len(x1) // 2, len(x1) - 1):
        if abs(x1[i]) < 0.05 * amplitude:
            continue
        dw1, dw2 = eval_phase(PhaseState(float(x1[i]), float(w2[i])),
                              gains, float(q[i]))
        assert dw1 == w2[i]
        assert abs(dw2 - dw2_fd[i - 1]) < 2e-3 * scale
        checked += 1
    assert checked > 1000


def test_gains_validation():
    for bad in ({"k1": 0.0, "k2": 1.0}, {"k1": 1.0, "k2": -1.0},
                {"k1": 1.0, "k2": 1.0, "delta": 0.0}):
        with pytest.raises(ValueError):
            Gains(**bad)


def test_state_validation():
    with pytest.raises(ValueError):
        SimState(0.0, math.inf, 0.0)
    with pytest.raises(ValueError):
        PhaseState(math.nan, 0.0)


def test_default_layer_width():
    assert default_layer_width() == 1e-4
    assert default_layer_width(0.2) == 1e-4          # min(1e-4, 2e-4)
    assert default_layer_width(0.05) == pytest.approx(5e-5)
    with pytest.raises(ValueError):
        default_layer_width(0.0)
