"""Virtual motor experiment: the speed loop closed on simulated rotor dynamics.

The rotor obeys J*domega/dt = u0 + d(omega, theta) with d from the
friction-plus-cogging model; the speed error e = omega - omega_r is driven
by the super-twisting law through feedback linearization.  Sliding-mode
differentiation then reconstructs d and its rate from the recorded signals
alone, the same way one would on hardware where d is not measurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Gains, PlantFunctions, feedback_linearize, saturation
from .integrator import DivergenceError, IntegrationConfig, Trajectory, rk4_solve
from .signals import FrictionCoggingModel, MotionProfile

__all__ = [
    "MotorModel",
    "DifferentiatorConfig",
    "simulate_motor_loop",
    "robust_differentiate",
    "reconstruct_disturbance",
]


@dataclass(frozen=True)
class MotorModel:
    """Rotor inertia, load-torque model and measurement options.

    Inertia defaults to 1.0 (normalized): only gain/bound ratios matter, so
    torque-like quantities then share the error's units.  Encoder
    quantization is off by default; switching it on re-routes the controller
    through a backward-differenced velocity estimate without touching the
    baseline physics.
    """

    inertia: float = 1.0
    friction_cogging: FrictionCoggingModel = FrictionCoggingModel()
    encoder_quantum: float = 0.0        # position LSB in rad; 0 disables
    velocity_window: int = 1            # samples for backward differencing

    def __post_init__(self) -> None:
        if self.inertia <= 0.0:
            raise ValueError(f"inertia must be positive, got {self.inertia}")
        if self.encoder_quantum < 0.0:
            raise ValueError("encoder_quantum must be non-negative")
        if self.velocity_window < 1:
            raise ValueError("velocity_window must be at least 1")


@dataclass(frozen=True)
class DifferentiatorConfig:
    """Sliding-mode differentiator gains sized from a Lipschitz bound.

    ``rate_bound`` estimates the Lipschitz constant of the derivative being
    recovered (i.e. a bound on the second derivative of the input signal).
    """

    lambda1: float
    lambda2: float
    rate_bound: float

    def __post_init__(self) -> None:
        if self.lambda1 <= 0.0 or self.lambda2 <= 0.0:
            raise ValueError("differentiator gains must be positive")

    @classmethod
    def from_rate_bound(cls, rate_bound: float) -> "DifferentiatorConfig":
        """Standard sizing: lambda1 = 1.5*sqrt(C), lambda2 = 1.1*C."""
        if rate_bound <= 0.0:
            raise ValueError(f"rate_bound must be positive, got {rate_bound}")
        return cls(lambda1=1.5 * math.sqrt(rate_bound), lambda2=1.1 * rate_bound,
                   rate_bound=rate_bound)


def _error_plant(motor: MotorModel, reference: MotionProfile) -> PlantFunctions:
    """Error dynamics de/dt = -omega_dot_r + (1/J)*u0 + d/J as plant functions."""
    ref_accel = reference.omega_dot
    inv_inertia = 1.0 / motor.inertia
    return PlantFunctions(
        drift=lambda t, y: -float(ref_accel(t)),
        input_gain=lambda t, y: inv_inertia,
    )


def simulate_motor_loop(motor: MotorModel, reference: MotionProfile, gains: Gains,
                        cfg: IntegrationConfig, initial_error: float = 0.0,
                        initial_integral: float = 0.0, noise_std: float = 0.0,
                        rng: np.random.Generator | None = None) -> Trajectory:
    """Closed-loop run of the virtual motor; records the error as x1.

    The trajectory's ``u`` channel holds the applied torque command u0 and
    ``extras`` carries omega/theta/integral_state, which
    :func:`reconstruct_disturbance` consumes.  With the encoder and noise
    disabled (the baseline) the loop is a continuous ODE; otherwise the
    controller runs in sampled mode on the measured velocity with u0 held
    over each step.
    """
    plant_fns = _error_plant(motor, reference)
    model = motor.friction_cogging
    J = motor.inertia
    k1, k2, delta = gains.k1, gains.k2, gains.delta
    ref_omega, ref_theta = reference.omega, reference.theta
    sqrt = math.sqrt

    theta0 = float(ref_theta(0.0))
    omega0 = float(ref_omega(0.0)) + initial_error
    x0 = (theta0, omega0, initial_integral)

    sampled = motor.encoder_quantum > 0.0 or noise_std > 0.0
    if not sampled:
        def field(t: float, x) -> tuple[float, float, float]:
            theta, omega, z = x
            e = omega - float(ref_omega(t))
            s = e / delta
            if s > 1.0:
                s = 1.0
            elif s < -1.0:
                s = -1.0
            u = -k1 * sqrt(abs(e)) * s + z
            u0 = feedback_linearize(u, plant_fns, t, e)
            return (omega, (u0 + float(model.torque(omega, theta))) / J, -k2 * s)

        times, states = rk4_solve(field, x0, 0.0, cfg.dt, cfg.n_steps, cfg.record_stride)
    else:
        times, states = _sampled_motor_loop(motor, reference, gains, cfg, x0,
                                            noise_std, rng)

    theta = states[:, 0]
    omega = states[:, 1]
    z = states[:, 2]
    wr = np.asarray([float(ref_omega(ti)) for ti in times])
    e = omega - wr
    s = np.asarray(saturation(e, delta))
    u = -k1 * np.sqrt(np.abs(e)) * s + z
    u0 = np.asarray([feedback_linearize(float(ui), plant_fns, float(ti), float(ei))
                     for ui, ti, ei in zip(u, times, e)])
    d = np.asarray(model.torque(omega, theta))
    omega_dot = (u0 + d) / J
    q = np.asarray(model.rate(omega, omega_dot, theta))

    metadata = {
        "dt": cfg.dt,
        "record_stride": cfg.record_stride,
        "t0": 0.0,
        "k1": k1,
        "k2": k2,
        "delta": delta,
        "inertia": J,
        "perturbation": model.describe(),
        "reference": reference.descriptor,
        "sampled_controller": sampled,
    }
    return Trajectory(t=times, x1=e, x2=z + d / J, u=u0, d=d, q=q,
                      metadata=metadata,
                      extras={"omega": omega, "theta": theta, "integral_state": z.copy()})


def _sampled_motor_loop(motor: MotorModel, reference: MotionProfile, gains: Gains,
                        cfg: IntegrationConfig, x0, noise_std: float,
                        rng: np.random.Generator | None) -> tuple[np.ndarray, np.ndarray]:
    """Stepped loop: u0 from the quantized/noisy measurement, held per step."""
    if noise_std > 0.0 and rng is None:
        raise ValueError("noise injection requires an rng")
    plant_fns = _error_plant(motor, reference)
    model = motor.friction_cogging
    J = motor.inertia
    k1, k2, delta = gains.k1, gains.k2, gains.delta
    quantum = motor.encoder_quantum
    window = motor.velocity_window
    dt = cfg.dt
    sqrt = math.sqrt

    n_records = cfg.n_steps // cfg.record_stride + 1
    times = np.empty(n_records)
    states = np.empty((n_records, 3))
    theta, omega, z = x0
    times[0] = 0.0
    states[0] = (theta, omega, z)

    measured: list[float] = []
    rec = 1
    for k in range(cfg.n_steps):
        t = k * dt
        theta_meas = math.floor(theta / quantum) * quantum if quantum > 0.0 else theta
        measured.append(theta_meas)
        if len(measured) > window + 1:
            measured.pop(0)
        if len(measured) > 1:
            span = len(measured) - 1
            omega_meas = (measured[-1] - measured[0]) / (span * dt)
        else:
            omega_meas = omega
        if noise_std > 0.0:
            omega_meas += noise_std * rng.standard_normal()

        e_meas = omega_meas - float(reference.omega(t))
        s = float(saturation(e_meas, delta))
        u = -k1 * sqrt(abs(e_meas)) * s + z
        u0 = feedback_linearize(u, plant_fns, t, e_meas)

        def rotor(tt: float, x) -> tuple[float, float]:
            th, w = x
            return (w, (u0 + float(model.torque(w, th))) / J)

        _, rotor_states = rk4_solve(rotor, (theta, omega), t, dt, 1)
        theta, omega = rotor_states[-1]
        z += dt * (-k2 * s)
        if not (math.isfinite(theta) and math.isfinite(omega) and math.isfinite(z)):
            raise DivergenceError(t + dt)
        if (k + 1) % cfg.record_stride == 0:
            times[rec] = (k + 1) * dt
            states[rec] = (theta, omega, z)
            rec += 1
    return times, states


def robust_differentiate(samples: np.ndarray, dt: float,
                         cfg: DifferentiatorConfig) -> np.ndarray:
    """First-order sliding-mode differentiator over a uniformly sampled series.

    Tracks the input with an internal observer and returns the derivative
    estimate per sample; after the transient the error is tied to
    ``cfg.rate_bound`` and the sampling step.  Initialized on the first
    sample with zero derivative.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D sample series")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    out = np.empty_like(x)
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    z0 = float(x[0])
    z1 = 0.0
    sqrt = math.sqrt
    for k in range(len(x)):
        sigma = z0 - x[k]
        sgn = 1.0 if sigma > 0.0 else (-1.0 if sigma < 0.0 else 0.0)
        v = -lam1 * sqrt(abs(sigma)) * sgn + z1
        out[k] = v
        z0 += dt * v
        z1 += dt * (-lam2 * sgn)
    return out


def reconstruct_disturbance(traj: Trajectory, motor: MotorModel,
                            diff_cfg: DifferentiatorConfig,
                            rate_diff_cfg: DifferentiatorConfig | None = None,
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Recover the disturbance and its rate from recorded signals only.

    d_hat = J * d/dt(omega) - u0 with the acceleration estimated by
    :func:`robust_differentiate`; q_hat differentiates d_hat again.  The
    second stage sees a rougher signal, so it accepts its own config
    (defaults to ``diff_cfg``).
    """
    if "omega" not in traj.extras:
        raise ValueError("trajectory does not carry motor velocity samples")
    dt = traj.sample_dt
    omega_dot_hat = robust_differentiate(traj.extras["omega"], dt, diff_cfg)
    d_hat = motor.inertia * omega_dot_hat - traj.u
    q_hat = robust_differentiate(d_hat, dt, rate_diff_cfg or diff_cfg)
    return d_hat, q_hat
