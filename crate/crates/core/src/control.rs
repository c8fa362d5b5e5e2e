//! PID control, tracking error, and the experiment's reference signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tracking error e = y − y′ between the physical output and the twin output.
#[inline]
pub fn error<T: Scalar>(y: T, y_twin: T) -> T {
    y - y_twin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct PidGains<T> {
    pub kp: T,
    /// Integral gain (1/s).
    pub ki: T,
    /// Derivative gain (s).
    pub kd: T,
    /// Bandwidth of the first-order derivative filter (rad/s).
    pub deriv_filter_n: T,
    pub u_min: T,
    pub u_max: T,
    /// Negates the control law. Needed when a positive actuator command
    /// drives the output down, as tilting the beam does to the ball.
    #[serde(default)]
    pub reverse_acting: bool,
}

impl<T: Scalar> PidGains<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < self.u_max) {
            return Err(Error::Domain(format!("u_min ({}) must be < u_max ({})", self.u_min, self.u_max)));
        }
        if !(self.deriv_filter_n > T::zero()) {
            return Err(Error::Domain(format!("deriv_filter_n must be > 0, got {}", self.deriv_filter_n)));
        }
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    fn sign(&self) -> T {
        if self.reverse_acting {
            -T::one()
        } else {
            T::one()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState<T> {
    /// Accumulated ∫e dt.
    pub integral: T,
    /// Error seen on the previous step; `None` before the first step.
    pub prev_error: Option<T>,
    /// Filtered derivative estimate.
    pub prev_deriv: T,
}

/// One PID sample.
///
/// Trapezoidal integral, backward-difference derivative through the filter
/// `N s / (s + N)`, output clamp with conditional integration: the integral
/// is held whenever the unclamped output is past a limit and integrating
/// would push it further out.
pub fn pid_step<T: Scalar>(gains: &PidGains<T>, state: &PidState<T>, e: T, dt: T) -> (T, PidState<T>) {
    debug_assert!(dt > T::zero());
    let prev = state.prev_error.unwrap_or(e);
    let half = T::lit(0.5);
    let n = gains.deriv_filter_n;
    let deriv = (state.prev_deriv + n * (e - prev)) / (T::one() + n * dt);
    let candidate = state.integral + dt * half * (e + prev);

    let sign = gains.sign();
    let law = |integral: T| sign * (gains.kp * e + gains.ki * integral + gains.kd * deriv);

    let mut integral = candidate;
    let unclamped = law(candidate);
    let push = sign * gains.ki * (candidate - state.integral);
    if (unclamped > gains.u_max && push > T::zero()) || (unclamped < gains.u_min && push < T::zero()) {
        integral = state.integral;
    }
    let u = law(integral).max(gains.u_min).min(gains.u_max);
    (u, PidState { integral, prev_error: Some(e), prev_deriv: deriv })
}

/// PID gains bundled with their running state.
#[derive(Debug, Clone)]
pub struct Pid<T> {
    gains: PidGains<T>,
    state: PidState<T>,
}

impl<T: Scalar> Pid<T> {
    pub fn new(gains: PidGains<T>) -> Result<Self> {
        gains.validate()?;
        Ok(Self { gains, state: PidState::default() })
    }

    pub fn gains(&self) -> &PidGains<T> {
        &self.gains
    }

    pub fn state(&self) -> &PidState<T> {
        &self.state
    }

    pub fn step(&mut self, e: T, dt: T) -> T {
        let (u, next) = pid_step(&self.gains, &self.state, e, dt);
        self.state = next;
        u
    }

    pub fn reset(&mut self) {
        self.state = PidState::default();
    }
}

/// Local controller of the physical loop: PID on (r_ref − y), producing the
/// servo angle command.
pub fn local_controller_step<T: Scalar>(
    gains: &PidGains<T>,
    state: &PidState<T>,
    r_ref: T,
    y: T,
    dt: T,
) -> (T, PidState<T>) {
    pid_step(gains, state, r_ref - y, dt)
}

/// Constant level followed by a ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct SetpointProfile<T> {
    pub level: T,
    pub ramp_start: T,
    pub ramp_slope: T,
}

impl<T: Scalar> Default for SetpointProfile<T> {
    fn default() -> Self {
        Self { level: T::one(), ramp_start: T::lit(25.0), ramp_slope: T::lit(0.01) }
    }
}

impl<T: Scalar> SetpointProfile<T> {
    pub fn at(&self, t: T) -> T {
        if t < self.ramp_start {
            self.level
        } else {
            self.level + self.ramp_slope * (t - self.ramp_start)
        }
    }
}

/// Reference ball position of the experiment: 1 m, plus a 0.01 m/s ramp from 25 s.
pub fn setpoint<T: Scalar>(t: T) -> T {
    SetpointProfile::default().at(t)
}
