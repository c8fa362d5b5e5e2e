//! Nonlinear ball-and-beam plant.
//!
//! The ball obeys
//!
//! ```text
//! (J/R² + m) r̈ = m r α̇² − m g sin α,    α = (d/L) θ
//! ```
//!
//! and the servo gear angle θ follows the commanded angle through a
//! first-order lag with time constant `tau_servo`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::GaussianNoise;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct BallBeamParams<T> {
    /// Ball mass (kg).
    pub m: T,
    /// Ball radius (m).
    pub r_ball: T,
    /// Ball moment of inertia (kg·m²).
    pub j: T,
    /// Gravitational acceleration (m/s²).
    pub g: T,
    /// Lever-arm offset (m).
    pub d: T,
    /// Beam length (m).
    pub l: T,
    /// Servo time constant (s).
    pub tau_servo: T,
}

impl<T: Scalar> Default for BallBeamParams<T> {
    fn default() -> Self {
        Self {
            m: T::lit(0.111),
            r_ball: T::lit(0.015),
            j: T::lit(9.99e-6),
            g: T::lit(9.8),
            d: T::lit(0.03),
            l: T::lit(1.0),
            tau_servo: T::lit(0.1),
        }
    }
}

impl<T: Scalar> BallBeamParams<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m", self.m),
            ("r_ball", self.r_ball),
            ("j", self.j),
            ("g", self.g),
            ("d", self.d),
            ("l", self.l),
            ("tau_servo", self.tau_servo),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::Domain(format!("plant parameter {name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.effective_mass() > T::zero()) {
            return Err(Error::Domain("J/R_ball² + m must be positive".into()));
        }
        Ok(())
    }

    /// J/R² + m, the coefficient of r̈.
    #[inline]
    pub fn effective_mass(&self) -> T {
        self.j / (self.r_ball * self.r_ball) + self.m
    }

    /// Beam angle for a given gear angle.
    #[inline]
    pub fn beam_angle(&self, theta: T) -> T {
        self.d / self.l * theta
    }

    /// Small-angle gain k in r̈ ≈ −k θ.
    pub fn linear_gain(&self) -> T {
        self.m * self.g * self.d / (self.l * self.effective_mass())
    }

    /// Continuous linearization about the origin, state (r, ṙ, θ), input θ_cmd.
    pub fn linearization(&self) -> (Matrix<T>, Matrix<T>) {
        let z = T::zero();
        let inv_tau = T::one() / self.tau_servo;
        let a = Matrix::from_rows(vec![vec![z, T::one(), z], vec![z, z, -self.linear_gain()], vec![z, z, -inv_tau]])
            .expect("3x3 literal");
        let b = Matrix::column(&[z, z, inv_tau]);
        (a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState<T> {
    /// Ball position along the beam (m).
    pub r: T,
    /// Ball velocity (m/s).
    pub r_dot: T,
    /// Servo gear angle (rad).
    pub theta: T,
    /// Simulation time (s).
    pub t: T,
}

impl<T: Scalar> PlantState<T> {
    pub fn at_rest(r: T) -> Self {
        Self { r, r_dot: T::zero(), theta: T::zero(), t: T::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.r_dot.is_finite() && self.theta.is_finite() && self.t.is_finite()
    }

    pub fn alpha(&self, params: &BallBeamParams<T>) -> T {
        params.beam_angle(self.theta)
    }

    fn offset(&self, k: (T, T, T), h: T) -> Self {
        Self { r: self.r + h * k.0, r_dot: self.r_dot + h * k.1, theta: self.theta + h * k.2, t: self.t }
    }
}

/// Process- and measurement-noise covariances with the seed for their streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Variance of the per-sample velocity disturbance.
    pub q_process: f64,
    /// Variance of the additive position-sensor noise.
    pub r_meas: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn off() -> Self {
        Self { q_process: 0.0, r_meas: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_process >= 0.0 && self.q_process.is_finite()) {
            return Err(Error::Domain(format!("q_process must be >= 0, got {}", self.q_process)));
        }
        if !(self.r_meas >= 0.0 && self.r_meas.is_finite()) {
            return Err(Error::Domain(format!("r_meas must be >= 0, got {}", self.r_meas)));
        }
        Ok(())
    }
}

/// Time derivatives (ṙ, r̈, θ̇) for a commanded gear angle.
pub fn derivative<T: Scalar>(state: &PlantState<T>, theta_cmd: T, params: &BallBeamParams<T>) -> Result<(T, T, T)> {
    if !state.is_finite() || !theta_cmd.is_finite() {
        return Err(Error::Domain(format!("non-finite plant input: state {:?}, theta_cmd {}", state, theta_cmd)));
    }
    let theta_dot = (theta_cmd - state.theta) / params.tau_servo;
    let alpha = state.alpha(params);
    let alpha_dot = params.beam_angle(theta_dot);
    let r_ddot =
        (params.m * state.r * alpha_dot * alpha_dot - params.m * params.g * alpha.sin()) / params.effective_mass();
    Ok((state.r_dot, r_ddot, theta_dot))
}

/// One classical RK4 step of [`derivative`] with the command held constant.
pub fn rk4_step<T: Scalar>(
    state: &PlantState<T>,
    theta_cmd: T,
    dt: T,
    params: &BallBeamParams<T>,
) -> Result<PlantState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    let half = dt * T::lit(0.5);
    let k1 = derivative(state, theta_cmd, params)?;
    let k2 = derivative(&state.offset(k1, half), theta_cmd, params)?;
    let k3 = derivative(&state.offset(k2, half), theta_cmd, params)?;
    let k4 = derivative(&state.offset(k3, dt), theta_cmd, params)?;
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    Ok(PlantState {
        r: state.r + sixth * (k1.0 + two * k2.0 + two * k3.0 + k4.0),
        r_dot: state.r_dot + sixth * (k1.1 + two * k2.1 + two * k3.1 + k4.1),
        theta: state.theta + sixth * (k1.2 + two * k2.2 + two * k3.2 + k4.2),
        t: state.t + dt,
    })
}

/// One RK4 step followed by a velocity disturbance drawn from `process_noise`.
pub fn step<T: Scalar>(
    state: &PlantState<T>,
    theta_cmd: T,
    dt: T,
    params: &BallBeamParams<T>,
    process_noise: &mut GaussianNoise,
) -> Result<PlantState<T>> {
    let mut next = rk4_step(state, theta_cmd, dt, params)?;
    next.r_dot += process_noise.sample::<T>();
    Ok(next)
}

/// Position sensor reading r + v.
pub fn measure<T: Scalar>(state: &PlantState<T>, measurement_noise: &mut GaussianNoise) -> T {
    state.r + measurement_noise.sample::<T>()
}

/// Stateful plant advanced once per control sample.
///
/// Each call to [`BallBeamPlant::advance`] integrates `substeps` RK4 steps
/// with the command held, then injects one process-noise sample into ṙ.
#[derive(Debug, Clone)]
pub struct BallBeamPlant<T> {
    params: BallBeamParams<T>,
    state: PlantState<T>,
    process_noise: GaussianNoise,
    measurement_noise: GaussianNoise,
    substeps: usize,
    max_angle: T,
    divergence_bound: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSettings<T> {
    pub substeps: usize,
    /// Symmetric actuator limit on the commanded gear angle (rad).
    pub max_angle: T,
    /// Any state component beyond this magnitude counts as divergence.
    pub divergence_bound: T,
}

impl<T: Scalar> Default for PlantSettings<T> {
    fn default() -> Self {
        Self { substeps: 10, max_angle: T::lit(std::f64::consts::FRAC_PI_4), divergence_bound: T::lit(1e3) }
    }
}

impl<T: Scalar> BallBeamPlant<T> {
    pub fn new(
        params: BallBeamParams<T>,
        initial: PlantState<T>,
        process_noise: GaussianNoise,
        measurement_noise: GaussianNoise,
        settings: PlantSettings<T>,
    ) -> Result<Self> {
        params.validate()?;
        if settings.substeps == 0 {
            return Err(Error::Domain("plant needs at least one integration substep".into()));
        }
        Ok(Self {
            params,
            state: initial,
            process_noise,
            measurement_noise,
            substeps: settings.substeps,
            max_angle: settings.max_angle,
            divergence_bound: settings.divergence_bound,
        })
    }

    pub fn state(&self) -> &PlantState<T> {
        &self.state
    }

    pub fn params(&self) -> &BallBeamParams<T> {
        &self.params
    }

    /// Applies the actuator limit.
    pub fn saturate(&self, theta_cmd: T) -> T {
        theta_cmd.max(-self.max_angle).min(self.max_angle)
    }

    pub fn measure(&mut self) -> T {
        measure(&self.state, &mut self.measurement_noise)
    }

    /// Advances one control period `ts`; returns the saturated command that
    /// was applied.
    pub fn advance(&mut self, theta_cmd: T, ts: T) -> Result<T> {
        let cmd = self.saturate(theta_cmd);
        let dt = ts / T::from_usize(self.substeps).unwrap();
        let t0 = self.state.t;
        let mut s = self.state;
        for _ in 0..self.substeps {
            s = rk4_step(&s, cmd, dt, &self.params)?;
        }
        s.r_dot += self.process_noise.sample::<T>();
        // keep the clock on the sample grid
        s.t = t0 + ts;
        let bound = self.divergence_bound;
        if !s.is_finite() || s.r.abs() > bound || s.r_dot.abs() > bound || s.theta.abs() > bound {
            return Err(Error::Diverged { time: s.t.to_f64_lossy() });
        }
        self.state = s;
        Ok(cmd)
    }
}
