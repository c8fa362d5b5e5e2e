//! Linear Kalman filter with separate time and measurement updates.
//!
//! Time update:
//!   x̂ ← A x̂ + B u
//!   P ← G Q Gᵀ + A P Aᵀ
//!
//! Measurement update:
//!   K = P Cᵀ (C P Cᵀ + F R Fᵀ)⁻¹
//!   x̂ ← x̂ + K (y − C x̂)
//!   P ← (I − K C) P, then symmetrized
//!
//! When a measurement is missing the caller simply skips
//! [`KalmanFilter::measurement_update`] for that sample.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::DiscreteStateSpace;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct KalmanFilter<T> {
    model: DiscreteStateSpace<T>,
    x_hat: Vec<T>,
    p: Matrix<T>,
    k_last: Option<Matrix<T>>,
    // cached G Q Gᵀ and F R Fᵀ
    process_cov: Matrix<T>,
    meas_cov: Matrix<T>,
}

impl<T: Scalar> KalmanFilter<T> {
    pub fn new(model: DiscreteStateSpace<T>, x0: Vec<T>, p0: Matrix<T>) -> Result<Self> {
        model.validate()?;
        let n = model.state_dim();
        if x0.len() != n || p0.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "initial estimate {} / covariance {:?} for {n}-state model",
                x0.len(),
                p0.shape()
            )));
        }
        let process_cov = model.g.try_mul(&model.q)?.try_mul(&model.g.transpose())?;
        let meas_cov = model.f.try_mul(&model.r)?.try_mul(&model.f.transpose())?;
        Ok(Self { model, x_hat: x0, p: p0, k_last: None, process_cov, meas_cov })
    }

    /// x̂₀ = 0, P₀ = p0_scale · I.
    pub fn with_prior(model: DiscreteStateSpace<T>, p0_scale: T) -> Result<Self> {
        let n = model.state_dim();
        Self::new(model, vec![T::zero(); n], Matrix::identity(n).scale(p0_scale))
    }

    pub fn model(&self) -> &DiscreteStateSpace<T> {
        &self.model
    }

    pub fn state(&self) -> &[T] {
        &self.x_hat
    }

    pub fn covariance(&self) -> &Matrix<T> {
        &self.p
    }

    pub fn last_gain(&self) -> Option<&Matrix<T>> {
        self.k_last.as_ref()
    }

    pub fn time_update(&mut self, u: &[T]) -> Result<()> {
        let (next, _) = self.model.step(&self.x_hat, u)?;
        let a = &self.model.a;
        let apa = a.try_mul(&self.p)?.try_mul(&a.transpose())?;
        self.p = self.process_cov.try_add(&apa)?.symmetrized();
        self.x_hat = next;
        Ok(())
    }

    /// Corrects the estimate with `y` and returns the innovation y − C x̂.
    pub fn measurement_update(&mut self, y: &[T]) -> Result<Vec<T>> {
        let c = &self.model.c;
        if y.len() != c.rows() {
            return Err(Error::Dimension(format!(
                "measurement has length {}, model has {} outputs",
                y.len(),
                c.rows()
            )));
        }
        let ct = c.transpose();
        let pct = self.p.try_mul(&ct)?;
        let s = c.try_mul(&pct)?.try_add(&self.meas_cov)?;
        let s_inv = s.inverse().ok_or_else(|| {
            Error::SingularInnovation(format!(
                "C P Cᵀ + F R Fᵀ ({}x{}) has no inverse: {:?}",
                s.rows(),
                s.cols(),
                s.to_rows()
            ))
        })?;
        let k = pct.try_mul(&s_inv)?;

        let predicted = c.mul_vec(&self.x_hat)?;
        let innovation: Vec<T> = y.iter().zip(&predicted).map(|(&a, &b)| a - b).collect();
        let correction = k.mul_vec(&innovation)?;
        self.x_hat.iter_mut().zip(&correction).for_each(|(x, d)| *x += *d);

        let n = self.model.state_dim();
        let i_kc = Matrix::identity(n).try_sub(&k.try_mul(c)?)?;
        self.p = i_kc.try_mul(&self.p)?.symmetrized();
        self.k_last = Some(k);
        Ok(innovation)
    }

    /// ŷ = C x̂.
    pub fn estimate_output(&self) -> Vec<T> {
        self.model.c.mul_vec(&self.x_hat).expect("C and x̂ dimensions are validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(a: f64, b: f64, c: f64, g: f64, q: f64, r: f64) -> DiscreteStateSpace<f64> {
        DiscreteStateSpace {
            a: Matrix::scalar(a),
            b: Matrix::scalar(b),
            c: Matrix::scalar(c),
            g: Matrix::scalar(g),
            f: Matrix::scalar(1.0),
            q: Matrix::scalar(q),
            r: Matrix::scalar(r),
            ts: 0.01,
        }
    }

    #[test]
    fn identity_time_update_is_noop() {
        let m = DiscreteStateSpace {
            a: Matrix::identity(2),
            b: Matrix::zeros(2, 1),
            c: Matrix::row_vector(&[1.0, 0.0]),
            g: Matrix::identity(2),
            f: Matrix::scalar(1.0),
            q: Matrix::zeros(2, 2),
            r: Matrix::scalar(1.0),
            ts: 0.1,
        };
        let p0 = Matrix::from_rows(vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let mut kf = KalmanFilter::new(m, vec![0.3, -0.7], p0.clone()).unwrap();
        kf.time_update(&[4.0]).unwrap();
        assert_eq!(kf.state(), &[0.3, -0.7]);
        assert_eq!(kf.covariance(), &p0);
    }

    #[test]
    fn time_update_covariance_by_hand() {
        let mut kf = KalmanFilter::new(scalar(1.0, 0.0, 1.0, 1.0, 1.0, 1.0), vec![0.0], Matrix::scalar(1.0)).unwrap();
        kf.time_update(&[0.0]).unwrap();
        assert_eq!(kf.covariance()[(0, 0)], 2.0);
    }

    #[test]
    fn time_update_mean_by_hand() {
        let mut kf = KalmanFilter::new(scalar(2.0, 1.0, 1.0, 1.0, 0.0, 1.0), vec![1.0], Matrix::scalar(1.0)).unwrap();
        kf.time_update(&[3.0]).unwrap();
        assert_eq!(kf.state(), &[5.0]);
    }

    #[test]
    fn measurement_update_by_hand() {
        let mut kf = KalmanFilter::new(scalar(1.0, 0.0, 1.0, 1.0, 0.0, 1.0), vec![0.0], Matrix::scalar(2.0)).unwrap();
        let innov = kf.measurement_update(&[3.0]).unwrap();
        assert_eq!(innov, vec![3.0]);
        assert_abs_diff_eq!(kf.last_gain().unwrap()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kf.state()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kf.covariance()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn perfect_measurement_snaps_to_y() {
        let m = DiscreteStateSpace {
            a: Matrix::identity(2),
            b: Matrix::zeros(2, 1),
            c: Matrix::identity(2),
            g: Matrix::identity(2),
            f: Matrix::identity(2),
            q: Matrix::zeros(2, 2),
            r: Matrix::zeros(2, 2),
            ts: 0.1,
        };
        let mut kf = KalmanFilter::with_prior(m, 1.0).unwrap();
        kf.measurement_update(&[1.25, -3.5]).unwrap();
        assert_abs_diff_eq!(kf.state()[0], 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(kf.state()[1], -3.5, epsilon = 1e-15);
        let k = kf.last_gain().unwrap();
        assert!((k - &Matrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn zero_innovation_still_shrinks_covariance() {
        let mut kf = KalmanFilter::new(scalar(1.0, 0.0, 1.0, 1.0, 0.0, 1.0), vec![0.4], Matrix::scalar(2.0)).unwrap();
        kf.measurement_update(&[0.4]).unwrap();
        assert_eq!(kf.state(), &[0.4]);
        assert!(kf.covariance()[(0, 0)] < 2.0);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let mut kf = KalmanFilter::new(scalar(1.0, 0.0, 1.0, 1.0, 0.0, 0.0), vec![0.0], Matrix::scalar(0.0)).unwrap();
        assert!(matches!(kf.measurement_update(&[1.0]), Err(Error::SingularInnovation(_))));
    }

    #[test]
    fn estimate_output_variants() {
        let mut m = scalar(1.0, 0.0, 2.0, 1.0, 0.0, 1.0);
        let kf = KalmanFilter::new(m.clone(), vec![1.5], Matrix::scalar(1.0)).unwrap();
        assert_eq!(kf.estimate_output(), vec![3.0]);
        m.c = Matrix::scalar(0.0);
        let kf = KalmanFilter::new(m, vec![1.5], Matrix::scalar(1.0)).unwrap();
        assert_eq!(kf.estimate_output(), vec![0.0]);

        let m2 = DiscreteStateSpace::deterministic(Matrix::identity(3), Matrix::zeros(3, 1), Matrix::identity(3), 1.0)
            .unwrap();
        let kf = KalmanFilter::new(m2, vec![1.0, 2.0, 3.0], Matrix::identity(3)).unwrap();
        assert_eq!(kf.estimate_output(), vec![1.0, 2.0, 3.0]);
    }
}
