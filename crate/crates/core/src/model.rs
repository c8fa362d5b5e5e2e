//! Discrete-time linear state-space models.
//!
//! ```text
//! x[k+1] = A x[k] + B u[k] + G w[k],   w ~ N(0, Q)
//! y[k]   = C x[k] + F v[k],            v ~ N(0, R)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream_rng, GaussianNoise, Stream};
use crate::scalar::Scalar;

/// One vector per sample.
pub type Trajectory<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct DiscreteStateSpace<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub c: Matrix<T>,
    pub g: Matrix<T>,
    pub f: Matrix<T>,
    pub q: Matrix<T>,
    pub r: Matrix<T>,
    /// Sample time (s).
    pub ts: T,
}

impl<T: Scalar> DiscreteStateSpace<T> {
    /// Deterministic model: G = 0 (n×1), F = I, Q = 0, R = 0.
    pub fn deterministic(a: Matrix<T>, b: Matrix<T>, c: Matrix<T>, ts: T) -> Result<Self> {
        let n = a.rows();
        let p = c.rows();
        let m = Self {
            g: Matrix::zeros(n, 1),
            f: Matrix::identity(p),
            q: Matrix::zeros(1, 1),
            r: Matrix::zeros(p, p),
            a,
            b,
            c,
            ts,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn noise_dim(&self) -> usize {
        self.g.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        let p = self.c.rows();
        let checks = [
            ("A", self.a.shape(), (n, n)),
            ("B", (self.b.rows(), 0), (n, 0)),
            ("C", (0, self.c.cols()), (0, n)),
            ("G", (self.g.rows(), 0), (n, 0)),
            ("F", self.f.shape(), (p, p)),
            ("Q", self.q.shape(), (self.g.cols(), self.g.cols())),
            ("R", self.r.shape(), (p, p)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Dimension(format!("{name} has shape {got:?}, expected {want:?} (n={n}, p={p})")));
            }
        }
        if !(self.ts > T::zero()) {
            return Err(Error::Domain(format!("sample time must be > 0, got {}", self.ts)));
        }
        let sym_tol = T::lit(1e-10);
        for (name, m) in [("Q", &self.q), ("R", &self.r)] {
            if m.asymmetry() > sym_tol * (T::one() + m.max_abs()) {
                return Err(Error::Domain(format!("{name} is not symmetric")));
            }
            m.cholesky_psd().map_err(|_| Error::Domain(format!("{name} is not positive semidefinite")))?;
        }
        Ok(())
    }

    /// One noise-free step: returns (A x + B u, C x).
    pub fn step(&self, x: &[T], u: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let y = self.c.mul_vec(x)?;
        let ax = self.a.mul_vec(x)?;
        let bu = self.b.mul_vec(u)?;
        Ok((ax.iter().zip(&bu).map(|(&a, &b)| a + b).collect(), y))
    }

    pub fn output(&self, x: &[T]) -> Result<Vec<T>> {
        self.c.mul_vec(x)
    }

    /// Iterates the model from `x0` under `u_seq`.
    ///
    /// Returns `(states, outputs)`, where `states[k]` and `outputs[k]` refer
    /// to sample k (states has one extra terminal entry). Without a seed both
    /// noise terms are zero.
    pub fn simulate(
        &self,
        x0: &[T],
        u_seq: &[Vec<T>],
        noise_seed: Option<u64>,
    ) -> Result<(Trajectory<T>, Trajectory<T>)> {
        self.validate()?;
        if x0.len() != self.state_dim() {
            return Err(Error::Dimension(format!("x0 has length {}, model has {} states", x0.len(), self.state_dim())));
        }
        if u_seq.is_empty() {
            return Err(Error::Domain("input sequence is empty".into()));
        }
        if let Some((k, u)) = u_seq.iter().enumerate().find(|(_, u)| u.len() != self.input_dim()) {
            return Err(Error::Dimension(format!(
                "u[{k}] has length {}, model has {} inputs",
                u.len(),
                self.input_dim()
            )));
        }

        let mut sampler = match noise_seed {
            Some(seed) => Some(NoiseSampler::new(self, seed)?),
            None => None,
        };

        let mut states = Vec::with_capacity(u_seq.len() + 1);
        let mut outputs = Vec::with_capacity(u_seq.len());
        let mut x = x0.to_vec();
        for u in u_seq {
            let (mut next, mut y) = self.step(&x, u)?;
            if let Some(s) = sampler.as_mut() {
                let w = s.process(self)?;
                let v = s.measurement(self)?;
                next.iter_mut().zip(&w).for_each(|(a, b)| *a += *b);
                y.iter_mut().zip(&v).for_each(|(a, b)| *a += *b);
            }
            states.push(x);
            outputs.push(y);
            x = next;
        }
        states.push(x);
        Ok((states, outputs))
    }
}

struct NoiseSampler<T> {
    w_factor: Matrix<T>,
    v_factor: Matrix<T>,
    w_src: GaussianNoise,
    v_src: GaussianNoise,
}

impl<T: Scalar> NoiseSampler<T> {
    fn new(model: &DiscreteStateSpace<T>, seed: u64) -> Result<Self> {
        Ok(Self {
            w_factor: model.q.cholesky_psd()?,
            v_factor: model.r.cholesky_psd()?,
            w_src: GaussianNoise::new(stream_rng(seed, Stream::ProcessNoise), 1.0),
            v_src: GaussianNoise::new(stream_rng(seed, Stream::MeasurementNoise), 1.0),
        })
    }

    fn process(&mut self, model: &DiscreteStateSpace<T>) -> Result<Vec<T>> {
        let z: Vec<T> = (0..self.w_factor.rows()).map(|_| self.w_src.sample()).collect();
        model.g.mul_vec(&self.w_factor.mul_vec(&z)?)
    }

    fn measurement(&mut self, model: &DiscreteStateSpace<T>) -> Result<Vec<T>> {
        let z: Vec<T> = (0..self.v_factor.rows()).map(|_| self.v_src.sample()).collect();
        model.f.mul_vec(&self.v_factor.mul_vec(&z)?)
    }
}

/// Zero-order-hold discretization.
///
/// Uses `exp([[Ac, Bc], [0, 0]] · Ts) = [[Ad, Bd], [0, I]]`.
pub fn discretize_zoh<T: Scalar>(ac: &Matrix<T>, bc: &Matrix<T>, ts: T) -> Result<(Matrix<T>, Matrix<T>)> {
    if !(ts > T::zero()) {
        return Err(Error::Domain(format!("sample time must be > 0, got {ts}")));
    }
    let n = ac.rows();
    if !ac.is_square() || bc.rows() != n {
        return Err(Error::Dimension(format!("Ac is {:?}, Bc is {:?}", ac.shape(), bc.shape())));
    }
    let m = bc.cols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.set_block(0, 0, &ac.scale(ts));
    aug.set_block(0, n, &bc.scale(ts));
    let e = aug.expm()?;
    Ok((e.block(0, 0, n, n), e.block(0, n, n, m)))
}
