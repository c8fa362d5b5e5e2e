//! Least-squares ARX identification of the twin model from recorded
//! plant input/output data.
//!
//! The model structure is
//!
//! ```text
//! y[k] + a₁ y[k−1] + … + a_na y[k−na] = b₁ u[k−nk] + … + b_nb u[k−nk−nb+1]
//! ```
//!
//! solved with Householder QR and converted to an observable canonical
//! state-space form whose last state is the output.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::PidGains;
use crate::error::{Error, Result};
use crate::linalg::{lstsq_qr, norm2, Matrix};
use crate::model::DiscreteStateSpace;
use crate::plant::{BallBeamParams, NoiseSpec, PlantSettings};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::twin::PhysicalLoop;

#[derive(Debug, Clone, PartialEq)]
pub struct IoDataset<T> {
    /// Applied servo command (rad).
    pub u: Vec<T>,
    /// Measured ball position (m).
    pub y: Vec<T>,
    pub ts: T,
}

impl<T: Scalar> IoDataset<T> {
    pub fn new(u: Vec<T>, y: Vec<T>, ts: T) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::Dimension(format!("u has {} samples, y has {}", u.len(), y.len())));
        }
        if !(ts > T::zero()) {
            return Err(Error::Domain(format!("sample time must be > 0, got {ts}")));
        }
        Ok(Self { u, y, ts })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Two-column CSV with the sample time in a leading comment line.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# ts={}\nu,y\n", self.ts);
        for (u, y) in self.u.iter().zip(&self.y) {
            let _ = writeln!(s, "{u},{y}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut ts = None;
        let mut u = Vec::new();
        let mut y = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("ts=") {
                    ts = Some(parse_num::<T>(v, lineno)?);
                }
                continue;
            }
            if line.eq_ignore_ascii_case("u,y") {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("line {}: expected two columns", lineno + 1)))?;
            u.push(parse_num(a, lineno)?);
            y.push(parse_num(b, lineno)?);
        }
        let ts = ts.ok_or_else(|| Error::Config("dataset is missing the '# ts=' header".into()))?;
        Self::new(u, y, ts)
    }
}

fn parse_num<T: Scalar>(s: &str, lineno: usize) -> Result<T> {
    s.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxOrders {
    pub na: usize,
    pub nb: usize,
    /// Input delay in samples.
    pub nk: usize,
}

impl ArxOrders {
    pub fn validate(&self) -> Result<()> {
        if self.na < 1 || self.nb < 1 {
            return Err(Error::Domain(format!("ARX orders need na >= 1 and nb >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// Number of leading samples without a full regressor.
    fn lag(&self) -> usize {
        self.na.max(self.nb + self.nk - 1)
    }

    fn column_name(&self, col: usize) -> String {
        if col < self.na {
            format!("y[k-{}]", col + 1)
        } else {
            format!("u[k-{}]", self.nk + col - self.na)
        }
    }
}

/// Where the process-noise channel G enters the canonical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseEntry {
    /// Unit gain on the last (output) state.
    #[default]
    OutputState,
    /// Gain `ts` on the state that feeds the output state, so that w acts
    /// as a velocity increment of the ball.
    Velocity,
    /// G = B: w enters alongside the input.
    Input,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel<T> {
    pub orders: ArxOrders,
    /// a₁ … a_na
    pub a: Vec<T>,
    /// b₁ … b_nb
    pub b: Vec<T>,
    pub ts: T,
}

impl<T: Scalar> ArxModel<T> {
    /// Observable canonical realization, states ordered so that the output
    /// is the last state.
    pub fn to_state_space(&self, noise: &NoiseSpec, entry: NoiseEntry) -> Result<DiscreteStateSpace<T>> {
        let ArxOrders { na, nb, nk } = self.orders;
        if nk == 0 {
            return Err(Error::Identification(
                "nk = 0 implies direct feedthrough, which the state-space form does not carry".into(),
            ));
        }
        let n = self.orders.lag();
        let mut alpha = vec![T::zero(); n];
        alpha[..na].copy_from_slice(&self.a);
        let mut beta = vec![T::zero(); n];
        for j in 0..nb {
            beta[nk + j - 1] = self.b[j];
        }
        // Output-first form: x₁' = −α₁ x₁ + x₂ + β₁ u, …, y = x₁; then the
        // state order is reversed.
        let rev = |i: usize| n - 1 - i;
        let mut a = Matrix::zeros(n, n);
        let mut b = Matrix::zeros(n, 1);
        for i in 0..n {
            a[(rev(i), rev(0))] = -alpha[i];
            if i + 1 < n {
                a[(rev(i), rev(i + 1))] = T::one();
            }
            b[(rev(i), 0)] = beta[i];
        }
        let mut c = Matrix::zeros(1, n);
        c[(0, n - 1)] = T::one();
        let mut g = Matrix::zeros(n, 1);
        match entry {
            NoiseEntry::OutputState => g[(n - 1, 0)] = T::one(),
            NoiseEntry::Velocity => {
                if n < 2 {
                    return Err(Error::Identification("velocity noise entry needs at least two states".into()));
                }
                g[(n - 2, 0)] = self.ts;
            }
            NoiseEntry::Input => g = b.clone(),
        }
        let model = DiscreteStateSpace {
            a,
            b,
            c,
            g,
            f: Matrix::scalar(T::one()),
            q: Matrix::scalar(T::lit(noise.q_process)),
            r: Matrix::scalar(T::lit(noise.r_meas)),
            ts: self.ts,
        };
        model.validate()?;
        Ok(model)
    }

    /// Runs the difference equation with zero initial conditions.
    pub fn simulate(&self, u: &[T]) -> Vec<T> {
        let ArxOrders { na, nb, nk } = self.orders;
        let mut y = vec![T::zero(); u.len()];
        for k in 0..u.len() {
            let mut v = T::zero();
            for i in 1..=na.min(k) {
                v -= self.a[i - 1] * y[k - i];
            }
            for j in 0..nb {
                if let Some(idx) = k.checked_sub(nk + j) {
                    v += self.b[j] * u[idx];
                }
            }
            y[k] = v;
        }
        y
    }
}

/// Least-squares ARX coefficients.
pub fn fit_arx<T: Scalar>(data: &IoDataset<T>, orders: ArxOrders) -> Result<ArxModel<T>> {
    orders.validate()?;
    let params = orders.na + orders.nb;
    if data.len() <= 10 * params {
        return Err(Error::Domain(format!(
            "dataset has {} samples, need more than {} for {} parameters",
            data.len(),
            10 * params,
            params
        )));
    }
    let start = orders.lag();
    let rows = data.len() - start;
    let mut phi = Matrix::zeros(rows, params);
    let mut target = Vec::with_capacity(rows);
    for (r, k) in (start..data.len()).enumerate() {
        for i in 0..orders.na {
            phi[(r, i)] = -data.y[k - 1 - i];
        }
        for j in 0..orders.nb {
            phi[(r, orders.na + j)] = data.u[k - orders.nk - j];
        }
        target.push(data.y[k]);
    }
    let theta = lstsq_qr(&phi, &target).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::Identification(format!(
            "regressor is rank deficient in columns {}",
            columns.iter().map(|&c| orders.column_name(c)).collect::<Vec<_>>().join(", ")
        )),
        other => other,
    })?;
    Ok(ArxModel { orders, a: theta[..orders.na].to_vec(), b: theta[orders.na..].to_vec(), ts: data.ts })
}

/// Identifies the twin model: ARX least squares, then canonical state space
/// carrying the scenario noise covariances.
pub fn identify_arx<T: Scalar>(
    data: &IoDataset<T>,
    orders: ArxOrders,
    noise: &NoiseSpec,
    entry: NoiseEntry,
) -> Result<DiscreteStateSpace<T>> {
    fit_arx(data, orders)?.to_state_space(noise, entry)
}

/// Normalized-RMSE fit in percent: 100·(1 − ‖y − ŷ‖ / ‖y − ȳ‖).
///
/// ŷ is the free-run simulation of the deterministic part of `model` under
/// `data.u`. The initial state is the least-squares fit of the free
/// response to the data, so a model is not penalized for starting at a
/// different operating point than the record.
pub fn fit_metric<T: Scalar>(model: &DiscreteStateSpace<T>, data: &IoDataset<T>) -> Result<T> {
    if model.input_dim() != 1 || model.output_dim() != 1 {
        return Err(Error::Dimension("fit metric expects a single-input single-output model".into()));
    }
    if data.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    let mean = data.y.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize(data.len()).unwrap();
    let centered: Vec<T> = data.y.iter().map(|&v| v - mean).collect();
    let denom = norm2(&centered);
    if !(denom > T::zero()) {
        return Err(Error::UndefinedFit);
    }
    let y_hat = free_run(model, data)?;
    let resid: Vec<T> = data.y.iter().zip(&y_hat).map(|(&a, &b)| a - b).collect();
    Ok(T::lit(100.0) * (T::one() - norm2(&resid) / denom))
}

/// Free-run output with a least-squares initial state.
pub fn free_run<T: Scalar>(model: &DiscreteStateSpace<T>, data: &IoDataset<T>) -> Result<Vec<T>> {
    let n = model.state_dim();
    let u: Vec<Vec<T>> = data.u.iter().map(|&v| vec![v]).collect();
    let (_, forced) = model.simulate(&vec![T::zero(); n], &u, None)?;
    let forced: Vec<T> = forced.into_iter().map(|v| v[0]).collect();

    // Observability rows C Aᵏ.
    let mut obs = Matrix::zeros(data.len(), n);
    let mut row = model.c.clone();
    for k in 0..data.len() {
        for j in 0..n {
            obs[(k, j)] = row[(0, j)];
        }
        row = row.try_mul(&model.a)?;
    }
    let resid: Vec<T> = data.y.iter().zip(&forced).map(|(&a, &b)| a - b).collect();
    let x0 = match lstsq_qr(&obs, &resid) {
        Ok(x0) => x0,
        // unobservable directions: fall back to the zero state
        Err(Error::RankDeficient { .. }) | Err(Error::Dimension(_)) => vec![T::zero(); n],
        Err(e) => return Err(e),
    };
    let free = obs.mul_vec(&x0)?;
    Ok(forced.iter().zip(&free).map(|(&a, &b)| a + b).collect())
}

/// Square-wave setpoint switching at random between `center ± amplitude`
/// every `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct Excitation<T> {
    pub center: T,
    pub amplitude: T,
    pub hold: T,
}

impl<T: Scalar> Excitation<T> {
    /// Pre-draws one level per hold interval.
    pub fn levels(&self, duration: T, seed: u64) -> Vec<T> {
        let count = (duration / self.hold).ceil().to_usize().unwrap_or(0) + 1;
        let mut rng = stream_rng(seed, Stream::Excitation);
        (0..count)
            .map(|_| if rng.random::<bool>() { self.center + self.amplitude } else { self.center - self.amplitude })
            .collect()
    }
}

/// Plant-side setup shared by data collection and the scenario engine.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSetup<T> {
    pub params: BallBeamParams<T>,
    pub settings: PlantSettings<T>,
    pub local_gains: PidGains<T>,
    pub ts: T,
}

/// Records (u, y) from the closed physical loop driven by a PRBS setpoint.
///
/// The ball starts at rest at the excitation center.
pub fn collect<T: Scalar>(
    setup: &PhysicalSetup<T>,
    noise: &NoiseSpec,
    excitation: &Excitation<T>,
    duration: T,
    seed: u64,
) -> Result<IoDataset<T>> {
    let samples = (duration / setup.ts).round().to_usize().unwrap_or(0);
    if samples < 1000 {
        return Err(Error::Domain(format!("collection needs at least 1000 samples, got {samples}")));
    }
    if !(excitation.hold > T::zero()) {
        return Err(Error::Domain("excitation hold time must be > 0".into()));
    }
    let levels = excitation.levels(duration, seed);
    let mut lp = PhysicalLoop::new(setup, noise, seed, excitation.center)?;
    let mut u = Vec::with_capacity(samples);
    let mut y = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = lp.time();
        let idx = (t / excitation.hold).floor().to_usize().unwrap_or(0).min(levels.len() - 1);
        let s = lp.tick(levels[idx])?;
        u.push(s.u);
        y.push(s.y_measured);
    }
    IoDataset::new(u, y, setup.ts)
}
