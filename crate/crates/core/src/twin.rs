//! Scenario engine: the physical loop, the uplink to the cloud, and the three
//! digital-twin architectures.
//!
//! Everything advances in lockstep on the sample grid `t_k = k·Ts`. At each
//! tick the physical side measures, computes its local control command,
//! ships a packet over the uplink and integrates the plant. The twin then
//! consumes whatever the channel has delivered by `t_k`.
//!
//! * Architecture I: identified model driven by a copy of the local
//!   controller whose feedback is the delivered physical measurement.
//! * Architecture II: Kalman filter on the identified model fed with the
//!   delivered (u, y) pairs.
//! * Architecture III: identified model closed with a tracking PID whose
//!   reference is the delivered physical measurement.

use std::fmt::Write as _;

use crate::control::{Pid, PidGains, SetpointProfile};
use crate::error::{Error, Result};
use crate::model::DiscreteStateSpace;
use crate::netsim::{Channel, ChannelConfig};
use crate::observer::KalmanFilter;
use crate::plant::{BallBeamPlant, NoiseSpec, PlantState};
use crate::rng::{derive_seed, stream_rng, GaussianNoise, Stream};
use crate::scalar::Scalar;
use crate::sysid::PhysicalSetup;

/// Twin outputs past this magnitude end the trace; they carry no further
/// information and would eventually overflow.
const TRACE_CUTOFF: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    /// Replicated controller fed by remote physical feedback.
    ControllerReplay = 1,
    /// Kalman observer.
    KalmanObserver = 2,
    /// Tracking PID.
    TrackingPid = 3,
}

impl Architecture {
    pub const ALL: [Architecture; 3] =
        [Architecture::ControllerReplay, Architecture::KalmanObserver, Architecture::TrackingPid];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::ControllerReplay),
            2 => Some(Self::KalmanObserver),
            3 => Some(Self::TrackingPid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub physical: PhysicalSetup<T>,
    pub noise: NoiseSpec,
    /// Physical → cloud link. Its seed is replaced by one derived from
    /// `seed`.
    pub uplink: ChannelConfig,
    pub tracking_gains: PidGains<T>,
    /// Scale of the initial Kalman covariance P₀ = s·I.
    pub observer_p0: T,
    pub model: DiscreteStateSpace<T>,
    pub setpoint: SetpointProfile<T>,
    pub initial_position: T,
    pub duration: T,
    /// Master seed.
    pub seed: u64,
    /// |y′| beyond this marks the twin as diverged.
    pub divergence_bound: T,
}

impl<T: Scalar> Scenario<T> {
    pub fn ts(&self) -> T {
        self.physical.ts
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.ts()).round().to_usize().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let ts = self.ts();
        if !(ts > T::zero()) {
            return Err(Error::Domain("Ts must be > 0".into()));
        }
        if !(self.duration > T::zero()) {
            return Err(Error::Domain("duration must be > 0".into()));
        }
        let ratio = self.duration / ts;
        if (ratio - ratio.round()).abs() > T::lit(1e-6) * ratio.max(T::one()) {
            return Err(Error::Domain(format!("Ts = {ts} does not divide duration {}", self.duration)));
        }
        if (self.model.ts - ts).abs() > T::lit(1e-12) {
            return Err(Error::Domain(format!("model sample time {} differs from Ts {ts}", self.model.ts)));
        }
        if self.model.input_dim() != 1 || self.model.output_dim() != 1 {
            return Err(Error::Dimension("twin model must be single-input single-output".into()));
        }
        self.physical.params.validate()?;
        self.physical.local_gains.validate()?;
        self.tracking_gains.validate()?;
        self.noise.validate()?;
        self.uplink.validate()?;
        self.model.validate()
    }

    fn uplink_channel(&self) -> Result<Channel<T>> {
        Channel::new(ChannelConfig { seed: derive_seed(self.seed, Stream::UplinkChannel), ..self.uplink })
    }
}

/// One tick of the physical loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalSample<T> {
    pub t: T,
    pub r_ref: T,
    /// True ball position.
    pub y_true: T,
    /// Sensor reading sent to the cloud.
    pub y_measured: T,
    /// Servo command actually applied (after saturation).
    pub u: T,
}

/// Plant plus local controller, advanced one sample at a time.
#[derive(Debug, Clone)]
pub struct PhysicalLoop<T> {
    plant: BallBeamPlant<T>,
    controller: Pid<T>,
    ts: T,
    k: usize,
}

impl<T: Scalar> PhysicalLoop<T> {
    /// Noise streams are derived from `seed`; `noise.seed` is ignored.
    pub fn new(setup: &PhysicalSetup<T>, noise: &NoiseSpec, seed: u64, initial_position: T) -> Result<Self> {
        noise.validate()?;
        let plant = BallBeamPlant::new(
            setup.params.clone(),
            PlantState::at_rest(initial_position),
            GaussianNoise::new(stream_rng(seed, Stream::ProcessNoise), noise.q_process),
            GaussianNoise::new(stream_rng(seed, Stream::MeasurementNoise), noise.r_meas),
            setup.settings,
        )?;
        Ok(Self { plant, controller: Pid::new(setup.local_gains.clone())?, ts: setup.ts, k: 0 })
    }

    pub fn time(&self) -> T {
        T::from_usize(self.k).unwrap() * self.ts
    }

    pub fn plant(&self) -> &BallBeamPlant<T> {
        &self.plant
    }

    pub fn tick(&mut self, r_ref: T) -> Result<PhysicalSample<T>> {
        let t = self.time();
        let y_true = self.plant.state().r;
        let y_measured = self.plant.measure();
        let command = self.controller.step(r_ref - y_measured, self.ts);
        let u = self.plant.advance(command, self.ts)?;
        self.k += 1;
        Ok(PhysicalSample { t, r_ref, y_true, y_measured, u })
    }
}

/// The physical stream of a scenario. `diverged_at` is set when the plant
/// left its state bound; `samples` then stops short of the duration.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalRun<T> {
    pub samples: Vec<PhysicalSample<T>>,
    pub diverged_at: Option<T>,
}

/// Runs plant + local controller for the scenario duration. Identical for
/// every architecture given the same master seed.
pub fn run_physical_loop<T: Scalar>(scenario: &Scenario<T>) -> Result<PhysicalRun<T>> {
    scenario.validate()?;
    let mut lp = PhysicalLoop::new(&scenario.physical, &scenario.noise, scenario.seed, scenario.initial_position)?;
    let n = scenario.samples();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let r_ref = scenario.setpoint.at(lp.time());
        match lp.tick(r_ref) {
            Ok(s) => samples.push(s),
            Err(Error::Diverged { time }) => return Ok(PhysicalRun { samples, diverged_at: Some(T::lit(time)) }),
            Err(e) => return Err(e),
        }
    }
    Ok(PhysicalRun { samples, diverged_at: None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub t: T,
    pub r_ref: T,
    pub y_physical: T,
    pub u_physical: T,
    pub y_twin: T,
    /// y_physical − y_twin.
    pub error: T,
    /// A packet carrying y arrived at the twin on this tick.
    pub y_delivered: bool,
    /// A packet carrying u arrived at the twin on this tick.
    pub u_delivered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceStatus<T> {
    Completed,
    /// |y′| crossed the divergence bound at `time`; the run continued.
    TwinDiverged {
        time: T,
    },
    /// The physical plant left its state bound; the trace is truncated.
    PhysicalDiverged {
        time: T,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<T> {
    pub architecture: Architecture,
    pub ts: T,
    pub rows: Vec<TraceRow<T>>,
    pub status: TraceStatus<T>,
}

pub const TRACE_CSV_HEADER: &str = "t,r_ref,y_physical,u_physical,y_twin,error,y_delivered,u_delivered";

impl<T: Scalar> RunTrace<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn duration(&self) -> T {
        self.rows.last().map_or(T::zero(), |r| r.t)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 96);
        s.push_str(TRACE_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.r_ref,
                r.y_physical,
                r.u_physical,
                r.y_twin,
                r.error,
                u8::from(r.y_delivered),
                u8::from(r.u_delivered)
            );
        }
        s
    }
}

/// Twin-side state machine for one architecture.
enum TwinSide<T> {
    Replay { x: Vec<T>, controller: Pid<T>, feedback: T },
    Observer { filter: Box<KalmanFilter<T>>, held_u: T, step: usize },
    Tracking { x: Vec<T>, controller: Pid<T>, reference: T },
}

impl<T: Scalar> TwinSide<T> {
    fn new(arch: Architecture, sc: &Scenario<T>) -> Result<Self> {
        let n = sc.model.state_dim();
        Ok(match arch {
            Architecture::ControllerReplay => TwinSide::Replay {
                x: vec![T::zero(); n],
                controller: Pid::new(sc.physical.local_gains.clone())?,
                feedback: T::zero(),
            },
            Architecture::KalmanObserver => TwinSide::Observer {
                filter: Box::new(KalmanFilter::with_prior(sc.model.clone(), sc.observer_p0)?),
                held_u: T::zero(),
                step: 0,
            },
            Architecture::TrackingPid => TwinSide::Tracking {
                x: vec![T::zero(); n],
                controller: Pid::new(sc.tracking_gains.clone())?,
                reference: T::zero(),
            },
        })
    }

    /// Consumes this tick's deliveries and returns y′ at `t`.
    fn tick(&mut self, sc: &Scenario<T>, t: T, delivered: &[Vec<T>]) -> Result<T> {
        let ts = sc.ts();
        let model = &sc.model;
        match self {
            TwinSide::Replay { x, controller, feedback } => {
                if let Some(p) = delivered.last() {
                    *feedback = p[0];
                }
                let (next, y) = {
                    let u = controller.step(sc.setpoint.at(t) - *feedback, ts);
                    model.step(x, &[u])?
                };
                *x = next;
                Ok(y[0])
            }
            TwinSide::Observer { filter, held_u, step } => {
                let wrap = |e: Error, k: usize| Error::FilterStep { step: k, source: Box::new(e) };
                if delivered.is_empty() {
                    filter.time_update(&[*held_u]).map_err(|e| wrap(e, *step))?;
                } else {
                    // each packet carries (y_j, u_j): predict to j with u_{j−1},
                    // correct with y_j, then hold u_j
                    for p in delivered {
                        filter.time_update(&[*held_u]).map_err(|e| wrap(e, *step))?;
                        filter.measurement_update(&[p[0]]).map_err(|e| wrap(e, *step))?;
                        *held_u = p[1];
                    }
                }
                *step += 1;
                Ok(filter.estimate_output()[0])
            }
            TwinSide::Tracking { x, controller, reference } => {
                if let Some(p) = delivered.last() {
                    *reference = p[0];
                }
                let y = model.output(x)?[0];
                let u = controller.step(crate::control::error(*reference, y), ts);
                let (next, _) = model.step(x, &[u])?;
                *x = next;
                Ok(y)
            }
        }
    }

    fn sends_input(&self) -> bool {
        matches!(self, TwinSide::Observer { .. })
    }
}

/// Runs one architecture against a precomputed physical stream.
pub fn run_architecture_on<T: Scalar>(
    scenario: &Scenario<T>,
    arch: Architecture,
    physical: &PhysicalRun<T>,
) -> Result<RunTrace<T>> {
    scenario.validate()?;
    let mut channel = scenario.uplink_channel()?;
    let mut twin = TwinSide::new(arch, scenario)?;
    let with_u = twin.sends_input();
    let bound = scenario.divergence_bound;
    let cutoff = T::lit(TRACE_CUTOFF);
    let mut rows = Vec::with_capacity(physical.samples.len());
    let mut status = TraceStatus::Completed;

    for s in &physical.samples {
        let payload = if with_u { vec![s.y_measured, s.u] } else { vec![s.y_measured] };
        channel.send(payload, s.t)?;
        let delivered: Vec<Vec<T>> = channel.poll(s.t).into_iter().map(|p| p.payload).collect();
        let y_twin = twin.tick(scenario, s.t, &delivered)?;
        if !y_twin.is_finite() || y_twin.abs() > cutoff {
            if status == TraceStatus::Completed {
                status = TraceStatus::TwinDiverged { time: s.t };
            }
            break;
        }
        if status == TraceStatus::Completed && y_twin.abs() > bound {
            status = TraceStatus::TwinDiverged { time: s.t };
        }
        let got = !delivered.is_empty();
        rows.push(TraceRow {
            t: s.t,
            r_ref: s.r_ref,
            y_physical: s.y_true,
            u_physical: s.u,
            y_twin,
            error: crate::control::error(s.y_true, y_twin),
            y_delivered: got,
            u_delivered: got && with_u,
        });
    }
    if let Some(time) = physical.diverged_at {
        status = TraceStatus::PhysicalDiverged { time };
    }
    Ok(RunTrace { architecture: arch, ts: scenario.ts(), rows, status })
}

pub fn run_architecture<T: Scalar>(scenario: &Scenario<T>, arch: Architecture) -> Result<RunTrace<T>> {
    let physical = run_physical_loop(scenario)?;
    run_architecture_on(scenario, arch, &physical)
}

/// Architecture I: replicated controller with remote physical feedback.
pub fn run_arch1<T: Scalar>(scenario: &Scenario<T>) -> Result<RunTrace<T>> {
    run_architecture(scenario, Architecture::ControllerReplay)
}

/// Architecture II: Kalman observer.
pub fn run_arch2<T: Scalar>(scenario: &Scenario<T>) -> Result<RunTrace<T>> {
    run_architecture(scenario, Architecture::KalmanObserver)
}

/// Architecture III: tracking PID.
pub fn run_arch3<T: Scalar>(scenario: &Scenario<T>) -> Result<RunTrace<T>> {
    run_architecture(scenario, Architecture::TrackingPid)
}
