//! Scenario configuration file and identified-model file, both TOML.
//!
//! The configuration layer is concrete in `f64`; scenarios for other scalar
//! types are obtained with [`Config::scenario_as`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{PidGains, SetpointProfile};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::DiscreteStateSpace;
use crate::netsim::ChannelConfig;
use crate::plant::{BallBeamParams, NoiseSpec, PlantSettings};
use crate::scalar::Scalar;
use crate::sysid::{self, ArxOrders, Excitation, IoDataset, NoiseEntry, PhysicalSetup};
use crate::twin::Scenario;

/// The shipped reference configuration.
pub const REFERENCE_CONFIG: &str = include_str!("../../../configs/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    pub plant: PlantSection,
    pub noise: NoiseSection,
    pub network: NetworkSection,
    pub controllers: ControllersSection,
    pub observer: ObserverSection,
    pub sysid: SysidSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Run length (s).
    pub duration: f64,
    /// Control and twin sample time (s).
    pub ts: f64,
    pub seed: u64,
    pub setpoint: SetpointProfile<f64>,
    /// Ball position at t = 0 (m).
    pub initial_position: f64,
    /// |y′| beyond this marks the twin as diverged (m).
    pub divergence_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(flatten)]
    pub params: BallBeamParams<f64>,
    /// RK4 steps per control sample.
    pub substeps: usize,
    /// Actuator limit on the commanded gear angle (rad).
    pub max_angle: f64,
    /// Physical state magnitude treated as divergence.
    pub state_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub q_process: f64,
    pub r_meas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    /// One-way latency (s).
    pub delay: f64,
    pub loss_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Physical → twin link.
    pub uplink: LinkSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceHold {
    /// The tracking PID runs every Ts on the most recently delivered y.
    LastDelivered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    #[serde(flatten)]
    pub gains: PidGains<f64>,
    pub reference_hold: ReferenceHold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllersSection {
    pub local: PidGains<f64>,
    pub tracking: TrackingSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    /// Initial covariance P₀ = p0_scale·I.
    pub p0_scale: f64,
    pub noise_entry: NoiseEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysidSection {
    pub orders: ArxOrders,
    pub excitation: Excitation<f64>,
    /// Length of the identification record (s).
    pub duration: f64,
    /// Seed of the identification record.
    pub seed: u64,
    /// Seed of the held-out validation record.
    pub validation_seed: u64,
    /// Record the identification data without process and sensor noise.
    pub noise_free: bool,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_CONFIG).expect("shipped reference config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if !(e.ts > 0.0 && e.duration > 0.0) {
            return Err(Error::Config("experiment.ts and experiment.duration must be > 0".into()));
        }
        if !(e.divergence_bound > 0.0) {
            return Err(Error::Config("experiment.divergence_bound must be > 0".into()));
        }
        if self.plant.substeps == 0 {
            return Err(Error::Config("plant.substeps must be >= 1".into()));
        }
        if !(self.observer.p0_scale >= 0.0) {
            return Err(Error::Config("observer.p0_scale must be >= 0".into()));
        }
        self.plant.params.validate()?;
        self.noise_spec().validate()?;
        self.uplink().validate()?;
        self.controllers.local.validate()?;
        self.controllers.tracking.gains.validate()?;
        self.sysid.orders.validate()?;
        Ok(())
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec { q_process: self.noise.q_process, r_meas: self.noise.r_meas, seed: self.experiment.seed }
    }

    pub fn uplink(&self) -> ChannelConfig {
        ChannelConfig { delay: self.network.uplink.delay, loss_prob: self.network.uplink.loss_prob, seed: 0 }
    }

    pub fn physical_setup(&self) -> PhysicalSetup<f64> {
        PhysicalSetup {
            params: self.plant.params.clone(),
            settings: PlantSettings {
                substeps: self.plant.substeps,
                max_angle: self.plant.max_angle,
                divergence_bound: self.plant.state_bound,
            },
            local_gains: self.controllers.local.clone(),
            ts: self.experiment.ts,
        }
    }

    /// Records the identification data set.
    pub fn collect_identification_data(&self) -> Result<IoDataset<f64>> {
        let noise = if self.sysid.noise_free { NoiseSpec::off() } else { self.noise_spec() };
        sysid::collect(&self.physical_setup(), &noise, &self.sysid.excitation, self.sysid.duration, self.sysid.seed)
    }

    /// Records the held-out validation data set under the configured noise.
    pub fn collect_validation_data(&self) -> Result<IoDataset<f64>> {
        sysid::collect(
            &self.physical_setup(),
            &self.noise_spec(),
            &self.sysid.excitation,
            self.sysid.duration,
            self.sysid.validation_seed,
        )
    }

    /// Collects data, fits the ARX model and scores it on held-out data.
    pub fn identify(&self) -> Result<ModelFile> {
        let data = self.collect_identification_data()?;
        let model = sysid::identify_arx(&data, self.sysid.orders, &self.noise_spec(), self.observer.noise_entry)?;
        let fit = sysid::fit_metric(&model, &self.collect_validation_data()?)?;
        Ok(ModelFile { identification: ModelMeta { orders: self.sysid.orders, fit_percent: fit }, model })
    }

    pub fn scenario(&self, model: DiscreteStateSpace<f64>) -> Scenario<f64> {
        self.scenario_as(model)
    }

    /// Scenario in any scalar type; every constant is converted from the
    /// `f64` configuration.
    pub fn scenario_as<T: Scalar>(&self, model: DiscreteStateSpace<f64>) -> Scenario<T> {
        let c = |v: f64| T::lit(v);
        let m = |x: &Matrix<f64>| {
            Matrix::from_rows(x.to_rows().iter().map(|r| r.iter().map(|&v| c(v)).collect()).collect())
                .expect("rows of a valid matrix")
        };
        let gains = |g: &PidGains<f64>| PidGains {
            kp: c(g.kp),
            ki: c(g.ki),
            kd: c(g.kd),
            deriv_filter_n: c(g.deriv_filter_n),
            u_min: c(g.u_min),
            u_max: c(g.u_max),
            reverse_acting: g.reverse_acting,
        };
        let p = &self.plant.params;
        let e = &self.experiment;
        Scenario {
            physical: PhysicalSetup {
                params: BallBeamParams {
                    m: c(p.m),
                    r_ball: c(p.r_ball),
                    j: c(p.j),
                    g: c(p.g),
                    d: c(p.d),
                    l: c(p.l),
                    tau_servo: c(p.tau_servo),
                },
                settings: PlantSettings {
                    substeps: self.plant.substeps,
                    max_angle: c(self.plant.max_angle),
                    divergence_bound: c(self.plant.state_bound),
                },
                local_gains: gains(&self.controllers.local),
                ts: c(e.ts),
            },
            noise: self.noise_spec(),
            uplink: self.uplink(),
            tracking_gains: gains(&self.controllers.tracking.gains),
            observer_p0: c(self.observer.p0_scale),
            model: DiscreteStateSpace {
                a: m(&model.a),
                b: m(&model.b),
                c: m(&model.c),
                g: m(&model.g),
                f: m(&model.f),
                q: m(&model.q),
                r: m(&model.r),
                ts: c(model.ts),
            },
            setpoint: SetpointProfile {
                level: c(e.setpoint.level),
                ramp_start: c(e.setpoint.ramp_start),
                ramp_slope: c(e.setpoint.ramp_slope),
            },
            initial_position: c(e.initial_position),
            duration: c(e.duration),
            seed: e.seed,
            divergence_bound: c(e.divergence_bound),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub orders: ArxOrders,
    /// Held-out normalized-RMSE fit (%).
    pub fit_percent: f64,
}

/// Identified twin model as written by `identify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub identification: ModelMeta,
    pub model: DiscreteStateSpace<f64>,
}

impl ModelFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ModelFile = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        f.model.validate()?;
        Ok(f)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read model {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}
