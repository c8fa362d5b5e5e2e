//! Trace evaluation: mean absolute error, 2% settling time, divergence.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::twin::{Architecture, RunTrace, TraceStatus};

/// Relative settling band.
pub const SETTLING_BAND: f64 = 0.02;
/// Floor on |y| when forming the band, so the band stays defined at y = 0.
pub const BAND_FLOOR: f64 = 1e-6;
/// Default divergence bound on |y′| (10× the setpoint).
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 10.0;

/// Mean of |e| over samples with `t0 ≤ t ≤ t1`.
pub fn mean_abs_error<T: Scalar>(trace: &RunTrace<T>, t0: T, t1: T) -> Result<T> {
    let (sum, n) = trace
        .rows
        .iter()
        .filter(|r| r.t >= t0 && r.t <= t1)
        .fold((T::zero(), 0usize), |(s, n), r| (s + r.error.abs(), n + 1));
    if n == 0 {
        return Err(Error::EmptyWindow(format!("no samples in [{t0}, {t1}]")));
    }
    Ok(sum / T::from_usize(n).unwrap())
}

/// Mean of |e| over the whole trace.
pub fn mean_abs_error_full<T: Scalar>(trace: &RunTrace<T>) -> Result<T> {
    match (trace.rows.first(), trace.rows.last()) {
        (Some(a), Some(b)) => mean_abs_error(trace, a.t, b.t),
        _ => Err(Error::EmptyWindow("trace has no samples".into())),
    }
}

fn in_band<T: Scalar>(error: T, y: T) -> bool {
    error.abs() <= T::lit(SETTLING_BAND) * y.abs().max(T::lit(BAND_FLOOR))
}

/// Earliest `t*` with |e(t)| ≤ 2%·|y(t)| at every sample `t ≥ t*`.
/// `None` when the last sample is outside the band or the trace is empty.
pub fn settling_time<T: Scalar>(trace: &RunTrace<T>) -> Option<T> {
    let rows = &trace.rows;
    match rows.iter().rposition(|r| !in_band(r.error, r.y_physical)) {
        None => rows.first().map(|r| r.t),
        Some(i) => rows.get(i + 1).map(|r| r.t),
    }
}

/// First time |y′| exceeds `bound`.
pub fn detect_divergence<T: Scalar>(trace: &RunTrace<T>, bound: T) -> Option<T> {
    debug_assert!(bound > T::zero());
    trace.rows.iter().find(|r| !(r.y_twin.abs() <= bound)).map(|r| r.t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub architecture: Architecture,
    pub mean_abs_error_full: T,
    /// Mean |e| from the settling time to the end; `None` if never settled.
    pub mean_abs_error_steady: Option<T>,
    pub settling_time: Option<T>,
    pub diverged: Option<T>,
    /// The physical plant itself left its state bound.
    pub physical_diverged: Option<T>,
    pub samples: usize,
}

impl<T: Scalar> RunSummary<T> {
    pub fn from_trace(trace: &RunTrace<T>, divergence_bound: T) -> Result<Self> {
        let full = mean_abs_error_full(trace)?;
        let physical_diverged = match trace.status {
            TraceStatus::PhysicalDiverged { time } => Some(time),
            _ => None,
        };
        let diverged = detect_divergence(trace, divergence_bound).or(match trace.status {
            TraceStatus::TwinDiverged { time } => Some(time),
            _ => None,
        });
        let settling = if diverged.is_some() || physical_diverged.is_some() { None } else { settling_time(trace) };
        let steady = match settling {
            Some(ts) => Some(mean_abs_error(trace, ts, trace.duration())?),
            None => None,
        };
        Ok(Self {
            architecture: trace.architecture,
            mean_abs_error_full: full,
            mean_abs_error_steady: steady,
            settling_time: settling,
            diverged,
            physical_diverged,
            samples: trace.len(),
        })
    }

    /// Flat `key = value` record, one per line.
    pub fn to_record(&self) -> String {
        let opt = |v: Option<T>, none: &str| v.map_or_else(|| none.to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "architecture = {}", self.architecture.number());
        let _ = writeln!(s, "mean_abs_error_full = {}", self.mean_abs_error_full);
        let _ = writeln!(s, "mean_abs_error_steady = {}", opt(self.mean_abs_error_steady, "none"));
        let _ = writeln!(s, "settling_time = {}", opt(self.settling_time, "never"));
        let _ = writeln!(s, "diverged = {}", self.diverged.is_some());
        let _ = writeln!(s, "diverged_at = {}", opt(self.diverged, "none"));
        let _ = writeln!(s, "physical_diverged_at = {}", opt(self.physical_diverged, "none"));
        let _ = writeln!(s, "samples = {}", self.samples);
        s
    }

    /// Inverse of [`RunSummary::to_record`].
    pub fn from_record(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("summary line without '=': {line:?}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).ok_or_else(|| Error::Config(format!("summary is missing key `{k}`")));
        let num = |k: &str| -> Result<T> {
            let v = get(k)?;
            v.parse::<f64>().map(T::lit).map_err(|_| Error::Config(format!("summary key `{k}`: bad number {v:?}")))
        };
        let opt = |k: &str| -> Result<Option<T>> {
            match get(k)?.as_str() {
                "none" | "never" => Ok(None),
                _ => num(k).map(Some),
            }
        };
        let arch = get("architecture")?
            .parse::<u8>()
            .ok()
            .and_then(Architecture::from_number)
            .ok_or_else(|| Error::Config("summary key `architecture` must be 1, 2 or 3".into()))?;
        Ok(Self {
            architecture: arch,
            mean_abs_error_full: num("mean_abs_error_full")?,
            mean_abs_error_steady: opt("mean_abs_error_steady")?,
            settling_time: opt("settling_time")?,
            diverged: opt("diverged_at")?,
            physical_diverged: opt("physical_diverged_at")?,
            samples: get("samples")?
                .parse()
                .map_err(|_| Error::Config("summary key `samples` must be an integer".into()))?,
        })
    }
}

pub const COMPARISON_CSV_HEADER: &str = "architecture,mean_abs_error_full,mean_abs_error_steady,settling_time,diverged";

/// Comparison table sorted by full-window mean error, ties broken by
/// architecture number. Needs at least two summaries.
pub fn comparison_csv<T: Scalar>(summaries: &[RunSummary<T>]) -> Result<String> {
    if summaries.len() < 2 {
        return Err(Error::Domain(format!("comparison needs at least two summaries, got {}", summaries.len())));
    }
    let mut sorted: Vec<&RunSummary<T>> = summaries.iter().collect();
    sorted.sort_by(|a, b| {
        a.mean_abs_error_full
            .partial_cmp(&b.mean_abs_error_full)
            .unwrap_or_else(|| a.mean_abs_error_full.is_nan().cmp(&b.mean_abs_error_full.is_nan()))
            .then(a.architecture.cmp(&b.architecture))
    });
    let mut s = String::from(COMPARISON_CSV_HEADER);
    s.push('\n');
    for r in sorted {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.architecture.number(),
            r.mean_abs_error_full,
            r.mean_abs_error_steady.map(|v| v.to_string()).unwrap_or_default(),
            r.settling_time.map_or_else(|| "never".to_string(), |v| v.to_string()),
            u8::from(r.diverged.is_some())
        );
    }
    Ok(s)
}
