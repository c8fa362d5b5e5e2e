//! Seeded random streams.
//!
//! A master seed fans out into independent named streams so that adding a
//! consumer (say, a second channel) never perturbs the draws seen by another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

/// Identifies one consumer of randomness inside a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    ProcessNoise,
    MeasurementNoise,
    UplinkChannel,
    DownlinkChannel,
    Excitation,
    Other(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::ProcessNoise => 1,
            Stream::MeasurementNoise => 2,
            Stream::UplinkChannel => 3,
            Stream::DownlinkChannel => 4,
            Stream::Excitation => 5,
            Stream::Other(n) => 0x100 + n,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of `stream` from `master`.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(master) ^ stream.tag().wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

/// Zero-mean Gaussian source with fixed variance.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: ChaCha8Rng,
    std_dev: f64,
}

impl GaussianNoise {
    pub fn new(rng: ChaCha8Rng, variance: f64) -> Self {
        Self { rng, std_dev: variance.max(0.0).sqrt() }
    }

    /// Draws one sample. A zero variance still advances the stream, so two
    /// runs that differ only in a variance stay aligned draw-for-draw.
    pub fn sample<T: Scalar>(&mut self) -> T {
        let z: f64 = self.rng.sample(StandardNormal);
        T::lit(z * self.std_dev)
    }

    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }
}
