//! Dense parameter vectors, reproducible random streams and gradient noise laws.
//!
//! Every random draw in a simulation comes from an [`RngStream`] derived from
//! `(global_seed, round, client)`. The stream is a ChaCha8 keystream keyed by
//! that triple, so outputs depend only on the triple and the draw index and
//! never on thread scheduling.

use std::fmt;
use std::ops::{Deref, DerefMut};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::ConfigError;

/// Flat vector of model parameters or per-coordinate statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn filled(d: usize, value: f64) -> Self {
        Self(vec![value; d])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn norm_l2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self - other`, coordinatewise.
    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.len(), other.len());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| a * alpha).collect())
    }

    /// Clamp every coordinate into `[-bound, bound]`.
    pub fn clamp_abs(&mut self, bound: f64) {
        for a in &mut self.0 {
            *a = a.clamp(-bound, bound);
        }
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Client ids reserved for streams that do not belong to a client.
pub mod stream_ids {
    pub const SAMPLING: u64 = u64::MAX;
    pub const PRIVACY: u64 = u64::MAX - 1;
    pub const DATA: u64 = u64::MAX - 2;
    pub const PARTITION: u64 = u64::MAX - 3;
}

/// Independent random stream for one `(seed, round, client)` task.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

/// Derive the stream owned by `client` in `round` of a run seeded with `global_seed`.
///
/// The triple is written verbatim into the 256-bit ChaCha key, so distinct
/// triples select distinct keystreams.
pub fn derive_stream(global_seed: u64, round: u64, client: u64) -> RngStream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&global_seed.to_le_bytes());
    key[8..16].copy_from_slice(&round.to_le_bytes());
    key[16..24].copy_from_slice(&client.to_le_bytes());
    key[24..32].copy_from_slice(b"fedada2\0");
    RngStream {
        inner: ChaCha8Rng::from_seed(key),
    }
}

impl RngStream {
    /// Number of 32-bit words consumed so far.
    pub fn draw_index(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform draw in the open interval `(0, 1)`.
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Additive per-coordinate gradient noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    StudentT { nu: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            NoiseSpec::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                ConfigError::invalid("noise", format!("gaussian sigma must be >= 0, got {sigma}")),
            ),
            NoiseSpec::StudentT { nu } if !(nu > 0.0 && nu.is_finite()) => Err(
                ConfigError::invalid("noise", format!("student_t nu must be > 0, got {nu}")),
            ),
            NoiseSpec::Cauchy { location, scale }
                if !(scale > 0.0 && scale.is_finite() && location.is_finite()) =>
            {
                Err(ConfigError::invalid(
                    "noise",
                    format!("cauchy scale must be > 0, got {scale}"),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Whether the noise has a finite mean (used by statistical checks).
    pub fn has_mean(&self) -> bool {
        match *self {
            NoiseSpec::Gaussian { .. } => true,
            NoiseSpec::StudentT { nu } => nu > 1.0,
            NoiseSpec::Cauchy { .. } => false,
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseSpec::StudentT { nu } => write!(f, "student_t:{nu}"),
            NoiseSpec::Cauchy { location, scale } => write!(f, "cauchy:{location}:{scale}"),
        }
    }
}

/// One draw from `spec`.
///
/// Student-t is built as `Z / sqrt(V / nu)` with `Z ~ N(0,1)` and
/// `V ~ chi-square(nu)`, which allows non-integer `nu`. Cauchy uses the
/// inverse CDF `x0 + gamma * tan(pi * (U - 1/2))`.
pub fn sample_noise(spec: &NoiseSpec, stream: &mut RngStream) -> f64 {
    match *spec {
        NoiseSpec::Gaussian { sigma } => {
            if sigma == 0.0 {
                0.0
            } else {
                sigma * stream.standard_normal()
            }
        }
        NoiseSpec::StudentT { nu } => {
            let z = stream.standard_normal();
            let chi = ChiSquared::new(nu).expect("nu validated > 0");
            let v: f64 = chi.sample(&mut stream.inner);
            // v can underflow to 0 for tiny nu; redraw rather than emit inf.
            if v > 0.0 {
                z / (v / nu).sqrt()
            } else {
                sample_noise(spec, stream)
            }
        }
        NoiseSpec::Cauchy { location, scale } => {
            let u = stream.open01();
            location + scale * (std::f64::consts::PI * (u - 0.5)).tan()
        }
    }
}
