//! Shared fixtures for the criterion benches in `benches/`.

use fedada_core::numeric::{derive_stream, ParamVector};

/// Deterministic standard-normal vector of length `d`.
pub fn gaussian_vector(d: usize, seed: u64) -> ParamVector {
    let mut s = derive_stream(seed, 0, 0);
    (0..d)
        .map(|_| s.standard_normal())
        .collect::<Vec<_>>()
        .into()
}
