use crate::error::ConfigError;
use crate::numeric::{sample_noise, NoiseSpec, ParamVector, RngStream};

use super::Problem;

/// `F_i(x, xi) = |x|^2 / 2 + <xi, x>` with per-client additive noise `xi`.
///
/// Every client shares the minimizer `x* = 0` of `f(x) = |x|^2 / 2`, so all
/// difficulty comes from the noise laws.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub noises: Vec<NoiseSpec>,
    pub d: usize,
    pub steps_per_epoch: usize,
}

impl QuadraticProblem {
    pub fn new(noises: Vec<NoiseSpec>, d: usize) -> Result<Self, ConfigError> {
        let p = Self {
            noises,
            d,
            steps_per_epoch: 1,
        };
        p.validate()?;
        Ok(p)
    }

    /// `n` clients sharing one noise law.
    pub fn homogeneous(n: usize, noise: NoiseSpec, d: usize) -> Result<Self, ConfigError> {
        Self::new(vec![noise; n], d)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.noises.is_empty() {
            return Err(ConfigError::invalid(
                "problem.noise",
                "need at least one client",
            ));
        }
        if self.d == 0 {
            return Err(ConfigError::invalid("problem.d", "dimension must be >= 1"));
        }
        if self.steps_per_epoch == 0 {
            return Err(ConfigError::invalid(
                "problem.steps_per_epoch",
                "must be >= 1",
            ));
        }
        for (i, n) in self.noises.iter().enumerate() {
            n.validate()
                .map_err(|e| ConfigError::invalid(format!("problem.noise[{i}]"), e.message))?;
        }
        Ok(())
    }

    /// `x + xi` with `xi` drawn coordinatewise from the client's noise law.
    pub fn quadratic_gradient(
        &self,
        x: &ParamVector,
        client: usize,
        stream: &mut RngStream,
    ) -> ParamVector {
        let spec = &self.noises[client];
        x.iter()
            .map(|xi| xi + sample_noise(spec, stream))
            .collect::<Vec<_>>()
            .into()
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.d
    }

    fn num_clients(&self) -> usize {
        self.noises.len()
    }

    fn steps_per_epoch(&self, _client: usize) -> usize {
        self.steps_per_epoch
    }

    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        client: usize,
        stream: &mut RngStream,
    ) -> ParamVector {
        self.quadratic_gradient(x, client, stream)
    }

    fn global_gradient(&self, x: &ParamVector) -> ParamVector {
        x.clone()
    }

    fn global_loss(&self, x: &ParamVector) -> f64 {
        0.5 * x.norm_sq()
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0)
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }
}
