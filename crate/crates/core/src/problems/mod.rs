//! Objectives driven by the federated engine.

mod csv_data;
mod logistic;
mod partition;
mod quadratic;

pub use csv_data::{load_csv_dataset, write_csv_dataset};
pub use logistic::{Dataset, LogisticProblem, SyntheticLogistic};
pub use partition::dirichlet_partition;
pub use quadratic::QuadraticProblem;

use crate::numeric::{ParamVector, RngStream};

/// A federated objective `f(x) = (1/N) sum_i F_i(x)` with stochastic client gradients.
pub trait Problem: Sync {
    fn dim(&self) -> usize;

    fn num_clients(&self) -> usize;

    /// Local steps making up one epoch on `client`; 0 means the client holds no data.
    fn steps_per_epoch(&self, client: usize) -> usize;

    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        client: usize,
        stream: &mut RngStream,
    ) -> ParamVector;

    /// Exact gradient of the global objective.
    fn global_gradient(&self, x: &ParamVector) -> ParamVector;

    fn global_loss(&self, x: &ParamVector) -> f64;

    /// Held-out loss; problems without a test split report the training loss.
    fn test_loss(&self, x: &ParamVector) -> f64 {
        self.global_loss(x)
    }

    /// Smoothness constant of the global objective, when known in closed form.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Global minimum value, when known in closed form.
    fn optimum_value(&self) -> Option<f64> {
        None
    }
}
