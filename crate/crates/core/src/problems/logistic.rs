use crate::error::ConfigError;
use crate::numeric::{derive_stream, stream_ids, ParamVector, RngStream};

use super::{dirichlet_partition, Problem};

/// Row-major feature matrix with integer class labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub p: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(p: usize, features: Vec<f64>, labels: Vec<usize>) -> Self {
        assert_eq!(features.len(), p * labels.len(), "feature matrix shape");
        Self {
            p,
            features,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset::new(
            self.p,
            features,
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Multinomial logistic regression with l2 penalty `lambda / 2 * |x|^2`.
///
/// Parameters are `C` blocks of `p` weights followed by one bias, so
/// `d = C * (p + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticProblem {
    pub classes: usize,
    pub clients: Vec<Dataset>,
    pub test: Dataset,
    pub lambda: f64,
    pub batch: usize,
}

impl LogisticProblem {
    pub fn new(
        classes: usize,
        clients: Vec<Dataset>,
        test: Dataset,
        lambda: f64,
        batch: usize,
    ) -> Result<Self, ConfigError> {
        let p = Self {
            classes,
            clients,
            test,
            lambda,
            batch,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.classes < 2 {
            return Err(ConfigError::invalid(
                "problem.classes",
                "need at least two classes",
            ));
        }
        if self.clients.is_empty() {
            return Err(ConfigError::invalid(
                "problem.clients",
                "need at least one client",
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ConfigError::invalid(
                "problem.lambda",
                "regularization must be >= 0",
            ));
        }
        if self.batch == 0 {
            return Err(ConfigError::invalid(
                "problem.batch",
                "batch size must be >= 1",
            ));
        }
        let p = self.features();
        for data in self.clients.iter().chain(std::iter::once(&self.test)) {
            if data.p != p {
                return Err(ConfigError::invalid(
                    "problem.features",
                    "clients disagree on feature count",
                ));
            }
            if let Some(&bad) = data.labels.iter().find(|&&l| l >= self.classes) {
                return Err(ConfigError::invalid(
                    "problem.labels",
                    format!("label {bad} outside [0, {})", self.classes),
                ));
            }
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        self.test.p
    }

    fn block(&self) -> usize {
        self.features() + 1
    }

    fn logits(&self, x: &[f64], row: &[f64]) -> Vec<f64> {
        let b = self.block();
        (0..self.classes)
            .map(|c| {
                let w = &x[c * b..(c + 1) * b];
                w[..row.len()]
                    .iter()
                    .zip(row)
                    .map(|(a, f)| a * f)
                    .sum::<f64>()
                    + w[row.len()]
            })
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Summed cross-entropy of `rows` of `data` (unregularized).
    fn ce_sum(&self, x: &[f64], data: &Dataset, rows: impl Iterator<Item = usize>) -> f64 {
        rows.map(|i| {
            let z = self.logits(x, data.row(i));
            let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
            lse - z[data.labels[i]]
        })
        .sum()
    }

    /// Accumulate summed cross-entropy gradients of `rows` into `grad`.
    fn ce_grad_sum(
        &self,
        x: &[f64],
        data: &Dataset,
        rows: impl Iterator<Item = usize>,
        grad: &mut [f64],
    ) {
        let b = self.block();
        for i in rows {
            let row = data.row(i);
            let prob = Self::softmax(&self.logits(x, row));
            for (c, pc) in prob.into_iter().enumerate() {
                let r = pc - f64::from(u8::from(c == data.labels[i]));
                let g = &mut grad[c * b..(c + 1) * b];
                for (gk, f) in g.iter_mut().zip(row) {
                    *gk += r * f;
                }
                g[row.len()] += r;
            }
        }
    }

    /// Mean loss of `client` on `batch` plus the penalty.
    pub fn batch_loss(&self, x: &ParamVector, client: usize, batch: &[usize]) -> f64 {
        assert!(!batch.is_empty(), "empty batch");
        let data = &self.clients[client];
        self.ce_sum(x, data, batch.iter().copied()) / batch.len() as f64
            + 0.5 * self.lambda * x.norm_sq()
    }

    /// Gradient of [`LogisticProblem::batch_loss`].
    pub fn logistic_gradient(
        &self,
        x: &ParamVector,
        client: usize,
        batch: &[usize],
    ) -> ParamVector {
        assert!(!batch.is_empty(), "empty batch");
        let mut g = vec![0.0; x.len()];
        self.ce_grad_sum(x, &self.clients[client], batch.iter().copied(), &mut g);
        let n = batch.len() as f64;
        for (gk, xk) in g.iter_mut().zip(x.iter()) {
            *gk = *gk / n + self.lambda * xk;
        }
        g.into()
    }

    fn pooled_count(&self) -> usize {
        self.clients.iter().map(Dataset::len).sum()
    }
}

impl Problem for LogisticProblem {
    fn dim(&self) -> usize {
        self.classes * self.block()
    }

    fn num_clients(&self) -> usize {
        self.clients.len()
    }

    fn steps_per_epoch(&self, client: usize) -> usize {
        self.clients[client].len().div_ceil(self.batch)
    }

    /// Minibatch of `batch` rows drawn with replacement.
    fn stochastic_gradient(
        &self,
        x: &ParamVector,
        client: usize,
        stream: &mut RngStream,
    ) -> ParamVector {
        let n = self.clients[client].len();
        let rows: Vec<usize> = (0..self.batch).map(|_| stream.index(n)).collect();
        self.logistic_gradient(x, client, &rows)
    }

    /// Full-batch gradient over the pooled training data.
    fn global_gradient(&self, x: &ParamVector) -> ParamVector {
        let mut g = vec![0.0; x.len()];
        for data in &self.clients {
            self.ce_grad_sum(x, data, 0..data.len(), &mut g);
        }
        let n = self.pooled_count().max(1) as f64;
        for (gk, xk) in g.iter_mut().zip(x.iter()) {
            *gk = *gk / n + self.lambda * xk;
        }
        g.into()
    }

    fn global_loss(&self, x: &ParamVector) -> f64 {
        let total: f64 = self
            .clients
            .iter()
            .map(|d| self.ce_sum(x, d, 0..d.len()))
            .sum();
        total / self.pooled_count().max(1) as f64 + 0.5 * self.lambda * x.norm_sq()
    }

    fn test_loss(&self, x: &ParamVector) -> f64 {
        if self.test.is_empty() {
            return self.global_loss(x);
        }
        self.ce_sum(x, &self.test, 0..self.test.len()) / self.test.len() as f64
    }
}

/// Recipe for a synthetic softmax-teacher classification task split across
/// clients by Dirichlet label allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLogistic {
    pub clients: usize,
    pub classes: usize,
    pub features: usize,
    pub train: usize,
    pub test: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub batch: usize,
    /// Scale of the teacher logits; larger values give cleaner labels.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SyntheticLogistic {
    fn default() -> Self {
        Self {
            clients: 50,
            classes: 10,
            features: 20,
            train: 5000,
            test: 1000,
            alpha: 0.1,
            lambda: 1e-4,
            batch: 32,
            margin: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticLogistic {
    pub fn build(&self) -> Result<LogisticProblem, ConfigError> {
        if self.clients == 0 {
            return Err(ConfigError::invalid(
                "problem.clients",
                "need at least one client",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ConfigError::invalid(
                "problem.alpha",
                "Dirichlet concentration must be > 0",
            ));
        }
        let mut s = derive_stream(self.seed, 0, stream_ids::DATA);
        let (p, c) = (self.features, self.classes);
        let scale = self.margin / (p as f64).sqrt();
        let teacher: Vec<f64> = (0..c * p).map(|_| scale * s.standard_normal()).collect();
        let draw = |n: usize, s: &mut RngStream| {
            let mut features = Vec::with_capacity(n * p);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..p).map(|_| s.standard_normal()).collect();
                let z: Vec<f64> = (0..c)
                    .map(|k| {
                        teacher[k * p..(k + 1) * p]
                            .iter()
                            .zip(&row)
                            .map(|(w, f)| w * f)
                            .sum()
                    })
                    .collect();
                let prob = LogisticProblem::softmax(&z);
                let u = s.open01();
                let mut acc = 0.0;
                let label = prob.iter().position(|q| {
                    acc += q;
                    u <= acc
                });
                labels.push(label.unwrap_or(c - 1));
                features.extend(row);
            }
            Dataset::new(p, features, labels)
        };
        let pool = draw(self.train, &mut s);
        let test = draw(self.test, &mut s);
        let parts = dirichlet_partition(&pool.labels, self.clients, self.alpha, self.seed);
        let clients = parts.iter().map(|idx| pool.subset(idx)).collect();
        LogisticProblem::new(c, clients, test, self.lambda, self.batch)
    }
}
