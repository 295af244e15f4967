//! Round orchestration: sampling, local training, weighting, aggregation,
//! optional clip-and-noise, and the server update.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;

use crate::bounds::{phi1_admu, phi1_agdu, phi1_bound, phi1_generic, phi2_with, BoundInputs};
use crate::error::{ConfigError, EngineError};
use crate::ledger::{record_round, ClientSlot, RoundRecord, TransmissionMode, BITS_PER_FLOAT};
use crate::local::{local_step, LocalOptConfig, LocalOptKind, LocalOptState};
use crate::numeric::{derive_stream, stream_ids, ParamVector, RngStream};
use crate::problems::Problem;
use crate::server::{server_update, ServerConfig, ServerKind, ServerState};

/// A client optimizer together with its epoch count and pseudogradient weight.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerStrategy {
    pub local_cfg: LocalOptConfig,
    pub epochs: usize,
    pub weight: f64,
}

impl OptimizerStrategy {
    pub fn new(local_cfg: LocalOptConfig) -> Self {
        Self {
            local_cfg,
            epochs: 1,
            weight: 1.0,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        self.local_cfg.validate(prefix)?;
        if self.epochs < 1 {
            return Err(ConfigError::invalid(
                format!("{prefix}.epochs"),
                "epochs must be >= 1",
            ));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(ConfigError::invalid(
                format!("{prefix}.weight"),
                "pseudogradient weight must be > 0",
            ));
        }
        Ok(())
    }
}

/// Clip-then-noise applied to client pseudogradients before the server step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyConfig {
    pub clip: f64,
    pub noise_multiplier: f64,
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(ConfigError::invalid(
                "privacy.clip",
                "clip value must be > 0",
            ));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(ConfigError::invalid(
                "privacy.sigma",
                "noise multiplier must be >= 0",
            ));
        }
        Ok(())
    }
}

/// Per-round client learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClientSchedule {
    /// Each strategy's own `lr`.
    Constant,
    /// `1 / ((t + t0) (1 - eps_hat))` at round `t`, for every client.
    Harmonic { t0: f64, eps_hat: f64 },
}

impl ClientSchedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let ClientSchedule::Harmonic { t0, eps_hat } = *self {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(ConfigError::invalid("schedule.t0", "offset must be > 0"));
            }
            if !(0.0..1.0).contains(&eps_hat) {
                return Err(ConfigError::invalid(
                    "schedule.eps_hat",
                    "must lie in [0, 1)",
                ));
            }
        }
        Ok(())
    }

    /// Smallest positive integer offset keeping every harmonic rate below `eps`.
    pub fn smallest_t0(eps: f64, eps_hat: f64) -> f64 {
        let mut t0 = 1.0;
        while 1.0 / ((1.0 + t0) * (1.0 - eps_hat)) >= eps {
            t0 += 1.0;
        }
        t0
    }

    fn rate(&self, base: f64, round: u64) -> f64 {
        match *self {
            ClientSchedule::Constant => base,
            ClientSchedule::Harmonic { t0, eps_hat } => {
                1.0 / ((round as f64 + t0) * (1.0 - eps_hat))
            }
        }
    }
}

/// Which strategy each sampled client runs.
#[derive(Clone)]
pub enum Assignment {
    /// `map[client]` indexes the strategy list; clients past the end use strategy 0.
    Static(Vec<usize>),
    /// Client `i` runs strategy `i mod len`.
    RoundRobin,
    /// `f(round, client)` picks the strategy index.
    Callback(Arc<dyn Fn(u64, usize) -> usize + Send + Sync>),
}

impl Assignment {
    fn pick(&self, round: u64, client: usize, n: usize) -> usize {
        match self {
            Assignment::Static(map) => map.get(client).copied().unwrap_or(0),
            Assignment::RoundRobin => client % n,
            Assignment::Callback(f) => f(round, client),
        }
    }
}

impl fmt::Debug for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Static(map) => f.debug_tuple("Static").field(map).finish(),
            Assignment::RoundRobin => f.write_str("RoundRobin"),
            Assignment::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

impl PartialEq for Assignment {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Assignment::Static(a), Assignment::Static(b)) => a == b,
            (Assignment::RoundRobin, Assignment::RoundRobin) => true,
            (Assignment::Callback(a), Assignment::Callback(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub rounds: u64,
    pub fraction: f64,
    pub seed: u64,
    /// Every coordinate of the starting point.
    pub x0: f64,
    pub server: ServerConfig,
    pub strategies: Vec<OptimizerStrategy>,
    pub assignment: Assignment,
    pub mode: TransmissionMode,
    pub privacy: Option<PrivacyConfig>,
    /// Local steps of linear learning-rate warm-up; 0 disables.
    pub warmup: usize,
    pub schedule: ClientSchedule,
    /// Coordinatewise gradient clamp `G`.
    pub grad_clamp: Option<f64>,
    /// Report pseudogradient and server-step bound slack each round.
    pub bound_check: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            fraction: 1.0,
            seed: 0,
            x0: 0.0,
            server: ServerConfig::default(),
            strategies: vec![OptimizerStrategy::new(LocalOptConfig::default())],
            assignment: Assignment::Static(Vec::new()),
            mode: TransmissionMode::ZeroInit,
            privacy: None,
            warmup: 0,
            schedule: ClientSchedule::Constant,
            grad_clamp: None,
            bound_check: false,
        }
    }
}

/// Key prefix of strategy `i` in configuration errors.
pub fn strategy_prefix(i: usize) -> String {
    if i == 0 {
        "client".to_string()
    } else {
        format!("client.{i}")
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(ConfigError::invalid(
                "experiment.fraction",
                "participation fraction must lie in (0, 1]",
            ));
        }
        if !self.x0.is_finite() {
            return Err(ConfigError::invalid(
                "experiment.x0",
                "starting point must be finite",
            ));
        }
        self.server.validate()?;
        if self.strategies.is_empty() {
            return Err(ConfigError::invalid(
                "client",
                "need at least one client strategy",
            ));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            s.validate(&strategy_prefix(i))?;
            if self.mode == TransmissionMode::TransmitPreconditioner
                && !s.local_cfg.kind.has_dense_preconditioner()
            {
                return Err(ConfigError::invalid(
                    format!("{}.kind", strategy_prefix(i)),
                    format!(
                        "transmit_preconditioner needs agdu or admu clients, got {}",
                        s.local_cfg.kind
                    ),
                ));
            }
        }
        if let Assignment::Static(map) = &self.assignment {
            if let Some(&bad) = map.iter().find(|&&k| k >= self.strategies.len()) {
                return Err(ConfigError::invalid(
                    "assignment.map",
                    format!(
                        "strategy {bad} does not exist ({} defined)",
                        self.strategies.len()
                    ),
                ));
            }
        }
        if let Some(p) = &self.privacy {
            p.validate()?;
        }
        self.schedule.validate()?;
        if let Some(g) = self.grad_clamp {
            if !(g > 0.0 && g.is_finite()) {
                return Err(ConfigError::invalid(
                    "experiment.g",
                    "gradient clamp must be > 0",
                ));
            }
        }
        if self.bound_check && self.grad_clamp.is_none() {
            return Err(ConfigError::invalid(
                "experiment.g",
                "bound checking needs a gradient clamp",
            ));
        }
        Ok(())
    }

    /// Server configuration after the transmission mode is applied.
    pub fn effective_server(&self) -> ServerConfig {
        let mut s = self.server.clone();
        if self.mode == TransmissionMode::None {
            s.kind = ServerKind::Avg;
        }
        s
    }

    /// Strategy `i` after the transmission mode is applied.
    pub fn effective_strategy(&self, i: usize) -> OptimizerStrategy {
        let mut s = self.strategies[i].clone();
        if self.mode.forces_sgd() {
            s.local_cfg.kind = LocalOptKind::Sgd;
        }
        s
    }
}

/// One client's contribution to a round.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientDelta {
    pub client: usize,
    /// `w (x_end - x_start)`.
    pub delta: ParamVector,
    pub steps: usize,
    pub uplink_bits: u64,
    pub kind: LocalOptKind,
    pub strategy: usize,
}

/// `ceil(fraction * n)` distinct ids, ascending, drawn from the round's sampling stream.
pub fn sample_clients(
    n: usize,
    fraction: f64,
    round: u64,
    seed: u64,
) -> Result<Vec<usize>, ConfigError> {
    if n == 0 {
        return Err(ConfigError::invalid(
            "problem.clients",
            "need at least one client",
        ));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ConfigError::invalid(
            "experiment.fraction",
            "participation fraction must lie in (0, 1]",
        ));
    }
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    if m == n {
        return Ok((0..n).collect());
    }
    let mut stream = derive_stream(seed, round, stream_ids::SAMPLING);
    let mut ids = index::sample(&mut stream, n, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Everything `local_train` needs besides the problem and stream.
#[derive(Clone, Debug)]
pub struct LocalRun<'a> {
    pub round: u64,
    pub strategy: &'a OptimizerStrategy,
    pub init_v: Option<&'a ParamVector>,
    /// Learning rate before warm-up.
    pub lr: f64,
    pub warmup: usize,
    pub grad_clamp: Option<f64>,
}

/// Run `epochs * steps_per_epoch` local steps from `x_start` and return the weighted delta.
pub fn local_train(
    client: usize,
    x_start: &ParamVector,
    run: &LocalRun<'_>,
    problem: &dyn Problem,
    stream: &mut RngStream,
) -> Result<ClientDelta, EngineError> {
    let cfg = &run.strategy.local_cfg;
    let steps = run.strategy.epochs * problem.steps_per_epoch(client);
    let mut st = match run.init_v {
        Some(v) => LocalOptState::with_preconditioner(cfg, v),
        None => LocalOptState::new(cfg, x_start.len()),
    };
    let mut x = x_start.clone();
    for k in 1..=steps {
        let mut g = problem.stochastic_gradient(&x, client, stream);
        if !g.is_finite() {
            return Err(EngineError::Divergence {
                round: run.round,
                client,
                step: k,
            });
        }
        if let Some(bound) = run.grad_clamp {
            g.clamp_abs(bound);
        }
        let lr = if run.warmup > 0 {
            run.lr * (k.min(run.warmup) as f64 / run.warmup as f64)
        } else {
            run.lr
        };
        x = local_step(&x, &g, &mut st, cfg, lr)?;
    }
    let mut delta = x.sub(x_start);
    delta.scale(run.strategy.weight);
    Ok(ClientDelta {
        client,
        uplink_bits: delta.len() as u64 * BITS_PER_FLOAT,
        delta,
        steps,
        kind: cfg.kind,
        strategy: 0,
    })
}

/// Mean of the deltas, summed in ascending client order.
pub fn aggregate(deltas: &[ClientDelta]) -> Option<ParamVector> {
    let mut order: Vec<&ClientDelta> = deltas.iter().collect();
    order.sort_by_key(|c| c.client);
    let (first, rest) = order.split_first()?;
    let mut sum = first.delta.clone();
    for c in rest {
        assert_eq!(c.delta.len(), sum.len(), "delta length mismatch");
        sum.axpy(1.0, &c.delta);
    }
    sum.scale(1.0 / order.len() as f64);
    Some(sum)
}

/// Clip every delta to l2 norm `clip`, average, then add `N(0, (sigma clip / |S|)^2)` per coordinate.
pub fn privatize(
    deltas: &[ClientDelta],
    cfg: &PrivacyConfig,
    stream: &mut RngStream,
) -> Option<ParamVector> {
    let clipped: Vec<ClientDelta> = deltas
        .iter()
        .map(|c| {
            let norm = c.delta.norm_l2();
            let mut out = c.clone();
            if norm > cfg.clip {
                out.delta.scale(cfg.clip / norm);
            }
            out
        })
        .collect();
    let mut mean = aggregate(&clipped)?;
    if cfg.noise_multiplier > 0.0 {
        let std = cfg.noise_multiplier * cfg.clip / deltas.len() as f64;
        for v in mean.iter_mut() {
            *v += std * stream.standard_normal();
        }
    }
    Some(mean)
}

/// Pseudogradient bound for one client configuration, or `None` when no bound applies.
pub fn client_phi1(
    strategy: &OptimizerStrategy,
    steps: usize,
    lr: f64,
    g: f64,
    v0: f64,
) -> Option<f64> {
    if steps == 0 {
        return Some(0.0);
    }
    let cfg = &strategy.local_cfg;
    let w = strategy.weight.abs();
    let inp = BoundInputs {
        eta_l: lr,
        eps: cfg.eps,
        k: steps,
        z: cfg.delay,
        g,
        v0,
        ..BoundInputs::default()
    };
    let mut best: Option<f64> = None;
    let mut offer = |b: f64| best = Some(best.map_or(b, |x: f64| x.min(b)));
    match cfg.kind {
        LocalOptKind::Sm3I | LocalOptKind::Sm3Ii => offer(w * phi1_bound(&inp)),
        LocalOptKind::Agdu => offer(phi1_agdu(&inp, w)),
        LocalOptKind::Admu => offer(phi1_admu(&inp, w, cfg.beta1, cfg.beta2)),
        LocalOptKind::Sm3Adam if cfg.beta2 > 0.0 => offer(phi1_admu(&inp, w, cfg.beta1, cfg.beta2)),
        _ => {}
    }
    if let Some(b) = cfg.strategy_bounds {
        offer(phi1_generic(lr, w, steps, b.big_a, g, b.m_l));
    }
    best
}

/// Mutable state of one run.
pub struct Engine<'a> {
    problem: &'a dyn Problem,
    cfg: EngineConfig,
    server_cfg: ServerConfig,
    strategies: Vec<OptimizerStrategy>,
    state: ServerState,
    round: u64,
    cum_bits: u64,
}

impl<'a> Engine<'a> {
    pub fn new(problem: &'a dyn Problem, cfg: EngineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let d = problem.dim();
        if problem.num_clients() == 0 {
            return Err(ConfigError::invalid(
                "problem.clients",
                "need at least one client",
            ));
        }
        for (i, s) in cfg.strategies.iter().enumerate() {
            if let Some(c) = &s.local_cfg.cover {
                if c.dim() != d {
                    return Err(ConfigError::invalid(
                        format!("{}.cover", strategy_prefix(i)),
                        format!("cover spans {} coordinates but the model has {d}", c.dim()),
                    ));
                }
            }
        }
        let server_cfg = cfg.effective_server();
        let strategies = (0..cfg.strategies.len())
            .map(|i| cfg.effective_strategy(i))
            .collect();
        let state = ServerState::new(ParamVector::filled(d, cfg.x0), &server_cfg);
        Ok(Self {
            problem,
            cfg,
            server_cfg,
            strategies,
            state,
            round: 0,
            cum_bits: 0,
        })
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    fn strategy_for(&self, round: u64, client: usize) -> Result<usize, EngineError> {
        let k = self
            .cfg
            .assignment
            .pick(round, client, self.strategies.len());
        if k >= self.strategies.len() {
            return Err(ConfigError::invalid(
                "assignment",
                format!("strategy {k} for client {client} does not exist"),
            )
            .into());
        }
        Ok(k)
    }

    pub fn run_round(&mut self) -> Result<RoundRecord, EngineError> {
        let round = self.round + 1;
        let seed = self.cfg.seed;
        let problem = self.problem;
        let sampled = sample_clients(problem.num_clients(), self.cfg.fraction, round, seed)?;
        let active: Vec<(usize, usize)> = sampled
            .into_iter()
            .filter(|&c| problem.steps_per_epoch(c) > 0)
            .map(|c| self.strategy_for(round, c).map(|k| (c, k)))
            .collect::<Result<_, _>>()?;
        if active.is_empty() {
            return Err(EngineError::EmptyRound(round));
        }

        let transmit = self.cfg.mode == TransmissionMode::TransmitPreconditioner;
        let init_v = transmit.then(|| self.state.v.clone());
        let x_start = &self.state.x;
        let results: Vec<Result<ClientDelta, EngineError>> = active
            .par_iter()
            .map(|&(client, k)| {
                let strategy = &self.strategies[k];
                let run = LocalRun {
                    round,
                    strategy,
                    init_v: init_v.as_ref(),
                    lr: self.cfg.schedule.rate(strategy.local_cfg.lr, round),
                    warmup: self.cfg.warmup,
                    grad_clamp: self.cfg.grad_clamp,
                };
                let mut stream = derive_stream(seed, round, client as u64);
                local_train(client, x_start, &run, problem, &mut stream).map(|mut c| {
                    c.strategy = k;
                    c
                })
            })
            .collect();
        let deltas: Vec<ClientDelta> = results.into_iter().collect::<Result<_, _>>()?;

        let phi1 = self.phi1_per_client(&deltas, init_v.as_ref());
        let phi1_margin = deltas
            .iter()
            .zip(&phi1)
            .filter_map(|(c, b)| b.map(|b| b - c.delta.norm_inf()))
            .fold(f64::NAN, f64::min);

        let mean = match &self.cfg.privacy {
            Some(p) => {
                let mut stream = derive_stream(seed, round, stream_ids::PRIVACY);
                privatize(&deltas, p, &mut stream)
            }
            None => aggregate(&deltas),
        }
        .ok_or(EngineError::EmptyRound(round))?;

        let x_prev = self.state.x.clone();
        let state = std::mem::replace(
            &mut self.state,
            ServerState::new(ParamVector::zeros(0), &self.server_cfg),
        );
        self.state = server_update(state, &mean, &self.server_cfg)?;
        if !self.state.x.is_finite() {
            return Err(EngineError::ServerDivergence(round));
        }
        let step = self.state.x.sub(&x_prev).norm_inf();
        let phi2_margin = self.phi2(round, &phi1).map_or(f64::NAN, |b| b - step);

        let slots: Vec<ClientSlot> = deltas
            .iter()
            .map(|c| ClientSlot {
                kind: c.kind,
                q: self.strategies[c.strategy]
                    .local_cfg
                    .cover
                    .as_ref()
                    .map_or(0, |cv| cv.num_groups()),
            })
            .collect();
        let cost = record_round(self.cfg.mode, problem.dim(), &slots);
        self.cum_bits += cost.bits();
        self.round = round;

        let x = &self.state.x;
        Ok(RoundRecord {
            round,
            train_loss: problem.global_loss(x),
            test_loss: problem.test_loss(x),
            grad_norm: problem.global_gradient(x).norm_l2(),
            downlink_floats: cost.downlink_floats,
            uplink_floats: cost.uplink_floats,
            client_state_floats: cost.client_state_floats,
            cum_bits: self.cum_bits,
            phi1_margin,
            phi2_margin,
        })
    }

    fn phi1_per_client(
        &self,
        deltas: &[ClientDelta],
        init_v: Option<&ParamVector>,
    ) -> Vec<Option<f64>> {
        let g = match (self.cfg.bound_check, self.cfg.grad_clamp, self.cfg.schedule) {
            (true, Some(g), ClientSchedule::Constant) => g,
            _ => return vec![None; deltas.len()],
        };
        deltas
            .iter()
            .map(|c| {
                let s = &self.strategies[c.strategy];
                let v0 = init_v.map_or(s.local_cfg.v0, |v| {
                    v.iter().copied().fold(f64::INFINITY, f64::min)
                });
                client_phi1(s, c.steps, s.local_cfg.lr, g, v0)
            })
            .collect()
    }

    fn phi2(&self, round: u64, phi1: &[Option<f64>]) -> Option<f64> {
        if self.server_cfg.kind != ServerKind::Adagrad || self.cfg.privacy.is_some() {
            return None;
        }
        let worst = phi1
            .iter()
            .copied()
            .try_fold(0.0f64, |m, b| b.map(|b| m.max(b)))?;
        let s = &self.server_cfg;
        Some(phi2_with(s.lr, s.tau, s.beta1, round as usize, worst))
    }
}

/// Run `cfg.rounds` rounds and return one record per round.
pub fn run_experiment(
    problem: &dyn Problem,
    cfg: &EngineConfig,
) -> Result<Vec<RoundRecord>, EngineError> {
    let mut engine = Engine::new(problem, cfg.clone())?;
    (0..cfg.rounds).map(|_| engine.run_round()).collect()
}

/// Run the same configuration once per seed.
pub fn run_ensemble(
    problem: &dyn Problem,
    cfg: &EngineConfig,
    seeds: &[u64],
) -> Result<Vec<Vec<RoundRecord>>, EngineError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = EngineConfig {
                seed,
                ..cfg.clone()
            };
            run_experiment(problem, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::NoiseSpec;
    use crate::problems::QuadraticProblem;

    fn noiseless(n: usize) -> QuadraticProblem {
        QuadraticProblem::homogeneous(n, NoiseSpec::Gaussian { sigma: 0.0 }, 1).unwrap()
    }

    fn sgd(lr: f64) -> OptimizerStrategy {
        OptimizerStrategy::new(LocalOptConfig::new(LocalOptKind::Sgd, lr))
    }

    fn delta(client: usize, v: Vec<f64>) -> ClientDelta {
        ClientDelta {
            client,
            delta: v.into(),
            steps: 1,
            uplink_bits: 0,
            kind: LocalOptKind::Sgd,
            strategy: 0,
        }
    }

    #[test]
    fn sampling_counts_and_determinism() {
        assert_eq!(
            sample_clients(10, 1.0, 3, 7).unwrap(),
            (0..10).collect::<Vec<_>>()
        );
        let a = sample_clients(400, 0.1, 5, 1).unwrap();
        assert_eq!(a.len(), 40);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_clients(400, 0.1, 5, 1).unwrap());
        assert_ne!(a, sample_clients(400, 0.1, 6, 1).unwrap());
        assert!(sample_clients(0, 1.0, 1, 1).is_err());
        assert!(sample_clients(5, 0.0, 1, 1).is_err());
    }

    #[test]
    fn single_sgd_step_delta() {
        let p = noiseless(1);
        let s = sgd(1.0);
        let run = LocalRun {
            round: 1,
            strategy: &s,
            init_v: None,
            lr: 1.0,
            warmup: 0,
            grad_clamp: None,
        };
        let c = local_train(
            0,
            &ParamVector::from_vec(vec![2.0]),
            &run,
            &p,
            &mut derive_stream(0, 1, 0),
        )
        .unwrap();
        assert_eq!(c.delta.as_slice(), &[-2.0]);
        assert_eq!(c.uplink_bits, 64);
    }

    #[test]
    fn weight_scales_delta() {
        let p = QuadraticProblem::homogeneous(1, NoiseSpec::Gaussian { sigma: 1.0 }, 3).unwrap();
        let mut s = OptimizerStrategy::new(LocalOptConfig::new(LocalOptKind::Agdu, 0.1));
        s.epochs = 4;
        let x = ParamVector::from_vec(vec![1.0, -2.0, 0.5]);
        let go = |s: &OptimizerStrategy| {
            let run = LocalRun {
                round: 1,
                strategy: s,
                init_v: None,
                lr: 0.1,
                warmup: 0,
                grad_clamp: None,
            };
            local_train(0, &x, &run, &p, &mut derive_stream(3, 1, 0))
                .unwrap()
                .delta
        };
        let one = go(&s);
        s.weight = 2.0;
        assert_eq!(go(&s), one.scaled(2.0));
    }

    #[test]
    fn transmitted_preconditioner_changes_delta() {
        let p = QuadraticProblem::homogeneous(1, NoiseSpec::Gaussian { sigma: 0.5 }, 2).unwrap();
        let s = OptimizerStrategy::new(LocalOptConfig::new(LocalOptKind::Agdu, 0.1));
        let x = ParamVector::from_vec(vec![1.0, 1.0]);
        let v = ParamVector::filled(2, 4.0);
        let go = |init_v: Option<&ParamVector>| {
            let run = LocalRun {
                round: 1,
                strategy: &s,
                init_v,
                lr: 0.1,
                warmup: 0,
                grad_clamp: None,
            };
            local_train(0, &x, &run, &p, &mut derive_stream(3, 1, 0))
                .unwrap()
                .delta
        };
        assert_ne!(go(None), go(Some(&v)));
        assert_eq!(go(None), go(Some(&ParamVector::zeros(2))));
    }

    #[test]
    fn aggregation() {
        let a = delta(0, vec![1.0, 0.0]);
        let b = delta(1, vec![0.0, 1.0]);
        assert_eq!(
            aggregate(&[a.clone(), b.clone()]).unwrap().as_slice(),
            &[0.5, 0.5]
        );
        assert_eq!(aggregate(&[a.clone(), a.clone()]).unwrap(), a.delta);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn aggregation_is_order_independent() {
        let mut s = derive_stream(1, 0, 0);
        let mut ds: Vec<ClientDelta> = (0..17)
            .map(|i| {
                delta(
                    i,
                    (0..5)
                        .map(|_| s.standard_normal() * 10f64.powi(s.index(12) as i32 - 6))
                        .collect(),
                )
            })
            .collect();
        let reference = aggregate(&ds).unwrap();
        for _ in 0..20 {
            for i in (1..ds.len()).rev() {
                ds.swap(i, s.index(i + 1));
            }
            let again = aggregate(&ds).unwrap();
            assert!(reference
                .iter()
                .zip(again.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn privatize_clips_and_noises() {
        let cfg = PrivacyConfig {
            clip: 1.0,
            noise_multiplier: 0.0,
        };
        let small = [delta(0, vec![0.3, 0.4]), delta(1, vec![-0.6, 0.0])];
        let mut s = derive_stream(0, 0, 0);
        assert_eq!(privatize(&small, &cfg, &mut s), aggregate(&small));
        let big = [delta(0, vec![1.2, 1.6])];
        let out = privatize(&big, &cfg, &mut s).unwrap();
        assert!((out.norm_l2() - 1.0).abs() < 1e-15);
        assert!((out[0] - 0.6).abs() < 1e-15);

        let noisy = PrivacyConfig {
            clip: 2.0,
            noise_multiplier: 1.0,
        };
        let zeros = [
            delta(0, vec![0.0]),
            delta(1, vec![0.0]),
            delta(2, vec![0.0]),
            delta(3, vec![0.0]),
        ];
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| privatize(&zeros, &noisy, &mut s).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd / 0.5 - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn fedavg_one_round_hand_oracle() {
        let p = noiseless(1);
        let cfg = EngineConfig {
            x0: 4.0,
            server: ServerConfig::fedavg(),
            strategies: vec![sgd(1.0)],
            mode: TransmissionMode::None,
            ..EngineConfig::default()
        };
        let mut e = Engine::new(&p, cfg).unwrap();
        let r = e.run_round().unwrap();
        assert_eq!(e.state().x.as_slice(), &[0.0]);
        assert_eq!(r.round, 1);
        assert_eq!(r.train_loss, 0.0);
    }

    #[test]
    fn server_only_forces_sgd() {
        let p = noiseless(3);
        let cfg = EngineConfig {
            x0: 1.0,
            strategies: vec![OptimizerStrategy::new(LocalOptConfig::new(
                LocalOptKind::Admu,
                0.1,
            ))],
            mode: TransmissionMode::ServerOnly,
            ..EngineConfig::default()
        };
        let r = run_experiment(&p, &cfg).unwrap();
        assert_eq!(r[0].client_state_floats, 1);
        assert_eq!(r[0].downlink_floats, 3);
    }

    #[test]
    fn blended_round_completes() {
        let p = QuadraticProblem::homogeneous(6, NoiseSpec::Gaussian { sigma: 0.1 }, 2).unwrap();
        let cfg = EngineConfig {
            rounds: 3,
            x0: 1.0,
            strategies: vec![
                OptimizerStrategy::new(LocalOptConfig::new(LocalOptKind::Agdu, 0.05)),
                OptimizerStrategy::new(LocalOptConfig::new(LocalOptKind::Admu, 0.05)),
            ],
            assignment: Assignment::RoundRobin,
            ..EngineConfig::default()
        };
        let r = run_experiment(&p, &cfg).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].client_state_floats, 2 + 4);
        assert_eq!(r[2].cum_bits, 3 * 6 * 4 * 64);
    }

    #[test]
    fn transmit_needs_dense_clients() {
        let mut cfg = EngineConfig {
            mode: TransmissionMode::TransmitPreconditioner,
            strategies: vec![sgd(0.1)],
            ..EngineConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().key, "client.kind");
        cfg.strategies[0].local_cfg.kind = LocalOptKind::Agdu;
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_rounds_is_empty() {
        let p = noiseless(2);
        let cfg = EngineConfig {
            rounds: 0,
            ..EngineConfig::default()
        };
        assert!(run_experiment(&p, &cfg).unwrap().is_empty());
    }

    #[test]
    fn divergence_is_reported() {
        struct Bad;
        impl Problem for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn num_clients(&self) -> usize {
                2
            }
            fn steps_per_epoch(&self, _: usize) -> usize {
                3
            }
            fn stochastic_gradient(
                &self,
                _: &ParamVector,
                client: usize,
                _: &mut RngStream,
            ) -> ParamVector {
                ParamVector::filled(1, if client == 1 { f64::NAN } else { 1.0 })
            }
            fn global_gradient(&self, x: &ParamVector) -> ParamVector {
                x.clone()
            }
            fn global_loss(&self, _: &ParamVector) -> f64 {
                0.0
            }
        }
        let err = run_experiment(&Bad, &EngineConfig::default()).unwrap_err();
        assert!(
            matches!(
                err,
                EngineError::Divergence {
                    round: 1,
                    client: 1,
                    step: 1
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn smallest_t0_for_unit_eps() {
        assert_eq!(ClientSchedule::smallest_t0(1.0, 0.05), 1.0);
        assert_eq!(ClientSchedule::smallest_t0(0.1, 0.0), 10.0);
    }

    #[test]
    fn warmup_scales_first_steps() {
        let p = noiseless(1);
        let s = sgd(1.0);
        let run = LocalRun {
            round: 1,
            strategy: &s,
            init_v: None,
            lr: 1.0,
            warmup: 4,
            grad_clamp: None,
        };
        let c = local_train(
            0,
            &ParamVector::from_vec(vec![8.0]),
            &run,
            &p,
            &mut derive_stream(0, 1, 0),
        )
        .unwrap();
        // One step at lr 1/4: 8 - 2 = 6.
        assert_eq!(c.delta.as_slice(), &[-2.0]);
    }
}
