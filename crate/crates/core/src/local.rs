//! Client-side optimizer steps.
//!
//! All adaptive kinds refresh their second-moment statistic only on local
//! steps `k` with `(k - 1) % z == 0` and hold it otherwise. Every kind routes
//! its update direction through [`apply_epsilon_clip`] before stepping.

use std::fmt;
use std::sync::Arc;

use crate::cover::Cover;
use crate::error::{ConfigError, OptimError};
use crate::numeric::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LocalOptKind {
    Sgd,
    /// AdaGrad with delayed preconditioner updates.
    Agdu,
    /// Adam with delayed second-moment updates.
    Admu,
    Sm3I,
    Sm3Ii,
    /// ADMU first moment over an SM3-II compressed second moment.
    Sm3Adam,
}

impl LocalOptKind {
    pub const ALL: [LocalOptKind; 6] = [
        LocalOptKind::Sgd,
        LocalOptKind::Agdu,
        LocalOptKind::Admu,
        LocalOptKind::Sm3I,
        LocalOptKind::Sm3Ii,
        LocalOptKind::Sm3Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LocalOptKind::Sgd => "sgd",
            LocalOptKind::Agdu => "agdu",
            LocalOptKind::Admu => "admu",
            LocalOptKind::Sm3I => "sm3_i",
            LocalOptKind::Sm3Ii => "sm3_ii",
            LocalOptKind::Sm3Adam => "sm3_adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn uses_cover(self) -> bool {
        matches!(
            self,
            LocalOptKind::Sm3I | LocalOptKind::Sm3Ii | LocalOptKind::Sm3Adam
        )
    }

    /// Kinds holding an uncompressed per-coordinate second moment.
    pub fn has_dense_preconditioner(self) -> bool {
        matches!(self, LocalOptKind::Agdu | LocalOptKind::Admu)
    }
}

impl fmt::Display for LocalOptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declared constants of the generic update rule
/// `x_p = x_{p-1} - lr * sum a g / theta` with `m_l <= theta <= big_m` and `a_l <= a <= big_a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyBounds {
    pub m_l: f64,
    pub big_m: f64,
    pub a_l: f64,
    pub big_a: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOptConfig {
    pub kind: LocalOptKind,
    pub lr: f64,
    pub eps: f64,
    /// Updates with norm strictly between 0 and `eps_s` are zeroed; 0 disables.
    pub eps_s: f64,
    pub delay: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub v0: f64,
    pub cover: Option<Arc<Cover>>,
    pub strategy_bounds: Option<StrategyBounds>,
}

impl Default for LocalOptConfig {
    fn default() -> Self {
        Self {
            kind: LocalOptKind::Agdu,
            lr: 1e-2,
            eps: 1e-8,
            eps_s: 0.0,
            delay: 1,
            beta1: 0.9,
            beta2: 0.999,
            v0: 0.0,
            cover: None,
            strategy_bounds: None,
        }
    }
}

impl LocalOptConfig {
    pub fn new(kind: LocalOptKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            ..Self::default()
        }
    }

    pub fn with_cover(mut self, cover: Cover) -> Self {
        self.cover = Some(Arc::new(cover));
        self
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let key = |k: &str| format!("{prefix}.{k}");
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::invalid(
                key("eta"),
                "local learning rate must be > 0",
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(ConfigError::invalid(
                key("eps"),
                "local smoothing must be > 0; eps = 0 makes the convergence bound diverge",
            ));
        }
        if !(self.eps_s >= 0.0 && self.eps_s.is_finite()) {
            return Err(ConfigError::invalid(
                key("eps_s"),
                "clip threshold must be >= 0",
            ));
        }
        if self.delay < 1 {
            return Err(ConfigError::invalid(
                key("z"),
                "preconditioner delay must be >= 1",
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(ConfigError::invalid(
                    key(name),
                    "decay rate must lie in [0, 1)",
                ));
            }
        }
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(ConfigError::invalid(
                key("v0"),
                "second-moment init must be >= 0",
            ));
        }
        if let Some(b) = self.strategy_bounds {
            if !(b.m_l > 0.0 && b.m_l <= b.big_m && b.a_l > 0.0 && b.a_l <= b.big_a) {
                return Err(ConfigError::invalid(
                    key("bounds"),
                    "strategy bounds need 0 < m_l <= M_l and 0 < a_l <= A_l",
                ));
            }
        }
        if self.kind.uses_cover() && self.cover.is_none() {
            return Err(ConfigError::invalid(
                key("cover"),
                format!("{} needs a cover", self.kind),
            ));
        }
        Ok(())
    }
}

/// Per-client optimizer state for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOptState {
    /// Number of steps taken so far.
    pub step: usize,
    pub m: ParamVector,
    pub v: ParamVector,
    /// SM3 group accumulators.
    pub mu: Vec<f64>,
    /// ADMU debiased second moment, held across delayed steps.
    pub v_hat: ParamVector,
}

impl LocalOptState {
    /// Zero first moment, `v = v0`, `mu = v0`.
    pub fn new(cfg: &LocalOptConfig, d: usize) -> Self {
        let q = cfg.cover.as_ref().map_or(0, |c| c.num_groups());
        Self {
            step: 0,
            m: ParamVector::zeros(d),
            v: ParamVector::filled(d, cfg.v0),
            mu: vec![cfg.v0; q],
            v_hat: ParamVector::zeros(d),
        }
    }

    /// State whose second moment starts from a transmitted preconditioner.
    pub fn with_preconditioner(cfg: &LocalOptConfig, init_v: &ParamVector) -> Self {
        let mut st = Self::new(cfg, init_v.len());
        st.v = init_v.clone();
        st
    }
}

/// Zero `update` when `0 < ||update|| < eps_s`; otherwise return it unchanged.
pub fn apply_epsilon_clip(update: ParamVector, eps_s: f64) -> ParamVector {
    let norm = update.norm_l2();
    if norm > 0.0 && norm < eps_s {
        ParamVector::zeros(update.len())
    } else {
        update
    }
}

fn check_dims(x: &ParamVector, g: &ParamVector, st: &LocalOptState) -> Result<(), OptimError> {
    for got in [g.len(), st.v.len(), st.m.len()] {
        if got != x.len() {
            return Err(OptimError::DimensionMismatch {
                expected: x.len(),
                got,
            });
        }
    }
    Ok(())
}

fn cover_for(cfg: &LocalOptConfig, d: usize) -> Result<&Cover, OptimError> {
    let cover = cfg
        .cover
        .as_deref()
        .ok_or(OptimError::MissingCover(cfg.kind.name()))?;
    if cover.dim() != d {
        return Err(OptimError::CoverSize {
            cover: cover.dim(),
            model: d,
        });
    }
    Ok(cover)
}

#[inline]
fn is_update_step(k: usize, z: usize) -> bool {
    (k - 1).is_multiple_of(z)
}

/// Number of preconditioner refreshes among steps `1..=k`.
#[inline]
fn refreshes(k: usize, z: usize) -> i32 {
    ((k - 1) / z + 1) as i32
}

fn finish(x: &ParamVector, dir: ParamVector, lr: f64, eps_s: f64) -> ParamVector {
    let dir = apply_epsilon_clip(dir, eps_s);
    ParamVector::from_vec(
        x.iter()
            .zip(dir.iter())
            .map(|(xi, di)| xi - lr * di)
            .collect(),
    )
}

fn precondition(num: &[f64], den: &[f64], eps: f64) -> ParamVector {
    num.iter()
        .zip(den)
        .map(|(n, v)| n / (v.sqrt() + eps))
        .collect::<Vec<_>>()
        .into()
}

pub fn sgd_step(
    x: &ParamVector,
    g: &ParamVector,
    cfg: &LocalOptConfig,
) -> Result<ParamVector, OptimError> {
    sgd_with_lr(x, g, cfg, cfg.lr)
}

fn sgd_with_lr(
    x: &ParamVector,
    g: &ParamVector,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    if g.len() != x.len() {
        return Err(OptimError::DimensionMismatch {
            expected: x.len(),
            got: g.len(),
        });
    }
    Ok(finish(x, g.clone(), lr, cfg.eps_s))
}

pub fn agdu_step(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
) -> Result<ParamVector, OptimError> {
    agdu_with_lr(x, g, st, cfg, cfg.lr)
}

fn agdu_with_lr(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    check_dims(x, g, st)?;
    st.step += 1;
    if is_update_step(st.step, cfg.delay) {
        for (v, gi) in st.v.iter_mut().zip(g.iter()) {
            *v += gi * gi;
        }
    }
    Ok(finish(x, precondition(g, &st.v, cfg.eps), lr, cfg.eps_s))
}

pub fn admu_step(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
) -> Result<ParamVector, OptimError> {
    admu_with_lr(x, g, st, cfg, cfg.lr)
}

fn first_moment(g: &ParamVector, st: &mut LocalOptState, beta1: f64) -> Vec<f64> {
    let debias = 1.0 - beta1.powi(st.step as i32);
    st.m.iter_mut()
        .zip(g.iter())
        .map(|(m, gi)| {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *m / debias
        })
        .collect()
}

fn admu_with_lr(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    check_dims(x, g, st)?;
    st.step += 1;
    let m_hat = first_moment(g, st, cfg.beta1);
    if is_update_step(st.step, cfg.delay) {
        let debias = 1.0 - cfg.beta2.powi(refreshes(st.step, cfg.delay));
        for ((v, vh), gi) in st.v.iter_mut().zip(st.v_hat.iter_mut()).zip(g.iter()) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            *vh = *v / debias;
        }
    }
    Ok(finish(
        x,
        precondition(&m_hat, &st.v_hat, cfg.eps),
        lr,
        cfg.eps_s,
    ))
}

pub fn sm3_i_step(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
) -> Result<ParamVector, OptimError> {
    sm3_i_with_lr(x, g, st, cfg, cfg.lr)
}

fn sm3_i_with_lr(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    check_dims(x, g, st)?;
    let cover = cover_for(cfg, x.len())?;
    st.step += 1;
    if is_update_step(st.step, cfg.delay) {
        for (mu, group) in st.mu.iter_mut().zip(cover.groups()) {
            *mu += group.iter().map(|&j| g[j] * g[j]).fold(0.0, f64::max);
        }
        for (j, v) in st.v.iter_mut().enumerate() {
            *v = min_over(cover.covering(j), &st.mu);
        }
    }
    Ok(finish(x, precondition(g, &st.v, cfg.eps), lr, cfg.eps_s))
}

fn min_over(groups: &[usize], mu: &[f64]) -> f64 {
    groups.iter().map(|&b| mu[b]).fold(f64::INFINITY, f64::min)
}

/// One SM3-II sweep: `v(j) = decay * min_b mu_prev(b) + scale * g(j)^2`, then
/// `mu(b) = max(mu(b), v(j))` over ascending `j`.
fn sm3_ii_refresh(g: &ParamVector, st: &mut LocalOptState, cover: &Cover, decay: f64, scale: f64) {
    let mut fresh = vec![0.0; st.mu.len()];
    for j in 0..g.len() {
        let owners = cover.covering(j);
        let vj = decay * min_over(owners, &st.mu) + scale * g[j] * g[j];
        st.v[j] = vj;
        for &b in owners {
            fresh[b] = f64::max(fresh[b], vj);
        }
    }
    st.mu = fresh;
}

pub fn sm3_ii_step(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
) -> Result<ParamVector, OptimError> {
    sm3_ii_with_lr(x, g, st, cfg, cfg.lr)
}

fn sm3_ii_with_lr(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    check_dims(x, g, st)?;
    let cover = cover_for(cfg, x.len())?;
    st.step += 1;
    if is_update_step(st.step, cfg.delay) {
        sm3_ii_refresh(g, st, cover, 1.0, 1.0);
    }
    Ok(finish(x, precondition(g, &st.v, cfg.eps), lr, cfg.eps_s))
}

/// ADMU momentum over a compressed second moment. With `beta2 > 0` the
/// accumulator is the EMA `beta2 * min mu + (1 - beta2) g^2`, debiased like
/// ADMU; with `beta2 == 0` it is the cumulative SM3-II sum, left undebiased.
pub fn sm3_adam_step(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
) -> Result<ParamVector, OptimError> {
    sm3_adam_with_lr(x, g, st, cfg, cfg.lr)
}

fn sm3_adam_with_lr(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    check_dims(x, g, st)?;
    let cover = cover_for(cfg, x.len())?;
    st.step += 1;
    let m_hat = first_moment(g, st, cfg.beta1);
    if is_update_step(st.step, cfg.delay) {
        if cfg.beta2 > 0.0 {
            sm3_ii_refresh(g, st, cover, cfg.beta2, 1.0 - cfg.beta2);
            let debias = 1.0 - cfg.beta2.powi(refreshes(st.step, cfg.delay));
            for (vh, v) in st.v_hat.iter_mut().zip(st.v.iter()) {
                *vh = v / debias;
            }
        } else {
            sm3_ii_refresh(g, st, cover, 1.0, 1.0);
            st.v_hat.copy_from_slice(&st.v);
        }
    }
    Ok(finish(
        x,
        precondition(&m_hat, &st.v_hat, cfg.eps),
        lr,
        cfg.eps_s,
    ))
}

/// Dispatch one local step on `cfg.kind` with an explicit learning rate.
pub fn local_step(
    x: &ParamVector,
    g: &ParamVector,
    st: &mut LocalOptState,
    cfg: &LocalOptConfig,
    lr: f64,
) -> Result<ParamVector, OptimError> {
    match cfg.kind {
        LocalOptKind::Sgd => {
            st.step += 1;
            sgd_with_lr(x, g, cfg, lr)
        }
        LocalOptKind::Agdu => agdu_with_lr(x, g, st, cfg, lr),
        LocalOptKind::Admu => admu_with_lr(x, g, st, cfg, lr),
        LocalOptKind::Sm3I => sm3_i_with_lr(x, g, st, cfg, lr),
        LocalOptKind::Sm3Ii => sm3_ii_with_lr(x, g, st, cfg, lr),
        LocalOptKind::Sm3Adam => sm3_adam_with_lr(x, g, st, cfg, lr),
    }
}
