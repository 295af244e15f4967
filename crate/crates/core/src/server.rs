//! Server-side updates on the averaged pseudogradient.
//!
//! `delta` is the mean client movement `x_{i,K} - x_{t-1}`, so every kind adds
//! its step to `x`.

use std::fmt;

use crate::error::{ConfigError, OptimError};
use crate::numeric::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ServerKind {
    Avg,
    Adagrad,
    Adam,
}

impl ServerKind {
    pub fn name(self) -> &'static str {
        match self {
            ServerKind::Avg => "avg",
            ServerKind::Adagrad => "adagrad",
            ServerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "avg" | "fedavg" => Some(ServerKind::Avg),
            "adagrad" => Some(ServerKind::Adagrad),
            "adam" => Some(ServerKind::Adam),
            _ => None,
        }
    }
}

impl fmt::Display for ServerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerConfig {
    pub kind: ServerKind,
    pub lr: f64,
    pub tau: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Initial accumulator; `None` means `tau^2`.
    pub v0: Option<f64>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            kind: ServerKind::Adagrad,
            lr: 1e-3,
            tau: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            v0: None,
        }
    }
}

impl ServerConfig {
    pub fn new(kind: ServerKind, lr: f64, tau: f64) -> Self {
        Self {
            kind,
            lr,
            tau,
            ..Self::default()
        }
    }

    /// FedAvg with unit server rate.
    pub fn fedavg() -> Self {
        Self {
            kind: ServerKind::Avg,
            lr: 1.0,
            ..Self::default()
        }
    }

    pub fn initial_v(&self) -> f64 {
        self.v0.unwrap_or(self.tau * self.tau)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::invalid(
                "server.eta",
                "server learning rate must be >= 0",
            ));
        }
        if self.kind == ServerKind::Avg {
            return Ok(());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ConfigError::invalid(
                "server.tau",
                "server smoothing must be > 0; tau = 0 makes the convergence bound diverge",
            ));
        }
        for (key, b) in [("server.beta1", self.beta1), ("server.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(ConfigError::invalid(key, "decay rate must lie in [0, 1)"));
            }
        }
        let v0 = self.initial_v();
        if !(v0 >= 0.0 && v0.is_finite()) {
            return Err(ConfigError::invalid(
                "server.v0",
                "accumulator init must be >= 0",
            ));
        }
        if self.kind == ServerKind::Adagrad && v0 < self.tau * self.tau {
            return Err(ConfigError::invalid(
                "server.v0",
                "adagrad accumulator init must be >= tau^2",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub x: ParamVector,
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
}

impl ServerState {
    pub fn new(x0: ParamVector, cfg: &ServerConfig) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            m: ParamVector::zeros(d),
            v: ParamVector::filled(d, cfg.initial_v()),
            t: 0,
        }
    }
}

fn check_len(st: &ServerState, delta: &ParamVector) -> Result<(), OptimError> {
    if delta.len() != st.x.len() {
        return Err(OptimError::DimensionMismatch {
            expected: st.x.len(),
            got: delta.len(),
        });
    }
    Ok(())
}

fn adaptive_step(
    mut st: ServerState,
    delta: &ParamVector,
    cfg: &ServerConfig,
    adam: bool,
) -> ServerState {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for j in 0..delta.len() {
        let dj = delta[j];
        st.m[j] = b1 * st.m[j] + (1.0 - b1) * dj;
        st.v[j] = if adam {
            b2 * st.v[j] + (1.0 - b2) * dj * dj
        } else {
            st.v[j] + dj * dj
        };
        st.x[j] += cfg.lr * st.m[j] / (st.v[j].sqrt() + cfg.tau);
    }
    st.t += 1;
    st
}

pub fn server_adagrad_update(
    st: ServerState,
    delta: &ParamVector,
    cfg: &ServerConfig,
) -> Result<ServerState, OptimError> {
    check_len(&st, delta)?;
    Ok(adaptive_step(st, delta, cfg, false))
}

pub fn server_adam_update(
    st: ServerState,
    delta: &ParamVector,
    cfg: &ServerConfig,
) -> Result<ServerState, OptimError> {
    check_len(&st, delta)?;
    Ok(adaptive_step(st, delta, cfg, true))
}

pub fn fedavg_update(
    mut st: ServerState,
    delta: &ParamVector,
    cfg: &ServerConfig,
) -> Result<ServerState, OptimError> {
    check_len(&st, delta)?;
    st.x.axpy(cfg.lr, delta);
    st.t += 1;
    Ok(st)
}

pub fn server_update(
    st: ServerState,
    delta: &ParamVector,
    cfg: &ServerConfig,
) -> Result<ServerState, OptimError> {
    match cfg.kind {
        ServerKind::Avg => fedavg_update(st, delta, cfg),
        ServerKind::Adagrad => server_adagrad_update(st, delta, cfg),
        ServerKind::Adam => server_adam_update(st, delta, cfg),
    }
}
