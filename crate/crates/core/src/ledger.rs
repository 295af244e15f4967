//! Communication and client-memory accounting.
//!
//! Counts are in 64-bit floats per sampled client: the model goes down and
//! the pseudogradient comes up, plus one extra model-sized vector down when
//! the server preconditioner is transmitted.

use std::fmt;

use crate::local::LocalOptKind;

pub const BITS_PER_FLOAT: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransmissionMode {
    /// Clients start their preconditioners from zero (FedAda²).
    ZeroInit,
    /// Clients receive the server accumulator as their initial preconditioner.
    TransmitPreconditioner,
    /// Adaptive server, SGD clients.
    ServerOnly,
    /// Averaging server, SGD clients.
    None,
}

impl TransmissionMode {
    pub fn name(self) -> &'static str {
        match self {
            TransmissionMode::ZeroInit => "zero_init",
            TransmissionMode::TransmitPreconditioner => "transmit_preconditioner",
            TransmissionMode::ServerOnly => "server_only",
            TransmissionMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero_init" => Some(TransmissionMode::ZeroInit),
            "transmit_preconditioner" => Some(TransmissionMode::TransmitPreconditioner),
            "server_only" => Some(TransmissionMode::ServerOnly),
            "none" => Some(TransmissionMode::None),
            _ => None,
        }
    }

    /// Whether client optimizers are forced to SGD.
    pub fn forces_sgd(self) -> bool {
        matches!(self, TransmissionMode::ServerOnly | TransmissionMode::None)
    }
}

impl fmt::Display for TransmissionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optimizer-state floats held by one client beyond the model itself.
pub fn optimizer_state_floats(kind: LocalOptKind, d: usize, q: usize) -> usize {
    match kind {
        LocalOptKind::Sgd => 0,
        LocalOptKind::Agdu => d,
        LocalOptKind::Admu => 2 * d,
        LocalOptKind::Sm3I | LocalOptKind::Sm3Ii => q,
        LocalOptKind::Sm3Adam => q + d,
    }
}

/// One sampled client's participation, as seen by the ledger.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientSlot {
    pub kind: LocalOptKind,
    /// Cover size for SM3 kinds; ignored otherwise.
    pub q: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundCost {
    pub clients: usize,
    pub downlink_floats: u64,
    pub uplink_floats: u64,
    /// Peak model-plus-optimizer floats held by any one client.
    pub client_state_floats: u64,
}

impl RoundCost {
    pub fn bits(&self) -> u64 {
        (self.downlink_floats + self.uplink_floats) * BITS_PER_FLOAT
    }
}

pub fn record_round(mode: TransmissionMode, d: usize, clients: &[ClientSlot]) -> RoundCost {
    let d64 = d as u64;
    let down_each = if mode == TransmissionMode::TransmitPreconditioner {
        2 * d64
    } else {
        d64
    };
    let n = clients.len() as u64;
    let peak = clients
        .iter()
        .map(|c| {
            let kind = if mode.forces_sgd() {
                LocalOptKind::Sgd
            } else {
                c.kind
            };
            (d + optimizer_state_floats(kind, d, c.q)) as u64
        })
        .max()
        .unwrap_or(0);
    RoundCost {
        clients: clients.len(),
        downlink_floats: down_each * n,
        uplink_floats: d64 * n,
        client_state_floats: peak,
    }
}

/// One row of the per-round metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub grad_norm: f64,
    /// Totals over the sampled clients.
    pub downlink_floats: u64,
    pub uplink_floats: u64,
    pub client_state_floats: u64,
    pub cum_bits: u64,
    /// Smallest slack of a client pseudogradient against its bound; NaN when unchecked.
    pub phi1_margin: f64,
    /// Slack of the server step against its bound; NaN when unchecked.
    pub phi2_margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerSummary {
    pub rounds: usize,
    pub downlink_bits: u64,
    pub uplink_bits: u64,
    pub total_bits: u64,
    /// Bits an averaging run with the same sampling would move.
    pub fedavg_bits: u64,
    pub ratio_to_fedavg: f64,
    pub peak_client_state_floats: u64,
}

pub fn summarize(records: &[RoundRecord]) -> LedgerSummary {
    let down: u64 = records.iter().map(|r| r.downlink_floats).sum();
    let up: u64 = records.iter().map(|r| r.uplink_floats).sum();
    let total_bits = (down + up) * BITS_PER_FLOAT;
    let fedavg_bits = 2 * up * BITS_PER_FLOAT;
    LedgerSummary {
        rounds: records.len(),
        downlink_bits: down * BITS_PER_FLOAT,
        uplink_bits: up * BITS_PER_FLOAT,
        total_bits,
        fedavg_bits,
        ratio_to_fedavg: if fedavg_bits == 0 {
            f64::NAN
        } else {
            total_bits as f64 / fedavg_bits as f64
        },
        peak_client_state_floats: records
            .iter()
            .map(|r| r.client_state_floats)
            .max()
            .unwrap_or(0),
    }
}
