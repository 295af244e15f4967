//! Self-check suite behind `fedada verify`: optimizer equivalences, cover
//! properties, bound assertions on clamped runs, and ledger identities.

use std::sync::Arc;

use rand::seq::index;

use crate::bounds::{compute_c_beta, log_ratio_bound, log_ratio_sum, momentum_weighted_sum};
use crate::cover::{build_cover, Cover, CoverPolicy};
use crate::engine::{
    aggregate, run_experiment, Assignment, ClientDelta, EngineConfig, OptimizerStrategy,
};
use crate::ledger::{record_round, ClientSlot, TransmissionMode};
use crate::local::{apply_epsilon_clip, local_step, LocalOptConfig, LocalOptKind, LocalOptState};
use crate::numeric::{derive_stream, NoiseSpec, ParamVector, RngStream};
use crate::problems::QuadraticProblem;
use crate::server::{ServerConfig, ServerKind};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn normals(s: &mut RngStream, d: usize, scale: f64) -> ParamVector {
    (0..d)
        .map(|_| scale * s.standard_normal())
        .collect::<Vec<_>>()
        .into()
}

/// Run every check in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        adagrad_equivalence(),
        adam_equivalence(),
        singleton_sm3(),
        dominance_chain(),
        cover_properties(),
        epsilon_clip(),
        aggregation_order(),
        summation_lemmas(),
        ledger_identities(),
        clamped_run_bounds(0.0),
        clamped_run_bounds(1.0),
    ]
}

fn adagrad_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut s = derive_stream(seed, 0, 101);
        let d = 1 + s.index(10);
        let (lr, eps) = (0.01 + s.open01(), 1e-8 + s.open01() * 1e-2);
        let cfg = LocalOptConfig {
            eps,
            ..LocalOptConfig::new(LocalOptKind::Agdu, lr)
        };
        let mut st = LocalOptState::new(&cfg, d);
        let mut x = normals(&mut s, d, 1.0);
        let mut rx = x.clone().into_vec();
        let mut rv = vec![0.0; d];
        for _ in 0..100 {
            let g = normals(&mut s, d, 1.0);
            x = local_step(&x, &g, &mut st, &cfg, lr).expect("finite step");
            for j in 0..d {
                rv[j] += g[j] * g[j];
                rx[j] -= lr * g[j] / (rv[j].sqrt() + eps);
                worst = worst.max((x[j] - rx[j]).abs());
            }
        }
    }
    check(
        "agdu(z=1) = adagrad",
        worst < 1e-12,
        format!("max |diff| {worst:.3e}"),
    )
}

fn adam_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut s = derive_stream(seed, 0, 102);
        let d = 1 + s.index(10);
        let lr = 0.001 + 0.1 * s.open01();
        let (b1, b2) = (0.5 + 0.45 * s.open01(), 0.9 + 0.099 * s.open01());
        let cfg = LocalOptConfig {
            beta1: b1,
            beta2: b2,
            eps: 1e-8,
            ..LocalOptConfig::new(LocalOptKind::Admu, lr)
        };
        let mut st = LocalOptState::new(&cfg, d);
        let mut x = normals(&mut s, d, 1.0);
        let mut rx = x.clone().into_vec();
        let (mut m, mut v) = (vec![0.0; d], vec![0.0; d]);
        for k in 1..=100 {
            let g = normals(&mut s, d, 1.0);
            x = local_step(&x, &g, &mut st, &cfg, lr).expect("finite step");
            for j in 0..d {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mh = m[j] / (1.0 - b1.powi(k));
                let vh = v[j] / (1.0 - b2.powi(k));
                rx[j] -= lr * mh / (vh.sqrt() + 1e-8);
                worst = worst.max((x[j] - rx[j]).abs());
            }
        }
    }
    check(
        "admu(z=1) = adam",
        worst < 1e-12,
        format!("max |diff| {worst:.3e}"),
    )
}

fn singleton_sm3() -> Check {
    let mut mismatches = 0;
    for seed in 0..20 {
        let mut s = derive_stream(seed, 0, 103);
        let d = 1 + s.index(10);
        let z = 1 + s.index(4);
        let lr = 0.01 + s.open01();
        let agdu = LocalOptConfig {
            delay: z,
            ..LocalOptConfig::new(LocalOptKind::Agdu, lr)
        };
        let sm3 = LocalOptConfig {
            delay: z,
            ..LocalOptConfig::new(LocalOptKind::Sm3Ii, lr)
        }
        .with_cover(Cover::singleton(d));
        let (mut sa, mut ss) = (LocalOptState::new(&agdu, d), LocalOptState::new(&sm3, d));
        let (mut xa, mut xs) = (ParamVector::zeros(d), ParamVector::zeros(d));
        for _ in 0..100 {
            let g = normals(&mut s, d, 1.0);
            xa = local_step(&xa, &g, &mut sa, &agdu, lr).expect("finite step");
            xs = local_step(&xs, &g, &mut ss, &sm3, lr).expect("finite step");
            mismatches += xa
                .iter()
                .zip(xs.iter())
                .filter(|(a, b)| a.to_bits() != b.to_bits())
                .count();
        }
    }
    check(
        "singleton sm3_ii = agdu",
        mismatches == 0,
        format!("{mismatches} bitwise mismatches"),
    )
}

fn random_cover(s: &mut RngStream, d: usize) -> Cover {
    let q = 1 + s.index(6);
    let mut groups: Vec<Vec<usize>> = (0..q)
        .map(|_| {
            let size = (2 + s.index(15)).min(d);
            let mut g = index::sample(s, d, size).into_vec();
            g.sort_unstable();
            g
        })
        .collect();
    for j in 0..d {
        if !groups.iter().any(|g| g.contains(&j)) {
            let b = s.index(groups.len());
            groups[b].push(j);
            groups[b].sort_unstable();
        }
    }
    Cover::from_groups(groups, d)
}

fn dominance_chain() -> Check {
    let mut violations = 0;
    for trial in 0..200 {
        let mut s = derive_stream(trial, 0, 104);
        let d = 2 + s.index(15);
        let cover = Arc::new(random_cover(&mut s, d));
        let z = 1 + s.index(4);
        let g_max = 0.1 + 2.0 * s.open01();
        let mk = |kind| LocalOptConfig {
            kind,
            delay: z,
            cover: Some(cover.clone()),
            ..LocalOptConfig::default()
        };
        let (c1, c2, ce) = (
            mk(LocalOptKind::Sm3I),
            mk(LocalOptKind::Sm3Ii),
            mk(LocalOptKind::Agdu),
        );
        let (mut s1, mut s2, mut se) = (
            LocalOptState::new(&c1, d),
            LocalOptState::new(&c2, d),
            LocalOptState::new(&ce, d),
        );
        let x = ParamVector::zeros(d);
        for k in 1..=200 {
            let mut g = normals(&mut s, d, g_max);
            g.clamp_abs(g_max);
            for (st, c) in [(&mut s1, &c1), (&mut s2, &c2), (&mut se, &ce)] {
                local_step(&x, &g, st, c, 0.0).expect("finite step");
            }
            let cap = (d * k) as f64 * g_max * g_max;
            violations += (0..d)
                .filter(|&j| !(s1.v[j] >= s2.v[j] && s2.v[j] >= se.v[j] && s1.v[j] <= cap))
                .count();
            violations += s1.mu.iter().chain(&s2.mu).filter(|&&m| m > cap).count();
        }
    }
    check(
        "sm3 dominance chain and cap",
        violations == 0,
        format!("{violations} violations over 200 trials"),
    )
}

fn cover_properties() -> Check {
    let mut bad = Vec::new();
    for (m, n) in [(1, 1), (7, 3), (768, 768), (100, 100)] {
        let c = build_cover(&[m, n], CoverPolicy::RowCol).expect("2-d shape");
        if (0..m * n).any(|j| c.covering(j).is_empty()) {
            bad.push(format!("{m}x{n} uncovered"));
        }
        let frac = c.num_groups() as f64 / (m * n) as f64;
        if frac != (m + n) as f64 / (m * n) as f64 {
            bad.push(format!("{m}x{n} fraction {frac}"));
        }
    }
    let c = build_cover(&[10_000], CoverPolicy::Auto).expect("1-d shape");
    if (0..10_000).any(|j| c.covering(j) != [j]) {
        bad.push("1-d auto cover is not singleton".into());
    }
    check(
        "cover coverage and row/col fraction",
        bad.is_empty(),
        if bad.is_empty() {
            "ok".into()
        } else {
            bad.join("; ")
        },
    )
}

fn epsilon_clip() -> Check {
    let mut s = derive_stream(0, 0, 105);
    let mut bad = 0;
    for _ in 0..1000 {
        let u = normals(&mut s, 4, 1.0);
        let eps_s = 3.0 * s.open01();
        let out = apply_epsilon_clip(u.clone(), eps_s);
        bad += usize::from(out != u && out.iter().any(|&v| v != 0.0));
    }
    check(
        "eps_s clip is all-or-nothing",
        bad == 0,
        format!("{bad} scaled outputs"),
    )
}

fn aggregation_order() -> Check {
    let mut s = derive_stream(0, 0, 106);
    let mut bad = 0;
    for _ in 0..100 {
        let n = 2 + s.index(10);
        let deltas: Vec<ClientDelta> = (0..n)
            .map(|client| ClientDelta {
                client,
                delta: normals(&mut s, 5, 1e3),
                steps: 1,
                uplink_bits: 0,
                kind: LocalOptKind::Sgd,
                strategy: 0,
            })
            .collect();
        let mut shuffled = deltas.clone();
        shuffled.reverse();
        shuffled.rotate_left(s.index(n));
        bad += usize::from(aggregate(&deltas) != aggregate(&shuffled));
    }
    check(
        "aggregation is order-free",
        bad == 0,
        format!("{bad} order-dependent means"),
    )
}

fn summation_lemmas() -> Check {
    let mut fail = 0;
    for i in 0..1000 {
        let mut s = derive_stream(i, 0, 107);
        let beta = 0.999 * s.open01();
        let t = 1 + s.index(200);
        fail += usize::from(
            momentum_weighted_sum(beta, t) > (1.0 - beta) * compute_c_beta(beta) * t as f64,
        );
        let tt = 1 + s.index(100);
        let tau = 10f64.powf(-3.0 + 3.0 * s.open01());
        let phi1 = 10f64.powf(-2.0 + 3.0 * s.open01());
        let deltas: Vec<f64> = (0..tt).map(|_| phi1 * (2.0 * s.open01() - 1.0)).collect();
        fail +=
            usize::from(log_ratio_sum(beta, tau, &deltas) > log_ratio_bound(beta, tau, tt, phi1));
    }
    check(
        "momentum summation lemmas",
        fail == 0,
        format!("{fail} failures in 2000 instances"),
    )
}

fn ledger_identities() -> Check {
    let d = 10_000;
    let agdu = vec![
        ClientSlot {
            kind: LocalOptKind::Agdu,
            q: 0
        };
        7
    ];
    let sgd = vec![
        ClientSlot {
            kind: LocalOptKind::Sgd,
            q: 0
        };
        7
    ];
    let ada = record_round(TransmissionMode::ZeroInit, d, &agdu).bits();
    let costly = record_round(TransmissionMode::TransmitPreconditioner, d, &agdu).bits();
    let avg = record_round(TransmissionMode::None, d, &sgd).bits();
    let cover = build_cover(&[768, 768], CoverPolicy::RowCol).expect("2-d shape");
    let sm3 = record_round(
        TransmissionMode::ZeroInit,
        768 * 768,
        &[ClientSlot {
            kind: LocalOptKind::Sm3Ii,
            q: cover.num_groups(),
        }],
    );
    let overhead = sm3.client_state_floats - 768 * 768;
    check(
        "ledger identities",
        ada == avg && 2 * costly == 3 * avg && overhead == 1536,
        format!("zero_init {ada}, transmit {costly}, fedavg {avg} bits; 768x768 sm3 overhead {overhead} floats"),
    )
}

/// Clamped quadratic with SM3 clients under the pseudogradient and server-step bounds.
fn clamped_run_bounds(sigma: f64) -> Check {
    let (mut client_viol, mut server_viol, mut rounds) = (0, 0, 0);
    let mut min_slack = f64::INFINITY;
    for seed in 0..10 {
        let mut s = derive_stream(seed, 0, 108);
        let k = 1 + s.index(8);
        let z = [1, 2, 4][s.index(3)];
        let problem = QuadraticProblem {
            noises: vec![NoiseSpec::Gaussian { sigma }; 4],
            d: 3,
            steps_per_epoch: k,
        };
        let mk = |kind| {
            OptimizerStrategy::new(
                LocalOptConfig {
                    kind,
                    lr: 0.1,
                    eps: 1e-3,
                    delay: z,
                    ..LocalOptConfig::default()
                }
                .with_cover(Cover::from_groups(vec![vec![0, 1], vec![1, 2]], 3)),
            )
        };
        let cfg = EngineConfig {
            rounds: 200,
            seed,
            x0: 3.0,
            server: ServerConfig {
                beta1: 0.9,
                ..ServerConfig::new(ServerKind::Adagrad, 0.1, 0.01)
            },
            strategies: vec![mk(LocalOptKind::Sm3Ii), mk(LocalOptKind::Sm3I)],
            assignment: Assignment::RoundRobin,
            grad_clamp: Some(1.0),
            bound_check: true,
            ..EngineConfig::default()
        };
        let Ok(recs) = run_experiment(&problem, &cfg) else {
            client_viol += 1;
            continue;
        };
        for r in recs {
            rounds += 1;
            client_viol += usize::from(r.phi1_margin.is_nan() || r.phi1_margin < 0.0);
            server_viol += usize::from(r.phi2_margin.is_nan() || r.phi2_margin < 0.0);
            min_slack = min_slack.min(r.phi1_margin);
        }
    }
    let name = if sigma == 0.0 {
        "pseudogradient/server bounds, full batch"
    } else {
        "pseudogradient/server bounds, noisy"
    };
    check(
        name,
        client_viol + server_viol == 0,
        format!("{client_viol} client and {server_viol} server violations in {rounds} rounds (min client slack {min_slack:.3e})"),
    )
}
