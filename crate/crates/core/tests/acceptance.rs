//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p fedada-core --test acceptance`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fedada_core::bounds::{
    compute_c_beta, fit_rate, heavy_tail_report, log_ratio_bound, log_ratio_sum,
    momentum_weighted_sum, theorem_rhs,
};
use fedada_core::config::parse_config;
use fedada_core::engine::{run_experiment, ClientSchedule, EngineConfig, OptimizerStrategy};
use fedada_core::ledger::{record_round, summarize, ClientSlot, TransmissionMode};
use fedada_core::local::{local_step, LocalOptConfig, LocalOptKind, LocalOptState};
use fedada_core::metrics::write_metrics;
use fedada_core::numeric::{derive_stream, NoiseSpec, ParamVector, RngStream};
use fedada_core::problems::{Problem, QuadraticProblem, SyntheticLogistic};
use fedada_core::server::{ServerConfig, ServerKind};
use fedada_core::{Cover, CoverPolicy, ShapeManifest};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_vec(s: &mut RngStream, d: usize, scale: f64) -> ParamVector {
    (0..d)
        .map(|_| scale * s.standard_normal())
        .collect::<Vec<_>>()
        .into()
}

/// Textbook AdaGrad: `v += g^2; x -= lr g / (sqrt(v) + eps)`.
fn reference_adagrad(x: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, eps: f64) {
    for j in 0..x.len() {
        v[j] += g[j] * g[j];
        x[j] -= lr * g[j] / (v[j].sqrt() + eps);
    }
}

/// Textbook Adam with both moments bias-corrected.
#[allow(clippy::too_many_arguments)]
fn reference_adam(
    x: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    k: i32,
    lr: f64,
    eps: f64,
    b1: f64,
    b2: f64,
) {
    for j in 0..x.len() {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        let mh = m[j] / (1.0 - b1.powi(k));
        let vh = v[j] / (1.0 - b2.powi(k));
        x[j] -= lr * mh / (vh.sqrt() + eps);
    }
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut s = derive_stream(seed, 0, 1);
        let d = 1 + s.index(8);
        let lr = 0.001 + s.open01();
        let eps = 10f64.powi(-((1 + s.index(8)) as i32));
        let b1 = 0.5 + 0.49 * s.open01();
        let b2 = 0.9 + 0.0999 * s.open01();
        let x0 = random_vec(&mut s, d, 2.0);

        let agdu = LocalOptConfig {
            eps,
            ..LocalOptConfig::new(LocalOptKind::Agdu, lr)
        };
        let admu = LocalOptConfig {
            eps,
            beta1: b1,
            beta2: b2,
            ..LocalOptConfig::new(LocalOptKind::Admu, lr)
        };
        let (mut xa, mut sa) = (x0.clone(), LocalOptState::new(&agdu, d));
        let (mut xm, mut sm) = (x0.clone(), LocalOptState::new(&admu, d));
        let (mut ra, mut rva) = (x0.to_vec(), vec![0.0; d]);
        let (mut rm, mut rmm, mut rmv) = (x0.to_vec(), vec![0.0; d], vec![0.0; d]);
        for k in 1..=100 {
            let noise = random_vec(&mut s, d, 1.0);
            let grad = |x: &[f64]| -> Vec<f64> {
                x.iter().zip(noise.iter()).map(|(a, b)| a + b).collect()
            };
            let ga = grad(&ra);
            let gm = grad(&rm);
            xa = local_step(&xa, &ga.clone().into(), &mut sa, &agdu, lr).unwrap();
            reference_adagrad(&mut ra, &mut rva, &ga, lr, eps);
            xm = local_step(&xm, &gm.clone().into(), &mut sm, &admu, lr).unwrap();
            reference_adam(&mut rm, &mut rmm, &mut rmv, &gm, k, lr, eps, b1, b2);
            for j in 0..d {
                worst = worst.max((xa[j] - ra[j]).abs()).max((xm[j] - rm[j]).abs());
            }
        }
    }
    outcome(
        worst < 1e-12,
        format!("max |diff| {worst:.3e} over 50 seeds x 100 steps"),
    )
}

fn criterion_2() -> Outcome {
    let mut mismatches = 0usize;
    for seed in 0..50u64 {
        let mut s = derive_stream(seed, 0, 2);
        let d = 1 + s.index(12);
        let lr = 0.001 + s.open01();
        let z = 1 + s.index(4);
        let agdu = LocalOptConfig {
            delay: z,
            ..LocalOptConfig::new(LocalOptKind::Agdu, lr)
        };
        let sm3 = LocalOptConfig {
            delay: z,
            ..LocalOptConfig::new(LocalOptKind::Sm3Ii, lr)
        }
        .with_cover(Cover::singleton(d));
        let mut xa = random_vec(&mut s, d, 1.0);
        let mut xs = xa.clone();
        let (mut sa, mut ss) = (LocalOptState::new(&agdu, d), LocalOptState::new(&sm3, d));
        for _ in 0..100 {
            let g = random_vec(&mut s, d, 1.0);
            xa = local_step(
                &xa,
                &(xa.as_slice()
                    .iter()
                    .zip(g.iter())
                    .map(|(a, b)| a + b)
                    .collect::<Vec<_>>()
                    .into()),
                &mut sa,
                &agdu,
                lr,
            )
            .unwrap();
            xs = local_step(
                &xs,
                &(xs.as_slice()
                    .iter()
                    .zip(g.iter())
                    .map(|(a, b)| a + b)
                    .collect::<Vec<_>>()
                    .into()),
                &mut ss,
                &sm3,
                lr,
            )
            .unwrap();
            mismatches += xa
                .iter()
                .zip(xs.iter())
                .filter(|(a, b)| a.to_bits() != b.to_bits())
                .count();
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} bitwise mismatches over 50 seeds x 100 steps"),
    )
}

/// Random groups of size 2..=16 over `[0, d)`, patched so every coordinate is covered.
fn random_cover(s: &mut RngStream, d: usize) -> Cover {
    let q = 1 + s.index(6);
    let mut groups: Vec<Vec<usize>> = (0..q)
        .map(|_| {
            let size = 2 + s.index(15.min(d - 1));
            let mut g: Vec<usize> = rand::seq::index::sample(s, d, size.min(d)).into_vec();
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

fn criterion_3() -> Outcome {
    let mut violations = 0usize;
    let mut checks = 0usize;
    for trial in 0..1000u64 {
        let mut s = derive_stream(trial, 0, 3);
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
        for k in 1..=200usize {
            let mut g = random_vec(&mut s, d, g_max);
            g.clamp_abs(g_max);
            local_step(&x, &g, &mut s1, &c1, 0.0).unwrap();
            local_step(&x, &g, &mut s2, &c2, 0.0).unwrap();
            local_step(&x, &g, &mut se, &ce, 0.0).unwrap();
            let cap = (d * k) as f64 * g_max * g_max;
            for j in 0..d {
                checks += 1;
                let ok =
                    s1.v[j] >= s2.v[j] && s2.v[j] >= se.v[j] && s1.v[j] <= cap && s2.v[j] <= cap;
                violations += usize::from(!ok);
            }
            violations += s1.mu.iter().chain(&s2.mu).filter(|&&m| m > cap).count();
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {checks} coordinate checks over 1000 trials"),
    )
}

/// Clamped quadratic with SM3 clients; used by criteria 4 and 5.
fn bound_run_config(seed: u64, sigma: f64, eps_s: f64) -> (QuadraticProblem, EngineConfig) {
    let mut s = derive_stream(seed, 0, 4);
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
                eps_s,
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
            kind: ServerKind::Adagrad,
            lr: 0.1,
            tau: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            v0: None,
        },
        strategies: vec![mk(LocalOptKind::Sm3Ii), mk(LocalOptKind::Sm3I)],
        assignment: fedada_core::engine::Assignment::RoundRobin,
        grad_clamp: Some(1.0),
        bound_check: true,
        ..EngineConfig::default()
    };
    (problem, cfg)
}

fn criterion_4() -> Outcome {
    let (mut v2, mut n) = (0usize, 0usize);
    let mut v1 = [0usize; 2];
    let mut single_rate = 0usize;
    let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
    for (which, sigma) in [1.0, 0.0].into_iter().enumerate() {
        for seed in 0..20u64 {
            let (p, cfg) = bound_run_config(seed, sigma, 0.0);
            // Slack the client bound would gain if its second term carried a single eta_l.
            let c = &cfg.strategies[0].local_cfg;
            let k = p.steps_per_epoch;
            let refreshes = k.div_ceil(c.delay);
            let gap = c.lr * (1.0 - c.lr) * (k - refreshes) as f64 / (c.v0.sqrt() + c.eps);
            let recs = run_experiment(&p, &cfg).expect("run");
            for r in &recs {
                n += 1;
                // NaN means no bound was evaluated, which counts as a violation here.
                v1[which] += usize::from(r.phi1_margin.is_nan() || r.phi1_margin < 0.0);
                single_rate += usize::from(r.phi1_margin.is_nan() || r.phi1_margin + gap < 0.0);
                v2 += usize::from(r.phi2_margin.is_nan() || r.phi2_margin < 0.0);
                m1 = m1.min(r.phi1_margin);
                m2 = m2.min(r.phi2_margin);
            }
        }
    }
    outcome(
        v1[0] + v1[1] + v2 == 0,
        format!(
            "client bound violated in {} noisy + {} full-batch of {n} rounds (min slack {m1:.3e}; {single_rate} with a single eta_l in the second term); server bound violated in {v2} (min slack {m2:.3e})",
            v1[0], v1[1]
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut worst_margin = f64::INFINITY;
    let mut bad_runs = 0;
    for seed in 0..20u64 {
        let (p, cfg) = bound_run_config(seed, 0.0, 1e-6);
        let recs = run_experiment(&p, &cfg).expect("run");
        let x0 = ParamVector::filled(p.dim(), cfg.x0);
        let g0 = p.global_gradient(&x0).norm_sq();
        // min over x_0 .. x_{T-1}
        let observed = recs[..recs.len() - 1]
            .iter()
            .map(|r| r.grad_norm * r.grad_norm)
            .fold(g0, f64::min);
        let c = &cfg.strategies[0].local_cfg;
        let inp = fedada_core::bounds::BoundInputs {
            eta: cfg.server.lr,
            eta_l: c.lr,
            tau: cfg.server.tau,
            eps: c.eps,
            eps_s: c.eps_s,
            beta1: cfg.server.beta1,
            k: p.steps_per_epoch,
            z: c.delay,
            d: p.dim(),
            g: 1.0,
            v0: c.v0,
            v0_server: cfg.server.initial_v(),
            t: cfg.rounds as usize,
            l: 1.0,
            f_gap: p.global_loss(&x0),
        };
        match theorem_rhs(&inp, Some(observed)).margin {
            Some(m) => {
                worst_margin = worst_margin.min(m);
                bad_runs += usize::from(m < 0.0);
            }
            None => bad_runs += 1,
        }
    }
    let mut lemma_fail = 0;
    for i in 0..1000u64 {
        let mut s = derive_stream(i, 0, 5);
        let beta = 0.999 * s.open01();
        let t = 1 + s.index(200);
        if momentum_weighted_sum(beta, t) > (1.0 - beta) * compute_c_beta(beta) * t as f64 {
            lemma_fail += 1;
        }
        let tt = 1 + s.index(100);
        let tau = 10f64.powf(-3.0 + 3.0 * s.open01());
        let phi1 = 10f64.powf(-2.0 + 3.0 * s.open01());
        let deltas: Vec<f64> = (0..tt).map(|_| phi1 * (2.0 * s.open01() - 1.0)).collect();
        if log_ratio_sum(beta, tau, &deltas) > log_ratio_bound(beta, tau, tt, phi1) {
            lemma_fail += 1;
        }
    }
    outcome(
        bad_runs == 0 && lemma_fail == 0,
        format!("{bad_runs}/20 runs with negative margin (worst {worst_margin:.3e}); {lemma_fail} lemma failures in 2000 checks"),
    )
}

fn criterion_6() -> Outcome {
    let t = 2000u64;
    let problem = QuadraticProblem {
        noises: vec![NoiseSpec::Gaussian { sigma: 0.1 }; 20],
        d: 1,
        steps_per_epoch: 1,
    };
    let local = LocalOptConfig::new(LocalOptKind::Agdu, 1.0 / (t as f64).sqrt());
    let base = EngineConfig {
        rounds: t,
        x0: 1.0,
        server: ServerConfig {
            kind: ServerKind::Adagrad,
            lr: 0.1,
            tau: 0.01,
            beta1: 0.0,
            ..ServerConfig::default()
        },
        strategies: vec![OptimizerStrategy::new(local)],
        ..EngineConfig::default()
    };
    let mut slopes = Vec::new();
    for seed in 0..20u64 {
        let recs = run_experiment(
            &problem,
            &EngineConfig {
                seed,
                ..base.clone()
            },
        )
        .expect("run");
        let mut series = vec![problem
            .global_gradient(&ParamVector::filled(1, base.x0))
            .norm_l2()];
        series.extend(recs[..recs.len() - 1].iter().map(|r| r.grad_norm));
        slopes.push(fit_rate(&series).expect("positive series"));
    }
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    outcome(
        mean <= -0.35,
        format!("mean log-log slope {mean:.4} over 20 seeds (need <= -0.35)"),
    )
}

fn criterion_7() -> Outcome {
    let eps_hat = 0.05;
    let mut noises = vec![NoiseSpec::Gaussian { sigma: 1.0 }; 5];
    noises[0] = NoiseSpec::StudentT { nu: 1.5 };
    let problem = QuadraticProblem {
        noises,
        d: 1,
        steps_per_epoch: 1,
    };
    let schedule = ClientSchedule::Harmonic {
        t0: ClientSchedule::smallest_t0(1.0, eps_hat),
        eps_hat,
    };
    let adagrad = LocalOptConfig {
        eps: 1.0,
        ..LocalOptConfig::new(LocalOptKind::Agdu, 1.0)
    };
    let stabilized = EngineConfig {
        rounds: 1000,
        x0: 1.0,
        server: ServerConfig::fedavg(),
        schedule,
        strategies: vec![OptimizerStrategy::new(adagrad)],
        ..EngineConfig::default()
    };
    let fedavg = EngineConfig {
        mode: TransmissionMode::None,
        strategies: vec![OptimizerStrategy::new(LocalOptConfig::new(
            LocalOptKind::Sgd,
            1.0,
        ))],
        ..stabilized.clone()
    };
    let trajectories = |cfg: &EngineConfig| -> Vec<Vec<f64>> {
        (0..200u64)
            .map(|seed| {
                let recs = run_experiment(
                    &problem,
                    &EngineConfig {
                        seed,
                        ..cfg.clone()
                    },
                )
                .expect("run");
                // d = 1 and x* = 0, so |x_t| is the gradient norm.
                recs.iter().map(|r| r.grad_norm).collect()
            })
            .collect()
    };
    let ada = heavy_tail_report(&trajectories(&stabilized), eps_hat).expect("report");
    let avg = heavy_tail_report(&trajectories(&fedavg), eps_hat).expect("report");
    let limit = 2.0 * 3f64.sqrt() / 0.95 + 0.5;
    let a = avg.max_excursion > 10.0 * ada.max_excursion;
    let b = ada.mean_final <= limit;
    outcome(
        a && b,
        format!(
            "(a) FedAvg max excursion {:.3} vs client-AdaGrad {:.3} (ratio {:.1}, need > 10); (b) ensemble mean |x_T| {:.4} <= {limit:.4}",
            avg.max_excursion,
            ada.max_excursion,
            avg.max_excursion / ada.max_excursion,
            ada.mean_final
        ),
    )
}

fn criterion_8() -> Outcome {
    let problem = QuadraticProblem {
        noises: vec![NoiseSpec::Gaussian { sigma: 0.1 }; 10],
        d: 7,
        steps_per_epoch: 2,
    };
    let agdu = OptimizerStrategy::new(LocalOptConfig::new(LocalOptKind::Agdu, 0.05));
    let fedada = EngineConfig {
        rounds: 25,
        fraction: 0.3,
        seed: 11,
        x0: 1.0,
        strategies: vec![agdu.clone()],
        ..EngineConfig::default()
    };
    let costly = EngineConfig {
        mode: TransmissionMode::TransmitPreconditioner,
        ..fedada.clone()
    };
    let fedavg = EngineConfig {
        mode: TransmissionMode::None,
        server: ServerConfig::fedavg(),
        strategies: vec![OptimizerStrategy::new(LocalOptConfig::new(
            LocalOptKind::Sgd,
            0.05,
        ))],
        ..fedada.clone()
    };
    let bits =
        |cfg: &EngineConfig| summarize(&run_experiment(&problem, cfg).expect("run")).total_bits;
    let (b_ada, b_costly, b_avg) = (bits(&fedada), bits(&costly), bits(&fedavg));
    let equal = b_ada == b_avg && 2 * b_costly == 3 * b_avg;

    let (m, n) = (768usize, 768usize);
    let cover = Cover::row_col(m, n);
    let d = m * n;
    let cost = record_round(
        TransmissionMode::ZeroInit,
        d,
        &[ClientSlot {
            kind: LocalOptKind::Sm3Ii,
            q: cover.num_groups(),
        }],
    );
    let overhead = (cost.client_state_floats as usize - d) as f64 / d as f64;
    let expected = (m + n) as f64 / (m * n) as f64;
    let layer_ok = (overhead - expected).abs() < 1e-15;

    let vit = ShapeManifest::vit_small();
    let vit_cover = Cover::for_manifest(&vit, CoverPolicy::Auto).expect("cover");
    let vit_frac = vit_cover.num_groups() as f64 / vit.num_params() as f64;
    outcome(
        equal && layer_ok && vit_frac < 0.01,
        format!(
            "bits FedAda2 {b_ada} / FedAvg {b_avg} / costly {b_costly} (x{:.3}); 768x768 overhead {:.4}% ; ViT-S-like overhead {:.3}%",
            b_costly as f64 / b_avg as f64,
            100.0 * overhead,
            100.0 * vit_frac
        ),
    )
}

fn criterion_9() -> Outcome {
    // Rates picked by a grid search on data seeds 100 and 101, disjoint from the evaluation seeds.
    let zero_local = LocalOptConfig {
        eps: ZERO_EPS,
        ..LocalOptConfig::new(LocalOptKind::Agdu, ZERO_ETA_L)
    };
    let tx_local = LocalOptConfig {
        eps: TX_EPS,
        ..LocalOptConfig::new(LocalOptKind::Agdu, TX_ETA_L)
    };
    let zero = EngineConfig {
        rounds: 300,
        server: ServerConfig::new(ServerKind::Adagrad, ZERO_ETA, ZERO_TAU),
        strategies: vec![OptimizerStrategy::new(zero_local)],
        ..EngineConfig::default()
    };
    let tx = EngineConfig {
        mode: TransmissionMode::TransmitPreconditioner,
        server: ServerConfig::new(ServerKind::Adagrad, TX_ETA, TX_TAU),
        strategies: vec![OptimizerStrategy::new(tx_local)],
        ..zero.clone()
    };
    let avg = EngineConfig {
        mode: TransmissionMode::None,
        server: ServerConfig::fedavg(),
        strategies: vec![OptimizerStrategy::new(LocalOptConfig::new(
            LocalOptKind::Sgd,
            AVG_ETA_L,
        ))],
        ..zero.clone()
    };
    let mut finals = [0.0f64; 3];
    for seed in 0..20u64 {
        let problem = SyntheticLogistic {
            seed,
            ..SyntheticLogistic::default()
        }
        .build()
        .expect("problem");
        for (slot, cfg) in finals.iter_mut().zip([&zero, &tx, &avg]) {
            let recs = run_experiment(
                &problem,
                &EngineConfig {
                    seed,
                    ..cfg.clone()
                },
            )
            .expect("run");
            *slot += recs.last().expect("rounds").test_loss / 20.0;
        }
    }
    let [z, t, a] = finals;
    let parity = (z - t).abs() <= 0.05 * t;
    outcome(
        parity && z < a && t < a,
        format!(
            "mean final test loss zero_init {z:.5}, transmit {t:.5} (gap {:+.2}%), FedAvg {a:.5}",
            100.0 * (z - t) / t
        ),
    )
}

const ZERO_ETA_L: f64 = 1.0;
const ZERO_ETA: f64 = 0.3;
const ZERO_TAU: f64 = 0.1;
const ZERO_EPS: f64 = 3.0;
const TX_ETA_L: f64 = 1.0;
const TX_ETA: f64 = 0.3;
const TX_TAU: f64 = 0.1;
const TX_EPS: f64 = 3.0;
const AVG_ETA_L: f64 = 0.1;

fn criterion_10() -> Outcome {
    let text = "
[experiment]
rounds = 15
fraction = 0.4
seeds = 5
x0 = 0.1
warmup = 3
[problem]
kind = logistic
clients = 8
train = 400
test = 100
[server]
kind = adam
eta = 0.01
[client]
kind = sm3_adam
cover = row_col
shape = 10x21
[client.1]
kind = admu
z = 2
[assignment]
mode = round_robin
[privacy]
clip = 1
sigma = 0.5
";
    let cfg = parse_config(text).expect("config");
    let run = || {
        let p = cfg.problem.build(cfg.seeds[0]).expect("problem");
        let e = cfg.engine_config(cfg.seeds[0], p.dim()).expect("engine");
        let mut buf = Vec::new();
        write_metrics(&run_experiment(p.as_ref(), &e).expect("run"), &mut buf).expect("write");
        buf
    };
    let (a, b) = (run(), run());
    outcome(
        a == b && !a.is_empty(),
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 10] = [
        (
            1,
            "delay-1 AGDU/ADMU match reference AdaGrad/Adam",
            criterion_1,
            Duration::from_secs(5),
        ),
        (
            2,
            "singleton SM3-II matches AGDU bitwise",
            criterion_2,
            Duration::from_secs(5),
        ),
        (
            3,
            "SM3 dominance chain and accumulator cap",
            criterion_3,
            Duration::MAX,
        ),
        (
            4,
            "pseudogradient and server-step bounds hold",
            criterion_4,
            Duration::from_secs(30),
        ),
        (
            5,
            "convergence bound and summation lemmas",
            criterion_5,
            Duration::MAX,
        ),
        (
            6,
            "convergence rate slope",
            criterion_6,
            Duration::from_secs(60),
        ),
        (
            7,
            "heavy-tail stabilization",
            criterion_7,
            Duration::from_secs(120),
        ),
        (
            8,
            "communication and memory ledger identities",
            criterion_8,
            Duration::MAX,
        ),
        (
            9,
            "zero-init parity on Dirichlet logistic task",
            criterion_9,
            Duration::from_secs(300),
        ),
        (
            10,
            "byte-identical metrics on repeat",
            criterion_10,
            Duration::MAX,
        ),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, name, f, limit) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(", limit {}s", limit.as_secs())
        };
        println!(
            "criterion {id:>2} {} {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
