//! Closed-form pseudogradient, server-step and convergence bounds, plus
//! diagnostics (rate fits, heavy-tail summaries) over simulation traces.
//!
//! Bounds are evaluated exactly as stated, including the second `eta_l`
//! inside the SM3 pseudogradient bound. Vector norms of broadcast scalar
//! bounds are `sqrt(d) * value`.

use crate::error::FitError;

/// Scalars shared by the pseudogradient bounds and the convergence bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// Server learning rate.
    pub eta: f64,
    /// Client learning rate.
    pub eta_l: f64,
    pub tau: f64,
    pub eps: f64,
    pub eps_s: f64,
    /// Server momentum decay.
    pub beta1: f64,
    /// Local steps per round.
    pub k: usize,
    pub z: usize,
    pub d: usize,
    /// Coordinatewise gradient bound.
    pub g: f64,
    pub v0: f64,
    pub v0_server: f64,
    /// Rounds.
    pub t: usize,
    /// Smoothness constant.
    pub l: f64,
    /// `f(x_0) - f(x*)`.
    pub f_gap: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            eta: 1.0,
            eta_l: 1.0,
            tau: 1.0,
            eps: 1.0,
            eps_s: 0.0,
            beta1: 0.0,
            k: 1,
            z: 1,
            d: 1,
            g: 1.0,
            v0: 0.0,
            v0_server: 1.0,
            t: 1,
            l: 1.0,
            f_gap: 0.0,
        }
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// SM3 client pseudogradient bound:
/// `eta_l (sqrt(n) sqrt(ln(1 + n G^2 / eps^2)) + eta_l (K - n) G / (sqrt(v0) + eps))`, `n = ceil(K / z)`.
pub fn phi1_bound(inp: &BoundInputs) -> f64 {
    let n = ceil_div(inp.k, inp.z) as f64;
    let first = n.sqrt() * (n * inp.g * inp.g / (inp.eps * inp.eps)).ln_1p().sqrt();
    let second = inp.eta_l * (inp.k as f64 - n) * inp.g / (inp.v0.sqrt() + inp.eps);
    inp.eta_l * (first + second)
}

/// Delayed-AdaGrad pseudogradient bound with weight bound `b`:
/// `eta_l b (floor((K - 1) / z) + 1 + K G / (sqrt(v0) + eps))`.
pub fn phi1_agdu(inp: &BoundInputs, b: f64) -> f64 {
    let refreshes = ((inp.k - 1) / inp.z + 1) as f64;
    inp.eta_l * b * (refreshes + inp.k as f64 * inp.g / (inp.v0.sqrt() + inp.eps))
}

/// Delayed-Adam pseudogradient bound with weight `xi` and client decays `beta1`, `beta2`.
pub fn phi1_admu(inp: &BoundInputs, xi: f64, beta1: f64, beta2: f64) -> f64 {
    let n = ceil_div(inp.k, inp.z) as i32;
    let series: f64 = (1..=n)
        .map(|r| beta1.powi(2 * (n - r)) / beta2.powi(n - r))
        .sum();
    let k = inp.k as f64;
    let phi0 = k * inp.g * inp.eta_l * (1.0 - beta1.powi(inp.k as i32)) / inp.eps;
    xi.abs() * (inp.eta_l * k * series.sqrt() + phi0)
}

/// Bound for any strategy of the form `x_p = x_{p-1} - eta_l sum a g / theta`
/// with `theta >= m_l`, `a <= A_l` and weight below `xi_plus`.
pub fn phi1_generic(eta_l: f64, xi_plus: f64, k: usize, a_max: f64, g: f64, m_min: f64) -> f64 {
    let k = k as f64;
    eta_l * xi_plus * k * (k + 1.0) * a_max * g / (2.0 * m_min)
}

/// Server step bound at round `t` given a client bound `phi1`.
pub fn phi2_with(eta: f64, tau: f64, beta1: f64, t: usize, phi1: f64) -> f64 {
    let momentum = eta * ((1.0 - beta1) * (1.0 - beta1.powi(2 * t as i32))).sqrt();
    momentum.min(eta / tau * phi1)
}

/// Server step bound at round `t` using [`phi1_bound`].
pub fn phi2_bound(inp: &BoundInputs, t: usize) -> f64 {
    phi2_with(inp.eta, inp.tau, inp.beta1, t, phi1_bound(inp))
}

/// Smallest `u >= 1` with `beta^v v^4 < 1` for every `v >= u`.
///
/// `v ln(beta) + 4 ln(v)` is unimodal with its peak at `4 / -ln(beta)`, so the
/// scan starts at the peak and walks forward until the condition holds.
pub fn u0_beta(beta: f64) -> usize {
    assert!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
    if beta == 0.0 {
        return 1;
    }
    let lb = beta.ln();
    let h = |v: usize| v as f64 * lb + 4.0 * (v as f64).ln();
    let peak = ((4.0 / -lb).floor() as usize).max(1);
    if h(peak) < 0.0 && h(peak + 1) < 0.0 {
        return 1;
    }
    let mut v = peak;
    while h(v + 1) >= 0.0 {
        v += 1;
    }
    v + 1
}

/// `sum_{u=0}^{u0} beta^u u^2 + 1 / u0`.
pub fn compute_c_beta(beta: f64) -> f64 {
    let u0 = u0_beta(beta);
    let head: f64 = (1..=u0).map(|u| beta.powi(u as i32) * (u * u) as f64).sum();
    head + 1.0 / u0 as f64
}

/// `(1 - beta) sum_{t<=T} sum_{r<=t} beta^(t-r) (t-r)^2` by direct summation.
pub fn momentum_weighted_sum(beta: f64, t: usize) -> f64 {
    let mut total = 0.0;
    for tt in 1..=t {
        for r in 1..=tt {
            let u = tt - r;
            total += beta.powi(u as i32) * (u * u) as f64;
        }
    }
    (1.0 - beta) * total
}

/// `(1 - beta) sum_t sum_{r<=t} beta^(t-r) D_t^2 / (sum_{l<=t} D_l^2 + tau^2)` by direct summation.
pub fn log_ratio_sum(beta: f64, tau: f64, deltas: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut running = 0.0;
    for (i, d) in deltas.iter().enumerate() {
        running += d * d;
        let ratio = d * d / (running + tau * tau);
        let weight: f64 = (0..=i).map(|u| beta.powi(u as i32)).sum();
        total += weight * ratio;
    }
    (1.0 - beta) * total
}

/// `1 - beta + ln(1 + T phi1^2 / tau^2)`.
pub fn log_ratio_bound(beta: f64, tau: f64, t: usize, phi1: f64) -> f64 {
    1.0 - beta + (t as f64 * phi1 * phi1 / (tau * tau)).ln_1p()
}

/// Every quantity of the convergence bound for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub phi1: f64,
    /// Server step bound at the final round.
    pub phi2: f64,
    pub gamma1: f64,
    pub alpha1: f64,
    pub c_beta: f64,
    /// `None` when `eps_s = 0`.
    pub l_tilde: Option<f64>,
    pub psi1: f64,
    pub psi2: f64,
    /// `None` when `eps_s = 0`.
    pub psi3: Option<f64>,
    pub psi4: f64,
    pub psi5: f64,
    pub psi6: f64,
    /// `(psi1 + ... + psi5) / psi6`; `None` when any term is inapplicable or `psi6 = 0`.
    pub rhs: Option<f64>,
    /// Observed `min_t |grad f(x_{t-1})|^2`.
    pub observed: Option<f64>,
    pub margin: Option<f64>,
}

/// Evaluate the convergence bound, attaching `observed` when a trace is available.
pub fn theorem_rhs(inp: &BoundInputs, observed: Option<f64>) -> BoundReport {
    let d = inp.d as f64;
    let k = inp.k as f64;
    let t = inp.t as f64;
    let b1 = inp.beta1;
    let phi1 = phi1_bound(inp);
    let phi2 = phi2_bound(inp, inp.t.max(1));
    let phi1_norm_sq = d * phi1 * phi1;
    let phi2_norm_sq = d * phi2 * phi2;
    let root = (inp.v0 + d * k * inp.g * inp.g).sqrt();
    let gamma1 = inp.eta_l * k / (root + inp.eps);
    let alpha1 = 1.0 / (2.0 * root + 2.0 * inp.eps);
    let c_beta = compute_c_beta(b1);
    let pre = (inp.v0.sqrt() + inp.eps).powi(2);
    let l_tilde = (inp.eps_s > 0.0).then(|| 2.0 * d.sqrt() * inp.g / (inp.eta_l * inp.eps_s));

    let psi1 = inp.f_gap;
    let psi2 = inp.eta * inp.eta * inp.l * t * d * phi1_norm_sq / (inp.tau * inp.tau);
    let psi3 = l_tilde.map(|lt| {
        (1.0 - b1.powi(inp.t as i32)) * inp.eta * inp.eta_l * k * lt * t * phi1_norm_sq
            / (alpha1 * inp.tau * pre)
    });
    let psi4 = (1.0 - b1) * inp.eta * inp.eta_l * k * inp.l * t * c_beta * phi2_norm_sq
        / (alpha1 * inp.tau * pre);
    let psi5 = inp.eta
        * d
        * phi1_norm_sq.sqrt()
        * inp.g
        * (1.0 - b1 + (t * phi1_norm_sq / (inp.tau * inp.tau)).ln_1p())
        / inp.tau;
    let psi6 = 3.0 * (1.0 - b1) * inp.eta * gamma1 * t
        / (4.0 * ((t * phi1_norm_sq + inp.v0_server).sqrt() + inp.tau));

    let rhs = match psi3 {
        Some(p3) if psi6 > 0.0 => Some((psi1 + psi2 + p3 + psi4 + psi5) / psi6),
        _ => None,
    };
    let margin = match (rhs, observed) {
        (Some(r), Some(o)) => Some(r - o),
        _ => None,
    };
    BoundReport {
        phi1,
        phi2,
        gamma1,
        alpha1,
        c_beta,
        l_tilde,
        psi1,
        psi2,
        psi3,
        psi4,
        psi5,
        psi6,
        rhs,
        observed,
        margin,
    }
}

/// Least-squares slope of `ln(min-so-far)` against `ln t` (t = 1-based index)
/// over the second half of the series.
pub fn fit_rate(series: &[f64]) -> Result<f64, FitError> {
    if series.len() < 10 {
        return Err(FitError::TooShort {
            need: 10,
            got: series.len(),
        });
    }
    if let Some((index, &value)) = series
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v <= 0.0)
    {
        return Err(FitError::NonPositive { index, value });
    }
    let mut best = f64::INFINITY;
    let running: Vec<f64> = series
        .iter()
        .map(|&v| {
            best = best.min(v);
            best
        })
        .collect();
    let start = series.len() / 2;
    let pts: Vec<(f64, f64)> = (start..series.len())
        .map(|i| (((i + 1) as f64).ln(), running[i].ln()))
        .collect();
    Ok(ols_slope(&pts))
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeavyTailReport {
    pub seeds: usize,
    /// Ensemble mean of `|x_T - x*|`.
    pub mean_final: f64,
    /// `2 sqrt(3) / (1 - eps_hat)`.
    pub cap: f64,
    /// `max_{t, seed} |x_t|`.
    pub max_excursion: f64,
    /// Hill estimate over the upper decile of `|x_T|`; `None` when degenerate.
    pub tail_index: Option<f64>,
}

/// Summarize per-seed `|x_t - x*|` trajectories.
pub fn heavy_tail_report(
    trajectories: &[Vec<f64>],
    eps_hat: f64,
) -> Result<HeavyTailReport, FitError> {
    if trajectories.len() < 30 {
        return Err(FitError::TooShort {
            need: 30,
            got: trajectories.len(),
        });
    }
    let finals: Vec<f64> = trajectories
        .iter()
        .map(|tr| tr.last().map_or(0.0, |v| v.abs()))
        .collect();
    let mean_final = finals.iter().sum::<f64>() / finals.len() as f64;
    let max_excursion = trajectories
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(HeavyTailReport {
        seeds: trajectories.len(),
        mean_final,
        cap: 2.0 * 3f64.sqrt() / (1.0 - eps_hat),
        max_excursion,
        tail_index: hill_estimator(&finals),
    })
}

/// Hill tail-index estimate `1 / mean(ln(X_(i) / X_(k)))` over the top decile.
pub fn hill_estimator(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = (v.len() / 10).max(2);
    if v.len() <= k || v[k] <= 0.0 {
        return None;
    }
    let gamma = v[..k].iter().map(|x| (x / v[k]).ln()).sum::<f64>() / k as f64;
    (gamma > 0.0).then(|| 1.0 / gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi1_scalar_values() {
        let inp = BoundInputs::default();
        assert!((phi1_bound(&inp) - 2f64.ln().sqrt()).abs() < 1e-15);
        assert!((phi1_bound(&inp) - 0.83255).abs() < 1e-5);
        // K = z = 2: one refresh, one held step.
        let inp2 = BoundInputs {
            k: 2,
            z: 2,
            ..inp.clone()
        };
        assert!((phi1_bound(&inp2) - (2f64.ln().sqrt() + 1.0)).abs() < 1e-15);
        let zero = BoundInputs { eta_l: 0.0, ..inp };
        assert_eq!(phi1_bound(&zero), 0.0);
    }

    #[test]
    fn phi2_scalar_values() {
        let inp = BoundInputs::default();
        let p = phi2_bound(&inp, 1);
        assert!((p - 2f64.ln().sqrt()).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for b in [0.5, 0.9, 0.99, 0.9999] {
            let v = phi2_with(1.0, 1e-9, b, 1, 1e9);
            assert!(v < last);
            last = v;
        }
        assert!(last < 0.02);
        assert_eq!(phi2_bound(&BoundInputs { eta: 0.0, ..inp }, 3), 0.0);
    }

    #[test]
    fn other_phi1_forms() {
        let inp = BoundInputs {
            k: 5,
            z: 2,
            g: 2.0,
            eps: 0.5,
            v0: 1.0,
            eta_l: 0.1,
            ..BoundInputs::default()
        };
        // floor(4/2)+1 = 3 refreshes; 5*2/(1+0.5).
        assert!((phi1_agdu(&inp, 2.0) - 0.1 * 2.0 * (3.0 + 10.0 / 1.5)).abs() < 1e-12);
        assert_eq!(phi1_generic(0.1, 1.0, 3, 1.0, 1.0, 1.0), 0.1 * 6.0);
        // beta1 = 0: only r = n survives the series.
        let admu = phi1_admu(
            &BoundInputs {
                k: 4,
                z: 1,
                ..BoundInputs::default()
            },
            1.0,
            0.0,
            0.5,
        );
        assert!((admu - (4.0 + 4.0 / 1.0)).abs() < 1e-12);
    }

    #[test]
    fn c_beta_values() {
        assert_eq!(u0_beta(0.0), 1);
        assert_eq!(compute_c_beta(0.0), 1.0);
        let c = compute_c_beta(0.9);
        assert!(c.is_finite() && c > 0.0);
        let u0 = u0_beta(0.9);
        assert!(0.9f64.powi(u0 as i32) * (u0 as f64).powi(4) < 1.0);
        assert!(0.9f64.powi(u0 as i32 - 1) * ((u0 - 1) as f64).powi(4) >= 1.0);
        // Tiny beta: every v >= 1 already satisfies the condition.
        assert_eq!(u0_beta(1e-3), 1);
    }

    #[test]
    fn momentum_sum_bound_holds_on_grid() {
        for &b in &[0.0, 0.1, 0.5, 0.9, 0.95] {
            let c = compute_c_beta(b);
            for t in [1, 10, 50, 200] {
                assert!(
                    momentum_weighted_sum(b, t) <= (1.0 - b) * c * t as f64 + 1e-9,
                    "beta {b} T {t}"
                );
            }
        }
    }

    #[test]
    fn theorem_rhs_zero_server_rate() {
        let r = theorem_rhs(
            &BoundInputs {
                eta: 0.0,
                eps_s: 1e-6,
                f_gap: 1.0,
                ..BoundInputs::default()
            },
            Some(0.5),
        );
        assert_eq!(
            (r.psi2, r.psi3, r.psi4, r.psi5, r.psi6),
            (0.0, Some(0.0), 0.0, 0.0, 0.0)
        );
        assert_eq!(r.rhs, None);
        assert_eq!(r.margin, None);
    }

    #[test]
    fn theorem_rhs_without_clip_is_inapplicable() {
        let r = theorem_rhs(&BoundInputs::default(), None);
        assert_eq!(r.l_tilde, None);
        assert_eq!(r.psi3, None);
        assert_eq!(r.rhs, None);
    }

    #[test]
    fn psi2_linear_in_t() {
        let a = theorem_rhs(
            &BoundInputs {
                t: 50,
                eps_s: 1e-6,
                ..BoundInputs::default()
            },
            None,
        );
        let b = theorem_rhs(
            &BoundInputs {
                t: 100,
                eps_s: 1e-6,
                ..BoundInputs::default()
            },
            None,
        );
        assert!((b.psi2 / a.psi2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_cases() {
        let s: Vec<f64> = (1..=200).map(|t| 3.0 * (t as f64).powf(-0.5)).collect();
        assert!((fit_rate(&s).unwrap() + 0.5).abs() < 1e-9);
        assert_eq!(fit_rate(&[2.0; 20]).unwrap(), 0.0);
        assert!(fit_rate(&[1.0; 5]).is_err());
        assert!(matches!(
            fit_rate(&[1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            Err(FitError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn heavy_tail_zero_trajectories() {
        let r = heavy_tail_report(&vec![vec![0.0; 10]; 30], 0.05).unwrap();
        assert_eq!(r.mean_final, 0.0);
        assert!((r.cap - 3.64642).abs() < 1e-5);
        assert_eq!(r.max_excursion, 0.0);
        assert_eq!(r.tail_index, None);
        assert!(heavy_tail_report(&vec![vec![0.0]; 29], 0.05).is_err());
    }

    #[test]
    fn hill_recovers_pareto_index() {
        // Pareto(alpha = 2) quantiles.
        let n = 10_000;
        let v: Vec<f64> = (1..=n)
            .map(|i| (1.0 - i as f64 / (n + 1) as f64).powf(-0.5))
            .collect();
        let a = hill_estimator(&v).unwrap();
        assert!((a - 2.0).abs() < 0.1, "{a}");
    }
}
