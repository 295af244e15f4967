use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use crate::numeric::{derive_stream, stream_ids, RngStream};

/// Split sample indices across `n` clients with per-class Dirichlet(alpha) shares.
///
/// For each class the shuffled indices are cut into contiguous chunks whose
/// sizes are the Dirichlet proportions rounded by largest remainder, so every
/// index lands on exactly one client. Returned index lists are ascending.
pub fn dirichlet_partition(labels: &[usize], n: usize, alpha: f64, seed: u64) -> Vec<Vec<usize>> {
    assert!(n >= 1, "need at least one client");
    assert!(alpha > 0.0 && alpha.is_finite(), "alpha must be > 0");
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut stream = derive_stream(seed, 0, stream_ids::PARTITION);
    let mut out = vec![Vec::new(); n];
    for mut members in by_class {
        let shares = dirichlet(alpha, n, &mut stream);
        members.shuffle(&mut stream);
        let mut start = 0;
        for (client, count) in largest_remainder(&shares, members.len())
            .into_iter()
            .enumerate()
        {
            out[client].extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for idx in &mut out {
        idx.sort_unstable();
    }
    out
}

/// Symmetric Dirichlet draw computed in log space, so tiny `alpha` does not
/// underflow every gamma variate to zero.
fn dirichlet(alpha: f64, n: usize, stream: &mut RngStream) -> Vec<f64> {
    let logs: Vec<f64> = if alpha < 1.0 {
        // G(a) = G(a + 1) * U^(1/a)
        let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha > 0");
        (0..n)
            .map(|_| {
                let g: f64 = gamma.sample(stream);
                g.ln() + stream.open01().ln() / alpha
            })
            .collect()
    } else {
        let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
        (0..n).map(|_| gamma.sample(stream).ln()).collect()
    };
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}
