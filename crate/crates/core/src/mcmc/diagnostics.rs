//! Convergence diagnostics: rank-normalised split-R̂ and autocorrelation ESS.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::stats::{mean, quantile, variance};

/// Average ranks (1-based) of pooled values, ties sharing their mean rank.
fn pooled_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Replaces every draw by the normal score of its pooled rank.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = pooled.len() as f64;
    let ranks = pooled_ranks(&pooled);
    let normal = Normal::standard();
    let mut z = ranks.into_iter().map(|r| normal.inverse_cdf((r - 0.375) / (s + 0.25)));
    chains
        .iter()
        .map(|c| c.iter().map(|_| z.next().expect("same length")).collect())
        .collect()
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[n - half..n].to_vec()])
        .collect()
}

/// Classic potential scale reduction on equal-length chains.
fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let between_over_n = variance(&means);
    let var_plus = (n - 1.0) / n * within + between_over_n;
    (var_plus / within).sqrt()
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let mut it = chains.iter().flatten();
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

/// Rank-normalised split-R̂: the larger of the bulk value and the value on
/// folded draws `|x − median|`. `NaN` when all draws are identical.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    assert!(chains.len() >= 2, "split-R̂ needs at least two chains");
    assert!(chains.iter().all(|c| c.len() >= 4), "split-R̂ needs at least four draws per chain");
    if is_constant(chains) {
        return f64::NAN;
    }
    let halves = split_halves(chains);
    let bulk = basic_rhat(&rank_normalize(&halves));

    let pooled: Vec<f64> = halves.iter().flatten().copied().collect();
    let med = quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = if is_constant(&folded) { f64::NAN } else { basic_rhat(&rank_normalize(&folded)) };
    if tail.is_nan() {
        bulk
    } else {
        bulk.max(tail)
    }
}

/// Effective sample size from multi-chain autocorrelations, truncating the sum
/// with Geyer's initial monotone sequence. Capped at the total draw count.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    if is_constant(chains) {
        return 0.0;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;

    let acov = |c: usize, lag: usize| -> f64 {
        let x = chains[c];
        let mu = means[c];
        (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / nf
    };
    let acov0: Vec<f64> = (0..m).map(|c| acov(c, 0)).collect();
    let within = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let var_plus = if m > 1 { within * (nf - 1.0) / nf + variance(&means) } else { within * (nf - 1.0) / nf };
    if var_plus <= 0.0 {
        return 0.0;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = if lag == 0 {
            acov0.iter().sum::<f64>() / m as f64
        } else {
            (0..m).map(|c| acov(c, lag)).sum::<f64>() / m as f64
        };
        1.0 - (within - mean_acov) / var_plus
    };

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    if tau <= 0.0 {
        return total;
    }
    (total / tau).min(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    fn ar1(m: usize, n: usize, phi: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let mut x: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
                (0..n)
                    .map(|_| {
                        x = phi * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn rhat_iid_near_one() {
        let r = split_rhat(&normal_chains(4, 1000, 1));
        assert!(r > 0.99 && r < 1.01, "rhat {r}");
    }

    #[test]
    fn rhat_disjoint_chains_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 0.01).collect();
        let b: Vec<f64> = (0..500).map(|_| 10.0 + rng.random::<f64>() * 0.01).collect();
        assert!(split_rhat(&[a, b]) > 1.5);
    }

    #[test]
    fn rhat_constant_is_nan() {
        assert!(split_rhat(&[vec![2.0; 10], vec![2.0; 10]]).is_nan());
    }

    #[test]
    fn rhat_detects_trend_within_chain() {
        // each chain drifts, which only the split halves reveal
        let chains: Vec<Vec<f64>> = (0..4).map(|c| (0..400).map(|i| i as f64 / 40.0 + c as f64 * 1e-3).collect()).collect();
        assert!(split_rhat(&chains) > 1.5);
    }

    #[test]
    fn ess_iid_close_to_total() {
        let chains = normal_chains(4, 1000, 5);
        let ess = effective_sample_size(&chains);
        assert!(ess <= 4000.0);
        assert!((ess / 4000.0 - 1.0).abs() < 0.2, "ess {ess}");
    }

    #[test]
    fn ess_ar1_matches_analytic_factor() {
        let chains = ar1(4, 5000, 0.9, 8);
        let ess = effective_sample_size(&chains);
        let expected = 20000.0 * 0.1 / 1.9;
        assert!(ess > expected / 2.0 && ess < expected * 2.0, "ess {ess} vs {expected}");
    }

    #[test]
    fn ess_constant_is_zero() {
        assert_eq!(effective_sample_size(&[vec![1.0; 50], vec![1.0; 50]]), 0.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(pooled_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
