//! Descriptive statistics shared across modules.

/// Type-7 (linear interpolation) quantile of unsorted data. `q` in `[0, 1]`.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// Type-7 quantile of data already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Quantiles at several levels with a single sort.
pub fn quantiles(data: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    levels.iter().map(|&q| quantile_sorted(&sorted, q)).collect()
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample variance (denominator `n - 1`).
pub fn variance(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(data);
    data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(data: &[f64]) -> f64 {
    variance(data).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_hand_values() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile(&v, 0.5) - 50.5).abs() < 1e-12);
        assert!((quantile(&v, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile(&v, 0.975) - 97.525).abs() < 1e-12);
        assert_eq!(quantile(&[0.0, 10.0], 0.5), 5.0);
        assert_eq!(quantile(&[4.0], 0.975), 4.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn sample_sd() {
        let mut w = vec![0.0; 11];
        w.push(12.0);
        assert!((mean(&w) - 1.0).abs() < 1e-12);
        assert!((std_dev(&w) - 12f64.sqrt()).abs() < 1e-12);
    }
}
