use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sthawkes::grid::YearMonth;
use sthawkes::intensity::{log_likelihood, log_likelihood_gradient};
use sthawkes::{DistanceMatrix, EventGrid, Metric, ModelParams, Region, RegionSet};

struct Instance {
    counts: Array2<u32>,
    xy: Vec<(f64, f64)>,
    warmup: usize,
    params: ModelParams,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let t_len = rng.random_range(2..=12);
        let r_len = rng.random_range(1..=5);
        let t_max = rng.random_range(1..=4);
        let counts = Array2::from_shape_fn((t_len, r_len), |_| rng.random_range(0..6));
        let xy = (0..r_len).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
        let params = ModelParams::new(
            rng.random_range(0.05..2.0),
            rng.random_range(0.0..1.5),
            rng.random_range(0.05..0.95),
            rng.random_range(0.3..3.0),
            t_max,
        )
        .unwrap();
        Instance { counts, xy, warmup: rng.random_range(0..t_len), params }
    }

    fn regions(&self) -> RegionSet {
        RegionSet::new(
            self.xy
                .iter()
                .enumerate()
                .map(|(i, &(cx, cy))| Region { region_id: format!("z{i}"), cx, cy })
                .collect(),
        )
        .unwrap()
    }

    fn grid(&self) -> EventGrid {
        EventGrid::new(self.counts.clone(), YearMonth::new(2000, 1).unwrap(), self.warmup, self.regions()).unwrap()
    }
}

/// Literal transcription of the intensity and Poisson log-pmf, one cell at a time.
fn brute_force_loglik(inst: &Instance, p: &ModelParams) -> f64 {
    let (t_len, r_len) = inst.counts.dim();
    let raw: Vec<f64> = (1..=p.t_max).map(|s| p.beta * (1.0 - p.beta).powi(s as i32 - 1)).collect();
    let norm: f64 = raw.iter().sum();
    let weight = |a: usize, b: usize| {
        let (dx, dy) = (inst.xy[a].0 - inst.xy[b].0, inst.xy[a].1 - inst.xy[b].1);
        (-(dx * dx + dy * dy).sqrt() / (2.0 * p.sigma * p.sigma)).exp()
    };
    let mut total = 0.0;
    for t in inst.warmup..t_len {
        for r in 0..r_len {
            let mut lambda = p.mu;
            for s in 1..=p.t_max.min(t) {
                for src in 0..r_len {
                    lambda += p.alpha * raw[s - 1] / norm * inst.counts[[t - s, src]] as f64 * weight(src, r);
                }
            }
            let y = inst.counts[[t, r]];
            let ln_fact: f64 = (2..=y).map(|k| (k as f64).ln()).sum();
            total += y as f64 * lambda.ln() - lambda - ln_fact;
        }
    }
    total
}

fn loglik_of(inst: &Instance, p: &ModelParams) -> f64 {
    let grid = inst.grid();
    let w = DistanceMatrix::new(grid.regions(), Metric::Euclidean, false).weights(p.sigma);
    log_likelihood(p, &grid, &w).unwrap()
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let inst = Instance::random(&mut rng);
        let fast = loglik_of(&inst, &inst.params);
        let slow = brute_force_loglik(&inst, &inst.params);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let inst = Instance::random(&mut rng);
        let grid = inst.grid();
        let dist = DistanceMatrix::new(grid.regions(), Metric::Euclidean, false);
        let p = ModelParams { alpha: inst.params.alpha.max(0.05), ..inst.params };
        let analytic = log_likelihood_gradient(&p, &grid, &dist).unwrap();
        let x = p.as_array();
        for j in 0..4 {
            let h = 1e-5 * x[j].abs().max(1e-2);
            let (mut up, mut dn) = (x, x);
            up[j] += h;
            dn[j] -= h;
            let f = |v: [f64; 4]| {
                let q = ModelParams::from_array(v, p.t_max);
                log_likelihood(&q, &grid, &dist.weights(q.sigma)).unwrap()
            };
            let numeric = (f(up) - f(dn)) / (2.0 * h);
            let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1.0);
            assert!(rel < 1e-5, "param {j}: analytic {} numeric {numeric}", analytic[j]);
        }
    }
}

#[test]
fn loglik_is_concave_in_mu() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let inst = Instance::random(&mut rng);
        let f = |mu: f64| loglik_of(&inst, &ModelParams { mu, ..inst.params });
        let h = 0.01;
        for k in 1..40 {
            let mu = 0.05 * k as f64;
            let second = f(mu + h) - 2.0 * f(mu) + f(mu - h);
            assert!(second <= 1e-9, "second difference {second} at mu {mu}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relabeling_regions_leaves_loglik_unchanged(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = Instance::random(&mut rng);
        let r_len = inst.xy.len();
        let mut perm: Vec<usize> = (0..r_len).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % r_len);
        let shuffled = Instance {
            counts: Array2::from_shape_fn(inst.counts.dim(), |(t, r)| inst.counts[[t, perm[r]]]),
            xy: perm.iter().map(|&r| inst.xy[r]).collect(),
            warmup: inst.warmup,
            params: inst.params,
        };
        let a = loglik_of(&inst, &inst.params);
        let b = loglik_of(&shuffled, &inst.params);
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn excitation_is_linear_in_alpha(seed in 0u64..10_000, scale in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = Instance::random(&mut rng);
        let grid = inst.grid();
        let w = DistanceMatrix::new(grid.regions(), Metric::Euclidean, false).weights(inst.params.sigma);
        let base = sthawkes::intensity::intensity_surface(&inst.params, &grid, &w).unwrap();
        let scaled_p = ModelParams { alpha: inst.params.alpha * scale, ..inst.params };
        let scaled = sthawkes::intensity::intensity_surface(&scaled_p, &grid, &w).unwrap();
        for (a, b) in base.lambda.iter().zip(scaled.lambda.iter()) {
            let expected = inst.params.mu + scale * (a - inst.params.mu);
            prop_assert!((b - expected).abs() < 1e-10 * expected.max(1.0));
            prop_assert!(*a >= inst.params.mu);
        }
    }

    #[test]
    fn squared_and_plain_distance_agree_at_unit_spacing(mu in 0.1f64..2.0, alpha in 0.0f64..1.0) {
        // with all centroids exactly one unit apart d and d² coincide
        let regions = RegionSet::new(vec![
            Region { region_id: "a".into(), cx: 0.0, cy: 0.0 },
            Region { region_id: "b".into(), cx: 1.0, cy: 0.0 },
        ]).unwrap();
        let counts = Array2::from_shape_fn((6, 2), |(t, r)| ((t + 2 * r) % 3) as u32);
        let grid = EventGrid::new(counts, YearMonth::new(2000, 1).unwrap(), 2, regions).unwrap();
        let p = ModelParams::new(mu, alpha, 0.5, 0.8, 3).unwrap();
        let plain = DistanceMatrix::new(grid.regions(), Metric::Euclidean, false).weights(0.8);
        let squared = DistanceMatrix::new(grid.regions(), Metric::Euclidean, true).weights(0.8);
        let a = log_likelihood(&p, &grid, &plain).unwrap();
        let b = log_likelihood(&p, &grid, &squared).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
