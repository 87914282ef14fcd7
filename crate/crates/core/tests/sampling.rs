use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use hopdist::headway::{Headway, HeadwayDistribution};

const DRAWS: usize = 1_000_000;
const BINS: usize = 50;

/// Pearson statistic over `BINS` equiprobable bins of the family's own CDF.
fn chi_square(d: &HeadwayDistribution, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; BINS];
    for _ in 0..DRAWS {
        let u = d.cdf(d.sample(&mut rng));
        counts[((u * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let expected = DRAWS as f64 / BINS as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

fn critical(df: usize) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(0.99)
}

#[test]
fn continuous_families_pass_chi_square() {
    let families = [
        HeadwayDistribution::exponential(0.2).unwrap(),
        HeadwayDistribution::uniform(3.0, 40.0).unwrap(),
        HeadwayDistribution::lognormal(3.0, 0.7).unwrap(),
    ];
    for (i, d) in families.iter().enumerate() {
        let stat = chi_square(d, 100 + i as u64);
        assert!(stat < critical(BINS - 1), "{}: chi-square {stat}", d.family());
    }
}

#[test]
fn empirical_resampling_matches_sample_frequencies() {
    let data = [2.0, 5.0, 5.0, 7.5, 11.0, 11.0, 11.0, 30.0];
    let d = HeadwayDistribution::empirical(&data).unwrap();
    let values = [2.0, 5.0, 7.5, 11.0, 30.0];
    let mut counts = [0usize; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..DRAWS {
        let x = d.sample(&mut rng);
        counts[values.iter().position(|&v| v == x).expect("resampled value")] += 1;
    }
    let stat: f64 = values
        .iter()
        .zip(counts)
        .map(|(&v, c)| {
            let p = data.iter().filter(|&&x| x == v).count() as f64 / data.len() as f64;
            let e = p * DRAWS as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    assert!(stat < critical(values.len() - 1), "chi-square {stat}");
}

#[test]
fn deterministic_always_returns_spacing() {
    let d = HeadwayDistribution::deterministic(42.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!((0..1000).all(|_| d.sample(&mut rng) == 42.5));
}

#[test]
fn uniform_ecdf_within_dkw_band() {
    // P(sup|F_n − F| > ε) ≤ 2 exp(−2nε²); ε below gives a 1e-6 failure rate.
    let n = 200_000;
    let eps = ((2.0f64 / 1e-6).ln() / (2.0 * n as f64)).sqrt();
    let d = HeadwayDistribution::uniform(0.0, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let sup = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = d.cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(sup < eps, "KS distance {sup} vs DKW band {eps}");
}
