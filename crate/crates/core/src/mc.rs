//! Monte Carlo simulation of hop-by-hop propagation.
//!
//! One trial draws headways one after another. Under contention a hop of
//! length `τ` succeeds iff `τ ≤ L` and an independent Bernoulli(`p_s`)
//! succeeds; under fading it succeeds with probability `p_s(τ)`. Successful
//! hops add `τ` to `D` and one receiver to `N`; the first failure ends the
//! trial.
//!
//! Trial `i` draws from a ChaCha8 stream keyed by the seed with stream id `i`,
//! and trials are reduced in fixed-size chunks in index order, so results are
//! bit-identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::ContentionModel;
use crate::error::{Error, Result};
use crate::fading::{Channel, FadingModel};
use crate::headway::Headway;
use crate::quad::CdfCurve;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Trials per reduction chunk. Changing it changes floating-point results.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMode {
    Contention(ContentionModel),
    Fading(FadingModel),
}

/// ECDF grid `s = 0, step, …, max_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcdfGrid {
    pub step: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig<'a> {
    pub trials: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub headway: &'a dyn Headway,
    pub ecdf_grid: Option<EcdfGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub trials: u64,
    pub mean_d: f64,
    /// Unbiased sample variance; `None` with fewer than two trials.
    pub var_d: Option<f64>,
    pub mean_n: f64,
    pub var_n: Option<f64>,
    /// 95% half-width of the mean of `D`.
    pub ci95_mean_d: Option<f64>,
    /// 95% half-width of the sample variance of `D` (normal approximation
    /// using the fourth central moment).
    pub ci95_var_d: Option<f64>,
    pub ci95_mean_n: Option<f64>,
    /// Fraction of trials whose first hop failed.
    pub zero_fraction: f64,
    pub ecdf: Option<CdfCurve>,
}

/// Outcome of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub distance: f64,
    pub hops: u64,
}

/// Streaming central moments up to order four, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    fn merge(&self, b: &Moments) -> Moments {
        if self.n == 0 {
            return *b;
        }
        if b.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, b.n as f64);
        let n = na + nb;
        let delta = b.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        Moments {
            n: self.n + b.n,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + b.m2 + d2 * na * nb / n,
            m3: self.m3 + b.m3 + d3 * na * nb * (na - nb) / (n * n) + 3.0 * delta * (na * b.m2 - nb * self.m2) / n,
            m4: self.m4
                + b.m4
                + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * d2 * (na * na * b.m2 + nb * nb * self.m2) / (n * n)
                + 4.0 * delta * (na * b.m3 - nb * self.m3) / n,
        }
    }

    fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n - 1) as f64).max(0.0))
    }

    fn ci95_mean(&self) -> Option<f64> {
        self.variance().map(|v| Z95 * (v / self.n as f64).sqrt())
    }

    fn ci95_variance(&self) -> Option<f64> {
        if self.n < 4 {
            return None;
        }
        let n = self.n as f64;
        let s2 = self.m2 / (n - 1.0);
        let mu4 = self.m4 / n;
        let var_of_var = (mu4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n;
        Some(Z95 * var_of_var.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone)]
struct Chunk {
    distance: Moments,
    hops: Moments,
    zeros: u64,
    /// Counts per ECDF bin; the last entry collects `D > max_s`.
    bins: Vec<u64>,
}

impl Chunk {
    fn new(bins: usize) -> Self {
        Chunk {
            distance: Moments::default(),
            hops: Moments::default(),
            zeros: 0,
            bins: vec![0; bins],
        }
    }

    fn absorb(&mut self, other: &Chunk) {
        self.distance = self.distance.merge(&other.distance);
        self.hops = self.hops.merge(&other.hops);
        self.zeros += other.zeros;
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }
}

/// Index of the first grid point `i·step` that is `≥ d`.
fn grid_bin(d: f64, step: f64) -> usize {
    if d <= 0.0 {
        return 0;
    }
    let mut k = (d / step).ceil() as usize;
    while k > 0 && ((k - 1) as f64) * step >= d {
        k -= 1;
    }
    while (k as f64) * step < d {
        k += 1;
    }
    k
}

fn validate(cfg: &SimConfig<'_>) -> Result<()> {
    if cfg.trials == 0 {
        return Err(Error::validation("at least one trial is required"));
    }
    if let Some(g) = cfg.ecdf_grid {
        if !(g.step > 0.0 && g.max_s >= 0.0 && g.max_s.is_finite()) {
            return Err(Error::validation(format!(
                "invalid ECDF grid: step {} max_s {}",
                g.step, g.max_s
            )));
        }
    }
    if let SimMode::Contention(m) = cfg.mode {
        let q = m.hop_success(cfg.headway);
        if q >= 1.0 - 1e-12 {
            return Err(Error::degenerate(format!(
                "p_s·F_H(L) = {q}: simulated propagation would never stop"
            )));
        }
    }
    Ok(())
}

fn stream_key(seed: u64) -> [u8; 32] {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

fn run_trial(cfg: &SimConfig<'_>, key: [u8; 32], index: u64) -> Trial {
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    let mut distance = 0.0;
    let mut hops = 0;
    loop {
        let tau = cfg.headway.sample(&mut rng);
        let success = match cfg.mode {
            SimMode::Contention(m) => tau <= m.range() && rng.random::<f64>() < m.p_s(),
            SimMode::Fading(f) => rng.random::<f64>() < f.success_at(tau),
        };
        if !success {
            return Trial { distance, hops };
        }
        distance += tau;
        hops += 1;
    }
}

/// Replays trial `index` of a configuration.
pub fn simulate_trial(cfg: &SimConfig<'_>, index: u64) -> Trial {
    run_trial(cfg, stream_key(cfg.seed), index)
}

/// Runs the simulation on the current rayon pool.
pub fn run(cfg: &SimConfig<'_>) -> Result<SimStats> {
    validate(cfg)?;
    let key = stream_key(cfg.seed);
    let grid_len = cfg.ecdf_grid.map(|g| CdfCurve::grid_len(g.step, g.max_s));
    let n_bins = grid_len.map_or(0, |n| n + 1);
    let chunks = cfg.trials.div_ceil(CHUNK);

    let partials: Vec<Chunk> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Chunk::new(n_bins);
            let end = ((c + 1) * CHUNK).min(cfg.trials);
            for index in c * CHUNK..end {
                let t = run_trial(cfg, key, index);
                acc.distance.push(t.distance);
                acc.hops.push(t.hops as f64);
                if t.hops == 0 {
                    acc.zeros += 1;
                }
                if let (Some(g), Some(len)) = (cfg.ecdf_grid, grid_len) {
                    acc.bins[grid_bin(t.distance, g.step).min(len)] += 1;
                }
            }
            acc
        })
        .collect();

    let mut total = Chunk::new(n_bins);
    for p in &partials {
        total.absorb(p);
    }

    let n = cfg.trials as f64;
    let ecdf = cfg.ecdf_grid.zip(grid_len).map(|(g, len)| {
        let mut cumulative = 0u64;
        let values = total.bins[..len]
            .iter()
            .map(|&c| {
                cumulative += c;
                cumulative as f64 / n
            })
            .collect();
        CdfCurve {
            grid_step: g.step,
            max_s: g.max_s,
            values,
        }
    });

    Ok(SimStats {
        trials: cfg.trials,
        mean_d: total.distance.mean,
        var_d: total.distance.variance(),
        mean_n: total.hops.mean,
        var_n: total.hops.variance(),
        ci95_mean_d: total.distance.ci95_mean(),
        ci95_var_d: total.distance.ci95_variance(),
        ci95_mean_n: total.hops.ci95_mean(),
        zero_fraction: total.zeros as f64 / n,
        ecdf,
    })
}

/// Runs the simulation on a dedicated pool with `threads` workers.
pub fn run_with_threads(cfg: &SimConfig<'_>, threads: usize) -> Result<SimStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::validation(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(cfg))
}

/// Empirical CDF of `D` on the configured grid.
pub fn ecdf(cfg: &SimConfig<'_>) -> Result<CdfCurve> {
    if cfg.ecdf_grid.is_none() {
        return Err(Error::validation("ECDF requested without a grid"));
    }
    Ok(run(cfg)?.ecdf.expect("grid present"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MeanD,
    VarD,
    MeanN,
    CdfSupNorm,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::MeanD => "mean_D",
            Metric::VarD => "var_D",
            Metric::MeanN => "mean_N",
            Metric::CdfSupNorm => "cdf_supnorm",
        }
    }
}

/// Pass iff `|analytic − simulated| ≤ 4 × ci_half_width` (or, for CDFs,
/// the sup-norm distance is below the threshold).
pub const CI_MULTIPLIER: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub metric: Metric,
    pub analytic: f64,
    pub simulated: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// 95% half-width, or the sup-norm threshold for CDFs.
    pub ci_half_width: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn from_estimate(metric: Metric, analytic: f64, simulated: f64, ci_half_width: Option<f64>) -> Self {
        let abs_error = (analytic - simulated).abs();
        let rel_error = if analytic != 0.0 {
            abs_error / analytic.abs()
        } else if abs_error == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let ci = ci_half_width.unwrap_or(0.0);
        ComparisonReport {
            metric,
            analytic,
            simulated,
            abs_error,
            rel_error,
            ci_half_width: ci,
            pass: abs_error <= CI_MULTIPLIER * ci,
        }
    }
}

/// Compares a scalar analytic value with the matching simulation estimate.
pub fn compare(analytic: f64, sim: &SimStats, metric: Metric) -> Result<ComparisonReport> {
    let (simulated, ci) = match metric {
        Metric::MeanD => (sim.mean_d, sim.ci95_mean_d),
        Metric::VarD => (
            sim.var_d
                .ok_or_else(|| Error::validation("variance undefined with fewer than two trials"))?,
            sim.ci95_var_d,
        ),
        Metric::MeanN => (sim.mean_n, sim.ci95_mean_n),
        Metric::CdfSupNorm => {
            return Err(Error::validation("CDF comparison needs a curve; use compare_cdf"));
        }
    };
    Ok(ComparisonReport::from_estimate(metric, analytic, simulated, ci))
}

/// Sup-norm comparison of an analytic CDF with the simulated ECDF.
pub fn compare_cdf(analytic: &CdfCurve, sim: &SimStats, threshold: f64) -> Result<ComparisonReport> {
    let ecdf = sim
        .ecdf
        .as_ref()
        .ok_or_else(|| Error::validation("simulation has no ECDF"))?;
    let sup = analytic.sup_distance(ecdf)?;
    Ok(ComparisonReport {
        metric: Metric::CdfSupNorm,
        analytic: 0.0,
        simulated: sup,
        abs_error: sup,
        rel_error: sup,
        ci_half_width: threshold,
        pass: sup < threshold,
    })
}
