//! Headway distributions.
//!
//! A headway is the distance in meters between two neighbouring vehicles.
//! Every formula in this crate consumes the headway law only through a few
//! functionals: density, CDF, mean, variance, truncated moments
//! `∫_0^u τ^k f_H(τ) dτ` and expectations `E[g(H)]`. The [`Headway`] trait
//! exposes exactly those, with quadrature fallbacks so a custom law only has
//! to provide the density and CDF.

use std::fmt::Debug;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, LogNormal};

use crate::error::{Error, Result};
use crate::quad;

/// Relative tolerance for quadrature fallbacks.
pub const QUAD_REL_TOL: f64 = 1e-10;

pub trait Headway: Debug + Send + Sync {
    /// Density at `x ≥ 0`. Point masses report `+∞` at the atom.
    fn pdf(&self, x: f64) -> Result<f64>;

    /// `P(H ≤ x)`; zero for negative `x`.
    fn cdf(&self, x: f64) -> f64;

    fn mean(&self) -> f64;

    fn variance(&self) -> f64;

    /// `∫_0^upper τ^k f_H(τ) dτ` for `k ∈ {1, 2}`.
    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        check_order(k)?;
        check_upper(upper)?;
        let r = quad::integrate(
            |t| t.powi(k as i32) * self.pdf(t).unwrap_or(0.0),
            0.0,
            upper,
            QUAD_REL_TOL,
        )?;
        Ok(r.value.max(0.0))
    }

    /// `E[g(H)]`.
    fn expect(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        let r = quad::integrate_semi_infinite(
            |t| {
                let w = self.pdf(t).unwrap_or(0.0);
                if w == 0.0 {
                    0.0
                } else {
                    g(t) * w
                }
            },
            0.0,
            QUAD_REL_TOL,
        )?;
        Ok(r.value)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64;
}

fn check_order(k: u32) -> Result<()> {
    if k == 1 || k == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(k))
    }
}

fn check_upper(upper: f64) -> Result<()> {
    if upper >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("truncation point must be nonnegative, got {upper}")))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("headway density undefined at negative distance {x}")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `E[H^k]` for `k ∈ {1, 2}` from mean and variance.
fn raw_moment<H: Headway + ?Sized>(h: &H, k: u32) -> f64 {
    let m = h.mean();
    if k == 1 {
        m
    } else {
        h.variance() + m * m
    }
}

/// Exponential headway with rate `λ` (vehicles per meter), i.e. Poisson placement.
#[derive(Debug, Clone)]
pub struct Exponential {
    rate: f64,
    sampler: Exp<f64>,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Self> {
        let rate = positive("exponential rate", rate)?;
        let sampler = Exp::new(rate).map_err(|e| Error::validation(e.to_string()))?;
        Ok(Self { rate, sampler })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// `1 − e^{−x} Σ_{j≤k} x^j/j!`, evaluated without cancellation for small `x`.
fn gamma_tail_complement(k: u32, x: f64) -> f64 {
    if x < 1.0 {
        // e^{−x} Σ_{j>k} x^j/j!
        let mut term = 1.0;
        for j in 1..=k {
            term *= x / j as f64;
        }
        let mut sum = 0.0;
        let mut j = k + 1;
        loop {
            term *= x / j as f64;
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
            j += 1;
        }
        (-x).exp() * sum
    } else {
        let mut partial = 1.0;
        let mut term = 1.0;
        for j in 1..=k {
            term *= x / j as f64;
            partial += term;
        }
        1.0 - (-x).exp() * partial
    }
}

impl Headway for Exponential {
    fn pdf(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.rate * (-self.rate * x).exp())
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }

    fn mean(&self) -> f64 {
        1.0 / self.rate
    }

    fn variance(&self) -> f64 {
        1.0 / (self.rate * self.rate)
    }

    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        check_order(k)?;
        check_upper(upper)?;
        // k!/λ^k · P(k+1, λu)
        let factorial = if k == 1 { 1.0 } else { 2.0 };
        Ok(factorial / self.rate.powi(k as i32) * gamma_tail_complement(k, self.rate * upper))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.sampler.sample(rng)
    }
}

/// Uniform headway on `[low, high]`.
#[derive(Debug, Clone)]
pub struct Uniform {
    low: f64,
    high: f64,
}

impl Uniform {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low >= 0.0 && high > low && high.is_finite()) {
            return Err(Error::validation(format!(
                "uniform headway needs 0 ≤ low < high < ∞, got [{low}, {high}]"
            )));
        }
        Ok(Self { low, high })
    }
}

impl Headway for Uniform {
    fn pdf(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(if x >= self.low && x <= self.high {
            1.0 / (self.high - self.low)
        } else {
            0.0
        })
    }

    fn cdf(&self, x: f64) -> f64 {
        ((x - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }

    fn mean(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    fn variance(&self) -> f64 {
        let w = self.high - self.low;
        w * w / 12.0
    }

    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        check_order(k)?;
        check_upper(upper)?;
        if upper >= self.high {
            return Ok(raw_moment(self, k));
        }
        if upper <= self.low {
            return Ok(0.0);
        }
        let p = (k + 1) as i32;
        Ok((upper.powi(p) - self.low.powi(p)) / ((k + 1) as f64 * (self.high - self.low)))
    }

    fn expect(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        let r = quad::integrate(g, self.low, self.high, QUAD_REL_TOL)?;
        Ok(r.value / (self.high - self.low))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.low + (self.high - self.low) * rng.random::<f64>()
    }
}

/// Lognormal headway: `ln H ~ N(log_mean, log_sd²)`.
#[derive(Debug, Clone)]
pub struct Lognormal {
    log_mean: f64,
    log_sd: f64,
    sampler: LogNormal<f64>,
}

impl Lognormal {
    pub fn new(log_mean: f64, log_sd: f64) -> Result<Self> {
        if !log_mean.is_finite() {
            return Err(Error::validation(format!("lognormal log-mean must be finite, got {log_mean}")));
        }
        let log_sd = positive("lognormal log-sd", log_sd)?;
        let sampler = LogNormal::new(log_mean, log_sd).map_err(|e| Error::validation(e.to_string()))?;
        Ok(Self {
            log_mean,
            log_sd,
            sampler,
        })
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl Headway for Lognormal {
    fn pdf(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let z = (x.ln() - self.log_mean) / self.log_sd;
        Ok(std_normal_pdf(z) / (x * self.log_sd))
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            std_normal_cdf((x.ln() - self.log_mean) / self.log_sd)
        }
    }

    fn mean(&self) -> f64 {
        (self.log_mean + 0.5 * self.log_sd * self.log_sd).exp()
    }

    fn variance(&self) -> f64 {
        let s2 = self.log_sd * self.log_sd;
        s2.exp_m1() * (2.0 * self.log_mean + s2).exp()
    }

    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        check_order(k)?;
        check_upper(upper)?;
        if upper == 0.0 {
            return Ok(0.0);
        }
        // E[H^k; H ≤ u] = e^{kμ + k²σ²/2} Φ((ln u − μ − kσ²)/σ)
        let kf = k as f64;
        let s2 = self.log_sd * self.log_sd;
        let scale = (kf * self.log_mean + 0.5 * kf * kf * s2).exp();
        Ok(scale * std_normal_cdf((upper.ln() - self.log_mean - kf * s2) / self.log_sd))
    }

    fn expect(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        // Integrate over the standard normal variable z, H = e^{μ + σz}.
        let at = |z: f64| {
            let w = std_normal_pdf(z);
            if w == 0.0 {
                0.0
            } else {
                g((self.log_mean + self.log_sd * z).exp()) * w
            }
        };
        let upper = quad::integrate_semi_infinite(at, 0.0, QUAD_REL_TOL)?;
        let lower = quad::integrate_semi_infinite(|z| at(-z), 0.0, QUAD_REL_TOL)?;
        Ok(upper.value + lower.value)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.sampler.sample(rng)
    }
}

/// Every headway equals `spacing`.
#[derive(Debug, Clone)]
pub struct Deterministic {
    spacing: f64,
}

impl Deterministic {
    pub fn new(spacing: f64) -> Result<Self> {
        if !(spacing >= 0.0 && spacing.is_finite()) {
            return Err(Error::validation(format!("deterministic spacing must be ≥ 0, got {spacing}")));
        }
        Ok(Self { spacing })
    }
}

impl Headway for Deterministic {
    fn pdf(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(if x == self.spacing { f64::INFINITY } else { 0.0 })
    }

    fn cdf(&self, x: f64) -> f64 {
        if x >= self.spacing {
            1.0
        } else {
            0.0
        }
    }

    fn mean(&self) -> f64 {
        self.spacing
    }

    fn variance(&self) -> f64 {
        0.0
    }

    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        check_order(k)?;
        check_upper(upper)?;
        Ok(if self.spacing <= upper {
            self.spacing.powi(k as i32)
        } else {
            0.0
        })
    }

    fn expect(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(g(self.spacing))
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
        self.spacing
    }
}

/// Bandwidth rule for the empirical density estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bandwidth {
    /// `2·IQR·n^{-1/3}`.
    #[default]
    FreedmanDiaconis,
}

/// Empirical headway law: the ECDF of observed headways.
///
/// Truncated moments and expectations are exact sums over the samples, and
/// sampling resamples the data with replacement. The density is a histogram
/// estimate and is only an approximation of the underlying law.
#[derive(Debug, Clone)]
pub struct EmpiricalHeadway {
    samples: Vec<f64>,
    mean: f64,
    variance: f64,
    bandwidth: Bandwidth,
    bin_width: f64,
}

impl EmpiricalHeadway {
    pub fn from_samples(data: &[f64]) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::validation(format!(
                "empirical headway needs at least 2 samples, got {}",
                data.len()
            )));
        }
        let bad: Vec<String> = data
            .iter()
            .enumerate()
            .filter(|(_, v)| !(v.is_finite() && **v >= 0.0))
            .map(|(i, v)| format!("row {}: {v}", i + 1))
            .collect();
        if !bad.is_empty() {
            return Err(Error::validation(format!(
                "headways must be finite and nonnegative; offending rows: {}",
                bad.join(", ")
            )));
        }
        let mut samples = data.to_vec();
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let bin_width = freedman_diaconis(&samples);
        Ok(Self {
            samples,
            mean,
            variance,
            bandwidth: Bandwidth::FreedmanDiaconis,
            bin_width,
        })
    }

    /// Reads one headway per line; blank lines and lines starting with `#`
    /// are skipped. Values use `.` as the decimal separator.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut bad = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 && !line.contains(',') => data.push(v),
                _ => bad.push(format!("line {}: {line:?}", lineno + 1)),
            }
        }
        if !bad.is_empty() {
            return Err(Error::validation(format!(
                "invalid headway entries: {}",
                bad.join(", ")
            )));
        }
        Self::from_samples(&data)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    /// Histogram bin width in meters (zero when all samples coincide).
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    fn count_le(&self, x: f64) -> usize {
        self.samples.partition_point(|&v| v <= x)
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

fn freedman_diaconis(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let w = 2.0 * iqr / n.cbrt();
    if w > 0.0 {
        w
    } else {
        // Degenerate IQR: fall back to range/√n (zero for constant data).
        (sorted[sorted.len() - 1] - sorted[0]) / n.sqrt()
    }
}

impl Headway for EmpiricalHeadway {
    fn pdf(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        let n = self.samples.len() as f64;
        if self.bin_width == 0.0 {
            return Ok(if x == self.samples[0] { f64::INFINITY } else { 0.0 });
        }
        let origin = self.samples[0];
        if x < origin {
            return Ok(0.0);
        }
        let bin = ((x - origin) / self.bin_width).floor();
        let lo = origin + bin * self.bin_width;
        let hi = lo + self.bin_width;
        let count = self.samples.partition_point(|&v| v < hi) - self.samples.partition_point(|&v| v < lo);
        Ok(count as f64 / (n * self.bin_width))
    }

    fn cdf(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.samples.len() as f64
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance of the stored samples.
    fn variance(&self) -> f64 {
        self.variance
    }

    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        check_order(k)?;
        check_upper(upper)?;
        let n = self.samples.len() as f64;
        let below = &self.samples[..self.count_le(upper)];
        if below.len() == self.samples.len() {
            return Ok(raw_moment(self, k));
        }
        Ok(below.iter().map(|x| x.powi(k as i32)).sum::<f64>() / n)
    }

    fn expect(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(self.samples.iter().map(|&x| g(x)).sum::<f64>() / self.samples.len() as f64)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.samples[rng.random_range(0..self.samples.len())]
    }
}

/// The built-in headway families behind one concrete type.
#[derive(Debug, Clone)]
pub enum HeadwayDistribution {
    Exponential(Exponential),
    Uniform(Uniform),
    Lognormal(Lognormal),
    Deterministic(Deterministic),
    Empirical(EmpiricalHeadway),
}

macro_rules! dispatch {
    ($self:ident, $d:ident => $e:expr) => {
        match $self {
            HeadwayDistribution::Exponential($d) => $e,
            HeadwayDistribution::Uniform($d) => $e,
            HeadwayDistribution::Lognormal($d) => $e,
            HeadwayDistribution::Deterministic($d) => $e,
            HeadwayDistribution::Empirical($d) => $e,
        }
    };
}

impl HeadwayDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        Exponential::new(rate).map(Self::Exponential)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        Uniform::new(low, high).map(Self::Uniform)
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        Lognormal::new(log_mean, log_sd).map(Self::Lognormal)
    }

    pub fn deterministic(spacing: f64) -> Result<Self> {
        Deterministic::new(spacing).map(Self::Deterministic)
    }

    pub fn empirical(data: &[f64]) -> Result<Self> {
        EmpiricalHeadway::from_samples(data).map(Self::Empirical)
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Exponential(_) => "exponential",
            Self::Uniform(_) => "uniform",
            Self::Lognormal(_) => "lognormal",
            Self::Deterministic(_) => "deterministic",
            Self::Empirical(_) => "empirical",
        }
    }
}

impl Headway for HeadwayDistribution {
    fn pdf(&self, x: f64) -> Result<f64> {
        dispatch!(self, d => d.pdf(x))
    }

    fn cdf(&self, x: f64) -> f64 {
        dispatch!(self, d => d.cdf(x))
    }

    fn mean(&self) -> f64 {
        dispatch!(self, d => d.mean())
    }

    fn variance(&self) -> f64 {
        dispatch!(self, d => d.variance())
    }

    fn truncated_moment(&self, k: u32, upper: f64) -> Result<f64> {
        dispatch!(self, d => d.truncated_moment(k, upper))
    }

    fn expect(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        dispatch!(self, d => d.expect(g))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        dispatch!(self, d => d.sample(rng))
    }
}
