//! Propagation-distance statistics under a constant transmission range `L`
//! and a per-hop success probability `p_s`.
//!
//! Write `q = p_s·F_H(L)` for the probability that a hop succeeds and
//! `I_k = ∫_0^L τ^k f_H(τ) dτ`. The process restarts at every receiver, so
//! `D` is a compound geometric sum of accepted hop lengths and
//!
//! ```text
//! E[D]   = p_s·I_1 / (1 − q)
//! Var[D] = p_s·I_2 / (1 − q) + E[D]²              (renewal)
//! E[N]   = q / (1 − q)
//! ```
//!
//! The variance that is commonly quoted for this model replaces `E[D]²` by
//! `E[D]²·p_s(1 − F_H(L))/(1 − q)`; it is kept as [`variance_paper`] for
//! comparison. Simulation agrees with [`variance_renewal`].

use crate::error::{Error, Result};
use crate::headway::Headway;
use crate::quad::{self, CdfCurve};

/// Constant-range contention model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionModel {
    p_s: f64,
    range: f64,
}

impl ContentionModel {
    pub fn new(p_s: f64, range: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_s) {
            return Err(Error::validation(format!("success probability {p_s} outside [0, 1]")));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::validation(format!("transmission range must be positive, got {range}")));
        }
        Ok(Self { p_s, range })
    }

    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    /// Transmission range `L` in meters.
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Per-hop success probability `p_s·F_H(L)`.
    pub fn hop_success<H: Headway + ?Sized>(&self, d: &H) -> f64 {
        self.p_s * d.cdf(self.range)
    }
}

/// Lower/upper pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// All constant-range outputs for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub mu_d: f64,
    pub var_d_paper: f64,
    pub var_d_renewal: f64,
    pub mu_n: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
    /// The mean lower bound as usually quoted; not a valid bound when the
    /// headway has appreciable mass beyond `L`.
    pub mean_lower_printed: f64,
    pub var_lower: f64,
    pub var_upper: f64,
}

/// `1 − p_s·F_H(L)`, or a degenerate-process error when it vanishes.
fn failure_prob<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<f64> {
    let q = m.hop_success(d);
    if q >= 1.0 - 1e-12 {
        return Err(Error::degenerate(format!(
            "p_s·F_H(L) = {q}: every hop succeeds and the propagation distance is infinite"
        )));
    }
    Ok(1.0 - q)
}

/// Expected propagation distance `p_s·I_1 / (1 − p_s F_H(L))`.
pub fn mean_distance<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<f64> {
    let fail = failure_prob(d, m)?;
    if m.p_s == 0.0 {
        return Ok(0.0);
    }
    Ok(m.p_s * d.truncated_moment(1, m.range)? / fail)
}

/// Half-width term `(√(σ² + (L−μ)²) − (L−μ))/2`, the sharp bound on
/// `E[(H − L)^+]` given only mean and variance.
fn excess_bound(mean: f64, variance: f64, range: f64) -> f64 {
    let gap = range - mean;
    // Rationalised form avoids cancellation when gap ≫ σ.
    let root = variance.sqrt().hypot(gap);
    if gap > 0.0 {
        0.5 * variance / (root + gap)
    } else {
        0.5 * (root - gap)
    }
}

/// Mean-distance bounds from the headway mean and variance alone.
///
/// Upper: `p_s(μ_H − L(1 − F_H(L)))/(1 − q)`.
/// Lower: the upper bound minus `excess_bound/(1 − q)`, clamped at zero.
/// This uses `∫_L^∞ τ f_H = E[(H−L)^+] + L(1 − F_H(L))`; the commonly quoted
/// lower bound drops the `L(1 − F_H(L))` term (see [`mean_lower_bound_printed`]).
pub fn mean_distance_bounds<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<Bounds> {
    let fail = failure_prob(d, m)?;
    let (mu, var) = (d.mean(), d.variance());
    let tail = 1.0 - d.cdf(m.range);
    let upper = m.p_s * (mu - m.range * tail) / fail;
    let lower = (m.p_s * (mu - m.range * tail) - excess_bound(mu, var, m.range)) / fail;
    Ok(Bounds {
        lower: lower.max(0.0),
        upper: upper.max(0.0),
    })
}

/// `[p_s μ_H − (√(σ_H² + (L−μ_H)²) − (L−μ_H))/2] / (1 − q)`, clamped at zero.
///
/// Coincides with the lower bound of [`mean_distance_bounds`] when
/// `F_H(L) = 1` but can exceed the true mean otherwise, e.g. for an
/// exponential headway with `L = 2/λ`.
pub fn mean_lower_bound_printed<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<f64> {
    let fail = failure_prob(d, m)?;
    let lower = (m.p_s * d.mean() - excess_bound(d.mean(), d.variance(), m.range)) / fail;
    Ok(lower.max(0.0))
}

/// `μ_D²·p_s(1 − F_H(L))/(1 − q)`: the second term of the quoted variance,
/// which is also its lower bound.
fn quoted_second_term<H: Headway + ?Sized>(d: &H, m: &ContentionModel, mu: f64, fail: f64) -> f64 {
    mu * mu * m.p_s * (1.0 - d.cdf(m.range)) / fail
}

/// Variance in the commonly quoted form
/// `p_s I_2/(1 − q) + μ_D² p_s (1 − F_H(L))/(1 − q)`.
pub fn variance_paper<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<f64> {
    let fail = failure_prob(d, m)?;
    if m.p_s == 0.0 {
        return Ok(0.0);
    }
    let mu = mean_distance(d, m)?;
    Ok(m.p_s * d.truncated_moment(2, m.range)? / fail + quoted_second_term(d, m, mu, fail))
}

/// Exact variance of the compound geometric sum: `p_s I_2/(1 − q) + μ_D²`.
pub fn variance_renewal<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<f64> {
    let fail = failure_prob(d, m)?;
    if m.p_s == 0.0 {
        return Ok(0.0);
    }
    let mu = mean_distance(d, m)?;
    Ok(m.p_s * d.truncated_moment(2, m.range)? / fail + mu * mu)
}

/// Bounds on [`variance_paper`] via `I_2 ≤ L·I_1 ≤ L(μ_H − L(1 − F_H(L)))`.
pub fn variance_bounds<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<Bounds> {
    let fail = failure_prob(d, m)?;
    if m.p_s == 0.0 {
        return Ok(Bounds { lower: 0.0, upper: 0.0 });
    }
    let mu = mean_distance(d, m)?;
    let lower = quoted_second_term(d, m, mu, fail);
    let tail = 1.0 - d.cdf(m.range);
    let relaxed = (m.p_s * m.range * d.mean() - m.p_s * m.range * m.range * tail) / fail;
    Ok(Bounds {
        lower,
        upper: relaxed + lower,
    })
}

/// Expected number of receivers `q/(1 − q)`; the origin is not counted.
pub fn mean_cluster_size<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<f64> {
    let fail = failure_prob(d, m)?;
    Ok(m.hop_success(d) / fail)
}

/// CDF of the propagation distance on `s = 0, Δs, …, max_s`.
pub fn cdf<H: Headway + ?Sized>(d: &H, m: &ContentionModel, step: f64, max_s: f64) -> Result<CdfCurve> {
    quad::solve_renewal_cdf(d, m.p_s, m.range, step, max_s)
}

/// Every constant-range statistic at once.
pub fn analyze<H: Headway + ?Sized>(d: &H, m: &ContentionModel) -> Result<DistanceStats> {
    let mean_bounds = mean_distance_bounds(d, m)?;
    let var_bounds = variance_bounds(d, m)?;
    Ok(DistanceStats {
        mu_d: mean_distance(d, m)?,
        var_d_paper: variance_paper(d, m)?,
        var_d_renewal: variance_renewal(d, m)?,
        mu_n: mean_cluster_size(d, m)?,
        mean_lower: mean_bounds.lower,
        mean_upper: mean_bounds.upper,
        mean_lower_printed: mean_lower_bound_printed(d, m)?,
        var_lower: var_bounds.lower,
        var_upper: var_bounds.upper,
    })
}
