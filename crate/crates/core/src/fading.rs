//! Propagation under Rayleigh fading with threshold reception.
//!
//! With fading there is no fixed transmission range: a hop of length `τ`
//! succeeds with probability `p_s(τ)`, the chance that an exponentially
//! distributed received power exceeds `P_th`. For the Rayleigh law with mean
//! power `P_t·K·(d0/τ)^α`,
//!
//! ```text
//! p_s(τ) = exp(−P_th·(τ/d0)^α / (P_t·K))
//! ```
//!
//! The per-hop failure probability is `F_P(P_th) = E[1 − p_s(H)]` and the
//! renewal argument gives `E[D] = E[H p_s(H)] / F_P(P_th)`.

use crate::error::{Error, Result};
use crate::headway::Headway;

/// Hop success probability as a function of hop length.
pub trait Channel: std::fmt::Debug + Send + Sync {
    /// `p_s(τ)` for `τ ≥ 0`; must equal its right limit at zero.
    fn success_at(&self, tau: f64) -> f64;

    /// `1 − p_s(τ)`, overridable when it can be evaluated without cancellation.
    fn failure_at(&self, tau: f64) -> f64 {
        1.0 - self.success_at(tau)
    }
}

/// Rayleigh fading with log-distance path loss and a reception threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingModel {
    /// Transmit power `P_t` in watts.
    pub tx_power: f64,
    /// Hardware constant `K`.
    pub path_constant: f64,
    /// Far-field reference distance `d0` in meters.
    pub ref_distance: f64,
    /// Path-loss exponent `α ∈ [1, 6]`.
    pub path_loss_exponent: f64,
    /// Reception threshold `P_th` in watts.
    pub threshold: f64,
}

impl FadingModel {
    pub fn new(
        tx_power: f64,
        path_constant: f64,
        ref_distance: f64,
        path_loss_exponent: f64,
        threshold: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("transmit power", tx_power),
            ("path constant", path_constant),
            ("reference distance", ref_distance),
            ("path-loss exponent", path_loss_exponent),
            ("reception threshold", threshold),
        ] {
            // An infinite threshold is allowed: every reception fails.
            let finite_ok = v.is_finite() || (name == "reception threshold" && v == f64::INFINITY);
            if !(v > 0.0 && finite_ok) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(1.0..=6.0).contains(&path_loss_exponent) {
            return Err(Error::validation(format!(
                "path-loss exponent must lie in [1, 6], got {path_loss_exponent}"
            )));
        }
        Ok(Self {
            tx_power,
            path_constant,
            ref_distance,
            path_loss_exponent,
            threshold,
        })
    }

    /// Threshold relative to the reference power, `P_th/(P_t·K)`.
    pub fn normalized_threshold(&self) -> f64 {
        self.threshold / (self.tx_power * self.path_constant)
    }

    fn exponent(&self, tau: f64) -> f64 {
        let c = self.normalized_threshold();
        if c.is_infinite() {
            return if tau > 0.0 { f64::INFINITY } else { 0.0 };
        }
        c * (tau / self.ref_distance).powf(self.path_loss_exponent)
    }

    /// `p_s(τ)`; errors for `τ ≤ 0`.
    pub fn success_prob(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::domain(format!("hop length must be positive, got {tau}")));
        }
        Ok(self.success_at(tau))
    }
}

impl Channel for FadingModel {
    fn success_at(&self, tau: f64) -> f64 {
        (-self.exponent(tau)).exp()
    }

    fn failure_at(&self, tau: f64) -> f64 {
        -(-self.exponent(tau)).exp_m1()
    }
}

/// Fading outputs for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingStats {
    /// Per-hop success probability `1 − F_P(P_th)`.
    pub q_hop: f64,
    pub mu_d: f64,
    pub var_d_paper: f64,
    pub var_d_renewal: f64,
    /// Mean number of successful hops, `(1 − F_P)/F_P`.
    pub mu_n: f64,
}

/// `F_P(P_th) = E[1 − p_s(H)]`.
pub fn hop_failure_prob<C: Channel + ?Sized, H: Headway + ?Sized>(channel: &C, d: &H) -> Result<f64> {
    Ok(d.expect(&|t| channel.failure_at(t))?.clamp(0.0, 1.0))
}

fn checked_failure<C: Channel + ?Sized, H: Headway + ?Sized>(channel: &C, d: &H) -> Result<f64> {
    let fail = hop_failure_prob(channel, d)?;
    if !(fail > 0.0) {
        return Err(Error::degenerate(format!(
            "per-hop failure probability is {fail}: propagation never stops"
        )));
    }
    Ok(fail)
}

/// `E[H·p_s(H)] / F_P(P_th)`.
pub fn mean_distance_fading<C: Channel + ?Sized, H: Headway + ?Sized>(channel: &C, d: &H) -> Result<f64> {
    let fail = checked_failure(channel, d)?;
    Ok(d.expect(&|t| t * channel.success_at(t))? / fail)
}

/// `E[H²·p_s(H)] / F_P(P_th)`, the commonly quoted fading variance.
pub fn variance_fading_paper<C: Channel + ?Sized, H: Headway + ?Sized>(channel: &C, d: &H) -> Result<f64> {
    let fail = checked_failure(channel, d)?;
    Ok(d.expect(&|t| t * t * channel.success_at(t))? / fail)
}

/// `E[H²·p_s(H)] / F_P(P_th) + μ_D'²`, the compound-geometric variance.
pub fn variance_fading_renewal<C: Channel + ?Sized, H: Headway + ?Sized>(channel: &C, d: &H) -> Result<f64> {
    let mu = mean_distance_fading(channel, d)?;
    Ok(variance_fading_paper(channel, d)? + mu * mu)
}

pub fn analyze_fading<C: Channel + ?Sized, H: Headway + ?Sized>(channel: &C, d: &H) -> Result<FadingStats> {
    let fail = checked_failure(channel, d)?;
    let mu_d = mean_distance_fading(channel, d)?;
    let var_d_paper = variance_fading_paper(channel, d)?;
    Ok(FadingStats {
        q_hop: 1.0 - fail,
        mu_d,
        var_d_paper,
        var_d_renewal: var_d_paper + mu_d * mu_d,
        mu_n: (1.0 - fail) / fail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headway::{Deterministic, Exponential};
    use approx::assert_relative_eq;

    /// α = 1, d0 = 1, P_th/(P_t K) = 0.05.
    fn linear_model() -> FadingModel {
        FadingModel::new(1.0, 1.0, 1.0, 1.0, 0.05).unwrap()
    }

    #[test]
    fn success_probability_examples() {
        let unit = FadingModel::new(2.0, 0.5, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(unit.success_prob(1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(unit.success_prob(1e-12).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(linear_model().success_prob(20.0).unwrap(), 0.367_879, epsilon = 1e-6);
        assert!(matches!(unit.success_prob(0.0), Err(Error::Domain(_))));
        assert!(matches!(unit.success_prob(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_exponential_case() {
        let (lambda, c) = (0.2, 0.05);
        let e = Exponential::new(lambda).unwrap();
        let f = linear_model();
        assert_relative_eq!(hop_failure_prob(&f, &e).unwrap(), 1.0 - lambda / (lambda + c), max_relative = 1e-10);
        assert_relative_eq!(mean_distance_fading(&f, &e).unwrap(), 16.0, max_relative = 1e-10);
        assert_relative_eq!(variance_fading_paper(&f, &e).unwrap(), 128.0, max_relative = 1e-10);
        assert_relative_eq!(variance_fading_renewal(&f, &e).unwrap(), 384.0, max_relative = 1e-10);
        let s = analyze_fading(&f, &e).unwrap();
        assert_relative_eq!(s.q_hop, 0.8, max_relative = 1e-10);
        assert_relative_eq!(s.mu_n, 4.0, max_relative = 1e-9);
    }

    #[test]
    fn deterministic_headway_is_geometric() {
        let f = linear_model();
        let d = Deterministic::new(50.0).unwrap();
        let p = f.success_prob(50.0).unwrap();
        assert_relative_eq!(hop_failure_prob(&f, &d).unwrap(), 1.0 - p, max_relative = 1e-14);
        assert_relative_eq!(mean_distance_fading(&f, &d).unwrap(), 50.0 * p / (1.0 - p), max_relative = 1e-13);
        assert_relative_eq!(variance_fading_paper(&f, &d).unwrap(), 2500.0 * p / (1.0 - p), max_relative = 1e-13);
        assert_relative_eq!(
            variance_fading_renewal(&f, &d).unwrap(),
            2500.0 * p / ((1.0 - p) * (1.0 - p)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn hopeless_channel() {
        let f = FadingModel::new(1.0, 1.0, 1.0, 2.0, f64::INFINITY).unwrap();
        let e = Exponential::new(0.2).unwrap();
        assert_eq!(hop_failure_prob(&f, &e).unwrap(), 1.0);
        assert_eq!(mean_distance_fading(&f, &e).unwrap(), 0.0);
        assert_eq!(variance_fading_paper(&f, &e).unwrap(), 0.0);
        assert_eq!(variance_fading_renewal(&f, &e).unwrap(), 0.0);
    }

    #[test]
    fn perfect_channel_is_degenerate() {
        #[derive(Debug)]
        struct Perfect;
        impl Channel for Perfect {
            fn success_at(&self, _tau: f64) -> f64 {
                1.0
            }
        }
        let e = Exponential::new(0.2).unwrap();
        assert!(matches!(mean_distance_fading(&Perfect, &e), Err(Error::Degenerate(_))));
    }

    #[test]
    fn invalid_models() {
        assert!(FadingModel::new(0.0, 1.0, 1.0, 2.0, 1.0).is_err());
        assert!(FadingModel::new(1.0, 1.0, 1.0, 0.5, 1.0).is_err());
        assert!(FadingModel::new(1.0, 1.0, 1.0, 7.0, 1.0).is_err());
        assert!(FadingModel::new(1.0, 1.0, -1.0, 2.0, 1.0).is_err());
    }
}
