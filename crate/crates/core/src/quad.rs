//! Adaptive quadrature and the marching solver for the propagation-distance CDF.
//!
//! [`integrate`] is a globally adaptive Gauss–Kronrod (7/15) scheme: the
//! panel with the largest error estimate is bisected until the summed error
//! estimate meets the tolerance. [`integrate_semi_infinite`] maps `[a, ∞)`
//! onto `[0, 1)` and reuses the same machinery.
//!
//! [`solve_renewal_cdf`] marches the renewal equation
//!
//! ```text
//! F_D(s) = 1 − p·F_H(L) + p·∫_[0, min(s, L)] F_D(s − τ) dF_H(τ)
//! ```
//!
//! on a uniform grid with a product trapezoidal rule: the headway enters only
//! through its CDF increments over grid cells, so point masses (deterministic
//! or empirical headways) are handled the same way as densities.

use crate::error::{Error, Result};
use crate::headway::Headway;

/// Absolute error floor below which any integral is considered converged.
pub const ABS_FLOOR: f64 = 1e-14;

/// Default maximum number of panels before giving up.
pub const MAX_PANELS: usize = 2000;

// Kronrod abscissae for the 15-point rule on [-1, 1]; odd indices are the
// 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Outcome of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` to `max(rel_tol·|value|, ABS_FLOOR)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<QuadResult> {
    integrate_with_limit(f, a, b, rel_tol, MAX_PANELS)
}

pub fn integrate_with_limit<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a > b {
        return Err(Error::domain(format!("integration bounds reversed: a={a} > b={b}")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            evaluations: 1,
        });
    }

    let mut panels = vec![gauss_kronrod(&f, a, b)];
    let mut evaluations = 15;
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Numeric {
                message: "integrand produced a non-finite value".into(),
                estimate: value,
                error_estimate: error,
            });
        }
        if error <= (rel_tol * value.abs()).max(ABS_FLOOR) {
            return Ok(QuadResult {
                value,
                abs_error_estimate: error,
                evaluations,
            });
        }

        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one panel");
        let panel = panels[worst];
        let mid = 0.5 * (panel.a + panel.b);
        // Panel can no longer be split in floating point.
        if mid <= panel.a || mid >= panel.b || panels.len() >= max_panels {
            return Err(Error::Numeric {
                message: format!(
                    "quadrature did not converge on [{a}, {b}] after {} panels",
                    panels.len()
                ),
                estimate: value,
                error_estimate: error,
            });
        }
        panels[worst] = gauss_kronrod(&f, panel.a, mid);
        panels.push(gauss_kronrod(&f, mid, panel.b));
        evaluations += 30;
    }
}

/// Integrates `f` over `[a, ∞)` through the substitution `x = a + t/(1 − t)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> Result<QuadResult> {
    if !a.is_finite() {
        return Err(Error::domain(format!("lower bound must be finite, got {a}")));
    }
    let mapped = |t: f64| {
        let one_minus = 1.0 - t;
        let x = a + t / one_minus;
        if !x.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v / (one_minus * one_minus)
        }
    };
    integrate(mapped, 0.0, 1.0, rel_tol)
}

/// Gridded CDF `F_D(i·grid_step)` for `i = 0..=max_s/grid_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub grid_step: f64,
    pub max_s: f64,
    pub values: Vec<f64>,
}

impl CdfCurve {
    /// Number of grid points for a `(grid_step, max_s)` pair.
    pub fn grid_len(grid_step: f64, max_s: f64) -> usize {
        (max_s / grid_step + 1e-9).floor() as usize + 1
    }

    pub fn s(&self, i: usize) -> f64 {
        i as f64 * self.grid_step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Piecewise-linear interpolation; clamps to the end values outside the grid.
    pub fn value_at(&self, s: f64) -> f64 {
        interpolate(&self.values, self.grid_step, s)
    }

    pub fn same_grid(&self, other: &CdfCurve) -> bool {
        self.values.len() == other.values.len()
            && (self.grid_step - other.grid_step).abs() <= 1e-12 * self.grid_step
    }

    /// Sup-norm distance between two curves on the same grid.
    pub fn sup_distance(&self, other: &CdfCurve) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::validation(format!(
                "grid mismatch: step {} with {} points vs step {} with {} points",
                self.grid_step,
                self.values.len(),
                other.grid_step,
                other.values.len()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn interpolate(values: &[f64], step: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return values[0];
    }
    let pos = s / step;
    let i = pos.floor() as usize;
    if i + 1 >= values.len() {
        return *values.last().expect("non-empty grid");
    }
    let frac = pos - i as f64;
    values[i] + frac * (values[i + 1] - values[i])
}

/// Which form of the CDF recursion to march.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfForm {
    /// `F_D(s) = 1 − p F_H(L) + p ∫_[0,min(s,L)] F_D(s−τ) dF_H(τ)`.
    Renewal,
    /// The three-case piecewise recursion exactly as it is usually quoted:
    /// `1 − pF_H(L)` at zero, `1 − pF_H(L) − (1+p)F_H(s) + ∫_0^s` on `(0, L]`
    /// and `1 − F_H(L) + ∫_0^L` beyond. Kept for discrepancy reports only.
    Printed,
}

/// Grid-validated inputs shared by both recursion forms.
struct Grid {
    n: usize,
    step: f64,
    /// `F_H` at kernel nodes `τ_j = j·step` up to `L`, last node at `L` exactly.
    node_cdf: Vec<f64>,
    /// Position of the last kernel node (equals `range`).
    nodes: Vec<f64>,
    /// Point mass of `H` sitting exactly on each node.
    node_atom: Vec<f64>,
}

fn check_inputs<H: Headway + ?Sized>(
    headway: &H,
    p_s: f64,
    range: f64,
    step: f64,
    max_s: f64,
) -> Result<Grid> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Error::validation(format!("success probability {p_s} outside [0, 1]")));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::validation(format!("transmission range must be positive, got {range}")));
    }
    if !(step > 0.0 && step <= range / 10.0 * (1.0 + 1e-12)) {
        return Err(Error::validation(format!(
            "grid step {step} must lie in (0, L/10] with L = {range}"
        )));
    }
    if !(max_s >= range && max_s.is_finite()) {
        return Err(Error::validation(format!(
            "max_s = {max_s} must be at least the transmission range {range}"
        )));
    }

    let whole = (range / step + 1e-9).floor() as usize;
    let mut nodes: Vec<f64> = (0..=whole).map(|j| j as f64 * step).collect();
    if range - nodes[whole] > 1e-9 * step {
        nodes.push(range);
    } else {
        nodes[whole] = range;
    }
    let node_cdf: Vec<f64> = nodes.iter().map(|&t| headway.cdf(t)).collect();
    let node_atom = nodes
        .iter()
        .zip(&node_cdf)
        .map(|(&t, &c)| (c - headway.cdf(t.next_down())).max(0.0))
        .collect();
    Ok(Grid {
        node_atom,
        n: CdfCurve::grid_len(step, max_s),
        step,
        node_cdf,
        nodes,
    })
}

/// `1 − p·F_H(L)`, the probability that the first hop fails.
fn first_hop_failure<H: Headway + ?Sized>(headway: &H, p_s: f64, range: f64) -> Result<f64> {
    let q = p_s * headway.cdf(range);
    if q >= 1.0 - 1e-12 {
        return Err(Error::degenerate(format!(
            "p_s·F_H(L) = {q} is 1: propagation never terminates"
        )));
    }
    Ok(1.0 - q)
}

/// Solves the renewal form of the CDF recursion on `s = 0, Δs, …, max_s`.
///
/// Requires `0 ≤ p_s ≤ 1`, `L > 0`, `0 < Δs ≤ L/10` and `max_s ≥ L`.
/// After marching, decreases smaller than `1e-6` are clamped to the running
/// maximum; anything larger is reported as a numeric error.
pub fn solve_renewal_cdf<H: Headway + ?Sized>(
    headway: &H,
    p_s: f64,
    range: f64,
    step: f64,
    max_s: f64,
) -> Result<CdfCurve> {
    let grid = check_inputs(headway, p_s, range, step, max_s)?;
    let base = first_hop_failure(headway, p_s, range)?;
    let mut values = march(&grid, |_s| base, p_s, p_s, range);
    repair_monotone(&mut values)?;
    Ok(CdfCurve {
        grid_step: step,
        max_s,
        values,
    })
}

/// Evaluates either recursion form without monotonicity repair.
///
/// The three-case form is not a CDF in general; its raw values are returned so
/// they can be compared against the renewal solution or a simulation.
pub fn solve_cdf_raw<H: Headway + ?Sized>(
    headway: &H,
    p_s: f64,
    range: f64,
    step: f64,
    max_s: f64,
    form: CdfForm,
) -> Result<Vec<f64>> {
    let grid = check_inputs(headway, p_s, range, step, max_s)?;
    let base = first_hop_failure(headway, p_s, range)?;
    match form {
        CdfForm::Renewal => Ok(march(&grid, |_s| base, p_s, p_s, range)),
        CdfForm::Printed => {
            let f_range = headway.cdf(range);
            let g = |s: f64| {
                if s == 0.0 {
                    base
                } else if s <= range {
                    base - (1.0 + p_s) * headway.cdf(s)
                } else {
                    1.0 - f_range
                }
            };
            // At s = 0 the three-case form has no integral term.
            let mut values = march(&grid, g, 1.0, 1.0, range);
            values[0] = base;
            Ok(values)
        }
    }
}

/// Marches `F(s_i) = g(s_i) + w·Σ_j ΔF_H(cell j)·(F(s_i−τ_j) + F(s_i−τ_{j+1}))/2`
/// plus `w0·F_H(0)·F(s_i)` for an atom at zero, solving the implicit term.
/// Mass sitting exactly on a node is applied at that node rather than
/// spread over its cell, so lattice headways are solved exactly.
fn march<G: Fn(f64) -> f64>(grid: &Grid, g: G, weight: f64, atom_weight: f64, range: f64) -> Vec<f64> {
    let step = grid.step;
    let mut values = vec![0.0; grid.n];
    let atom = grid.node_cdf[0];
    let whole_nodes = grid.nodes.len();
    for i in 0..grid.n {
        let s = i as f64 * step;
        let mut explicit = g(s);
        let mut implicit = atom_weight * atom;
        // Number of full grid cells under min(s, L).
        let (cells, tail_node) = if s <= range {
            (i.min(whole_nodes - 1), false)
        } else {
            (whole_nodes - 1, true)
        };
        for j in 0..cells {
            let mass = grid.node_cdf[j + 1] - grid.node_cdf[j];
            if mass == 0.0 {
                continue;
            }
            let atom_right = grid.node_atom[j + 1].min(mass);
            let spread = mass - atom_right;
            let left = if j == 0 {
                implicit += weight * spread * 0.5;
                0.0
            } else {
                values[i - j]
            };
            let right = if tail_node && j + 1 == whole_nodes - 1 {
                // Last node sits at L, possibly off grid.
                interpolate(&values[..i], step, s - grid.nodes[j + 1])
            } else {
                values[i - j - 1]
            };
            explicit += weight * (spread * 0.5 * (left + right) + atom_right * right);
        }
        values[i] = explicit / (1.0 - implicit);
    }
    values
}

const REPAIR_LIMIT: f64 = 1e-6;

fn repair_monotone(values: &mut [f64]) -> Result<()> {
    let mut running = f64::NEG_INFINITY;
    for (i, v) in values.iter_mut().enumerate() {
        if *v > 1.0 {
            if *v - 1.0 > REPAIR_LIMIT {
                return Err(Error::Numeric {
                    message: format!("CDF exceeds 1 at grid index {i}"),
                    estimate: *v,
                    error_estimate: *v - 1.0,
                });
            }
            *v = 1.0;
        }
        if *v < running {
            if running - *v > REPAIR_LIMIT {
                return Err(Error::Numeric {
                    message: format!("CDF decreases at grid index {i}"),
                    estimate: *v,
                    error_estimate: running - *v,
                });
            }
            *v = running;
        }
        running = *v;
    }
    Ok(())
}
