//! Four-pole model propagator with λ-dependent poles, and the convergence
//! of its Taylor expansion in λ.
//!
//! ```text
//! g(ω, λ) = Σ_i 1 / (ω − E_i(λ)),    E_i(λ) = c0 + c1 λ + c2 λ²
//! ```
//!
//! Each term is `1/(a0 + a1 λ + a2 λ²)` with `a0 = ω − c0`, `a1 = −c1`,
//! `a2 = −c2`, whose Taylor coefficients obey
//!
//! ```text
//! b0 = 1/a0,   b_n = −(a1 b_{n−1} + a2 b_{n−2}) / a0
//! ```
//!
//! so the partial sums at λ = 1 carry no differentiation error. The series
//! of a term converges at λ = 1 only if both roots of `E_i(λ) = ω` lie
//! outside the unit disk.

use crate::error::{Error, Result};

/// Coefficients `(c0, c1, c2)` of each pole.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPoles {
    pub coefficients: Vec<(f64, f64, f64)>,
}

impl ModelPoles {
    /// The default four-pole set.
    pub fn standard() -> Self {
        ModelPoles {
            coefficients: vec![
                (1.9, 0.2, 0.2),
                (0.75, 0.1, 0.1),
                (-1.1, -0.1, -0.1),
                (-2.2, -0.15, -0.15),
            ],
        }
    }

    pub fn new(coefficients: Vec<(f64, f64, f64)>) -> Result<Self> {
        let p = ModelPoles { coefficients };
        for lambda in [0.0, 1.0] {
            let mut e = p.positions(lambda);
            e.sort_by(f64::total_cmp);
            if e.windows(2).any(|w| w[1] - w[0] < 1e-12) {
                return Err(Error::Validation(format!("model poles coincide at λ = {lambda}")));
            }
        }
        Ok(p)
    }

    /// `E_i(λ)` in stored order.
    pub fn positions(&self, lambda: f64) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|&(c0, c1, c2)| c0 + c1 * lambda + c2 * lambda * lambda)
            .collect()
    }
}

/// `g(ω, λ)`.
///
/// ```
/// use mbgf::taylor::{model_g, ModelPoles};
/// let g = model_g(&ModelPoles::standard(), 0.0, 0.0).unwrap();
/// let direct = -1.0 / 1.9 - 1.0 / 0.75 + 1.0 / 1.1 + 1.0 / 2.2;
/// assert!((g - direct).abs() < 1e-15);
/// ```
pub fn model_g(poles: &ModelPoles, omega: f64, lambda: f64) -> Result<f64> {
    let mut g = 0.0;
    for e in poles.positions(lambda) {
        let d = omega - e;
        if d.abs() < 1e-13 {
            return Err(Error::PoleCollision { omega, pole: e });
        }
        g += 1.0 / d;
    }
    Ok(g)
}

/// Taylor coefficients of `g(ω, λ)` in λ about 0, orders `0..=order`.
pub fn taylor_coefficients(poles: &ModelPoles, omega: f64, order: usize) -> Result<Vec<f64>> {
    let mut total = vec![0.0; order + 1];
    for &(c0, c1, c2) in &poles.coefficients {
        let (a0, a1, a2) = (omega - c0, -c1, -c2);
        if a0.abs() < 1e-13 {
            return Err(Error::PoleCollision { omega, pole: c0 });
        }
        let mut prev2 = 0.0;
        let mut prev = 1.0 / a0;
        total[0] += prev;
        for t in total.iter_mut().skip(1) {
            let b = -(a1 * prev + a2 * prev2) / a0;
            *t += b;
            prev2 = prev;
            prev = b;
        }
    }
    Ok(total)
}

/// Partial sum through `order` at λ = 1.
pub fn taylor_partial_sum(poles: &ModelPoles, omega: f64, order: usize) -> Result<f64> {
    Ok(taylor_coefficients(poles, omega, order)?.iter().sum())
}

/// Partial sums at λ = 1 for every order `0..=order`.
pub fn taylor_partial_sums(poles: &ModelPoles, omega: f64, order: usize) -> Result<Vec<f64>> {
    let mut s = 0.0;
    Ok(taylor_coefficients(poles, omega, order)?
        .into_iter()
        .map(|b| {
            s += b;
            s
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    Convergent,
    Divergent,
    Undetermined,
}

impl Convergence {
    pub fn as_str(self) -> &'static str {
        match self {
            Convergence::Convergent => "convergent",
            Convergence::Divergent => "divergent",
            Convergence::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvergencePoint {
    pub omega: f64,
    pub exact: f64,
    /// |partial sum − exact| for the last six orders, lowest first.
    pub errors: Vec<f64>,
    /// Per-order growth of the error envelope over those six orders.
    pub ratio: f64,
    pub class: Convergence,
}

#[derive(Clone, Debug)]
pub struct ConvergenceMap {
    pub points: Vec<ConvergencePoint>,
    /// Grid points skipped for lying within the margin of a pole.
    pub excluded: Vec<f64>,
}

/// Grid points closer than this to any λ = 0 or λ = 1 pole are skipped.
pub const POLE_MARGIN: f64 = 1e-3;
const RATIO_BAND: f64 = 1e-3;
const ERROR_FLOOR: f64 = 1e-13;

fn classify(errors: &[f64]) -> (f64, Convergence) {
    let last = errors[errors.len() - 1];
    if last < ERROR_FLOOR {
        return (0.0, Convergence::Convergent);
    }
    // Envelope ratio: oscillating terms make single successive ratios noisy.
    let half = errors.len() / 2;
    let early = errors[..half].iter().cloned().fold(0.0, f64::max);
    let late = errors[half..].iter().cloned().fold(0.0, f64::max);
    let ratio = (late / early.max(f64::MIN_POSITIVE)).powf(1.0 / half as f64);
    let class = if ratio < 1.0 - RATIO_BAND {
        Convergence::Convergent
    } else if ratio > 1.0 + RATIO_BAND {
        Convergence::Divergent
    } else {
        Convergence::Undetermined
    };
    (ratio, class)
}

/// Radius of convergence in λ of the expansion at ω: the smallest |λ|
/// solving `E_i(λ) = ω` over all poles.
pub fn radius_of_convergence(poles: &ModelPoles, omega: f64) -> f64 {
    let mut r = f64::INFINITY;
    for &(c0, c1, c2) in &poles.coefficients {
        let c = c0 - omega;
        if c2 == 0.0 {
            if c1 != 0.0 {
                r = r.min((c / c1).abs());
            }
            continue;
        }
        let disc = c1 * c1 - 4.0 * c2 * c;
        if disc < 0.0 {
            r = r.min((c / c2).abs().sqrt());
        } else {
            let s = disc.sqrt();
            let q = -0.5 * (c1 + c1.signum() * s);
            for x in [q / c2, if q != 0.0 { c / q } else { f64::INFINITY }] {
                r = r.min(x.abs());
            }
        }
    }
    r
}

/// Classifies each ω by the error ratio over orders `max_order − 5 ..= max_order`.
pub fn convergence_map(poles: &ModelPoles, grid: &[f64], max_order: usize) -> Result<ConvergenceMap> {
    if max_order < 5 {
        return Err(Error::Validation("convergence_map needs max_order ≥ 5".into()));
    }
    let mut singular = poles.positions(0.0);
    singular.extend(poles.positions(1.0));
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for &omega in grid {
        if singular.iter().any(|s| (omega - s).abs() < POLE_MARGIN) {
            excluded.push(omega);
            continue;
        }
        let exact = model_g(poles, omega, 1.0)?;
        let sums = taylor_partial_sums(poles, omega, max_order)?;
        let errors: Vec<f64> = sums[max_order - 5..].iter().map(|s| (s - exact).abs()).collect();
        let (ratio, class) = classify(&errors);
        points.push(ConvergencePoint {
            omega,
            exact,
            errors,
            ratio,
            class,
        });
    }
    Ok(ConvergenceMap { points, excluded })
}

impl ConvergenceMap {
    /// Maximal runs of convergent points as `(first ω, last ω)`.
    pub fn convergent_regions(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for p in &self.points {
            if p.class == Convergence::Convergent {
                open = Some(match open {
                    Some((a, _)) => (a, p.omega),
                    None => (p.omega, p.omega),
                });
            } else if let Some(r) = open.take() {
                out.push(r);
            }
        }
        out.extend(open);
        out
    }

    /// The convergent run containing `omega`, if any.
    pub fn region_containing(&self, omega: f64) -> Option<(f64, f64)> {
        self.convergent_regions()
            .into_iter()
            .find(|&(a, b)| a <= omega && omega <= b)
    }
}

/// Uniform grid from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_zero_is_lambda_zero() {
        let p = ModelPoles::standard();
        for w in [-3.0, 0.1, 1.2, 2.9] {
            let a = taylor_partial_sum(&p, w, 0).unwrap();
            assert_eq!(a, model_g(&p, w, 0.0).unwrap());
        }
    }

    #[test]
    fn lambda_one_positions() {
        let e = ModelPoles::standard().positions(1.0);
        for (x, y) in e.iter().zip([2.3, 0.95, -1.3, -2.5]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn mirrored_set_is_odd() {
        let p = ModelPoles::new(vec![(1.0, 0.2, 0.1), (-1.0, -0.2, -0.1)]).unwrap();
        for w in [0.3, 2.1, 4.0] {
            let a = model_g(&p, w, 0.7).unwrap();
            let b = model_g(&p, -w, 0.7).unwrap();
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn collisions() {
        assert!(ModelPoles::new(vec![(1.0, 0.0, 0.0), (1.0, 0.0, 0.0)]).is_err());
        assert!(model_g(&ModelPoles::standard(), 0.95, 1.0).is_err());
    }
}
