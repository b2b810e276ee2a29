//! Curvature constraints on the factor functions.
//!
//! Second derivatives are estimated with central differences at a relative
//! step of 1e-4. Each estimate carries a rounding-noise floor so that an
//! exactly linear factor (α(l) = l) reads as "zero curvature" rather than as
//! noise of either sign.

use super::{FactorFn, UaeError, UaeForm};

const REL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl SampleRange {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }

    fn validate(&self, variable: &'static str) -> Result<(), UaeError> {
        if self.points < 3 {
            return Err(UaeError::DegenerateGrid {
                variable,
                points: self.points,
            });
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.hi <= self.lo {
            return Err(UaeError::InvalidGrid {
                variable,
                reason: format!("need finite lo < hi, got [{}, {}]", self.lo, self.hi),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRanges {
    pub k: SampleRange,
    pub l: SampleRange,
    pub n: SampleRange,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            k: SampleRange::new(0.0, 4.0, 16),
            l: SampleRange::new(2.0, 24.0, 16),
            n: SampleRange::new(200.0, 1e5, 16),
        }
    }
}

/// Central second difference with an estimate of its rounding noise.
pub fn second_derivative(f: &FactorFn, x: f64) -> (f64, f64) {
    let h = REL_STEP * x.abs().max(1.0);
    let (lo, mid, hi) = (f(x - h), f(x), f(x + h));
    let d2 = (hi - 2.0 * mid + lo) / (h * h);
    let scale = lo.abs().max(mid.abs()).max(hi.abs());
    let noise = 8.0 * f64::EPSILON * scale / (h * h);
    (d2, noise)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub holds: bool,
    pub violations: usize,
    pub samples: usize,
    /// Value at the worst sample (most violating, or closest to violating).
    pub worst: f64,
}

impl ConstraintCheck {
    fn from_margins(margins: impl Iterator<Item = (f64, f64)>) -> Self {
        // each item: (margin that must be > 0, value reported)
        let mut violations = 0;
        let mut samples = 0;
        let mut worst = (f64::INFINITY, f64::NAN);
        for (margin, value) in margins {
            samples += 1;
            if margin.is_nan() || margin <= 0.0 {
                violations += 1;
            }
            if margin < worst.0 || worst.1.is_nan() {
                worst = (margin, value);
            }
        }
        Self {
            holds: violations == 0,
            violations,
            samples,
            worst: worst.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// θ''(n) < 0 at every sampled n.
    pub theta_concave: ConstraintCheck,
    /// β''(k) > 0 at every sampled k.
    pub beta_convex: ConstraintCheck,
    /// α''(l) ≥ 0 at every sampled l, within rounding noise.
    pub alpha_convex: ConstraintCheck,
    /// β''(k_i) > α''(l_i) on the shared index grid.
    pub beta_dominates_alpha: ConstraintCheck,
}

impl ConstraintReport {
    pub fn all_hold(&self) -> bool {
        self.theta_concave.holds && self.beta_convex.holds && self.alpha_convex.holds && self.beta_dominates_alpha.holds
    }

    pub fn summary(&self) -> String {
        let part = |name: &str, c: &ConstraintCheck| {
            format!(
                "{name}: {} ({}/{} violations, worst {:.3e})",
                if c.holds { "ok" } else { "FAIL" },
                c.violations,
                c.samples,
                c.worst
            )
        };
        [
            part("theta''<0", &self.theta_concave),
            part("beta''>0", &self.beta_convex),
            part("alpha''>=0", &self.alpha_convex),
            part("beta''>alpha''", &self.beta_dominates_alpha),
        ]
        .join("; ")
    }
}

pub fn validate_form_constraints(form: &UaeForm, ranges: &SampleRanges) -> Result<ConstraintReport, UaeError> {
    ranges.k.validate("k")?;
    ranges.l.validate("l")?;
    ranges.n.validate("n")?;
    if ranges.n.lo <= 0.0 {
        return Err(UaeError::InvalidGrid {
            variable: "n",
            reason: "n grid must be strictly positive".into(),
        });
    }

    let d2 = |f: &FactorFn, grid: &[f64]| grid.iter().map(|&x| second_derivative(f, x)).collect::<Vec<_>>();
    let theta = d2(form.factor(super::Factor::Theta), &ranges.n.grid());
    let beta = d2(form.factor(super::Factor::Beta), &ranges.k.grid());
    let alpha = d2(form.factor(super::Factor::Alpha), &ranges.l.grid());

    let theta_concave = ConstraintCheck::from_margins(theta.iter().map(|&(v, noise)| (-v - noise, v)));
    let beta_convex = ConstraintCheck::from_margins(beta.iter().map(|&(v, noise)| (v - noise, v)));
    // weak convexity: a linear α has α'' = 0 up to rounding
    let alpha_convex = ConstraintCheck::from_margins(alpha.iter().map(|&(v, noise)| (v + noise + f64::MIN_POSITIVE, v)));
    let shared = beta.len().min(alpha.len());
    let beta_dominates_alpha = ConstraintCheck::from_margins(
        (0..shared).map(|i| (beta[i].0 - alpha[i].0 - beta[i].1 - alpha[i].1, beta[i].0 - alpha[i].0)),
    );

    Ok(ConstraintReport {
        theta_concave,
        beta_convex,
        alpha_convex,
        beta_dominates_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uae::FormId;

    #[test]
    fn phi1_and_phi4_hold_on_default_grid() {
        for id in [FormId::Phi1, FormId::Phi4] {
            let r = validate_form_constraints(&UaeForm::standard(id), &SampleRanges::default()).unwrap();
            assert!(r.all_hold(), "{id}: {}", r.summary());
        }
    }

    #[test]
    fn linear_theta_fails() {
        let form = UaeForm::custom_unchecked("lin", |l| l, |k| (k + 1.0).exp(), |n| n);
        let r = validate_form_constraints(&form, &SampleRanges::default()).unwrap();
        assert!(!r.theta_concave.holds);
        assert!(r.beta_convex.holds && r.alpha_convex.holds);
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let mut ranges = SampleRanges::default();
        ranges.k.points = 2;
        let err = validate_form_constraints(&UaeForm::standard(FormId::Phi1), &ranges).unwrap_err();
        assert!(matches!(err, UaeError::DegenerateGrid { variable: "k", points: 2 }));
    }

    #[test]
    fn custom_constructor_enforces_constraints() {
        let ranges = SampleRanges::default();
        assert!(UaeForm::custom("ok", |l| l * l, |k| (k + 1.0).exp(), |n| n.ln(), &ranges).is_ok());
        assert!(UaeForm::custom("bad", |l| l, |k| k, |n| n.ln(), &ranges).is_err());
    }

    #[test]
    fn second_derivative_of_quadratic() {
        let f: FactorFn = std::sync::Arc::new(|x: f64| 3.0 * x * x);
        for x in [0.0, 1.0, 50.0, 1e4] {
            let (v, noise) = second_derivative(&f, x);
            assert!((v - 6.0).abs() <= 1e-6 * 6.0 + noise, "x={x}: {v}");
        }
    }
}
