//! Universality assessment equation: `φ = α(l)·β(k)·θ(n) / f`.
//!
//! Lower scores mean a block is easier to transplant. Six closed forms are
//! built in; custom forms must satisfy the curvature constraints checked by
//! [`constraints::validate_form_constraints`] unless explicitly built unchecked.

pub mod attribution;
pub mod constraints;
pub mod ranking;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::descriptor::ModuleDescriptor;

pub use attribution::{ablate, elasticity, sensitivity, shapley, FactorSubset, SensitivityReport, ShapleyRule};
pub use constraints::{validate_form_constraints, ConstraintReport, SampleRange, SampleRanges};
pub use ranking::{rank_modules, ranking_invariance, InvarianceVerdict, Ranking, DEFAULT_TIE_TOLERANCE};

pub type FactorFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum UaeError {
    #[error("{form} on `{module}`: {reason}")]
    Domain { form: String, module: String, reason: String },
    #[error("{form} on `{module}` produced a non-finite score")]
    NonFinite { form: String, module: String },
    #[error("sample grid for {variable} has {points} points, need at least 3")]
    DegenerateGrid { variable: &'static str, points: usize },
    #[error("sample grid for {variable} is invalid: {reason}")]
    InvalidGrid { variable: &'static str, reason: String },
    #[error("custom form `{form}` violates curvature constraints: {summary}")]
    ConstraintsViolated { form: String, summary: String },
    #[error("factor subset is empty")]
    EmptySubset,
    #[error("need at least {need} {what}, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("unknown form `{0}` (expected phi1..phi6)")]
    UnknownForm(String),
    #[error("tie tolerance must lie in [0, 1), got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormId {
    Phi1,
    Phi2,
    Phi3,
    Phi4,
    Phi5,
    Phi6,
    Custom,
}

impl FormId {
    pub const STANDARD: [FormId; 6] = [
        FormId::Phi1,
        FormId::Phi2,
        FormId::Phi3,
        FormId::Phi4,
        FormId::Phi5,
        FormId::Phi6,
    ];
}

impl fmt::Display for FormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FormId::Phi1 => "phi1",
            FormId::Phi2 => "phi2",
            FormId::Phi3 => "phi3",
            FormId::Phi4 => "phi4",
            FormId::Phi5 => "phi5",
            FormId::Phi6 => "phi6",
            FormId::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for FormId {
    type Err = UaeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let digit = t.strip_prefix("phi").or_else(|| t.strip_prefix("φ")).unwrap_or(&t);
        Ok(match digit {
            "1" => FormId::Phi1,
            "2" => FormId::Phi2,
            "3" => FormId::Phi3,
            "4" => FormId::Phi4,
            "5" => FormId::Phi5,
            "6" => FormId::Phi6,
            _ => return Err(UaeError::UnknownForm(s.to_string())),
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone)]
pub struct UaeForm {
    pub id: FormId,
    pub label: String,
    alpha: FactorFn,
    beta: FactorFn,
    theta: FactorFn,
    /// Smallest admissible `n`; logarithmic θ factors need `n >= 100`.
    min_n: Option<f64>,
}

impl fmt::Debug for UaeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UaeForm")
            .field("id", &self.id)
            .field("label", &self.label)
            .field("min_n", &self.min_n)
            .finish_non_exhaustive()
    }
}

fn lg_theta(n: f64) -> f64 {
    (n / 100.0).log10()
}

impl UaeForm {
    pub fn standard(id: FormId) -> UaeForm {
        let exp_beta: FactorFn = Arc::new(|k: f64| (k + 1.0).exp());
        let lin_alpha: FactorFn = Arc::new(|l: f64| l);
        let lg: FactorFn = Arc::new(lg_theta);
        let (alpha, beta, theta, min_n): (FactorFn, FactorFn, FactorFn, Option<f64>) = match id {
            FormId::Phi1 => (lin_alpha, exp_beta, lg, Some(100.0)),
            FormId::Phi2 => (lin_alpha, exp_beta, Arc::new(|n: f64| sigmoid(n / 100.0)), None),
            FormId::Phi3 => (lin_alpha, Arc::new(|k: f64| swish(k + 1.0)), lg, Some(100.0)),
            FormId::Phi4 => (Arc::new(|l: f64| l * l), exp_beta, lg, Some(100.0)),
            FormId::Phi5 => (
                Arc::new(|l: f64| l * l + 1.0),
                Arc::new(|k: f64| 5.0 * k * k + 1.0),
                Arc::new(|n: f64| (n + 2.0).sqrt()),
                None,
            ),
            FormId::Phi6 => (
                Arc::new(softplus),
                Arc::new(|k: f64| softplus(2.0 * k + 1.0)),
                Arc::new(|n: f64| (n / 100.0).tanh()),
                None,
            ),
            FormId::Custom => panic!("UaeForm::standard called with FormId::Custom"),
        };
        UaeForm {
            id,
            label: id.to_string(),
            alpha,
            beta,
            theta,
            min_n,
        }
    }

    pub fn all_standard() -> Vec<UaeForm> {
        FormId::STANDARD.iter().map(|&id| UaeForm::standard(id)).collect()
    }

    pub fn parse_list(list: &str) -> Result<Vec<UaeForm>, UaeError> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<FormId>().map(UaeForm::standard))
            .collect()
    }

    /// Custom form, accepted only if it passes the curvature constraints on `ranges`.
    pub fn custom(
        label: impl Into<String>,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ranges: &SampleRanges,
    ) -> Result<UaeForm, UaeError> {
        let form = UaeForm::custom_unchecked(label, alpha, beta, theta);
        let report = validate_form_constraints(&form, ranges)?;
        if !report.all_hold() {
            return Err(UaeError::ConstraintsViolated {
                form: form.label.clone(),
                summary: report.summary(),
            });
        }
        Ok(form)
    }

    /// Custom form that skips constraint validation (counterexamples, probes).
    pub fn custom_unchecked(
        label: impl Into<String>,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> UaeForm {
        UaeForm {
            id: FormId::Custom,
            label: label.into(),
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
            theta: Arc::new(theta),
            min_n: None,
        }
    }

    pub fn with_min_n(mut self, min_n: f64) -> UaeForm {
        self.min_n = Some(min_n);
        self
    }

    pub fn alpha(&self, l: f64) -> f64 {
        (self.alpha)(l)
    }

    pub fn beta(&self, k: f64) -> f64 {
        (self.beta)(k)
    }

    pub fn theta(&self, n: f64) -> f64 {
        (self.theta)(n)
    }

    pub(crate) fn factor(&self, which: Factor) -> &FactorFn {
        match which {
            Factor::Alpha => &self.alpha,
            Factor::Beta => &self.beta,
            Factor::Theta => &self.theta,
        }
    }

    fn check_domain(&self, desc: &ModuleDescriptor) -> Result<(), UaeError> {
        if let Some(min_n) = self.min_n {
            if (desc.n as f64) < min_n {
                return Err(UaeError::Domain {
                    form: self.label.clone(),
                    module: desc.name.clone(),
                    reason: format!("n = {} is below {min_n}, lg(n/100) would be negative or undefined", desc.n),
                });
            }
        }
        Ok(())
    }

    /// `[α(l), β(k), θ(n)]` at the descriptor, after the domain check.
    pub fn factors(&self, desc: &ModuleDescriptor) -> Result<[f64; 3], UaeError> {
        self.check_domain(desc)?;
        Ok([
            self.alpha(desc.l as f64),
            self.beta(desc.k as f64),
            self.theta(desc.n as f64),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    Alpha,
    Beta,
    Theta,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Alpha, Factor::Beta, Factor::Theta];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Alpha => "alpha",
            Factor::Beta => "beta",
            Factor::Theta => "theta",
        }
    }

    /// The descriptor variable the factor reads.
    pub fn variable(self, desc: &ModuleDescriptor) -> f64 {
        match self {
            Factor::Alpha => desc.l as f64,
            Factor::Beta => desc.k as f64,
            Factor::Theta => desc.n as f64,
        }
    }
}

pub(crate) fn finite_or_err(form: &UaeForm, desc: &ModuleDescriptor, v: f64) -> Result<f64, UaeError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(UaeError::NonFinite {
            form: form.label.clone(),
            module: desc.name.clone(),
        })
    }
}

pub fn evaluate_uae(form: &UaeForm, desc: &ModuleDescriptor) -> Result<f64, UaeError> {
    let [a, b, t] = form.factors(desc)?;
    finite_or_err(form, desc, a * b * t / desc.f as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::golden_corpus;

    fn d(k: u32, n: u64, l: u32) -> ModuleDescriptor {
        ModuleDescriptor::new("t", k, n, l, 64).unwrap()
    }

    #[test]
    fn phi1_rb_and_phi5_gal() {
        let rb = d(0, 73_856, 4);
        assert!((evaluate_uae(&UaeForm::standard(FormId::Phi1), &rb).unwrap() - 0.49).abs() <= 0.005);
        let gal = d(3, 56_132, 21);
        assert!((evaluate_uae(&UaeForm::standard(FormId::Phi5), &gal).unwrap() - 75_268.47).abs() <= 0.5);
    }

    #[test]
    fn log_zero_point() {
        let v = evaluate_uae(&UaeForm::standard(FormId::Phi1), &d(0, 100, 4)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn small_n_is_a_domain_error_for_log_forms() {
        let err = evaluate_uae(&UaeForm::standard(FormId::Phi3), &d(0, 99, 4)).unwrap_err();
        assert!(matches!(err, UaeError::Domain { .. }));
        // non-log forms accept it
        assert!(evaluate_uae(&UaeForm::standard(FormId::Phi5), &d(0, 99, 4)).is_ok());
    }

    #[test]
    fn form_names_parse() {
        assert_eq!("phi3".parse::<FormId>().unwrap(), FormId::Phi3);
        assert_eq!("φ6".parse::<FormId>().unwrap(), FormId::Phi6);
        assert!("phi7".parse::<FormId>().is_err());
        assert_eq!(UaeForm::parse_list("phi1,phi2").unwrap().len(), 2);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn scale_covariance_in_f() {
        for form in UaeForm::all_standard() {
            for g in golden_corpus() {
                let mut scaled = g.clone();
                scaled.f *= 4;
                let a = evaluate_uae(&form, &g).unwrap();
                let b = evaluate_uae(&form, &scaled).unwrap();
                assert!((a / 4.0 - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
