//! Factor ablation, elasticities and Shapley contributions.

use std::fmt;
use std::str::FromStr;

use super::{finite_or_err, Factor, UaeError, UaeForm};
use crate::descriptor::ModuleDescriptor;

const REL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FactorSubset {
    pub include_alpha: bool,
    pub include_beta: bool,
    pub include_theta: bool,
}

impl FactorSubset {
    pub const FULL: FactorSubset = FactorSubset::new(true, true, true);

    /// Row order of the ablation table: α, β, θ, βθ, αθ, αβ, αβθ.
    pub const TABLE_ORDER: [FactorSubset; 7] = [
        FactorSubset::new(true, false, false),
        FactorSubset::new(false, true, false),
        FactorSubset::new(false, false, true),
        FactorSubset::new(false, true, true),
        FactorSubset::new(true, false, true),
        FactorSubset::new(true, true, false),
        FactorSubset::FULL,
    ];

    pub const fn new(include_alpha: bool, include_beta: bool, include_theta: bool) -> Self {
        Self {
            include_alpha,
            include_beta,
            include_theta,
        }
    }

    pub fn only(factor: Factor) -> Self {
        Self::new(factor == Factor::Alpha, factor == Factor::Beta, factor == Factor::Theta)
    }

    pub fn is_empty(&self) -> bool {
        !(self.include_alpha || self.include_beta || self.include_theta)
    }

    pub fn contains(&self, factor: Factor) -> bool {
        match factor {
            Factor::Alpha => self.include_alpha,
            Factor::Beta => self.include_beta,
            Factor::Theta => self.include_theta,
        }
    }
}

impl fmt::Display for FactorSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Factor::ALL.iter().filter(|&&x| self.contains(x)).map(|x| x.name()).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

impl FromStr for FactorSubset {
    type Err = String;

    /// Accepts `alpha+beta`, `alpha,theta`, `all`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "all" {
            return Ok(Self::FULL);
        }
        let mut out = Self::new(false, false, false);
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "alpha" | "l" => out.include_alpha = true,
                "beta" | "k" => out.include_beta = true,
                "theta" | "n" => out.include_theta = true,
                other => return Err(format!("unknown factor `{other}` (expected alpha, beta, theta)")),
            }
        }
        if out.is_empty() {
            return Err("factor subset is empty".into());
        }
        Ok(out)
    }
}

/// φ with excluded factors replaced by 1; the division by `f` is kept.
pub fn ablate(form: &UaeForm, desc: &ModuleDescriptor, subset: FactorSubset) -> Result<f64, UaeError> {
    if subset.is_empty() {
        return Err(UaeError::EmptySubset);
    }
    let factors = form.factors(desc)?;
    let product: f64 = Factor::ALL
        .iter()
        .zip(factors)
        .map(|(&which, v)| if subset.contains(which) { v } else { 1.0 })
        .product();
    finite_or_err(form, desc, product / desc.f as f64)
}

/// Offsets added to each variable when it is used as the log-variable.
///
/// The default (no shift) keeps the plain log-derivative, under which the β
/// elasticity of any `k = 0` module is zero; [`EvalShift::K_PLUS_ONE`] avoids that
/// at the cost of reversing the growth of φ3's β elasticity with `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalShift {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl EvalShift {
    /// Plain log-derivatives at the raw variables.
    pub const NONE: EvalShift = EvalShift {
        alpha: 0.0,
        beta: 0.0,
        theta: 0.0,
    };

    /// Uses `k + 1` as the β log-variable so that `k = 0` has a non-zero elasticity.
    pub const K_PLUS_ONE: EvalShift = EvalShift {
        alpha: 0.0,
        beta: 1.0,
        theta: 0.0,
    };

    fn get(&self, factor: Factor) -> f64 {
        match factor {
            Factor::Alpha => self.alpha,
            Factor::Beta => self.beta,
            Factor::Theta => self.theta,
        }
    }
}

impl Default for EvalShift {
    fn default() -> Self {
        Self::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapleyRule {
    /// Exact three-player Shapley value (weights 1/3, 1/6, 1/6, 1/3). Efficient.
    Standard,
    /// Plain average of the three marginals that omit the grand coalition, as
    /// the formula is usually printed. Not efficient in general.
    MarginalMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub module: String,
    /// Elasticities `S_α, S_β, S_θ`.
    pub s: [f64; 3],
    /// `Ŝ_i = S_i / ΣS`; `None` when ΣS is zero or non-finite.
    pub normalized: Option<[f64; 3]>,
    /// Shapley contributions `C_α, C_β, C_θ`.
    pub shapley: [f64; 3],
    pub v_empty: f64,
    pub v_full: f64,
}

impl SensitivityReport {
    /// `ΣC − (v(full) − v(∅))`.
    pub fn efficiency_residual(&self) -> f64 {
        self.shapley.iter().sum::<f64>() - (self.v_full - self.v_empty)
    }
}

/// `|(x + shift) · f'(x) / f(x)|` for one factor, with a central difference.
fn factor_elasticity(form: &UaeForm, factor: Factor, x: f64, shift: f64) -> f64 {
    let f = form.factor(factor);
    let h = REL_STEP * x.abs().max(1.0);
    let deriv = (f(x + h) - f(x - h)) / (2.0 * h);
    ((x + shift) * deriv / f(x)).abs()
}

/// Elasticities and their normalisation.
pub fn elasticity(form: &UaeForm, desc: &ModuleDescriptor, shift: EvalShift) -> Result<([f64; 3], Option<[f64; 3]>), UaeError> {
    form.factors(desc)?;
    let mut s = [0.0; 3];
    for (slot, factor) in s.iter_mut().zip(Factor::ALL) {
        let x = factor.variable(desc);
        let point = x + shift.get(factor);
        if point <= 0.0 && shift.get(factor) != 0.0 {
            return Err(UaeError::Domain {
                form: form.label.clone(),
                module: desc.name.clone(),
                reason: format!("shifted {} variable is {point}, must be positive", factor.name()),
            });
        }
        *slot = factor_elasticity(form, factor, x, shift.get(factor));
    }
    let total: f64 = s.iter().sum();
    let normalized = (total.is_finite() && total > 0.0).then(|| s.map(|v| v / total));
    Ok((s, normalized))
}

/// Shapley contributions of the three factors. Coalition values come from
/// [`ablate`]; `v_empty` stands in for the undefined empty coalition.
pub fn shapley(form: &UaeForm, desc: &ModuleDescriptor, v_empty: f64, rule: ShapleyRule) -> Result<[f64; 3], UaeError> {
    let v = |a: bool, b: bool, t: bool| -> Result<f64, UaeError> {
        let subset = FactorSubset::new(a, b, t);
        if subset.is_empty() {
            Ok(v_empty)
        } else {
            ablate(form, desc, subset)
        }
    };
    // marginals of player i joining coalitions of the other two
    let marginal = |i: usize, with_j: bool, with_k: bool| -> Result<f64, UaeError> {
        let mut set = [false; 3];
        let others: Vec<usize> = (0..3).filter(|&x| x != i).collect();
        set[others[0]] = with_j;
        set[others[1]] = with_k;
        let without = v(set[0], set[1], set[2])?;
        set[i] = true;
        Ok(v(set[0], set[1], set[2])? - without)
    };
    let mut out = [0.0; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let m_none = marginal(i, false, false)?;
        let m_j = marginal(i, true, false)?;
        let m_k = marginal(i, false, true)?;
        *slot = match rule {
            ShapleyRule::Standard => {
                let m_all = marginal(i, true, true)?;
                m_none / 3.0 + m_j / 6.0 + m_k / 6.0 + m_all / 3.0
            }
            ShapleyRule::MarginalMean => (m_none + m_j + m_k) / 3.0,
        };
    }
    Ok(out)
}

pub fn sensitivity(
    form: &UaeForm,
    desc: &ModuleDescriptor,
    shift: EvalShift,
    v_empty: f64,
    rule: ShapleyRule,
) -> Result<SensitivityReport, UaeError> {
    let (s, normalized) = elasticity(form, desc, shift)?;
    Ok(SensitivityReport {
        module: desc.name.clone(),
        s,
        normalized,
        shapley: shapley(form, desc, v_empty, rule)?,
        v_empty,
        v_full: ablate(form, desc, FactorSubset::FULL)?,
    })
}
