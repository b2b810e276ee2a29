//! Ascending-φ rankings and cross-form ranking invariance.

use super::{evaluate_uae, UaeError, UaeForm};
use crate::descriptor::ModuleDescriptor;

/// Relative gap `|a − b| / max(a, b)` at or below which two modules tie.
pub const DEFAULT_TIE_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub form: String,
    /// `(name, φ)` in ascending φ, ties broken by name.
    pub entries: Vec<(String, f64)>,
    /// Adjacent pairs with numerically equal scores.
    pub ties: Vec<(String, String)>,
}

impl Ranking {
    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn score(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

fn exactly_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

pub fn rank_modules(form: &UaeForm, descs: &[ModuleDescriptor]) -> Result<Ranking, UaeError> {
    if descs.is_empty() {
        return Err(UaeError::TooFew {
            what: "descriptors",
            need: 1,
            got: 0,
        });
    }
    let mut entries = descs
        .iter()
        .map(|d| evaluate_uae(form, d).map(|v| (d.name.clone(), v)))
        .collect::<Result<Vec<_>, _>>()?;
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let ties = entries
        .windows(2)
        .filter(|w| exactly_tied(w[0].1, w[1].1))
        .map(|w| (w[0].0.clone(), w[1].0.clone()))
        .collect();
    Ok(Ranking {
        form: form.label.clone(),
        entries,
        ties,
    })
}

/// Two forms ordering the same pair of modules in strictly opposite directions.
#[derive(Debug, Clone, PartialEq)]
pub struct RankConflict {
    pub lower: String,
    pub higher: String,
    /// Form in which `lower < higher` beyond the tie tolerance.
    pub form_agreeing: String,
    pub gap_agreeing: f64,
    /// Form in which `lower > higher` beyond the tie tolerance.
    pub form_disagreeing: String,
    pub gap_disagreeing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceVerdict {
    pub invariant: bool,
    pub tolerance: f64,
    pub orderings: Vec<Ranking>,
    pub conflicts: Vec<RankConflict>,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// Signed relation of `a` vs `b` under tolerance `tau`: -1, 0 (tie) or +1.
fn relation(a: f64, b: f64, tau: f64) -> (i8, f64) {
    let gap = relative_gap(a, b);
    if gap <= tau {
        (0, gap)
    } else if a < b {
        (-1, gap)
    } else {
        (1, gap)
    }
}

/// Orderings are invariant iff no module pair is strictly ordered one way by
/// one form and strictly the other way by another; gaps within `tau` are ties.
pub fn ranking_invariance(forms: &[UaeForm], descs: &[ModuleDescriptor], tau: f64) -> Result<InvarianceVerdict, UaeError> {
    if !(0.0..1.0).contains(&tau) {
        return Err(UaeError::BadTolerance(tau));
    }
    if forms.len() < 2 {
        return Err(UaeError::TooFew {
            what: "forms",
            need: 2,
            got: forms.len(),
        });
    }
    let orderings = forms.iter().map(|f| rank_modules(f, descs)).collect::<Result<Vec<_>, _>>()?;

    let mut conflicts = Vec::new();
    for (i, a) in descs.iter().enumerate() {
        for b in &descs[i + 1..] {
            let rels: Vec<(i8, f64, &str)> = orderings
                .iter()
                .map(|r| {
                    let (rel, gap) = relation(r.score(&a.name).unwrap(), r.score(&b.name).unwrap(), tau);
                    (rel, gap, r.form.as_str())
                })
                .collect();
            let below = rels.iter().filter(|r| r.0 < 0).max_by(|x, y| x.1.total_cmp(&y.1));
            let above = rels.iter().filter(|r| r.0 > 0).max_by(|x, y| x.1.total_cmp(&y.1));
            if let (Some(lo), Some(hi)) = (below, above) {
                conflicts.push(RankConflict {
                    lower: a.name.clone(),
                    higher: b.name.clone(),
                    form_agreeing: lo.2.to_string(),
                    gap_agreeing: lo.1,
                    form_disagreeing: hi.2.to_string(),
                    gap_disagreeing: hi.1,
                });
            }
        }
    }
    Ok(InvarianceVerdict {
        invariant: conflicts.is_empty(),
        tolerance: tau,
        orderings,
        conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::golden_corpus;
    use crate::uae::FormId;

    #[test]
    fn phi1_golden_order() {
        let r = rank_modules(&UaeForm::standard(FormId::Phi1), &golden_corpus()).unwrap();
        assert_eq!(r.names(), vec!["RB", "CRB", "DCRB", "ConvFFN", "RCAB", "RSTB", "GAL"]);
        assert!(r.ties.is_empty());
    }

    #[test]
    fn duplicated_descriptor_is_a_tie() {
        let d = golden_corpus().remove(0);
        let mut twin = d.clone();
        twin.name = "RB2".into();
        let r = rank_modules(&UaeForm::standard(FormId::Phi2), &[d, twin]).unwrap();
        assert_eq!(r.ties, vec![("RB".to_string(), "RB2".to_string())]);
    }

    #[test]
    fn single_module_is_trivially_invariant() {
        let one = vec![golden_corpus().remove(0)];
        let forms = vec![UaeForm::standard(FormId::Phi1), UaeForm::standard(FormId::Phi2)];
        assert!(ranking_invariance(&forms, &one, DEFAULT_TIE_TOLERANCE).unwrap().invariant);
    }

    #[test]
    fn inverted_form_breaks_invariance() {
        let inv = UaeForm::custom_unchecked(
            "inv-phi1",
            |l| 1.0 / l,
            |k| (-(k + 1.0)).exp(),
            |n| 1.0 / (n / 100.0).log10(),
        );
        let forms = vec![UaeForm::standard(FormId::Phi1), inv];
        let v = ranking_invariance(&forms, &golden_corpus(), DEFAULT_TIE_TOLERANCE).unwrap();
        assert!(!v.invariant);
        assert!(!v.conflicts.is_empty());
    }

    #[test]
    fn tolerance_is_validated() {
        let forms = UaeForm::all_standard();
        assert!(ranking_invariance(&forms, &golden_corpus(), 1.5).is_err());
    }
}
