//! Spearman rank correlation and the UAE-vs-metrics matrix.

use super::{HarnessError, MetricRecord};

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks. Constant input is an error.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, HarnessError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(HarnessError::Config(format!(
            "spearman needs equal lengths >= 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(HarnessError::Config("spearman input contains non-finite values".into()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(HarnessError::Undefined("zero rank variance"))
}

/// Fewer pairs than this are flagged as low power.
pub const MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Params,
    Flops,
    Psnr,
    CpuMs,
    ParamEff,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Params, Metric::Flops, Metric::Psnr, Metric::CpuMs, Metric::ParamEff];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Params => "params",
            Metric::Flops => "flops",
            Metric::Psnr => "psnr",
            Metric::CpuMs => "cpu_ms",
            Metric::ParamEff => "param_eff",
        }
    }

    pub fn of(self, r: &MetricRecord) -> Option<f64> {
        match self {
            Metric::Params => Some(r.params as f64),
            Metric::Flops => r.flops.map(|f| f as f64),
            Metric::Psnr => r.psnr.filter(|p| p.is_finite()),
            Metric::CpuMs => r.cpu_ms,
            Metric::ParamEff => r.param_eff(),
        }
    }
}

/// UAE scores of one variant (full form or a single-factor ablation), by module.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub variant: String,
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCell {
    pub variant: String,
    pub metric: &'static str,
    pub pairs: usize,
    /// `None` when undefined (constant ranks or fewer than two pairs).
    pub rho: Option<f64>,
    pub low_power: bool,
}

/// Spearman ρ between every score series and every metric. Modules missing a
/// metric or a score are dropped pairwise.
pub fn correlate_metrics(records: &[MetricRecord], series: &[ScoreSeries]) -> Vec<CorrelationCell> {
    let mut out = Vec::new();
    for s in series {
        for metric in Metric::ALL {
            let (xs, ys): (Vec<f64>, Vec<f64>) = s
                .scores
                .iter()
                .filter_map(|(name, score)| {
                    let rec = records.iter().find(|r| &r.module == name)?;
                    Some((*score, metric.of(rec)?))
                })
                .unzip();
            let rho = spearman_rho(&xs, &ys).ok();
            out.push(CorrelationCell {
                variant: s.variant.clone(),
                metric: metric.name(),
                pairs: xs.len(),
                rho,
                low_power: xs.len() < MIN_PAIRS,
            });
        }
    }
    out
}
