//! Toy-scale super-resolution training and evaluation.

pub mod correlation;
pub mod dataset;
pub mod flops;
pub mod metrics;
pub mod optim;
pub mod study;
pub mod train;

use std::time::Instant;

use thiserror::Error;

use crate::blocks::{BlockError, BlockInstance};
use crate::tensor::{Tensor, TensorError};

pub use correlation::{correlate_metrics, spearman_rho, CorrelationCell, ScoreSeries};
pub use dataset::{make_toy_dataset, SrSample};
pub use flops::flops_estimate;
pub use metrics::{psnr, ssim};
pub use study::{ToySetup, StudyModule};
pub use train::{train, Cascade, GradientTrace, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("undefined result: {0}")]
    Undefined(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// Measured metrics of one module. Unknown metrics are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub module: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub params: u64,
    pub flops: Option<u64>,
    pub cpu_ms: Option<f64>,
}

impl MetricRecord {
    pub fn new(module: impl Into<String>, params: u64) -> Self {
        Self {
            module: module.into(),
            psnr: None,
            ssim: None,
            params,
            flops: None,
            cpu_ms: None,
        }
    }

    /// PSNR per million parameters.
    pub fn param_eff(&self) -> Option<f64> {
        let p = self.psnr.filter(|p| p.is_finite())?;
        (self.params > 0).then(|| p / (self.params as f64 / 1e6))
    }
}

/// Median wall-clock time of `reps` gradient-free forward passes.
pub fn median_forward_ms(block: &BlockInstance, input: &Tensor, reps: usize) -> Result<f64, HarnessError> {
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let out = block.forward_tensor(input)?;
        std::hint::black_box(out);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}
