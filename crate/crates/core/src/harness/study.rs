//! End-to-end toy runs: convergence comparison across block kinds and the
//! measured-metrics records fed to the correlation matrix.

use rayon::prelude::*;

use super::dataset::{make_toy_dataset_with_channels, TOY_CHANNELS};
use super::{flops_estimate, median_forward_ms, train, Cascade, HarnessError, MetricRecord, ScoreSeries, TrainConfig, TrainOutcome};
use crate::blocks::{build_block, BlockConfig, BlockKind};
use crate::descriptor::{count_parameters, derive_descriptor, ModuleDescriptor};
use crate::tensor::Tensor;
use crate::uae::{ablate, Factor, FactorSubset, UaeForm};

/// Channel width at which structural metrics (parameters, FLOPs, descriptors)
/// are counted, matching the reference corpus.
pub const STRUCTURAL_CHANNELS: usize = 64;

/// Cascade and dataset shape of a toy run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySetup {
    pub blocks: usize,
    pub channels: usize,
    pub samples: usize,
    pub size: usize,
    pub scale: usize,
    pub train: TrainConfig,
}

impl Default for ToySetup {
    fn default() -> Self {
        Self {
            blocks: 5,
            channels: TOY_CHANNELS,
            samples: 20,
            size: 16,
            scale: 2,
            train: TrainConfig::default(),
        }
    }
}

impl ToySetup {
    /// Builds the dataset and cascade for `config` and trains under `seed`.
    /// The block config's channel count is replaced by the setup's.
    pub fn run(&self, config: &BlockConfig, seed: u64) -> Result<(TrainOutcome, Cascade), HarnessError> {
        let data = make_toy_dataset_with_channels(self.samples, self.size, self.scale, self.channels, seed)?;
        let config = BlockConfig {
            channels: self.channels,
            ..config.clone()
        };
        let mut cascade = Cascade::build(&config, self.blocks, seed)?;
        let cfg = TrainConfig { seed, ..self.train.clone() };
        let outcome = train(&mut cascade, &data, &cfg)?;
        Ok((outcome, cascade))
    }
}

/// A labelled block configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyModule {
    pub label: String,
    pub config: BlockConfig,
}

impl StudyModule {
    pub fn kind(kind: BlockKind) -> Self {
        Self {
            label: kind.name().to_string(),
            config: BlockConfig::new(kind, STRUCTURAL_CHANNELS),
        }
    }

    /// CRB* with `l/4` stages and no raw-input skips.
    pub fn crb_star(l: usize) -> Self {
        Self {
            label: format!("CRB*-{l}"),
            config: BlockConfig::crb_star(STRUCTURAL_CHANNELS, l, l / crate::blocks::LAYERS_PER_STAGE),
        }
    }

    /// RB, CRB, DCRB and the deeper CRB* at l = 12 and 16. The CRB* members
    /// share CRB's parameters, so they isolate the effect of depth.
    pub fn defaults() -> Vec<StudyModule> {
        vec![
            Self::kind(BlockKind::Rb),
            Self::kind(BlockKind::Crb),
            Self::kind(BlockKind::Dcrb),
            Self::crb_star(12),
            Self::crb_star(16),
        ]
    }

    /// Descriptor of the block at [`STRUCTURAL_CHANNELS`].
    pub fn descriptor(&self) -> Result<ModuleDescriptor, HarnessError> {
        let block = build_block(&self.structural_config(), 0)?;
        derive_descriptor(&block.layer_graph(), &self.label).map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn structural_config(&self) -> BlockConfig {
        BlockConfig {
            channels: STRUCTURAL_CHANNELS,
            ..self.config.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRun {
    pub label: String,
    pub seed: u64,
    pub outcome: TrainOutcome,
}

/// Every module under every seed, in parallel; results are module-major.
pub fn convergence_runs(modules: &[StudyModule], seeds: &[u64], setup: &ToySetup) -> Result<Vec<ConvergenceRun>, HarnessError> {
    let jobs: Vec<(&StudyModule, u64)> = modules.iter().flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    jobs.par_iter()
        .map(|&(m, seed)| {
            let (outcome, _) = setup.run(&m.config, seed)?;
            Ok(ConvergenceRun {
                label: m.label.clone(),
                seed,
                outcome,
            })
        })
        .collect()
}

/// Trains the module once and records held-out PSNR/SSIM and forward time
/// at toy scale; parameters and FLOPs are counted at [`STRUCTURAL_CHANNELS`]
/// on a `size × size` map.
pub fn measure_module(module: &StudyModule, setup: &ToySetup, seed: u64, timing_reps: usize) -> Result<(MetricRecord, TrainOutcome), HarnessError> {
    let graph = build_block(&module.structural_config(), 0)?.layer_graph();
    let params = count_parameters(&graph).map_err(|e| HarnessError::Config(e.to_string()))?;
    let (outcome, cascade) = setup.run(&module.config, seed)?;
    let probe = Tensor::from_fn(&[1, setup.channels, setup.size, setup.size], |i| ((i * 31 % 97) as f64) / 97.0);
    let mut rec = MetricRecord::new(module.label.clone(), params);
    rec.flops = Some(flops_estimate(&graph, setup.size, setup.size));
    rec.psnr = outcome.psnr;
    rec.ssim = outcome.ssim;
    rec.cpu_ms = Some(median_forward_ms(&cascade.blocks[0], &probe, timing_reps)?);
    Ok((rec, outcome))
}

/// Full-form scores plus the three single-factor ablations of each form.
/// Variants are named `phi3` and `phi3:alpha`.
pub fn score_series(forms: &[UaeForm], descs: &[ModuleDescriptor]) -> Result<Vec<ScoreSeries>, HarnessError> {
    let mut out = Vec::new();
    for form in forms {
        let mut variants = vec![(form.label.clone(), FactorSubset::FULL)];
        variants.extend(Factor::ALL.map(|f| (format!("{}:{}", form.label, f.name()), FactorSubset::only(f))));
        for (variant, subset) in variants {
            let scores = descs
                .iter()
                .map(|d| ablate(form, d, subset).map(|v| (d.name.clone(), v)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            out.push(ScoreSeries { variant, scores });
        }
    }
    Ok(out)
}
