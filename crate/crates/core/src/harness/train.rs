//! Cascade training with L1 loss and Adam.
//!
//! Every step records the Frobenius norm of each block's first-conv weight
//! gradient; the per-epoch mean forms the [`GradientTrace`]. Training stops at
//! the first non-finite loss or gradient, keeping only completed epochs.

use super::dataset::{split_indices, SrSample};
use super::metrics::{psnr, ssim};
use super::optim::Adam;
use super::HarnessError;
use crate::blocks::{build_labelled, BlockConfig, BlockInstance};
use crate::tensor::{Parameter, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    L1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 20,
            batch_size: 4,
            seed: crate::DEFAULT_SEED,
            beta1: 0.9,
            beta2: 0.999,
            loss: LossKind::L1,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted: it freezes the weights, which the
    /// frozen-training checks rely on.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        Ok(())
    }
}

/// `m` blocks applied in sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub blocks: Vec<BlockInstance>,
}

impl Cascade {
    /// Block `i` is initialised from a seed derived from `seed` and `i`.
    pub fn build(config: &BlockConfig, m: usize, seed: u64) -> Result<Self, HarnessError> {
        if m == 0 {
            return Err(HarnessError::Config("cascade needs at least one block".into()));
        }
        let blocks = (0..m)
            .map(|i| build_labelled(config, seed.wrapping_mul(1_000_003).wrapping_add(i as u64), &format!("block{}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { blocks })
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(BlockInstance::parameter_count).sum()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.blocks.iter_mut().flat_map(|b| b.params.iter_mut())
    }

    fn forward(&self, tape: &mut Tape, x: Var, requires_grad: bool) -> Result<(Var, Vec<Vec<Var>>), TensorError> {
        let mut y = x;
        let mut bound = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let vars = b.bind(tape, requires_grad);
            y = b.forward(tape, y, &vars)?;
            bound.push(vars);
        }
        Ok((y, bound))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), false);
        let (y, _) = self.forward(&mut tape, xv, false)?;
        Ok(tape.value(y).clone())
    }
}

/// First-conv gradient norms, `cells[block][epoch]`, blocks ordered input to output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientTrace {
    pub cells: Vec<Vec<f64>>,
    /// Epoch at which a non-finite value appeared; that epoch is not recorded.
    pub diverged_at: Option<usize>,
}

impl GradientTrace {
    fn new(blocks: usize) -> Self {
        Self {
            cells: vec![Vec::new(); blocks],
            diverged_at: None,
        }
    }

    pub fn blocks(&self) -> usize {
        self.cells.len()
    }

    pub fn epochs(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    /// Norms at the last recorded (finite) epoch.
    pub fn final_norms(&self) -> Option<Vec<f64>> {
        let e = self.epochs().checked_sub(1)?;
        Some(self.cells.iter().map(|row| row[e]).collect())
    }

    /// `(block, epoch, grad_norm)` rows, 1-based block and 0-based epoch.
    pub fn rows(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (b, row) in self.cells.iter().enumerate() {
            for (e, &v) in row.iter().enumerate() {
                out.push((b + 1, e, v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean training L1 per completed epoch.
    pub history: Vec<f64>,
    pub trace: GradientTrace,
    /// Held-out scores; `None` after divergence.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        self.trace.diverged_at.is_some()
    }

    pub fn min_loss(&self) -> Option<f64> {
        self.history.iter().copied().min_by(f64::total_cmp)
    }

    /// Mean of the first `n` recorded epochs.
    pub fn mean_loss_first(&self, n: usize) -> Option<f64> {
        let k = n.min(self.history.len());
        (k > 0).then(|| self.history[..k].iter().sum::<f64>() / k as f64)
    }
}

fn batch(samples: &[&SrSample]) -> Result<(Tensor, Tensor), TensorError> {
    let inputs: Vec<Tensor> = samples.iter().map(|s| s.input()).collect();
    let x = Tensor::stack_batch(&inputs.iter().collect::<Vec<_>>())?;
    let y = Tensor::stack_batch(&samples.iter().map(|s| &s.hr).collect::<Vec<_>>())?;
    Ok((x, y))
}

/// One optimisation step. Returns the loss and first-conv gradient norms, or
/// `None` when anything non-finite appeared (weights are left untouched).
fn step(cascade: &mut Cascade, adam: &mut Adam, x: Tensor, y: Tensor) -> Result<Option<(f64, Vec<f64>)>, HarnessError> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x, false);
    let (pred, bound) = cascade.forward(&mut tape, xv, true)?;
    let target = tape.leaf(y, false);
    let loss = tape.l1_loss(pred, target)?;
    let loss_value = tape.value(loss).item();
    if !loss_value.is_finite() {
        return Ok(None);
    }
    let grads = tape.backward(loss)?;
    let mut norms = Vec::with_capacity(cascade.blocks.len());
    for (block, vars) in cascade.blocks.iter_mut().zip(&bound) {
        for (p, &v) in block.params.iter_mut().zip(vars) {
            p.grad = grads.get_or_zeros(v, p.value.shape());
            if !p.grad.all_finite() {
                return Ok(None);
            }
        }
        norms.push(block.params[0].grad.frobenius_norm());
    }
    adam.step(cascade.params_mut());
    Ok(Some((loss_value, norms)))
}

fn evaluate(cascade: &Cascade, samples: &[&SrSample]) -> Result<(f64, f64), HarnessError> {
    let (mut p_sum, mut s_sum) = (0.0, 0.0);
    for s in samples {
        let pred = cascade.predict(&s.input())?.map(|v| v.clamp(0.0, 1.0));
        p_sum += psnr(&pred, &s.hr, 1.0)?;
        s_sum += ssim(&pred, &s.hr, 1.0)?;
    }
    let n = samples.len() as f64;
    Ok((p_sum / n, s_sum / n))
}

/// Trains on a seeded 80% split and scores the remaining 20%.
pub fn train(cascade: &mut Cascade, data: &[SrSample], cfg: &TrainConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(HarnessError::Config(format!("need at least 2 samples, got {}", data.len())));
    }
    let (train_idx, test_idx) = split_indices(data.len(), cfg.seed);
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut trace = GradientTrace::new(cascade.blocks.len());
    let mut history = Vec::with_capacity(cfg.epochs);

    'epochs: for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        let mut norm_sum = vec![0.0; cascade.blocks.len()];
        for chunk in train_idx.chunks(cfg.batch_size) {
            let samples: Vec<&SrSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (x, y) = batch(&samples)?;
            match step(cascade, &mut adam, x, y)? {
                Some((l, norms)) => {
                    loss_sum += l;
                    steps += 1;
                    norm_sum.iter_mut().zip(norms).for_each(|(a, n)| *a += n);
                }
                None => {
                    trace.diverged_at = Some(epoch);
                    break 'epochs;
                }
            }
        }
        history.push(loss_sum / steps as f64);
        for (row, s) in trace.cells.iter_mut().zip(norm_sum) {
            row.push(s / steps as f64);
        }
    }

    let scores = if trace.diverged_at.is_none() {
        let held: Vec<&SrSample> = test_idx.iter().map(|&i| &data[i]).collect();
        Some(evaluate(cascade, &held)?)
    } else {
        None
    };
    Ok(TrainOutcome {
        history,
        trace,
        psnr: scores.map(|s| s.0),
        ssim: scores.map(|s| s.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{BlockKind, InitScheme};
    use crate::harness::dataset::make_toy_dataset_with_channels;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let zero_lr = TrainConfig { lr: 0.0, ..Default::default() };
        assert!(zero_lr.validate().is_ok());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { beta2: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_lr_gives_flat_history_and_frozen_trace() {
        let data = make_toy_dataset_with_channels(10, 8, 2, 2, 1).unwrap();
        let mut c = Cascade::build(&BlockConfig::new(BlockKind::Crb, 2), 2, 3).unwrap();
        let before = c.clone();
        let cfg = TrainConfig { lr: 0.0, epochs: 3, ..Default::default() };
        let out = train(&mut c, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), 3);
        assert!(out.history.windows(2).all(|w| w[0] == w[1]));
        for row in &out.trace.cells {
            assert!(row.windows(2).all(|w| w[0] == w[1]));
        }
        let values = |c: &Cascade| c.blocks.iter().flat_map(|b| b.params.iter().map(|p| p.value.clone())).collect::<Vec<_>>();
        assert_eq!(values(&c), values(&before));
    }

    #[test]
    fn identity_task_has_zero_loss() {
        let data = make_toy_dataset_with_channels(5, 8, 1, 3, 4).unwrap();
        let mut c = Cascade::build(&BlockConfig::new(BlockKind::Crb, 3).with_init(InitScheme::ZeroResidual), 3, 0).unwrap();
        let out = train(&mut c, &data, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        assert_eq!(out.history[0], 0.0);
        assert!(out.psnr.unwrap().is_infinite());
    }

    #[test]
    fn training_is_reproducible() {
        let data = make_toy_dataset_with_channels(10, 8, 2, 2, 9).unwrap();
        let cfg = TrainConfig { lr: 1e-3, epochs: 2, ..Default::default() };
        let run = || {
            let mut c = Cascade::build(&BlockConfig::new(BlockKind::Rb, 2), 2, 5).unwrap();
            train(&mut c, &data, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.history.iter().all(|v| v.to_bits() == v.to_bits()));
    }
}
