//! Residual block family: RB, CRB, DCRB and the generalized CRB*.
//!
//! A *stage* is one application of `F = Conv∘ReLU∘Conv` plus its residual add,
//! i.e. four forward layers. All stages of a block share the same two
//! convolutions, which is why CRB has exactly RB's parameter count.
//!
//! Stages are grouped into residual *units*. Unit `u` computes
//! `y_u = y_{u−1} + F_u(y_{u−1}) + c_{u−1}·x` where `x` is the raw block input;
//! inside a unit holding several stages, consecutive `F` applications are
//! joined by a ReLU.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::descriptor::{LayerGraph, LayerSpec};
use crate::tensor::{xavier_uniform, Padding, Parameter, Tape, Tensor, TensorError, Var};

/// Forward layers per stage: conv, relu, conv, add.
pub const LAYERS_PER_STAGE: usize = 4;

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("l = {0} is not a positive multiple of {LAYERS_PER_STAGE}")]
    BadLayerBudget(usize),
    #[error("epsilon must be at least 1")]
    ZeroEpsilon,
    #[error("epsilon = {epsilon} cannot be realised with l = {l}: no input skip slots (need at least two stages)")]
    NoSkipSlots { l: usize, epsilon: usize },
    #[error("coefficient list has length {got}, topology with {units} units needs {need}")]
    CoefficientLength { units: usize, need: usize, got: usize },
    #[error("{kind} requires {what}")]
    KindMismatch { kind: &'static str, what: String },
    #[error("channels and kernel size must be positive, kernel odd")]
    BadShape,
    #[error("delta_safe must be finite and non-negative, got {0}")]
    BadDeltaSafe(f64),
    #[error("linear harness: {0}")]
    Harness(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Rb,
    Crb,
    Dcrb,
    CrbStar,
}

impl BlockKind {
    pub const VALID: &'static str = "rb, crb, dcrb, crb_star";

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Rb => "RB",
            BlockKind::Crb => "CRB",
            BlockKind::Dcrb => "DCRB",
            BlockKind::CrbStar => "CRB*",
        }
    }
}

impl std::str::FromStr for BlockKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rb" => Ok(BlockKind::Rb),
            "crb" => Ok(BlockKind::Crb),
            "dcrb" => Ok(BlockKind::Dcrb),
            "crb_star" | "crb*" | "crbstar" => Ok(BlockKind::CrbStar),
            other => Err(format!("unknown block kind `{other}`; valid kinds: {}", Self::VALID)),
        }
    }
}

/// Stage grouping and raw-input skip coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Number of stages in each residual unit.
    pub units: Vec<usize>,
    /// `c_1..c_{units−1}`; `c_j` enters at unit `j + 1`.
    pub coefficients: Vec<f64>,
}

impl Topology {
    fn stages_for(l: usize) -> Result<usize, BlockError> {
        if l == 0 || !l.is_multiple_of(LAYERS_PER_STAGE) {
            return Err(BlockError::BadLayerBudget(l));
        }
        Ok(l / LAYERS_PER_STAGE)
    }

    /// Topology with `epsilon` residual connections in an `l`-layer block.
    ///
    /// With `epsilon ≤ l/4` the stages are grouped into `epsilon` contiguous
    /// units (earlier units take the remainder). Beyond that, every stage is
    /// its own unit and the surplus connections become raw-input skips,
    /// distributed round-robin over `c_1..c_{s−1}`.
    pub fn from_l_epsilon(l: usize, epsilon: usize) -> Result<Topology, BlockError> {
        let s = Self::stages_for(l)?;
        if epsilon == 0 {
            return Err(BlockError::ZeroEpsilon);
        }
        if epsilon <= s {
            let (base, extra) = (s / epsilon, s % epsilon);
            let units = (0..epsilon).map(|i| base + usize::from(i < extra)).collect();
            return Ok(Topology {
                units,
                coefficients: vec![0.0; epsilon - 1],
            });
        }
        if s < 2 {
            return Err(BlockError::NoSkipSlots { l, epsilon });
        }
        let mut coefficients = vec![0.0; s - 1];
        for j in 0..epsilon - s {
            coefficients[j % (s - 1)] += 1.0;
        }
        Ok(Topology {
            units: vec![1; s],
            coefficients,
        })
    }

    /// One stage per unit with explicit skip coefficients.
    pub fn with_coefficients(l: usize, coefficients: Vec<f64>) -> Result<Topology, BlockError> {
        let s = Self::stages_for(l)?;
        if coefficients.len() + 1 != s {
            return Err(BlockError::CoefficientLength {
                units: s,
                need: s - 1,
                got: coefficients.len(),
            });
        }
        Ok(Topology {
            units: vec![1; s],
            coefficients,
        })
    }

    pub fn stages(&self) -> usize {
        self.units.iter().sum()
    }

    pub fn layers(&self) -> usize {
        self.stages() * LAYERS_PER_STAGE
    }

    pub fn coefficient_mass(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    /// Residual connections: one per unit plus the raw-input skip mass.
    pub fn residual_count(&self) -> f64 {
        self.units.len() as f64 + self.coefficient_mass()
    }

    /// Admissible when the extra skip mass fits inside `delta_safe`, which is
    /// `ε ≤ l/4 + δ_safe` for integer skip counts.
    pub fn is_admissible(&self, delta_safe: f64) -> bool {
        self.coefficient_mass() <= delta_safe + 1e-12
    }
}

/// Largest admissible residual count for an `l`-layer block.
pub fn epsilon_bound(l: usize, delta_safe: f64) -> Result<usize, BlockError> {
    if l < LAYERS_PER_STAGE {
        return Err(BlockError::BadLayerBudget(l));
    }
    if !(delta_safe.is_finite() && delta_safe >= 0.0) {
        return Err(BlockError::BadDeltaSafe(delta_safe));
    }
    Ok(l / LAYERS_PER_STAGE + delta_safe.floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Xavier-uniform weights scaled by `gain`, zero biases.
    Xavier { gain: f64 },
    /// Xavier (gain 1) first conv, zero second conv: every block starts as identity.
    ZeroResidual,
    /// All zeros; forward is the identity.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub kind: BlockKind,
    pub channels: usize,
    pub kernel: usize,
    /// Forward layer budget.
    pub l: usize,
    pub epsilon: usize,
    /// Explicit CRB* skip coefficients; overrides `epsilon` when set.
    pub coefficients: Option<Vec<f64>>,
    pub delta_safe: f64,
    pub init: InitScheme,
}

impl BlockConfig {
    pub fn new(kind: BlockKind, channels: usize) -> Self {
        let (l, epsilon) = match kind {
            BlockKind::Rb => (4, 1),
            _ => (8, 2),
        };
        Self {
            kind,
            channels,
            kernel: 3,
            l,
            epsilon,
            coefficients: None,
            delta_safe: 0.0,
            init: InitScheme::ZeroResidual,
        }
    }

    pub fn crb_star(channels: usize, l: usize, epsilon: usize) -> Self {
        Self {
            l,
            epsilon,
            ..Self::new(BlockKind::CrbStar, channels)
        }
    }

    pub fn with_init(mut self, init: InitScheme) -> Self {
        self.init = init;
        self
    }

    pub fn topology(&self) -> Result<Topology, BlockError> {
        if self.channels == 0 || self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(BlockError::BadShape);
        }
        if !(self.delta_safe.is_finite() && self.delta_safe >= 0.0) {
            return Err(BlockError::BadDeltaSafe(self.delta_safe));
        }
        match self.kind {
            BlockKind::Rb if self.l != 4 || self.epsilon != 1 || self.coefficients.is_some() => Err(BlockError::KindMismatch {
                kind: "RB",
                what: format!("l = 4 and epsilon = 1, got l = {}, epsilon = {}", self.l, self.epsilon),
            }),
            BlockKind::Crb | BlockKind::Dcrb if self.l != 8 || self.epsilon != 2 || self.coefficients.is_some() => {
                Err(BlockError::KindMismatch {
                    kind: self.kind.name(),
                    what: format!("l = 8 and epsilon = 2, got l = {}, epsilon = {}", self.l, self.epsilon),
                })
            }
            _ => match &self.coefficients {
                Some(c) => Topology::with_coefficients(self.l, c.clone()),
                None => Topology::from_l_epsilon(self.l, self.epsilon),
            },
        }
    }

    pub fn depthwise(&self) -> bool {
        self.kind == BlockKind::Dcrb
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockInstance {
    pub kind: BlockKind,
    pub topology: Topology,
    pub depthwise: bool,
    pub channels: usize,
    pub kernel: usize,
    /// `conv1.weight, conv1.bias, conv2.weight, conv2.bias`.
    pub params: Vec<Parameter>,
}

fn weight_shape(channels: usize, kernel: usize, depthwise: bool) -> [usize; 4] {
    [channels, if depthwise { 1 } else { channels }, kernel, kernel]
}

pub fn build_block(config: &BlockConfig, seed: u64) -> Result<BlockInstance, BlockError> {
    build_labelled(config, seed, "block")
}

/// Builds a block whose parameter labels start with `prefix`.
pub fn build_labelled(config: &BlockConfig, seed: u64, prefix: &str) -> Result<BlockInstance, BlockError> {
    let topology = config.topology()?;
    let depthwise = config.depthwise();
    let (c, k) = (config.channels, config.kernel);
    let shape = weight_shape(c, k, depthwise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w1, w2) = match config.init {
        InitScheme::Xavier { gain } => {
            let w1 = xavier_uniform(&shape, gain, &mut rng);
            (w1, xavier_uniform(&shape, gain, &mut rng))
        }
        InitScheme::ZeroResidual => (xavier_uniform(&shape, 1.0, &mut rng), Tensor::zeros(&shape)),
        InitScheme::Zero => (Tensor::zeros(&shape), Tensor::zeros(&shape)),
    };
    let params = vec![
        Parameter::new(format!("{prefix}.conv1.weight"), w1),
        Parameter::new(format!("{prefix}.conv1.bias"), Tensor::zeros(&[c])),
        Parameter::new(format!("{prefix}.conv2.weight"), w2),
        Parameter::new(format!("{prefix}.conv2.bias"), Tensor::zeros(&[c])),
    ];
    Ok(BlockInstance {
        kind: config.kind,
        topology,
        depthwise,
        channels: c,
        kernel: k,
        params,
    })
}

/// CRB* with explicit skip coefficients `c_1..c_{l/4−1}`.
pub fn build_generalized_crb(l: usize, coefficients: Vec<f64>, channels: usize, init: InitScheme, seed: u64) -> Result<BlockInstance, BlockError> {
    let config = BlockConfig {
        coefficients: Some(coefficients),
        ..BlockConfig::crb_star(channels, l, 1)
    }
    .with_init(init);
    build_block(&config, seed)
}

impl BlockInstance {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    /// Graph view: shared convolutions appear once, later stages reuse them.
    pub fn layer_graph(&self) -> LayerGraph {
        let (c, k) = (self.channels, self.kernel);
        let conv = || {
            if self.depthwise {
                LayerSpec::depthwise(c, k, k, true)
            } else {
                LayerSpec::conv2d(c, c, k, k, true)
            }
        };
        let mut layers = Vec::new();
        for &stages in &self.topology.units {
            for s in 0..stages {
                let first = layers.is_empty();
                layers.push(if first { conv() } else { conv().reusing(0) });
                layers.push(LayerSpec::relu(c));
                layers.push(if first { conv() } else { conv().reusing(2) });
                layers.push(if s + 1 < stages { LayerSpec::relu(c) } else { LayerSpec::add(c) });
            }
        }
        let nested = u32::from(self.depthwise);
        LayerGraph::new(layers, nested, c as u32)
    }

    /// Registers the parameters on `tape`, in `params` order.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone(), requires_grad)).collect()
    }

    fn residual_branch(&self, tape: &mut Tape, y: Var, p: &[Var]) -> Result<Var, TensorError> {
        let conv = |tape: &mut Tape, x, w, b| {
            if self.depthwise {
                tape.depthwise_conv2d(x, w, Some(b), Padding::Same)
            } else {
                tape.conv2d(x, w, Some(b), Padding::Same)
            }
        };
        let h = conv(tape, y, p[0], p[1])?;
        let h = tape.relu(h);
        conv(tape, h, p[2], p[3])
    }

    /// Block forward on the tape; `bound` comes from [`BlockInstance::bind`].
    pub fn forward(&self, tape: &mut Tape, x: Var, bound: &[Var]) -> Result<Var, TensorError> {
        let mut y = x;
        for (u, &stages) in self.topology.units.iter().enumerate() {
            let mut f = self.residual_branch(tape, y, bound)?;
            for _ in 1..stages {
                let joined = tape.relu(f);
                f = self.residual_branch(tape, joined, bound)?;
            }
            y = tape.add(y, f)?;
            if u > 0 {
                let c = self.topology.coefficients[u - 1];
                if c != 0.0 {
                    y = tape.scaled_add(y, x, c)?;
                }
            }
        }
        Ok(y)
    }

    /// Gradient-free forward pass.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.leaf(x.clone(), false);
        let y = self.forward(&mut tape, xv, &bound)?;
        Ok(tape.value(y).clone())
    }
}

/// A stage map of the linear harness.
#[derive(Debug, Clone, PartialEq)]
pub enum StageMap {
    Linear(DMatrix<f64>),
    Relu,
}

impl StageMap {
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            StageMap::Linear(w) => w * v,
            StageMap::Relu => v.map(|x| x.max(0.0)),
        }
    }
}

/// Vector-valued CRB* with per-stage maps, for exact Jacobian checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHarness {
    pub dim: usize,
    /// Stage maps of each unit, applied first to last.
    pub units: Vec<Vec<StageMap>>,
    pub coefficients: Vec<f64>,
}

impl LinearHarness {
    /// One linear map per stage, taken from `maps` in order.
    pub fn from_topology(topology: &Topology, maps: Vec<DMatrix<f64>>) -> Result<Self, BlockError> {
        if maps.len() != topology.stages() {
            return Err(BlockError::Harness(format!("{} maps for {} stages", maps.len(), topology.stages())));
        }
        let dim = maps.first().map_or(0, |m| m.nrows());
        if maps.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(BlockError::Harness(format!("stage maps must all be {dim}x{dim}")));
        }
        let mut it = maps.into_iter();
        let units = topology
            .units
            .iter()
            .map(|&n| it.by_ref().take(n).map(StageMap::Linear).collect())
            .collect();
        Ok(Self {
            dim,
            units,
            coefficients: topology.coefficients.clone(),
        })
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for (u, maps) in self.units.iter().enumerate() {
            let f = maps.iter().fold(y.clone(), |acc, m| m.apply(&acc));
            y += f;
            if u > 0 {
                y += x * self.coefficients[u - 1];
            }
        }
        y
    }

    /// Input Jacobian via `D_1 = E + F_1'`, `D_k = (E + F_k')·D_{k−1} + c_{k−1}·E`.
    pub fn jacobian_closed_form(&self) -> Result<DMatrix<f64>, BlockError> {
        let eye = DMatrix::<f64>::identity(self.dim, self.dim);
        let mut d = eye.clone();
        for (u, maps) in self.units.iter().enumerate() {
            let mut fprime = eye.clone();
            for m in maps {
                match m {
                    StageMap::Linear(w) => fprime = w * fprime,
                    StageMap::Relu => {
                        return Err(BlockError::Harness("closed form is defined for linear stages only".into()));
                    }
                }
            }
            d = (&eye + fprime) * d;
            if u > 0 {
                d += &eye * self.coefficients[u - 1];
            }
        }
        Ok(d)
    }

    /// Central-difference Jacobian of [`LinearHarness::forward`] at `x`.
    pub fn jacobian_finite_difference(&self, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim, self.dim);
        for col in 0..self.dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let diff = (self.forward(&xp) - self.forward(&xm)) / (2.0 * h);
            j.set_column(col, &diff);
        }
        j
    }
}

/// Closed-form block Jacobian of a linear harness.
pub fn block_jacobian_closed_form(harness: &LinearHarness) -> Result<DMatrix<f64>, BlockError> {
    harness.jacobian_closed_form()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{count_forward_layers, count_parameters, golden_graph};

    #[test]
    fn parameter_counts_at_64_channels() {
        let rb = build_block(&BlockConfig::new(BlockKind::Rb, 64), 1).unwrap();
        let crb = build_block(&BlockConfig::new(BlockKind::Crb, 64), 1).unwrap();
        let dcrb = build_block(&BlockConfig::new(BlockKind::Dcrb, 64), 1).unwrap();
        assert_eq!(rb.parameter_count(), 73_856);
        assert_eq!(crb.parameter_count(), 73_856);
        assert_eq!(dcrb.parameter_count(), 1_280);
    }

    #[test]
    fn graphs_agree_with_instances_and_corpus() {
        for (kind, name) in [(BlockKind::Rb, "RB"), (BlockKind::Crb, "CRB"), (BlockKind::Dcrb, "DCRB")] {
            let b = build_block(&BlockConfig::new(kind, 64), 0).unwrap();
            let g = b.layer_graph();
            assert_eq!(count_parameters(&g).unwrap() as usize, b.parameter_count());
            let golden = golden_graph(name).unwrap();
            assert_eq!(g.layers, golden.layers, "{name}");
            assert_eq!(count_forward_layers(&g), b.topology.layers());
        }
    }

    #[test]
    fn zero_init_is_identity() {
        let b = build_block(&BlockConfig::new(BlockKind::Crb, 3).with_init(InitScheme::Zero), 5).unwrap();
        let x = Tensor::from_fn(&[1, 3, 4, 4], |i| (i as f64 * 0.37).sin());
        assert_eq!(b.forward_tensor(&x).unwrap(), x);
    }

    #[test]
    fn epsilon_bounds() {
        assert_eq!(epsilon_bound(8, 0.0).unwrap(), 2);
        assert_eq!(epsilon_bound(12, 0.0).unwrap(), 3);
        assert_eq!(epsilon_bound(16, 0.0).unwrap(), 4);
        assert_eq!(epsilon_bound(16, 1.7).unwrap(), 5);
        assert!(epsilon_bound(3, 0.0).is_err());
        assert!(epsilon_bound(8, -1.0).is_err());
    }

    #[test]
    fn topologies() {
        let t = Topology::from_l_epsilon(16, 3).unwrap();
        assert_eq!(t.units, vec![2, 1, 1]);
        assert_eq!(t.coefficients, vec![0.0, 0.0]);
        let t = Topology::from_l_epsilon(8, 3).unwrap();
        assert_eq!(t.units, vec![1, 1]);
        assert_eq!(t.coefficients, vec![1.0]);
        assert!(!t.is_admissible(0.0));
        let t = Topology::from_l_epsilon(12, 6).unwrap();
        assert_eq!(t.coefficients, vec![2.0, 1.0]);
        assert_eq!(t.residual_count(), 6.0);
        assert!(Topology::from_l_epsilon(16, 4).unwrap().is_admissible(0.0));
        assert!(matches!(Topology::from_l_epsilon(4, 2), Err(BlockError::NoSkipSlots { .. })));
        assert!(matches!(Topology::from_l_epsilon(10, 1), Err(BlockError::BadLayerBudget(10))));
        assert!(matches!(
            Topology::with_coefficients(12, vec![1.0]),
            Err(BlockError::CoefficientLength { need: 2, got: 1, .. })
        ));
    }

    #[test]
    fn epsilon_bound_matches_admissibility() {
        for l in [4, 8, 12, 16, 20] {
            for eps in 1..=7 {
                let Ok(t) = Topology::from_l_epsilon(l, eps) else { continue };
                assert_eq!(t.is_admissible(0.0), eps <= epsilon_bound(l, 0.0).unwrap(), "l={l} eps={eps}");
            }
        }
    }

    #[test]
    fn kind_consistency_is_checked() {
        let mut cfg = BlockConfig::new(BlockKind::Crb, 8);
        cfg.epsilon = 3;
        assert!(matches!(build_block(&cfg, 0), Err(BlockError::KindMismatch { .. })));
        assert!("transformer".parse::<BlockKind>().unwrap_err().contains("rb, crb"));
    }

    #[test]
    fn generalized_with_zero_coefficient_is_crb() {
        let x = Tensor::from_fn(&[2, 3, 5, 5], |i| ((i * 7 % 11) as f64 - 5.0) / 5.0);
        let init = InitScheme::Xavier { gain: 0.5 };
        let crb = build_block(&BlockConfig::new(BlockKind::Crb, 3).with_init(init), 9).unwrap();
        let star = build_generalized_crb(8, vec![0.0], 3, init, 9).unwrap();
        assert_eq!(crb.forward_tensor(&x).unwrap(), star.forward_tensor(&x).unwrap());
    }

    #[test]
    fn scalar_two_stage_jacobian() {
        let w = 0.3;
        let t = Topology::from_l_epsilon(8, 2).unwrap();
        let h = LinearHarness::from_topology(&t, vec![DMatrix::from_element(1, 1, w); 2]).unwrap();
        let j = h.jacobian_closed_form().unwrap();
        assert!((j[(0, 0)] - (1.0 + w) * (1.0 + w)).abs() < 1e-15);

        let single = LinearHarness::from_topology(&Topology::from_l_epsilon(4, 1).unwrap(), vec![DMatrix::zeros(3, 3)]).unwrap();
        assert_eq!(single.jacobian_closed_form().unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn relu_stage_is_rejected_by_closed_form() {
        let h = LinearHarness {
            dim: 2,
            units: vec![vec![StageMap::Relu]],
            coefficients: vec![],
        };
        assert!(block_jacobian_closed_form(&h).is_err());
    }
}
