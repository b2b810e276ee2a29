//! Numeric checks of the gradient theory behind CRB.
//!
//! * spectral gain of commuting SPD pairs: `‖(E+A)(E+B)‖₂ > ‖E+A‖₂`;
//! * the CRB* Jacobian recurrence against finite differences, and the
//!   interval `1+Σ|c_j| < ‖J‖₂ < 2+Σ|c_j|` for small stage maps;
//! * the ε experiment: cascades of CRB* trained past the admissible residual
//!   count, with first-conv gradient traces.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::blocks::{BlockConfig, BlockError, LinearHarness, Topology};
use crate::harness::{train, Cascade, HarnessError, SrSample, ToySetup, TrainConfig};
use crate::tensor::linalg::{spectral_norm, SpectralNormOptions};

pub use crate::harness::GradientTrace;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("eigenvalue range ({lo}, {hi}) must satisfy 0 < lo < hi < ∞")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("invalid SPD pair: {0}")]
    InvalidPair(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Independent per-trial seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `A = Q diag(α) Qᵀ`, `B = Q diag(β) Qᵀ` with a shared orthogonal `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdPair {
    pub q: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SpdPair {
    /// Assembles and validates a pair from its eigen-decomposition.
    pub fn from_parts(q: DMatrix<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, LabError> {
        let d = q.nrows();
        if d == 0 {
            return Err(LabError::ZeroDimension);
        }
        if q.ncols() != d || alpha.len() != d || beta.len() != d {
            return Err(LabError::InvalidPair(format!(
                "Q is {}x{}, {} alphas, {} betas",
                q.nrows(),
                q.ncols(),
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.iter().chain(&beta).any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(LabError::InvalidPair("eigenvalues must be finite and strictly positive".into()));
        }
        let orth = (q.transpose() * &q - DMatrix::identity(d, d)).amax();
        if orth > 1e-10 {
            return Err(LabError::InvalidPair(format!("Q is not orthogonal (‖QᵀQ − E‖_max = {orth:e})")));
        }
        let assemble = |ev: &[f64]| {
            let m = &q * DMatrix::from_diagonal(&DVector::from_column_slice(ev)) * q.transpose();
            // exact symmetry
            (&m + m.transpose()) * 0.5
        };
        let (a, b) = (assemble(&alpha), assemble(&beta));
        Ok(Self { q, alpha, beta, a, b })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// `‖AB − BA‖_max`.
    pub fn commutator(&self) -> f64 {
        (&self.a * &self.b - &self.b * &self.a).amax()
    }
}

/// Seeded commuting SPD pair with eigenvalues uniform in `[lo, hi)`.
pub fn sample_spd_commuting_pair(d: usize, seed: u64, range: (f64, f64)) -> Result<SpdPair, LabError> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(LabError::DegenerateRange { lo, hi });
    }
    if d == 0 {
        return Err(LabError::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = gaussian_matrix(d, d, &mut rng).qr().q();
    let mut eig = || (0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
    let alpha = eig();
    let beta = eig();
    SpdPair::from_parts(q, alpha, beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGainVerdict {
    /// Power-iteration `‖E+A‖₂`.
    pub norm_a: f64,
    /// Power-iteration `‖(E+A)(E+B)‖₂`.
    pub norm_ab: f64,
    /// `max_i(1+α_i)`.
    pub closed_a: f64,
    /// `max_i (1+α_i)(1+β_i)`.
    pub closed_ab: f64,
    /// Strict inequality on the power-iteration norms.
    pub holds: bool,
    /// Largest |power iteration − closed form|.
    pub closed_form_error: f64,
    pub converged: bool,
}

impl SpectralGainVerdict {
    /// Closed-form gain `‖(E+A)(E+B)‖₂ / ‖E+A‖₂`.
    pub fn gain_ratio(&self) -> f64 {
        self.closed_ab / self.closed_a
    }
}

pub const CLOSED_FORM_TOLERANCE: f64 = 1e-8;

pub fn verify_spectral_gain(pair: &SpdPair) -> SpectralGainVerdict {
    let eye = DMatrix::<f64>::identity(pair.dim(), pair.dim());
    let ea = &eye + &pair.a;
    let eab = &ea * (&eye + &pair.b);
    let opts = SpectralNormOptions { tol: 1e-13, ..Default::default() };
    let (na, nab) = (spectral_norm(&ea, opts), spectral_norm(&eab, opts));
    let closed_a = pair.alpha.iter().map(|a| 1.0 + a).fold(f64::NEG_INFINITY, f64::max);
    let closed_ab = pair
        .alpha
        .iter()
        .zip(&pair.beta)
        .map(|(a, b)| (1.0 + a) * (1.0 + b))
        .fold(f64::NEG_INFINITY, f64::max);
    SpectralGainVerdict {
        norm_a: na.value,
        norm_ab: nab.value,
        closed_a,
        closed_ab,
        holds: nab.value > na.value,
        closed_form_error: (na.value - closed_a).abs().max((nab.value - closed_ab).abs()),
        converged: na.converged && nab.converged,
    }
}

/// A pair that violated the strict gain or the closed-form agreement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFailure {
    pub trial: usize,
    pub seed: u64,
    pub pair: SpdPair,
    pub verdict: SpectralGainVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSweep {
    pub trials: usize,
    pub strict_failures: usize,
    pub closed_form_failures: usize,
    pub max_closed_form_error: f64,
    /// Smallest `‖(E+A)(E+B)‖₂ − ‖E+A‖₂` observed.
    pub min_margin: f64,
    pub failures: Vec<SpectralFailure>,
}

impl SpectralSweep {
    pub fn passed(&self) -> bool {
        self.strict_failures == 0 && self.closed_form_failures == 0
    }
}

/// `trials` pairs with dimensions cycling through `dims`, checked in parallel.
pub fn spectral_gain_sweep(trials: usize, dims: &[usize], range: (f64, f64), seed: u64) -> Result<SpectralSweep, LabError> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(LabError::ZeroDimension);
    }
    if trials == 0 {
        return Err(LabError::Parameter("trials must be at least 1".into()));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let trial_seed = derive_seed(seed, i as u64);
            let pair = sample_spd_commuting_pair(dims[i % dims.len()], trial_seed, range)?;
            let verdict = verify_spectral_gain(&pair);
            Ok((i, trial_seed, pair, verdict))
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let closed_ok = |v: &SpectralGainVerdict| v.closed_form_error <= CLOSED_FORM_TOLERANCE;
    let verdicts: Vec<SpectralGainVerdict> = results.iter().map(|r| r.3).collect();
    Ok(SpectralSweep {
        trials,
        strict_failures: verdicts.iter().filter(|v| !v.holds).count(),
        closed_form_failures: verdicts.iter().filter(|v| !closed_ok(v)).count(),
        max_closed_form_error: verdicts.iter().map(|v| v.closed_form_error).fold(0.0, f64::max),
        min_margin: verdicts.iter().map(|v| v.norm_ab - v.norm_a).fold(f64::INFINITY, f64::min),
        failures: results
            .into_iter()
            .filter(|r| !r.3.holds || !closed_ok(&r.3))
            .map(|(trial, seed, pair, verdict)| SpectralFailure { trial, seed, pair, verdict })
            .collect(),
    })
}

/// Random `d×d` maps with spectral norm exactly `norm`, one per stage.
fn stage_maps(stages: usize, d: usize, norm: f64, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
    (0..stages)
        .map(|_| {
            let g = gaussian_matrix(d, d, rng);
            let s = spectral_norm(&g, SpectralNormOptions::default()).value;
            g * (norm / s)
        })
        .collect()
}

/// Agreement tolerance between closed-form and finite-difference Jacobians.
pub const JACOBIAN_TOLERANCE: f64 = 1e-6;

/// One `(d, l, ε, seed)` case of the recurrence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceCase {
    pub d: usize,
    pub l: usize,
    pub epsilon: usize,
    pub seed: u64,
    pub error: f64,
    pub closed: DMatrix<f64>,
    pub finite_difference: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceSweep {
    pub cases: usize,
    /// Largest `max|J_closed − J_fd|` over all cases.
    pub max_error: f64,
    /// Cases above [`JACOBIAN_TOLERANCE`].
    pub failures: Vec<RecurrenceCase>,
}

impl RecurrenceSweep {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Closed-form Jacobian of linear CRB* versus central differences over every
/// `(d, l, ε, seed)` combination. Stage maps have spectral norm 0.5.
pub fn jacobian_recurrence_sweep(dims: &[usize], layer_budgets: &[usize], epsilons: &[usize], seeds: u64, base_seed: u64) -> Result<RecurrenceSweep, LabError> {
    if seeds == 0 {
        return Err(LabError::Parameter("trials must be at least 1".into()));
    }
    if dims.contains(&0) {
        return Err(LabError::ZeroDimension);
    }
    let mut jobs = Vec::new();
    for &d in dims {
        for &l in layer_budgets {
            for &e in epsilons {
                for s in 0..seeds {
                    jobs.push((d, l, e, derive_seed(base_seed, jobs.len() as u64), s));
                }
            }
        }
    }
    let cases = jobs
        .par_iter()
        .map(|&(d, l, epsilon, seed, _)| {
            let topo = Topology::from_l_epsilon(l, epsilon)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let harness = LinearHarness::from_topology(&topo, stage_maps(topo.stages(), d, 0.5, &mut rng))?;
            let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let closed = harness.jacobian_closed_form()?;
            let finite_difference = harness.jacobian_finite_difference(&x, 1e-3);
            Ok(RecurrenceCase {
                d,
                l,
                epsilon,
                seed,
                error: (&closed - &finite_difference).amax(),
                closed,
                finite_difference,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    Ok(RecurrenceSweep {
        cases: cases.len(),
        max_error: cases.iter().map(|c| c.error).fold(0.0, f64::max),
        failures: cases.into_iter().filter(|c| c.error.is_nan() || c.error > JACOBIAN_TOLERANCE).collect(),
    })
}

/// Eigenvalue range of the sampled SPD pairs.
pub const DEFAULT_EIGEN_RANGE: (f64, f64) = (0.01, 2.0);

/// Dimension of the linear harness used for interval checks.
pub const INTERVAL_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBoundReport {
    pub lower: f64,
    pub upper: f64,
    /// `‖J‖₂` of each trial.
    pub norms: Vec<f64>,
    pub inside: Vec<bool>,
    /// Some trial sits exactly on the lower bound (zero stage maps).
    pub boundary: bool,
}

impl JacobianBoundReport {
    pub fn membership_rate(&self) -> f64 {
        self.inside.iter().filter(|&&b| b).count() as f64 / self.inside.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.norms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.norms.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tests `1+Σ|c_j| < ‖J‖₂ < 2+Σ|c_j|` on linear CRB* with one stage per unit
/// and stage maps `W = η·u·G/‖G‖₂`, `u ~ U(0, 1]`, `G` Gaussian.
pub fn verify_jacobian_bounds(l: usize, coefficients: &[f64], eta: f64, trials: usize, seed: u64) -> Result<JacobianBoundReport, LabError> {
    if !(0.0..1.0).contains(&eta) {
        return Err(LabError::Parameter(format!("eta must lie in [0, 1), got {eta}")));
    }
    if trials == 0 {
        return Err(LabError::Parameter("trials must be at least 1".into()));
    }
    let topo = Topology::with_coefficients(l, coefficients.to_vec())?;
    let mass = topo.coefficient_mass();
    let (lower, upper) = (1.0 + mass, 2.0 + mass);
    let norms = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let maps = (0..topo.stages())
                .map(|_| {
                    let u = 1.0 - rng.random::<f64>();
                    let g = gaussian_matrix(INTERVAL_DIM, INTERVAL_DIM, &mut rng);
                    let s = spectral_norm(&g, SpectralNormOptions::default()).value;
                    g * (eta * u / s)
                })
                .collect();
            let j = LinearHarness::from_topology(&topo, maps)?.jacobian_closed_form()?;
            Ok(spectral_norm(&j, SpectralNormOptions::default()).value)
        })
        .collect::<Result<Vec<f64>, LabError>>()?;
    let inside = norms.iter().map(|&n| n > lower && n < upper).collect();
    let boundary = norms.iter().any(|&n| (n - lower).abs() <= 1e-12 * lower);
    Ok(JacobianBoundReport {
        lower,
        upper,
        norms,
        inside,
        boundary,
    })
}

/// First-conv gradient norm of block 1 relative to block `m` at the last
/// finite epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    InputSmaller,
    InputLarger,
    Inconclusive,
}

impl Ordering {
    pub fn name(self) -> &'static str {
        match self {
            Ordering::InputSmaller => "input_smaller",
            Ordering::InputLarger => "input_larger",
            Ordering::Inconclusive => "inconclusive",
        }
    }

    pub fn of(trace: &GradientTrace) -> Ordering {
        let Some(norms) = trace.final_norms() else {
            return Ordering::Inconclusive;
        };
        let (first, last) = (norms[0], norms[norms.len() - 1]);
        if norms.len() < 2 || !first.is_finite() || !last.is_finite() || (first - last).abs() <= 1e-12 * first.abs().max(last.abs()) {
            Ordering::Inconclusive
        } else if first < last {
            Ordering::InputSmaller
        } else {
            Ordering::InputLarger
        }
    }
}

/// Toy run settings for the ε experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSetup {
    pub toy: ToySetup,
    pub delta_safe: f64,
}

impl Default for EpsilonSetup {
    fn default() -> Self {
        let mut toy = ToySetup::default();
        toy.train.epochs = 30;
        Self { toy, delta_safe: 0.0 }
    }
}

/// Trains an `m`-block cascade and returns its gradient trace (truncated and
/// flagged on divergence).
pub fn trace_gradients(cascade: &mut Cascade, data: &[SrSample], epochs: usize, seed: u64) -> Result<GradientTrace, LabError> {
    if cascade.blocks.len() < 2 {
        return Err(LabError::Parameter("gradient tracing needs at least two blocks".into()));
    }
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    Ok(train(cascade, data, &cfg)?.trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonExperimentOutcome {
    pub l: usize,
    pub epsilon: usize,
    pub seed: u64,
    pub admissible: bool,
    /// Minimum epoch loss before any divergence; NaN if no epoch completed.
    pub min_l1: f64,
    pub non_finite: bool,
    /// Minimum loss of the `(l, l/4)` run under the same seed.
    pub baseline_min_l1: f64,
    pub diverged: bool,
    pub ordering: Ordering,
    pub history: Vec<f64>,
    pub trace: GradientTrace,
}

struct Run {
    min_l1: f64,
    non_finite: bool,
    history: Vec<f64>,
    trace: GradientTrace,
}

fn run_cascade(setup: &EpsilonSetup, l: usize, epsilon: usize, seed: u64) -> Result<Run, LabError> {
    let config = BlockConfig {
        delta_safe: setup.delta_safe,
        ..BlockConfig::crb_star(setup.toy.channels, l, epsilon)
    };
    let (out, _) = setup.toy.run(&config, seed)?;
    Ok(Run {
        min_l1: out.min_loss().unwrap_or(f64::NAN),
        non_finite: out.diverged(),
        history: out.history,
        trace: out.trace,
    })
}

fn outcome(setup: &EpsilonSetup, l: usize, epsilon: usize, seed: u64, run: Run, baseline: f64) -> Result<EpsilonExperimentOutcome, LabError> {
    let admissible = Topology::from_l_epsilon(l, epsilon)?.is_admissible(setup.delta_safe);
    let degraded = run.min_l1.is_nan() || run.min_l1 > 2.0 * baseline;
    Ok(EpsilonExperimentOutcome {
        l,
        epsilon,
        seed,
        admissible,
        min_l1: run.min_l1,
        non_finite: run.non_finite,
        baseline_min_l1: baseline,
        diverged: run.non_finite || degraded,
        ordering: Ordering::of(&run.trace),
        history: run.history,
        trace: run.trace,
    })
}

fn baseline_epsilon(l: usize) -> usize {
    (l / crate::blocks::LAYERS_PER_STAGE).max(1)
}

/// One `(l, ε)` run and its `(l, l/4)` baseline under `seed`.
pub fn run_epsilon_experiment_with(setup: &EpsilonSetup, l: usize, epsilon: usize, seed: u64) -> Result<EpsilonExperimentOutcome, LabError> {
    let base_eps = baseline_epsilon(l);
    let run = run_cascade(setup, l, epsilon, seed)?;
    let baseline = if epsilon == base_eps { run.min_l1 } else { run_cascade(setup, l, base_eps, seed)?.min_l1 };
    outcome(setup, l, epsilon, seed, run, baseline)
}

pub fn run_epsilon_experiment(l: usize, epsilon: usize, epochs: usize, seed: u64) -> Result<EpsilonExperimentOutcome, LabError> {
    let mut setup = EpsilonSetup::default();
    setup.toy.train.epochs = epochs;
    run_epsilon_experiment_with(&setup, l, epsilon, seed)
}

/// The nine `(l, ε)` rows of the ablation table.
pub const TABLE_PAIRS: [(usize, usize); 9] = [(8, 1), (8, 2), (8, 3), (12, 2), (12, 3), (12, 4), (16, 3), (16, 4), (16, 5)];

/// Every `pair × seed`, baselines shared per `(l, seed)`, runs in parallel.
/// Results come back in `pairs`-major, `seeds`-minor order.
pub fn epsilon_grid(setup: &EpsilonSetup, pairs: &[(usize, usize)], seeds: &[u64]) -> Result<Vec<EpsilonExperimentOutcome>, LabError> {
    let mut jobs: Vec<(usize, usize, u64)> = Vec::new();
    for &(l, e) in pairs {
        for &s in seeds {
            jobs.push((l, e, s));
        }
    }
    for &(l, _) in pairs {
        for &s in seeds {
            let job = (l, baseline_epsilon(l), s);
            if !jobs.contains(&job) {
                jobs.push(job);
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(l, e, s)| run_cascade(setup, l, e, s))
        .collect::<Result<Vec<Run>, LabError>>()?;
    let n = pairs.len() * seeds.len();
    let min_of = |l: usize, e: usize, s: u64| {
        let i = jobs.iter().position(|&j| j == (l, e, s)).expect("baseline job scheduled");
        runs[i].min_l1
    };
    let baselines: Vec<f64> = jobs[..n].iter().map(|&(l, _, s)| min_of(l, baseline_epsilon(l), s)).collect();
    jobs.iter()
        .zip(runs)
        .zip(baselines)
        .map(|((&(l, e, s), run), base)| outcome(setup, l, e, s, run, base))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pair_norms() {
        let pair = SpdPair::from_parts(DMatrix::identity(2, 2), vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let v = verify_spectral_gain(&pair);
        assert_eq!((v.closed_a, v.closed_ab), (3.0, 15.0));
        assert!((v.norm_a - 3.0).abs() < 1e-10 && (v.norm_ab - 15.0).abs() < 1e-10);
        assert!(v.holds);
    }

    #[test]
    fn sampled_pairs_commute() {
        let p = sample_spd_commuting_pair(6, 11, (0.1, 3.0)).unwrap();
        assert!(p.commutator() <= 1e-10);
        assert!((&p.a - p.a.transpose()).amax() <= 1e-12);
        let scalar = sample_spd_commuting_pair(1, 2, (0.1, 3.0)).unwrap();
        assert_eq!(scalar.commutator(), 0.0);
    }

    #[test]
    fn degenerate_ranges_are_rejected() {
        for r in [(0.0, 0.0), (1.0, 1.0), (-1.0, 2.0), (2.0, 1.0)] {
            assert!(matches!(sample_spd_commuting_pair(3, 0, r), Err(LabError::DegenerateRange { .. })));
        }
        assert!(sample_spd_commuting_pair(0, 0, (0.1, 1.0)).is_err());
    }

    #[test]
    fn vanishing_beta_gain_tends_to_one() {
        let base = sample_spd_commuting_pair(4, 5, (0.1, 2.0)).unwrap();
        let pair = SpdPair::from_parts(base.q.clone(), base.alpha.clone(), vec![1e-12; 4]).unwrap();
        let r = verify_spectral_gain(&pair).gain_ratio();
        assert!(r > 1.0 && r - 1.0 < 1e-11, "{r}");
    }

    #[test]
    fn zero_stage_maps_hit_the_lower_bound() {
        let r = verify_jacobian_bounds(8, &[1.0], 0.0, 3, 1).unwrap();
        assert!(r.norms.iter().all(|&n| (n - 2.0).abs() < 1e-12));
        assert!(r.boundary);
        assert_eq!(r.membership_rate(), 0.0);
    }

    #[test]
    fn small_maps_fall_inside_the_interval() {
        let r = verify_jacobian_bounds(8, &[1.0], 0.01, 50, 3).unwrap();
        assert_eq!(r.membership_rate(), 1.0);
        assert!(!r.boundary);
        assert!(verify_jacobian_bounds(8, &[1.0], 1.0, 5, 3).is_err());
        assert!(verify_jacobian_bounds(8, &[1.0, 2.0], 0.01, 5, 3).is_err());
    }

    #[test]
    fn recurrence_matches_finite_differences() {
        let s = jacobian_recurrence_sweep(&[1, 3], &[8, 12], &[1, 3, 5], 2, 9).unwrap();
        assert_eq!(s.cases, 24);
        assert!(s.max_error <= 1e-6, "{}", s.max_error);
    }

    #[test]
    fn ordering_from_trace() {
        let mut t = GradientTrace {
            cells: vec![vec![1.0, 0.5], vec![9.0, 2.0]],
            diverged_at: None,
        };
        assert_eq!(Ordering::of(&t), Ordering::InputSmaller);
        t.cells[0][1] = 3.0;
        assert_eq!(Ordering::of(&t), Ordering::InputLarger);
        t.cells = vec![vec![], vec![]];
        assert_eq!(Ordering::of(&t), Ordering::Inconclusive);
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
