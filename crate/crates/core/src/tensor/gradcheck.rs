//! Central-difference validation of tape gradients.

use super::{Tape, Tensor, TensorError, Var};

/// Finite-difference step used by the built-in checks.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `‖analytic − numeric‖_∞ / max(‖numeric‖_∞, 1e-8)` for each input.
    pub relative_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares backward-pass gradients of a scalar program with central
/// differences, perturbing every element of every input.
///
/// `build` receives one leaf per input (all requiring gradients) and returns
/// the scalar output.
pub fn gradcheck<F>(inputs: &[Tensor], step: f64, build: F) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.numel() != 1 {
            return Err(TensorError::NotScalar(v.shape().to_vec()));
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, (input, &var)) in inputs.iter().zip(&vars).enumerate() {
        let analytic = grads.get_or_zeros(var, input.shape());
        let mut numeric = Tensor::zeros(input.shape());
        for j in 0..input.numel() {
            let x0 = input.data()[j];
            work[i].data_mut()[j] = x0 + step;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x0 - step;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x0;
            numeric.data_mut()[j] = (up - down) / (2.0 * step);
        }
        let scale = numeric.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        relative_errors.push(analytic.max_abs_diff(&numeric) / scale);
    }
    Ok(GradCheck { relative_errors })
}
