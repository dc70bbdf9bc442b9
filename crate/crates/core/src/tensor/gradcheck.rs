use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error per input, in input order.
    pub max_rel_error: Vec<f64>,
    pub max_abs_error: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-3;

/// Magnitudes below this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

/// Checks the gradient of the scalar function built by `f` at `inputs`.
///
/// `f` receives a fresh `f64` tape and one leaf per input and must return a
/// scalar. Analytic gradients come from a single backward pass; numeric ones
/// from `(f(x + h) - f(x - h)) / 2h` per element. The relative error of an
/// element is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    grad_check_step(f, inputs, tol, FD_STEP)
}

/// [`grad_check`] with an explicit difference step.
pub fn grad_check_step<F>(f: F, inputs: &[Tensor<f64>], tol: f64, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x)).collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).numel() != 1 {
            return Err(Error::shape("grad_check function must return a scalar"));
        }
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel_error = Vec::with_capacity(inputs.len());
    let mut max_abs_error = Vec::with_capacity(inputs.len());
    for (i, &v) in vars.iter().enumerate() {
        let zero = Tensor::zeros(inputs[i].shape());
        let analytic = grads.get(v).unwrap_or(&zero);
        let (mut worst_rel, mut worst_abs) = (0.0f64, 0.0f64);
        for j in 0..inputs[i].numel() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + step;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x0 - step;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst_rel = worst_rel.max(rel);
            worst_abs = worst_abs.max(abs);
        }
        max_rel_error.push(worst_rel);
        max_abs_error.push(worst_abs);
    }
    let passed = max_rel_error.iter().all(|&e| e <= tol);
    Ok(GradCheckReport {
        max_rel_error,
        max_abs_error,
        tolerance: tol,
        passed,
    })
}
