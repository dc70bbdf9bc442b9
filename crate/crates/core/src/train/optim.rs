//! SGD, Adam and global-norm clipping over parameter lists in canonical
//! order (see [`ModelParams::names`]).

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

const STATE_PREFIX: &str = "optim.";

/// Optimizer state saved alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    /// First and second moments, one per parameter; empty for SGD.
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub step: u64,
    pub lr: f64,
}

impl OptimState {
    pub fn sgd() -> Self {
        OptimState {
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
            lr: 0.0,
        }
    }

    pub fn adam(params: &[&Tensor<f32>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        OptimState {
            m: zeros(),
            v: zeros(),
            step: 0,
            lr: 0.0,
        }
    }

    /// Checkpoint records: `optim.step`, `optim.lr`, and per parameter
    /// `optim.m/<name>`, `optim.v/<name>`.
    pub fn to_records(&self, names: &[String]) -> Vec<(String, Tensor<f32>)> {
        // u64 step split into two exactly representable halves.
        let step = Tensor::from_vec(vec![
            (self.step >> 24) as f32,
            (self.step & 0xff_ffff) as f32,
        ]);
        let mut out = vec![
            (format!("{STATE_PREFIX}step"), step),
            (format!("{STATE_PREFIX}lr"), Tensor::scalar(self.lr as f32)),
        ];
        for (name, (m, v)) in names.iter().zip(self.m.iter().zip(&self.v)) {
            out.push((format!("{STATE_PREFIX}m/{name}"), m.clone()));
            out.push((format!("{STATE_PREFIX}v/{name}"), v.clone()));
        }
        out
    }

    /// Inverse of [`to_records`](Self::to_records); `None` when the records
    /// hold no optimizer state.
    pub fn from_records(records: &[(String, Tensor<f32>)], names: &[String]) -> Result<Option<Self>> {
        let find = |key: &str| records.iter().find(|(n, _)| n == key).map(|(_, t)| t);
        let Some(step) = find(&format!("{STATE_PREFIX}step")) else {
            return Ok(None);
        };
        let missing = |key: &str| Error::Checkpoint(format!("missing optimizer record `{key}`"));
        let lr_key = format!("{STATE_PREFIX}lr");
        let lr = find(&lr_key).ok_or_else(|| missing(&lr_key))?.data()[0] as f64;
        let s = step.data();
        if s.len() != 2 {
            return Err(Error::Checkpoint("malformed `optim.step`".into()));
        }
        let step = ((s[0] as u64) << 24) | s[1] as u64;
        let mut state = OptimState {
            m: Vec::new(),
            v: Vec::new(),
            step,
            lr,
        };
        if find(&format!("{STATE_PREFIX}m/{}", names[0])).is_some() {
            for name in names {
                for (buf, kind) in [(&mut state.m, "m"), (&mut state.v, "v")] {
                    let key = format!("{STATE_PREFIX}{kind}/{name}");
                    buf.push(find(&key).ok_or_else(|| missing(&key))?.clone());
                }
            }
        }
        Ok(Some(state))
    }
}

fn check(params: &[&mut Tensor<f32>], grads: &[Tensor<f32>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} parameters vs {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(format!(
                "parameter {i}: shape {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if let Some(j) = g.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {i} has {} at element {j}",
                g.data()[j]
            )));
        }
    }
    Ok(())
}

/// `p <- p - lr * g`.
pub fn sgd_step(params: &mut [&mut Tensor<f32>], grads: &[Tensor<f32>], lr: f64) -> Result<()> {
    check(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (x, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *x = (*x as f64 - lr * d as f64) as f32;
        }
    }
    Ok(())
}

/// Bias-corrected Adam with the standard constants.
pub fn adam_step(
    params: &mut [&mut Tensor<f32>],
    grads: &[Tensor<f32>],
    state: &mut OptimState,
    lr: f64,
) -> Result<()> {
    check(params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::shape("optimizer state does not match the parameters"));
    }
    state.step += 1;
    state.lr = lr;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i] as f64;
            let mi = ADAM_BETA1 * m[i] as f64 + (1.0 - ADAM_BETA1) * gi;
            let vi = ADAM_BETA2 * v[i] as f64 + (1.0 - ADAM_BETA2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS);
            p[i] = (p[i] as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Global L2 norm of all gradients.
pub fn global_norm(grads: &[Tensor<f32>]) -> f64 {
    grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let c = (max_norm / norm) as f32;
        for g in grads.iter_mut() {
            g.scale_assign(c);
        }
    }
    norm
}

/// Zero gradients shaped like `params`.
pub fn zero_grads(params: &ModelParams) -> Vec<Tensor<f32>> {
    params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect()
}
