use crate::error::Result;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Mean binary cross-entropy; scores are clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let mut tape = Tape::<f64>::new();
    let s = tape.input(Tensor::from_vec(scores.to_vec()));
    let l = tape.bce(s, labels)?;
    Ok(tape.value(l).item())
}

/// Contrastive objective on tape values: the negative log of the softmax
/// weight that `sim(x, x+) / tau` receives against every `sim(x, x-_j) / tau`,
/// with cosine similarity.
pub fn contrastive_on_tape<S: Scalar>(
    tape: &mut Tape<'_, S>,
    anchor: Var,
    positive: Var,
    negatives: &[Var],
    tau: S,
) -> Result<Var> {
    let mut sims = Vec::with_capacity(negatives.len() + 1);
    sims.push(tape.cosine(anchor, positive)?);
    for &n in negatives {
        sims.push(tape.cosine(anchor, n)?);
    }
    let logits = tape.stack(&sims)?;
    tape.info_nce(logits, tau)
}

/// Value of [`contrastive_on_tape`] for plain vectors.
pub fn contrastive_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    tau: f64,
) -> Result<f64> {
    let mut tape = Tape::<f64>::new();
    let a = tape.input(Tensor::from_vec(anchor.to_vec()));
    let p = tape.input(Tensor::from_vec(positive.to_vec()));
    let n: Vec<Var> = negatives
        .iter()
        .map(|x| tape.input(Tensor::from_vec(x.clone())))
        .collect();
    let l = contrastive_on_tape(&mut tape, a, p, &n, tau)?;
    Ok(tape.value(l).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn bce_cases() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&[0.5], &[0.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        let v = bce_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
        assert!((v - 0.105_360_515_657_826_3).abs() < 1e-12, "{v}");
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() < 1e-6);
        assert!(bce_loss(&[0.0], &[1.0]).unwrap().is_finite());
    }

    #[test]
    fn contrastive_closed_forms() {
        let a = vec![1.0, 2.0, -1.0];
        assert!(contrastive_loss(&a, &a, &[], 0.007).unwrap().abs() < 1e-12);
        let negs = vec![a.clone(), a.clone(), a.clone()];
        let v = contrastive_loss(&a, &a, &negs, 0.007).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-9, "{v}");
        let x = vec![1.0, 0.0];
        let v = contrastive_loss(&x, &[2.0, 0.0], &[vec![0.0, 1.0]], 0.007).unwrap();
        assert!(v < 1e-12, "{v}");
        assert!(matches!(
            contrastive_loss(&[0.0, 0.0], &x, &[], 0.1),
            Err(Error::ZeroNorm)
        ));
    }
}
