use crate::error::{Error, Result};

/// Learning rates of the multistep ladder.
pub const LADDER: [f64; 5] = [1e-3, 5e-4, 1e-4, 5e-5, 1e-5];
/// Epochs at which the ladder steps down.
pub const MILESTONES: [usize; 4] = [2, 4, 6, 8];

/// Piecewise-constant rate: `ladder[i]` while `epoch < milestones[i]`,
/// the last rung afterwards.
pub fn lr_schedule(epoch: usize, ladder: &[f64], milestones: &[usize]) -> f64 {
    let rung = milestones.iter().take_while(|&&m| epoch >= m).count();
    ladder[rung.min(ladder.len() - 1)]
}

pub fn check_schedule(ladder: &[f64], milestones: &[usize]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::invalid("learning-rate ladder is empty"));
    }
    if milestones.len() + 1 != ladder.len() {
        return Err(Error::invalid(format!(
            "{} milestones for a ladder of {} rates; need one fewer milestone than rates",
            milestones.len(),
            ladder.len()
        )));
    }
    if ladder.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
        return Err(Error::invalid("learning rates must be finite and non-negative"));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("learning-rate ladder must be strictly decreasing"));
    }
    if milestones.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("milestones must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_points() {
        assert_eq!(lr_schedule(0, &LADDER, &MILESTONES), 1e-3);
        assert_eq!(lr_schedule(1, &LADDER, &MILESTONES), 1e-3);
        assert_eq!(lr_schedule(2, &LADDER, &MILESTONES), 5e-4);
        assert_eq!(lr_schedule(5, &LADDER, &MILESTONES), 1e-4);
        assert_eq!(lr_schedule(8, &LADDER, &MILESTONES), 1e-5);
        assert_eq!(lr_schedule(100, &LADDER, &MILESTONES), 1e-5);
    }

    #[test]
    fn never_increases() {
        let mut prev = f64::INFINITY;
        for e in 0..20 {
            let lr = lr_schedule(e, &LADDER, &MILESTONES);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn validation() {
        check_schedule(&LADDER, &MILESTONES).unwrap();
        assert!(check_schedule(&[1e-3, 1e-3], &[1]).is_err());
        assert!(check_schedule(&[1e-3, 1e-4], &[]).is_err());
        assert!(check_schedule(&[1e-3, 1e-4, 1e-5], &[3, 3]).is_err());
    }
}
