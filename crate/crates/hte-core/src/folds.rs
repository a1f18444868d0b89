//! Cross-fitting fold assignment with the two-arm guarantee: every fold's
//! training complement must contain both treatment arms. A failing draw is
//! refolded with a derived seed, at most five attempts.

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::RngSeed;

pub const MAX_REFOLD_ATTEMPTS: u64 = 5;

/// Fold id per unit, in `0..k`.
pub fn assign_folds(treatment: &Array1<f64>, k: usize, seed: RngSeed) -> Result<Vec<usize>> {
    let n = treatment.len();
    if k < 2 {
        return Err(Error::Config("cross-fitting requires k >= 2".into()));
    }
    if k > n {
        return Err(Error::Config(format!(
            "cannot form {k} folds from {n} rows"
        )));
    }
    for attempt in 0..MAX_REFOLD_ATTEMPTS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed.derive(attempt).rng());
        let mut fold_of = vec![0usize; n];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % k;
        }
        if complement_has_both_arms(treatment, &fold_of, k) {
            return Ok(fold_of);
        }
    }
    Err(Error::Positivity(format!(
        "after {MAX_REFOLD_ATTEMPTS} refold attempts a training part still lacks an arm"
    )))
}

fn complement_has_both_arms(treatment: &Array1<f64>, fold_of: &[usize], k: usize) -> bool {
    // treated/control counts per fold
    let mut treated = vec![0usize; k];
    let mut control = vec![0usize; k];
    for (i, &f) in fold_of.iter().enumerate() {
        if treatment[i] == 1.0 {
            treated[f] += 1;
        } else {
            control[f] += 1;
        }
    }
    let total_treated: usize = treated.iter().sum();
    let total_control: usize = control.iter().sum();
    (0..k).all(|f| total_treated > treated[f] && total_control > control[f])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn folds_partition_and_balance() {
        let t = Array1::from_iter((0..100).map(|i| f64::from(i % 3 == 0)));
        let folds = assign_folds(&t, 5, RngSeed(1)).unwrap();
        assert_eq!(folds.len(), 100);
        for f in 0..5 {
            let size = folds.iter().filter(|&&x| x == f).count();
            assert_eq!(size, 20);
        }
    }

    #[test]
    fn refold_errors_when_an_arm_is_too_small() {
        // One treated unit among 10: every complement of its fold keeps it,
        // but the fold holding it leaves the training part with zero treated.
        let mut t = Array1::zeros(10);
        t[0] = 1.0;
        assert!(matches!(
            assign_folds(&t, 2, RngSeed(0)),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn two_treated_units_eventually_fold_apart() {
        let mut t = Array1::zeros(12);
        t[0] = 1.0;
        t[1] = 1.0;
        let folds = assign_folds(&t, 2, RngSeed(3)).unwrap();
        assert_ne!(folds[0], folds[1]);
    }
}
