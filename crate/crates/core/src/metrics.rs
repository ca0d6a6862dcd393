//! Accuracy metric. RMSE is the only metric the harness reports.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Root mean squared error over paired predictions and targets.
pub fn rmse<S: Scalar>(predictions: &[S], targets: &[S]) -> Result<S> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("rmse requires at least one pair"));
    }
    let mut acc = S::zero();
    for (&p, &y) in predictions.iter().zip(targets) {
        let d = y - p;
        acc += d * d;
    }
    Ok((acc / S::from_count(predictions.len())).sqrt())
}

pub(crate) fn mean<S: Scalar>(values: &[S]) -> S {
    debug_assert!(!values.is_empty());
    values.iter().copied().sum::<S>() / S::from_count(values.len())
}
