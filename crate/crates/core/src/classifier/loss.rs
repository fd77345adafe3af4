use super::{ClassifierError, Example, Mlp};
use crate::dataset::Label;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the
/// loss, never in reported predictions.
pub const PROB_CLAMP: f64 = 1e-7;

/// `-(pos_weight * y * ln p + (1 - y) * ln(1 - p))`.
pub fn weighted_bce(pred: f64, label: Label, pos_weight: f64) -> Result<f64, ClassifierError> {
    if !(pred > 0.0 && pred < 1.0) {
        return Err(ClassifierError::DomainError(pred));
    }
    if !(pos_weight > 0.0 && pos_weight.is_finite()) {
        return Err(ClassifierError::DomainError(pos_weight));
    }
    let p = pred.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok(match label {
        Label::Anomalous => -pos_weight * libm::log(p),
        Label::Normal => -libm::log(1.0 - p),
    })
}

/// Negative-to-positive count ratio of the training labels.
pub fn compute_pos_weight(labels: &[Label]) -> Result<f64, ClassifierError> {
    let positives = labels.iter().filter(|l| **l == Label::Anomalous).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ClassifierError::DegenerateLabels);
    }
    Ok(negatives as f64 / positives as f64)
}

/// Mean weighted BCE of `params` over `examples`.
pub fn mean_loss(params: &Mlp, examples: &[Example<'_>], pos_weight: f64) -> Result<f64, ClassifierError> {
    if examples.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    let mut total = 0.0;
    for &(x, label) in examples {
        total += weighted_bce(params.forward(x)?, label, pos_weight)?;
    }
    Ok(total / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use core::f64::consts::LN_2;

    #[test]
    fn half_probability() {
        assert_eq!(weighted_bce(0.5, Label::Normal, 4.0).unwrap(), LN_2);
        assert!((weighted_bce(0.5, Label::Anomalous, 4.0).unwrap() - 2.772589).abs() < 1e-6);
        assert_eq!(weighted_bce(0.5, Label::Anomalous, 4.0).unwrap(), 4.0 * LN_2);
    }

    #[test]
    fn confident_correct_prediction_costs_almost_nothing() {
        assert!(weighted_bce(1.0 - 1e-12, Label::Anomalous, 4.0).unwrap() < 1e-6);
        assert!(weighted_bce(1e-12, Label::Normal, 4.0).unwrap() < 1e-6);
    }

    #[test]
    fn outside_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                weighted_bce(p, Label::Normal, 1.0),
                Err(ClassifierError::DomainError(_))
            ));
        }
        assert!(weighted_bce(0.5, Label::Normal, 0.0).is_err());
    }

    #[test]
    fn pos_weight_ratio() {
        let mut labels: Vec<Label> = core::iter::repeat_n(Label::Normal, 80).collect();
        labels.extend(core::iter::repeat_n(Label::Anomalous, 20));
        assert_eq!(compute_pos_weight(&labels).unwrap(), 4.0);
        assert_eq!(compute_pos_weight(&[Label::Normal, Label::Anomalous]).unwrap(), 1.0);
        assert_eq!(
            compute_pos_weight(&[Label::Normal; 5]),
            Err(ClassifierError::DegenerateLabels)
        );
        assert_eq!(compute_pos_weight(&[]), Err(ClassifierError::DegenerateLabels));
    }
}
