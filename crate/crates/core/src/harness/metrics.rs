use super::HarnessError;

fn check(preds: &[usize], labels: &[usize]) -> Result<(), HarnessError> {
    if preds.is_empty() {
        return Err(HarnessError::Metric("empty input".into()));
    }
    if preds.len() != labels.len() {
        return Err(HarnessError::Metric(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Percentage of exact matches.
pub fn overall_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, HarnessError> {
    check(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1 in percent, over classes that occur in
/// the predictions or the labels.
pub fn macro_f1(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64, HarnessError> {
    check(preds, labels)?;
    if let Some(bad) = preds.iter().chain(labels).find(|c| **c >= n_classes) {
        return Err(HarnessError::Metric(format!("class {bad} ≥ {n_classes}")));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (p, l) in preds.iter().zip(labels) {
        if p == l {
            tp[*p] += 1;
        } else {
            fp[*p] += 1;
            fn_[*l] += 1;
        }
    }
    let scores: Vec<f64> = (0..n_classes)
        .filter(|c| tp[*c] + fp[*c] + fn_[*c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64)
        .collect();
    Ok(100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean squared modulus of the difference.
pub fn mse(a: &[crate::ctensor::C64], b: &[crate::ctensor::C64]) -> Result<f64, HarnessError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(HarnessError::Metric("mse needs equal non-empty inputs".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(overall_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 100.0);
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 100.0);
        assert_eq!(overall_accuracy(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap(), 75.0);
        let f1 = macro_f1(&[1, 1, 0, 0], &[1, 0, 0, 0], 2).unwrap();
        assert!((f1 - 100.0 * (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((f1 - 73.333_333_333_333_33).abs() < 1e-9);
        // Absent classes are ignored.
        assert_eq!(macro_f1(&[2, 2], &[2, 2], 5).unwrap(), 100.0);
        assert!(overall_accuracy(&[], &[]).is_err());
        assert!(macro_f1(&[0], &[0, 1], 2).is_err());
    }
}
