use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Mse,
}

/// Mean loss over all elements and its gradient w.r.t. `predictions`.
pub fn loss(kind: LossKind, predictions: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Usage("loss of an empty batch".into()));
    }
    let n = predictions.len() as f64;
    match kind {
        LossKind::Bce => {
            let mut total = 0.0;
            let grad = predictions
                .iter()
                .zip(labels)
                .map(|(&p, &y)| {
                    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    (p - y) / (p * (1.0 - p)) / n
                })
                .collect();
            Ok((total / n, grad))
        }
        LossKind::Mse => {
            let mut total = 0.0;
            let grad = predictions
                .iter()
                .zip(labels)
                .map(|(&p, &y)| {
                    let d = p - y;
                    total += d * d;
                    2.0 * d / n
                })
                .collect();
            Ok((total / n, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_one_half() {
        let (l, _) = loss(LossKind::Bce, &[0.5], &[1.0]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!((l - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn mse_zero_when_exact() {
        let (l, g) = loss(LossKind::Mse, &[0.3, -1.0], &[0.3, -1.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bce_gradient_direction() {
        let (_, g) = loss(LossKind::Bce, &[0.2], &[1.0]).unwrap();
        assert!(g[0] < 0.0);
        let (_, g) = loss(LossKind::Bce, &[0.8], &[0.0]).unwrap();
        assert!(g[0] > 0.0);
    }

    #[test]
    fn bce_logit_gradient_vanishes_at_label() {
        // Chained through a sigmoid, dL/dz = (p - y)/n, zero when p equals y.
        for (p, y) in [(0.5, 0.5), (1.0, 1.0), (0.0, 0.0), (0.3, 0.3)] {
            let (_, g) = loss(LossKind::Bce, &[p], &[y]).unwrap();
            let logit_grad = g[0] * p * (1.0 - p);
            assert!(logit_grad.abs() < 1e-12, "p={p} y={y} grad={logit_grad}");
        }
    }

    #[test]
    fn length_mismatch_is_usage_error() {
        assert!(loss(LossKind::Mse, &[1.0], &[1.0, 2.0]).is_err());
    }
}
