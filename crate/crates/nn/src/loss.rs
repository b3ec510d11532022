use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Sum over classes, frames and pixels.
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for Reduction {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            _ => Err(NnError::Config(format!("unknown loss reduction '{s}'"))),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sum => "sum",
            Self::Mean => "mean",
        })
    }
}

/// Binary cross-entropy between predicted and target confidence maps.
///
/// Returns the loss and its gradient with respect to `pred`. Where the
/// clamp is active the gradient is zero.
pub fn bce_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, reduction: Reduction) -> Result<(T, Tensor<T>)> {
    pred.expect_same_shape("bce_loss", target)?;
    if let Some(bad) = target.data().iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
        return Err(NnError::Value(format!("bce_loss: target value {bad} outside [0, 1]")));
    }
    let eps = T::from_f64_lossy(BCE_EPS);
    let hi = T::one() - eps;
    let scale = match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::from_f64_lossy(pred.len() as f64),
    };
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &d) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        // NaN must survive the clamp so that divergence is reported.
        let q = if p.is_nan() { p } else { p.max(eps).min(hi) };
        loss -= d * q.ln() + (T::one() - d) * (T::one() - q).ln();
        if p > eps && p < hi {
            *g = scale * ((T::one() - d) / (T::one() - q) - d / q);
        }
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_is_ln2_per_pixel() {
        let p = Tensor::<f64>::full(&[3, 2, 2], 0.5);
        let (l, g) = bce_loss(&p, &p, Reduction::Sum).unwrap();
        assert!((l - 12.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(g.max_abs(), 0.0);
        let (m, _) = bce_loss(&p, &p, Reduction::Mean).unwrap();
        assert!((m - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn exact_binary_targets_have_near_zero_loss() {
        let t = Tensor::<f64>::from_vec(&[4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (l, _) = bce_loss(&t, &t, Reduction::Sum).unwrap();
        assert!(l / 4.0 < 1e-5);
    }

    #[test]
    fn rejects_bad_target() {
        let p = Tensor::<f32>::full(&[2], 0.5);
        let t = Tensor::<f32>::from_vec(&[2], vec![0.5, 1.5]).unwrap();
        assert!(bce_loss(&p, &t, Reduction::Sum).is_err());
        assert!(bce_loss(&p, &Tensor::full(&[3], 0.5), Reduction::Sum).is_err());
    }
}
