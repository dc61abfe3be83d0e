//! Losses for the two head modes.
//!
//! Softmax heads use categorical cross-entropy against a one-hot target.
//! Sigmoid heads apply binary cross-entropy to every output component on
//! its own and average over components, so 7- and 11-label tasks produce
//! losses of comparable magnitude.
//!
//! The scalar `f64` functions are the reference; [`batch_loss`] is the
//! tensor form used during training.

use candle_core::{DType, Tensor};
use thiserror::Error;

use super::HeadMode;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("logits have {logits} components, target has {target}")]
    LengthMismatch { logits: usize, target: usize },
    #[error("empty logit vector")]
    Empty,
    #[error("target component {index} is {value}, expected 0 or 1")]
    NonBinaryTarget { index: usize, value: f64 },
    #[error("softmax target must be one-hot, found {0} active components")]
    NotOneHot(usize),
}

fn check(mode: HeadMode, logits: &[f64], target: &[f64]) -> Result<(), LossError> {
    if logits.len() != target.len() {
        return Err(LossError::LengthMismatch {
            logits: logits.len(),
            target: target.len(),
        });
    }
    if logits.is_empty() {
        return Err(LossError::Empty);
    }
    if let Some((index, &value)) = target.iter().enumerate().find(|(_, &t)| t != 0.0 && t != 1.0) {
        return Err(LossError::NonBinaryTarget { index, value });
    }
    if mode == HeadMode::Softmax {
        let active = target.iter().filter(|&&t| t == 1.0).count();
        if active != 1 {
            return Err(LossError::NotOneHot(active));
        }
    }
    Ok(())
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[t ln s(z) + (1 - t) ln(1 - s(z))]` in a form that stays finite for
/// large `|z|`.
fn binary_ce(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

pub fn loss(mode: HeadMode, logits: &[f64], target: &[f64]) -> Result<f64, LossError> {
    check(mode, logits, target)?;
    Ok(match mode {
        HeadMode::Softmax => {
            let lse = log_sum_exp(logits);
            logits.iter().zip(target).map(|(z, t)| t * (lse - z)).sum()
        }
        HeadMode::Sigmoid => {
            logits.iter().zip(target).map(|(&z, &t)| binary_ce(z, t)).sum::<f64>() / logits.len() as f64
        }
    })
}

/// Analytic gradient of [`loss`] with respect to the logits.
pub fn loss_gradient(mode: HeadMode, logits: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    check(mode, logits, target)?;
    Ok(match mode {
        HeadMode::Softmax => {
            let lse = log_sum_exp(logits);
            logits.iter().zip(target).map(|(z, t)| (z - lse).exp() - t).collect()
        }
        HeadMode::Sigmoid => {
            let n = logits.len() as f64;
            logits.iter().zip(target).map(|(&z, &t)| (sigmoid(z) - t) / n).collect()
        }
    })
}

/// Mean loss over a batch of logits `[batch, outputs]`.
///
/// `targets` is `[batch]` of class indices (u32) for softmax heads and a
/// `[batch, outputs]` 0/1 float matrix for sigmoid heads.
pub fn batch_loss(mode: HeadMode, logits: &Tensor, targets: &Tensor) -> candle_core::Result<Tensor> {
    match mode {
        HeadMode::Softmax => candle_nn::loss::cross_entropy(logits, targets),
        HeadMode::Sigmoid => {
            let targets = targets.to_dtype(logits.dtype())?;
            let softplus = logits.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
            let per_item = ((logits.relu()? - (logits * &targets)?)? + softplus)?;
            per_item.mean_all()
        }
    }
}

/// Probabilities from logits `[batch, outputs]`.
pub fn activate(mode: HeadMode, logits: &Tensor) -> candle_core::Result<Tensor> {
    let logits = logits.to_dtype(DType::F32)?;
    match mode {
        HeadMode::Softmax => candle_nn::ops::softmax(&logits, 1),
        HeadMode::Sigmoid => candle_nn::ops::sigmoid(&logits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use candle_core::Device;

    #[test]
    fn sigmoid_zero_logits_give_ln2() {
        let l = loss(HeadMode::Sigmoid, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn uniform_softmax_gives_ln_k() {
        let l = loss(HeadMode::Softmax, &[0.3, 0.3, 0.3], &[0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(l, 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        let l = loss(HeadMode::Sigmoid, &[20.0, -20.0, 20.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(l < 1e-8);
        let l = loss(HeadMode::Softmax, &[20.0, -20.0, -20.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!(l < 1e-8);
        // Extreme logits stay finite.
        let l = loss(HeadMode::Sigmoid, &[800.0, -800.0], &[0.0, 1.0]).unwrap();
        assert_relative_eq!(l, 800.0, epsilon = 1e-9);
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            loss(HeadMode::Sigmoid, &[0.0], &[1.0, 0.0]),
            Err(LossError::LengthMismatch { logits: 1, target: 2 })
        );
        assert!(matches!(
            loss(HeadMode::Sigmoid, &[0.0, 0.0], &[0.5, 0.0]),
            Err(LossError::NonBinaryTarget { index: 0, .. })
        ));
        assert_eq!(
            loss(HeadMode::Softmax, &[0.0, 0.0], &[1.0, 1.0]),
            Err(LossError::NotOneHot(2))
        );
        assert_eq!(loss(HeadMode::Sigmoid, &[], &[]), Err(LossError::Empty));
    }

    #[test]
    fn tensor_loss_matches_scalar_reference() {
        let logits = [[0.3f32, -1.2, 2.0], [-0.5, 0.1, 0.0]];
        let dev = Device::Cpu;
        let lt = Tensor::new(&logits, &dev).unwrap();

        let classes = Tensor::new(&[2u32, 0], &dev).unwrap();
        let got: f32 = batch_loss(HeadMode::Softmax, &lt, &classes).unwrap().to_scalar().unwrap();
        let want = (loss(HeadMode::Softmax, &[0.3, -1.2, 2.0], &[0.0, 0.0, 1.0]).unwrap()
            + loss(HeadMode::Softmax, &[-0.5, 0.1, 0.0], &[1.0, 0.0, 0.0]).unwrap())
            / 2.0;
        assert_relative_eq!(got as f64, want, epsilon = 1e-5);

        let multi = Tensor::new(&[[1f32, 0., 1.], [0., 0., 1.]], &dev).unwrap();
        let got: f32 = batch_loss(HeadMode::Sigmoid, &lt, &multi).unwrap().to_scalar().unwrap();
        let want = (loss(HeadMode::Sigmoid, &[0.3, -1.2, 2.0], &[1.0, 0.0, 1.0]).unwrap()
            + loss(HeadMode::Sigmoid, &[-0.5, 0.1, 0.0], &[0.0, 0.0, 1.0]).unwrap())
            / 2.0;
        assert_relative_eq!(got as f64, want, epsilon = 1e-5);
    }

    #[test]
    fn activation_invariants() {
        let dev = Device::Cpu;
        let lt = Tensor::new(&[[3f32, -2.0, 0.5], [0.0, 0.0, 0.0]], &dev).unwrap();
        let p: Vec<Vec<f32>> = activate(HeadMode::Softmax, &lt).unwrap().to_vec2().unwrap();
        for row in &p {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
        let s: Vec<Vec<f32>> = activate(HeadMode::Sigmoid, &lt).unwrap().to_vec2().unwrap();
        assert!(s.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s[1], vec![0.5; 3]);
    }
}
