//! Scalar losses over probability vectors and their gradients with respect
//! to the predicted vector.

use crate::error::{Error, Result};

/// Floor applied to predicted probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn check_non_negative(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        Some(i) => Err(Error::Domain(format!("{what}[{i}] = {} is not a non-negative finite value", v[i]))),
        None => Ok(()),
    }
}

/// Mean KL divergence `(1/N) Σ t_i ln(t_i / max(p_i, floor))` with `0·ln 0 = 0`.
pub fn mean_kl(target: &[f64], predicted: &[f64]) -> Result<f64> {
    check_same_len(target, predicted)?;
    check_non_negative(target, "p_true")?;
    check_non_negative(predicted, "p_predict")?;
    let n = target.len() as f64;
    let total: f64 = target
        .iter()
        .zip(predicted)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| t * (t.ln() - p.max(PROB_FLOOR).ln()))
        .sum();
    Ok(total / n)
}

/// Gradient of [`mean_kl`] with respect to the predicted vector. Clamped
/// coordinates have zero gradient.
pub fn mean_kl_grad(target: &[f64], predicted: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    target
        .iter()
        .zip(predicted)
        .map(|(&t, &p)| if t > 0.0 && p > PROB_FLOOR { -t / (n * p) } else { 0.0 })
        .collect()
}

/// Index of the hot entry of a one-hot vector.
pub fn one_hot_index(one_hot: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in one_hot.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::Label("one-hot vector has several hot entries".into()));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::Label(format!("one-hot entry {i} = {v} is neither 0 nor 1")));
        }
    }
    hot.ok_or_else(|| Error::Label("one-hot vector has no hot entry".into()))
}

/// Cross-entropy `−Σ c_j ln max(y_j, floor)` against a one-hot label.
pub fn cross_entropy(predicted: &[f64], one_hot: &[f64]) -> Result<f64> {
    check_same_len(predicted, one_hot)?;
    check_non_negative(predicted, "y_predict")?;
    let class = one_hot_index(one_hot)?;
    Ok(cross_entropy_index(predicted, class))
}

pub(crate) fn cross_entropy_index(predicted: &[f64], class: usize) -> f64 {
    -predicted[class].max(PROB_FLOOR).ln()
}

/// Gradient of the cross-entropy with respect to the predicted probabilities.
pub fn cross_entropy_grad(predicted: &[f64], class: usize) -> Vec<f64> {
    let mut g = vec![0.0; predicted.len()];
    let p = predicted[class];
    if p > PROB_FLOOR {
        g[class] = -1.0 / p;
    }
    g
}

/// Mean squared error.
pub fn mse(predicted: &[f64], target: &[f64]) -> Result<f64> {
    check_same_len(predicted, target)?;
    let n = predicted.len() as f64;
    Ok(predicted.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

pub fn mse_grad(predicted: &[f64], target: &[f64]) -> Vec<f64> {
    let n = predicted.len() as f64;
    predicted.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
