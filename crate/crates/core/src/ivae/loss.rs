use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nnkernel::{dot, norm, Matrix};

/// The three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl: f64,
    /// Mean squared error against the target-class sample (positive penalty).
    pub target_recon: f64,
    pub boost: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(kl: f64, target_recon: f64, boost: f64, lambda: f64) -> Self {
        Self {
            kl,
            target_recon,
            boost,
            total: total_loss(kl, target_recon, boost, lambda),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.kl.is_finite() && self.target_recon.is_finite() && self.boost.is_finite() && self.total.is_finite()
    }
}

/// `(KL + reconstruction) + λ · boost`
pub fn total_loss(kl: f64, target_recon: f64, boost: f64, lambda: f64) -> f64 {
    (kl + target_recon) + lambda * boost
}

/// KL(N(μ, exp(log_var)) ‖ N(0, I)) summed over latent dimensions, averaged over rows.
pub fn kl_loss(mu: &Matrix, log_var: &Matrix) -> Result<f64> {
    mu.check_same(log_var, "kl_loss")?;
    if mu.rows() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = mu
        .as_slice()
        .iter()
        .zip(log_var.as_slice())
        .map(|(&m, &lv)| m * m + libm::exp(lv) - 1.0 - lv)
        .sum();
    Ok(0.5 * sum / mu.rows() as f64)
}

/// (∂KL/∂μ, ∂KL/∂log_var)
pub fn kl_grad(mu: &Matrix, log_var: &Matrix) -> Result<(Matrix, Matrix)> {
    mu.check_same(log_var, "kl_grad")?;
    let b = mu.rows().max(1) as f64;
    Ok((mu.scale(1.0 / b), log_var.map(|lv| 0.5 * (libm::exp(lv) - 1.0) / b)))
}

/// Mean squared error over rows and dimensions.
pub fn target_recon_loss(predicted: &Matrix, target: &Matrix) -> Result<f64> {
    predicted.check_same(target, "target_recon_loss")?;
    let n = predicted.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

pub fn target_recon_grad(predicted: &Matrix, target: &Matrix) -> Result<Matrix> {
    let n = predicted.as_slice().len().max(1) as f64;
    Ok(predicted.sub(target)?.scale(2.0 / n))
}

/// Temperature-scaled cosine cross-entropy.
///
/// Row `b` of `synthesized` is scored against every row of `candidates`; the
/// loss is `−log softmax(cos(x̂_b, c_j)/τ)[targets[b]]`, averaged over rows.
pub fn boost_loss(synthesized: &Matrix, targets: &[usize], candidates: &Matrix, tau: f64) -> Result<f64> {
    boost_inner(synthesized, targets, candidates, tau, false).map(|(l, _)| l)
}

/// [`boost_loss`] together with its gradient with respect to `synthesized`.
pub fn boost_loss_with_grad(
    synthesized: &Matrix,
    targets: &[usize],
    candidates: &Matrix,
    tau: f64,
) -> Result<(f64, Matrix)> {
    boost_inner(synthesized, targets, candidates, tau, true)
}

fn boost_inner(
    synthesized: &Matrix,
    targets: &[usize],
    candidates: &Matrix,
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Matrix)> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    let (rows, d) = synthesized.shape();
    if targets.len() != rows {
        return Err(shape_err("boost_loss", format!("{rows} targets"), format!("{}", targets.len())));
    }
    if candidates.cols() != d {
        return Err(shape_err(
            "boost_loss",
            format!("candidates of dimension {d}"),
            format!("{}", candidates.cols()),
        ));
    }
    let k = candidates.rows();
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::Parameter(format!("target index {t} outside {k} candidates")));
    }
    let cand_norms: Vec<f64> = candidates.row_iter().map(norm).collect();
    if cand_norms.contains(&0.0) {
        return Err(Error::ZeroVector);
    }

    let mut grad = if want_grad { Matrix::zeros(rows, d) } else { Matrix::zeros(0, 0) };
    let mut total = 0.0;
    let mut cos = vec![0.0; k];
    let mut weight = vec![0.0; k];
    for (b, &t) in targets.iter().enumerate() {
        let x = synthesized.row(b);
        let nx = norm(x);
        if nx == 0.0 {
            return Err(Error::ZeroVector);
        }
        for j in 0..k {
            cos[j] = dot(x, candidates.row(j)) / (nx * cand_norms[j]);
        }
        let max_logit = cos.iter().fold(f64::NEG_INFINITY, |m, &c| m.max(c / tau));
        let mut denom = 0.0;
        for j in 0..k {
            weight[j] = libm::exp(cos[j] / tau - max_logit);
            denom += weight[j];
        }
        total += max_logit + libm::log(denom) - cos[t] / tau;

        if want_grad {
            // ∂cos_j/∂x = c_j/(‖x‖‖c_j‖) − cos_j · x/‖x‖²
            let g = grad.row_mut(b);
            let mut x_coeff = 0.0;
            for j in 0..k {
                let p = weight[j] / denom - if j == t { 1.0 } else { 0.0 };
                if p == 0.0 {
                    continue;
                }
                let a = p / tau;
                let cj = a / (nx * cand_norms[j]);
                for (gi, &ci) in g.iter_mut().zip(candidates.row(j)) {
                    *gi += cj * ci;
                }
                x_coeff -= a * cos[j] / (nx * nx);
            }
            for (gi, &xi) in g.iter_mut().zip(x) {
                *gi += x_coeff * xi;
            }
        }
    }
    if rows == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / rows as f64;
    if want_grad {
        grad.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    }
    Ok((total * inv, grad))
}
