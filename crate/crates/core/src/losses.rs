//! Empirical risks and their exact parameter gradients.
//!
//! With residuals `r_i = f(x_i) − y_i` and `ρ_i = ∇f(x_i) − y'_i`:
//!
//! ```text
//! L_n   = (1/n)  Σ_i ½ r_i²
//! L'_n  = (1/n') Σ_{i ∈ G} ‖ρ_i‖²        (G: gradient-bearing samples, n' = |G|)
//! J     = L_n + β L'_n
//! ```
//!
//! The gradient term is averaged over gradient-bearing samples only, so the
//! two terms stay on comparable scales whatever the enhancement percentage.
//! ReLU is treated as having `σ'' ≡ 0`.

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::network::{dot, truncate, TwoLayerNet};

/// Gradient of an objective w.r.t. `(a, W)`; `grad_w` is row-major `m × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub grad_a: Vec<f64>,
    pub grad_w: Vec<f64>,
}

impl ParamGradient {
    pub fn zeros_like(net: &TwoLayerNet) -> Self {
        Self {
            grad_a: vec![0.0; net.width()],
            grad_w: vec![0.0; net.width() * net.input_dim()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grad_a.iter().chain(&self.grad_w).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.grad_a.iter().chain(&self.grad_w).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Training objective settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub beta: f64,
    /// Clamp the network output to `[0, 1]` in the value term.
    pub truncate: bool,
}

impl Objective {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be a finite nonnegative number, got {beta}")));
        }
        Ok(Self { beta, truncate: false })
    }

    pub fn with_truncation(mut self, truncate: bool) -> Self {
        self.truncate = truncate;
        self
    }
}

/// Value of every risk term at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBreakdown {
    /// `L_n`.
    pub value: f64,
    /// `L'_n`, absent when no sample carries a gradient.
    pub gradient: Option<f64>,
    /// `J = L_n + β L'_n`.
    pub combined: f64,
}

fn check_data(net: &TwoLayerNet, data: &Dataset) -> Result<()> {
    check_dim(net.input_dim(), data.dim())
}

pub(crate) fn output(net: &TwoLayerNet, x: &[f64], truncated: bool) -> f64 {
    let f = net.forward_unchecked(x);
    if truncated {
        truncate(f)
    } else {
        f
    }
}

/// `L_n`, optionally on the truncated network output.
pub fn value_risk_with(net: &TwoLayerNet, data: &Dataset, truncated: bool) -> Result<f64> {
    check_data(net, data)?;
    let sum: f64 = data
        .samples()
        .iter()
        .map(|s| 0.5 * (output(net, &s.x, truncated) - s.y).powi(2))
        .sum();
    Ok(sum / data.len() as f64)
}

/// `(1/n) Σ ½ (f(x_i) − y_i)²`.
pub fn value_risk(net: &TwoLayerNet, data: &Dataset) -> Result<f64> {
    value_risk_with(net, data, false)
}

fn gradient_residual_norms(net: &TwoLayerNet, data: &Dataset) -> Result<Vec<f64>> {
    check_data(net, data)?;
    let mut g = vec![0.0; net.input_dim()];
    let norms: Vec<f64> = data
        .samples()
        .iter()
        .filter_map(|s| {
            let target = s.y_grad.as_ref()?;
            g.iter_mut().for_each(|v| *v = 0.0);
            net.accumulate_input_gradient(&s.x, &mut g);
            Some(g.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        })
        .collect();
    if norms.is_empty() {
        Err(Error::NoGradientSamples)
    } else {
        Ok(norms)
    }
}

/// Mean of `‖∇f(x_i) − y'_i‖²` over gradient-bearing samples.
pub fn grad_risk(net: &TwoLayerNet, data: &Dataset) -> Result<f64> {
    let norms = gradient_residual_norms(net, data)?;
    Ok(norms.iter().map(|r| r * r).sum::<f64>() / norms.len() as f64)
}

/// Mean of `‖∇f(x_i) − y'_i‖` (first power) over gradient-bearing samples.
pub fn grad_risk_unsquared(net: &TwoLayerNet, data: &Dataset) -> Result<f64> {
    let norms = gradient_residual_norms(net, data)?;
    Ok(norms.iter().sum::<f64>() / norms.len() as f64)
}

/// `L_n + β L'_n`. A dataset without gradient labels contributes no
/// gradient term.
pub fn combined_risk(net: &TwoLayerNet, data: &Dataset, beta: f64) -> Result<f64> {
    Ok(risks(net, data, Objective::new(beta)?)?.combined)
}

/// Every risk term without the parameter gradient.
pub fn risks(net: &TwoLayerNet, data: &Dataset, objective: Objective) -> Result<RiskBreakdown> {
    let value = value_risk_with(net, data, objective.truncate)?;
    let gradient = match grad_risk(net, data) {
        Ok(v) => Some(v),
        Err(Error::NoGradientSamples) => None,
        Err(e) => return Err(e),
    };
    Ok(RiskBreakdown {
        value,
        gradient,
        combined: value + objective.beta * gradient.unwrap_or(0.0),
    })
}

/// Exact gradient of `J` w.r.t. the network parameters.
pub fn param_gradient(net: &TwoLayerNet, data: &Dataset, beta: f64) -> Result<ParamGradient> {
    Ok(risk_and_gradient(net, data, Objective::new(beta)?)?.1)
}

/// Risk terms and the parameter gradient in one sweep over the data.
pub fn risk_and_gradient(
    net: &TwoLayerNet,
    data: &Dataset,
    objective: Objective,
) -> Result<(RiskBreakdown, ParamGradient)> {
    check_data(net, data)?;
    let m = net.width();
    let d = net.input_dim();
    let a = net.outer_weights();
    let w = net.inner_weights();
    let n = data.len() as f64;
    let n_grad = data.gradient_count();
    let grad_scale = if n_grad > 0 { 2.0 * objective.beta / n_grad as f64 } else { 0.0 };

    let mut out = ParamGradient::zeros_like(net);
    let mut z = vec![0.0; m];
    let mut rho = vec![0.0; d];
    let mut value_sum = 0.0;
    let mut grad_sum = 0.0;

    for s in data.samples() {
        let x = &s.x;
        let mut raw = 0.0;
        for k in 0..m {
            z[k] = dot(&w[k * d..(k + 1) * d], x);
            if z[k] > 0.0 {
                raw += a[k] * z[k];
            }
        }
        let (f, passes) = if objective.truncate {
            (truncate(raw), raw > 0.0 && raw < 1.0)
        } else {
            (raw, true)
        };
        let r = f - s.y;
        value_sum += 0.5 * r * r;
        if passes && r != 0.0 {
            let c = r / n;
            for k in (0..m).filter(|&k| z[k] > 0.0) {
                out.grad_a[k] += c * z[k];
                let ck = c * a[k];
                for (gw, xj) in out.grad_w[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *gw += ck * xj;
                }
            }
        }

        if let Some(target) = &s.y_grad {
            rho.copy_from_slice(target);
            rho.iter_mut().for_each(|v| *v = -*v);
            for k in (0..m).filter(|&k| z[k] > 0.0) {
                for (rj, wj) in rho.iter_mut().zip(&w[k * d..(k + 1) * d]) {
                    *rj += a[k] * wj;
                }
            }
            grad_sum += rho.iter().map(|v| v * v).sum::<f64>();
            if grad_scale != 0.0 {
                for k in (0..m).filter(|&k| z[k] > 0.0) {
                    let wk = &w[k * d..(k + 1) * d];
                    out.grad_a[k] += grad_scale * dot(&rho, wk);
                    let ck = grad_scale * a[k];
                    for (gw, rj) in out.grad_w[k * d..(k + 1) * d].iter_mut().zip(&rho) {
                        *gw += ck * rj;
                    }
                }
            }
        }
    }

    let value = value_sum / n;
    let gradient = (n_grad > 0).then(|| grad_sum / n_grad as f64);
    let breakdown = RiskBreakdown {
        value,
        gradient,
        combined: value + objective.beta * gradient.unwrap_or(0.0),
    };
    Ok((breakdown, out))
}
