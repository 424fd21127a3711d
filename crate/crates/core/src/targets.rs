//! Analytic regression targets with exact gradients.

use crate::error::{check_dim, Error, Result};

/// A differentiable target `f*: [-1, 1]^d → R`.
pub trait Target: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Upper bound `D` on `‖∇f*‖_2` over the cube.
    fn gradient_bound(&self) -> f64;

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.gradient(x))
    }

    /// Dimension-checked evaluation.
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value_and_gradient(x))
    }
}

/// `f1(x) = exp(−‖x‖²)`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    d: usize,
}

/// `f2(x) = Σ_{i=1}^{d/2} x_i x_{i+1}` (no index wrap-around).
#[derive(Debug, Clone)]
pub struct Polynomial {
    d: usize,
}

pub fn gaussian_target(d: usize) -> Result<Gaussian> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    Ok(Gaussian { d })
}

pub fn polynomial_target(d: usize) -> Result<Polynomial> {
    if d < 2 || d % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "polynomial target needs an even dimension >= 2, got {d}"
        )));
    }
    Ok(Polynomial { d })
}

/// Looks a target up by its registered name (`"gaussian"` or `"polynomial"`).
pub fn target_by_name(name: &str, d: usize) -> Result<Box<dyn Target>> {
    match name {
        "gaussian" => Ok(Box::new(gaussian_target(d)?)),
        "polynomial" => Ok(Box::new(polynomial_target(d)?)),
        other => Err(Error::InvalidArgument(format!("unknown target {other:?}"))),
    }
}

impl Target for Gaussian {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        (-x.iter().map(|v| v * v).sum::<f64>()).exp()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let f = self.value(x);
        x.iter().map(|v| -2.0 * v * f).collect()
    }

    /// `‖∇f1‖ = 2r·exp(−r²)` peaks at `r² = 1/2`, which lies inside the cube
    /// for every `d`, so the supremum is `√(2/e)`.
    fn gradient_bound(&self) -> f64 {
        (2.0 / std::f64::consts::E).sqrt()
    }
}

impl Target for Polynomial {
    fn name(&self) -> &str {
        "polynomial"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        (0..self.d / 2).map(|i| x[i] * x[i + 1]).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let half = self.d / 2;
        let mut g = vec![0.0; self.d];
        for i in 0..half {
            g[i] += x[i + 1];
            g[i + 1] += x[i];
        }
        g
    }

    /// Every partial derivative is a nonnegative combination of coordinates,
    /// so all of them peak together at `x = (1, …, 1)`.
    fn gradient_bound(&self) -> f64 {
        self.gradient(&vec![1.0; self.d]).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
