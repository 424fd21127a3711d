//! Path-norm generalization bounds and the checks that compare them with
//! measured risks.

use rand::Rng as _;
use serde::Serialize;

use crate::dataset::{sample_uniform_cube, Dataset};
use crate::error::{check_dim, Error, Result};
use crate::losses::{grad_risk_unsquared, value_risk_with};
use crate::network::{truncate, TwoLayerNet};
use crate::rng;
use crate::targets::Target;

use super::mixture::{sample_subnetwork, subnetwork_errors, ApproximationEvents, BarronMixture};

/// `Σ 1/k² = π²/6`, the normalizing constant of the prior over radii.
const PRIOR_CONST: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

fn check_bound_args(n: usize, d: usize, beta: f64, grad_bound: f64, delta: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("bound needs d >= 2, got {d}")));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(beta >= 0.0) || !(grad_bound >= 0.0) {
        return Err(Error::InvalidArgument("beta and gradient bound must be >= 0".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// A-posteriori bound on `|J(θ) − J_n(θ)|` holding with probability `1 − δ`
/// simultaneously for all networks of path norm `q`:
///
/// `4(1 + √2 β d)(Q+1)√(2 ln(2d)/n) + (½ + β(Q+1+D))√(2 ln(2c(Q+1)²/δ)/n)`.
pub fn posterior_bound(q: f64, n: usize, d: usize, beta: f64, grad_bound: f64, delta: f64) -> Result<f64> {
    check_bound_args(n, d, beta, grad_bound, delta)?;
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidArgument(format!("path norm must be finite and >= 0, got {q}")));
    }
    let nf = n as f64;
    let complexity = 4.0
        * (1.0 + std::f64::consts::SQRT_2 * beta * d as f64)
        * (q + 1.0)
        * (2.0 * (2.0 * d as f64).ln() / nf).sqrt();
    let confidence =
        (0.5 + beta * (q + 1.0 + grad_bound)) * (2.0 * (2.0 * PRIOR_CONST * (q + 1.0).powi(2) / delta).ln() / nf).sqrt();
    Ok(complexity + confidence)
}

/// Outcome of a generalization-gap check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub path_norm: f64,
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub gradient_bound: f64,
    pub delta: f64,
    pub empirical_value_risk: f64,
    pub empirical_gradient_risk: f64,
    pub population_value_risk: f64,
    pub population_gradient_risk: f64,
    pub measured_gap: f64,
    pub bound_value: f64,
    pub holds: bool,
}

/// Population risks `(E ½(Tf − f*)², E ‖∇f − ∇f*‖)` by Monte Carlo.
fn population_risks(net: &TwoLayerNet, oracle: &dyn Target, n_test: usize, seed: u64, truncated: bool) -> Result<(f64, f64)> {
    check_dim(oracle.dim(), net.input_dim())?;
    if n_test == 0 {
        return Err(Error::InvalidArgument("need at least one test point".into()));
    }
    let (mut v, mut g) = (0.0, 0.0);
    for x in sample_uniform_cube(n_test, oracle.dim(), seed) {
        let (f, grad) = net.forward_with_gradient(&x)?;
        let f = if truncated { truncate(f) } else { f };
        let (y, yg) = oracle.value_and_gradient(&x);
        v += 0.5 * (f - y).powi(2);
        g += grad.iter().zip(&yg).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    }
    Ok((v / n_test as f64, g / n_test as f64))
}

/// Compares the measured gap between population and empirical objective
/// with [`posterior_bound`]. The gradient part uses unsquared norms on both
/// sides; values are truncated to `[0, 1]` when `truncated` is set.
#[allow(clippy::too_many_arguments)]
pub fn check_generalization_gap(
    net: &TwoLayerNet,
    train: &Dataset,
    beta: f64,
    grad_bound: f64,
    delta: f64,
    oracle: &dyn Target,
    n_test: usize,
    seed: u64,
    truncated: bool,
) -> Result<BoundReport> {
    check_dim(train.dim(), net.input_dim())?;
    let emp_v = value_risk_with(net, train, truncated)?;
    let emp_g = if beta > 0.0 { grad_risk_unsquared(net, train)? } else { 0.0 };
    let (pop_v, pop_g) = population_risks(net, oracle, n_test, seed, truncated)?;
    let gap = ((pop_v + beta * pop_g) - (emp_v + beta * emp_g)).abs();
    let q = net.path_norm();
    let bound = posterior_bound(q, train.len(), train.dim(), beta, grad_bound, delta)?;
    Ok(BoundReport {
        path_norm: q,
        n: train.len(),
        d: train.dim(),
        beta,
        gradient_bound: grad_bound,
        delta,
        empirical_value_risk: emp_v,
        empirical_gradient_risk: emp_g,
        population_value_risk: pop_v,
        population_gradient_risk: pop_g,
        measured_gap: gap,
        bound_value: bound,
        holds: gap <= bound,
    })
}

/// Right-hand side of the a-priori risk bound for the subnetwork estimator:
///
/// `3γ²/m + β√(7γ²/m) + 4(1+√2βd)(2γ+1)√(2ln(2d)/n) + (½+β(2γ+1+D))√(2ln(2c(2γ+1)²/δ)/n)`.
pub fn risk_upper_bound_rhs(gamma2: f64, m: usize, n: usize, d: usize, beta: f64, grad_bound: f64, delta: f64) -> Result<f64> {
    check_bound_args(n, d, beta, grad_bound, delta)?;
    if m == 0 {
        return Err(Error::InvalidArgument("width must be positive".into()));
    }
    let approx = 3.0 * gamma2 * gamma2 / m as f64 + beta * (7.0 * gamma2 * gamma2 / m as f64).sqrt();
    // a path norm below 2γ puts the network inside the ball of radius 2γ
    Ok(approx + posterior_bound(2.0 * gamma2, n, d, beta, grad_bound, delta)?)
}

/// Leading-order rate `γ²/m + βγ/√m + βγ̂(γ̂+d)√(2ln(2d)/n) + βγ̂√(ln(2c/δ)/n)`
/// with `γ̂ = max(1, γ)`; reported only.
pub fn asymptotic_rate(gamma2: f64, m: usize, n: usize, d: usize, beta: f64, delta: f64) -> f64 {
    let gh = gamma2.max(1.0);
    let nf = n as f64;
    gamma2 * gamma2 / m as f64
        + beta * gamma2 / (m as f64).sqrt()
        + beta * gh * (gh + d as f64) * (2.0 * (2.0 * d as f64).ln() / nf).sqrt()
        + beta * gh * ((2.0 * PRIOR_CONST / delta).ln() / nf).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskCheckOptions {
    /// Monte Carlo points used to confirm the approximation events.
    pub n_mc: usize,
    /// Maximum subnetwork draws before giving up.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for RiskCheckOptions {
    fn default() -> Self {
        Self { n_mc: 4096, max_attempts: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskUpperBoundReport {
    pub gamma2: f64,
    pub m: usize,
    pub n: usize,
    pub attempts: usize,
    pub path_norm: f64,
    /// Truncated empirical objective `L_n + β L'_n` of the accepted network.
    pub objective: f64,
    pub rhs: f64,
    pub asymptotic_rate: f64,
    pub holds: bool,
}

/// Draws subnetworks of the mixture until one satisfies all three
/// approximation events, then checks its empirical objective against the
/// a-priori risk bound.
pub fn risk_upper_bound_check(
    mix: &BarronMixture,
    m: usize,
    data: &Dataset,
    beta: f64,
    delta: f64,
    opts: &RiskCheckOptions,
) -> Result<RiskUpperBoundReport> {
    check_dim(mix.dim(), data.dim())?;
    let gamma2 = mix.gamma(2.0);
    let grad_bound = mix.gradient_bound();
    let rhs = risk_upper_bound_rhs(gamma2, m, data.len(), data.dim(), beta, grad_bound, delta)?;
    let mut seeds = rng::stream(opts.seed, 0xB0B0);
    for attempt in 1..=opts.max_attempts {
        let net = sample_subnetwork(mix, m, seeds.random())?;
        let errors = subnetwork_errors(mix, &net, opts.n_mc, seeds.random())?;
        if !ApproximationEvents::evaluate(&errors, gamma2, m).all() {
            continue;
        }
        let emp_g = if beta > 0.0 { grad_risk_unsquared(&net, data)? } else { 0.0 };
        let objective = value_risk_with(&net, data, true)? + beta * emp_g;
        return Ok(RiskUpperBoundReport {
            gamma2,
            m,
            n: data.len(),
            attempts: attempt,
            path_norm: net.path_norm(),
            objective,
            rhs,
            asymptotic_rate: asymptotic_rate(gamma2, m, data.len(), data.dim(), beta, delta),
            holds: objective <= rhs,
        });
    }
    Err(Error::RetryBudgetExhausted(opts.max_attempts))
}

/// `1.05 · max_x ‖∇f(x)‖` over a dense random sample, for targets without a
/// closed-form bound.
pub fn empirical_gradient_bound(target: &dyn Target, n_points: usize, seed: u64) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("need at least one point".into()));
    }
    let worst = sample_uniform_cube(n_points, target.dim(), seed)
        .iter()
        .map(|x| target.gradient(x).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(1.05 * worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::targets::gaussian_target;

    #[test]
    fn posterior_bound_regression_value() {
        let b = posterior_bound(1.0, 100, 2, 0.0, 0.0, 0.05).unwrap();
        assert!((b - 1.499_013_620_811_663_1).abs() < 1e-12, "{b}");
    }

    #[test]
    fn posterior_bound_monotonicity() {
        let at = |q, n, beta| posterior_bound(q, n, 4, beta, 1.0, 0.05).unwrap();
        assert!(at(1.0, 100, 1.0) < at(2.0, 100, 1.0));
        assert!(at(1.0, 400, 1.0) < at(1.0, 100, 1.0));
        assert!(at(1.0, 100, 0.0) < at(1.0, 100, 1.0));
        // O(1/√n)
        let ratio = at(1.0, 100, 1.0) / at(1.0, 400, 1.0);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_bound_argument_checks() {
        assert!(posterior_bound(1.0, 100, 1, 0.0, 0.0, 0.05).is_err());
        assert!(posterior_bound(1.0, 100, 2, 0.0, 0.0, 0.0).is_err());
        assert!(posterior_bound(1.0, 100, 2, 0.0, 0.0, 1.0).is_err());
        assert!(posterior_bound(1.0, 0, 2, 0.0, 0.0, 0.5).is_err());
        assert!(posterior_bound(-1.0, 10, 2, 0.0, 0.0, 0.5).is_err());
        assert!(posterior_bound(1.0, 10, 2, -1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn risk_rhs_decreases_with_sample_size() {
        let rhs: Vec<f64> = [50, 100, 200, 400, 800]
            .iter()
            .map(|&n| risk_upper_bound_rhs(0.8, 64, n, 4, 1.0, 0.5, 0.05).unwrap())
            .collect();
        assert!(rhs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn gap_check_on_zero_network() {
        let t = gaussian_target(2).unwrap();
        let samples = sample_uniform_cube(50, 2, 1)
            .into_iter()
            .map(|x| {
                let (y, g) = t.value_and_gradient(&x);
                LabeledSample::new(x, y, Some(g)).unwrap()
            })
            .collect();
        let data = Dataset::new(samples).unwrap();
        let net = TwoLayerNet::zeros(4, 2).unwrap();
        let r = check_generalization_gap(&net, &data, 1.0, t.gradient_bound(), 0.05, &t, 4000, 2, true).unwrap();
        assert_eq!(r.path_norm, 0.0);
        assert!(r.holds);
        assert!(r.measured_gap < 0.1);
    }

    #[test]
    fn risk_check_succeeds_on_mixture() {
        let mix = BarronMixture::random(5, 4, 11).unwrap();
        let samples = sample_uniform_cube(200, 4, 3)
            .into_iter()
            .map(|x| {
                let (y, g) = mix.value_and_gradient(&x);
                LabeledSample::new(x, y, Some(g)).unwrap()
            })
            .collect();
        let data = Dataset::new(samples).unwrap();
        let opts = RiskCheckOptions { n_mc: 512, max_attempts: 50, seed: 1 };
        let r = risk_upper_bound_check(&mix, 64, &data, 1.0, 0.05, &opts).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.path_norm < 2.0 * r.gamma2);
        let none = RiskCheckOptions { max_attempts: 0, ..opts };
        assert!(matches!(
            risk_upper_bound_check(&mix, 64, &data, 1.0, 0.05, &none),
            Err(Error::RetryBudgetExhausted(0))
        ));
    }

    #[test]
    fn empirical_bound_covers_analytic() {
        let t = gaussian_target(2).unwrap();
        let b = empirical_gradient_bound(&t, 20_000, 0).unwrap();
        assert!(b >= t.gradient_bound());
        assert!(b <= 1.05 * t.gradient_bound() + 1e-12);
    }
}
