//! Monte Carlo lower estimates of empirical Rademacher complexities over
//! path-norm balls, and the matching analytic upper bounds.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::TwoLayerNet;
use crate::rng;

/// Settings for the sup-over-candidates estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RademacherOptions {
    pub n_candidates: usize,
    pub n_sign_draws: usize,
    pub max_width: usize,
    pub seed: u64,
}

impl Default for RademacherOptions {
    fn default() -> Self {
        Self { n_candidates: 256, n_sign_draws: 1000, max_width: 32, seed: 0 }
    }
}

/// Random networks with path norm exactly `q`. Directions and widths depend
/// only on the seed, so the family at `2q` is the family at `q` scaled by two.
pub fn candidate_networks(d: usize, q: f64, opts: &RademacherOptions) -> Result<Vec<TwoLayerNet>> {
    if d == 0 || opts.max_width == 0 {
        return Err(Error::InvalidArgument("dimension and width must be positive".into()));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidArgument(format!("path-norm radius must be >= 0, got {q}")));
    }
    let mut r = rng::stream(opts.seed, 0xCA4D);
    (0..opts.n_candidates)
        .map(|_| {
            let m = r.random_range(1..=opts.max_width);
            let mut w: Vec<f64> = (0..m * d).map(|_| r.sample(StandardNormal)).collect();
            for row in w.chunks_mut(d) {
                let l1: f64 = row.iter().map(|v| v.abs()).sum();
                row.iter_mut().for_each(|v| *v /= l1);
            }
            let mut a: Vec<f64> = (0..m).map(|_| r.sample(StandardNormal)).collect();
            let scale = q / a.iter().map(|v| v.abs()).sum::<f64>();
            a.iter_mut().for_each(|v| *v *= scale);
            TwoLayerNet::from_flat(a, w, d)
        })
        .collect()
}

/// `E_ξ sup_c (1/n) Σ_i ξ_i s_c(i)` where `stats[c]` holds `s_c(·)` and the
/// zero function is always a member.
fn sup_average(stats: &[Vec<f64>], zero: &[f64], n: usize, opts: &RademacherOptions) -> f64 {
    let mut r = rng::stream(opts.seed, 0x5167);
    let mut xi = vec![0.0; n];
    let mut total = 0.0;
    for _ in 0..opts.n_sign_draws {
        xi.iter_mut().for_each(|v| *v = if r.random::<bool>() { 1.0 } else { -1.0 });
        let corr = |s: &[f64]| s.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>();
        let best = stats.iter().map(|s| corr(s)).fold(corr(zero), f64::max);
        total += best / n as f64;
    }
    total / opts.n_sign_draws as f64
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().ok_or(Error::EmptyDataset)?.len();
    for p in points {
        check_dim(d, p.len())?;
    }
    Ok(d)
}

/// Estimate of `Rad_S(F_Q)` for `F_Q = {f : ‖θ‖_P ≤ Q}`.
pub fn empirical_rademacher_value_family(points: &[Vec<f64>], q: f64, opts: &RademacherOptions) -> Result<f64> {
    let d = check_points(points)?;
    let stats: Vec<Vec<f64>> = candidate_networks(d, q, opts)?
        .iter()
        .map(|net| points.iter().map(|x| net.forward_unchecked(x)).collect())
        .collect();
    Ok(sup_average(&stats, &vec![0.0; points.len()], points.len(), opts))
}

/// `‖∇f(x_i) − y'_i‖_2` for every sample.
pub fn gradient_statistics(net: &TwoLayerNet, points: &[Vec<f64>], labels: &[Vec<f64>]) -> Vec<f64> {
    points
        .iter()
        .zip(labels)
        .map(|(x, y)| {
            let g = net.input_gradient(x).unwrap_or_default();
            g.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}

/// Estimate of `Rad_S(H_Q)` for `H_Q = {(x, y') ↦ ‖∇f(x) − y'‖ : ‖θ‖_P ≤ Q}`.
pub fn empirical_rademacher_gradient_family(
    points: &[Vec<f64>],
    labels: &[Vec<f64>],
    q: f64,
    opts: &RademacherOptions,
) -> Result<f64> {
    let d = check_points(points)?;
    check_dim(points.len(), labels.len())?;
    for y in labels {
        check_dim(d, y.len())?;
    }
    let stats: Vec<Vec<f64>> = candidate_networks(d, q, opts)?
        .iter()
        .map(|net| gradient_statistics(net, points, labels))
        .collect();
    let zero: Vec<f64> = labels.iter().map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    Ok(sup_average(&stats, &zero, points.len(), opts))
}

/// `2Q √(2 ln(2d) / n)`.
pub fn value_family_bound(q: f64, d: usize, n: usize) -> f64 {
    2.0 * q * (2.0 * (2.0 * d as f64).ln() / n as f64).sqrt()
}

/// `2√2 Q d √(2 ln(2d) / n)`.
pub fn gradient_family_bound(q: f64, d: usize, n: usize) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * d as f64 * value_family_bound(q, d, n) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_uniform_cube;

    fn opts() -> RademacherOptions {
        RademacherOptions { n_candidates: 64, n_sign_draws: 200, max_width: 16, seed: 3 }
    }

    #[test]
    fn candidates_have_requested_path_norm() {
        for net in candidate_networks(3, 2.5, &opts()).unwrap() {
            assert!((net.path_norm() - 2.5).abs() < 1e-12);
            assert!(net.width() >= 1 && net.width() <= 16);
        }
        assert!(candidate_networks(3, -1.0, &opts()).is_err());
    }

    #[test]
    fn zero_radius_gives_zero() {
        let pts = sample_uniform_cube(30, 2, 1);
        assert_eq!(empirical_rademacher_value_family(&pts, 0.0, &opts()).unwrap(), 0.0);
    }

    #[test]
    fn estimates_are_homogeneous_in_radius() {
        let pts = sample_uniform_cube(40, 3, 2);
        let r1 = empirical_rademacher_value_family(&pts, 1.0, &opts()).unwrap();
        let r2 = empirical_rademacher_value_family(&pts, 2.0, &opts()).unwrap();
        assert!(r1 > 0.0);
        assert!((r2 - 2.0 * r1).abs() <= 1e-12 * r2);
        // zero labels make the gradient statistic homogeneous too
        let zeros = vec![vec![0.0; 3]; 40];
        let g1 = empirical_rademacher_gradient_family(&pts, &zeros, 1.0, &opts()).unwrap();
        let g3 = empirical_rademacher_gradient_family(&pts, &zeros, 3.0, &opts()).unwrap();
        assert!((g3 - 3.0 * g1).abs() <= 1e-12 * g3);
    }

    #[test]
    fn estimates_below_analytic_bounds() {
        let pts = sample_uniform_cube(50, 4, 5);
        let labels = sample_uniform_cube(50, 4, 6);
        let v = empirical_rademacher_value_family(&pts, 3.0, &opts()).unwrap();
        assert!(v <= value_family_bound(3.0, 4, 50));
        let g = empirical_rademacher_gradient_family(&pts, &labels, 3.0, &opts()).unwrap();
        assert!(g <= gradient_family_bound(3.0, 4, 50));
    }

    #[test]
    fn single_neuron_gradient_statistic() {
        let net = TwoLayerNet::new(vec![-1.5], vec![vec![0.6, -0.8]]).unwrap();
        let pts = sample_uniform_cube(100, 2, 8);
        let zeros = vec![vec![0.0; 2]; 100];
        let s = gradient_statistics(&net, &pts, &zeros);
        for (x, v) in pts.iter().zip(s) {
            let active = 0.6 * x[0] - 0.8 * x[1] > 0.0;
            let expected = if active { 1.5 * 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn bound_formulas() {
        let expect = 2.0 * (2.0 * 4f64.ln() / 100.0).sqrt();
        assert!((value_family_bound(1.0, 2, 100) - expect).abs() < 1e-15);
        let g = gradient_family_bound(1.0, 2, 100);
        assert!((g - 2.0 * 2f64.sqrt() * 2.0 * (2.0 * 4f64.ln() / 100.0).sqrt()).abs() < 1e-14);
    }
}
