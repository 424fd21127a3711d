//! Finite Barron mixtures `f(x) = Σ_i p_i a_i σ(⟨w_i, x⟩)` with `‖w_i‖_1 = 1`,
//! and the random-subnetwork construction that approximates them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::network::{dot, relu, TwoLayerNet};
use crate::rng;
use crate::targets::Target;

const SIMPLEX_TOL: f64 = 1e-12;

/// One support point of the mixing measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureAtom {
    /// Probability mass.
    pub p: f64,
    /// Outer coefficient `a(w)`.
    pub a: f64,
    /// Direction on the ℓ1 unit sphere.
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarronMixture {
    atoms: Vec<MixtureAtom>,
    d: usize,
}

impl BarronMixture {
    pub fn new(atoms: Vec<MixtureAtom>) -> Result<Self> {
        let d = atoms.first().map(|a| a.w.len()).ok_or_else(|| {
            Error::InvalidArgument("mixture needs at least one atom".into())
        })?;
        if d == 0 {
            return Err(Error::InvalidArgument("atoms need positive dimension".into()));
        }
        let mut total = 0.0;
        for atom in &atoms {
            check_dim(d, atom.w.len())?;
            if !(atom.p >= 0.0) || !atom.a.is_finite() {
                return Err(Error::InvalidArgument(format!("bad atom weight p={} a={}", atom.p, atom.a)));
            }
            let l1: f64 = atom.w.iter().map(|v| v.abs()).sum();
            if (l1 - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidArgument(format!("atom direction has l1 norm {l1}")));
            }
            total += atom.p;
        }
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { atoms, d })
    }

    /// Random mixture with positive outer coefficients `a_i ∈ [0.2, 1]`, so
    /// that `0 ≤ f ≤ 1` on the cube.
    pub fn random(n_atoms: usize, d: usize, seed: u64) -> Result<Self> {
        if n_atoms == 0 || d == 0 {
            return Err(Error::InvalidArgument("need at least one atom of positive dimension".into()));
        }
        let mut r = rng::from_seed(seed);
        let raw: Vec<f64> = (0..n_atoms).map(|_| r.random_range(0.1..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let mut atoms: Vec<MixtureAtom> = raw
            .iter()
            .map(|p| {
                let mut w: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let l1: f64 = w.iter().map(|v| v.abs()).sum();
                w.iter_mut().for_each(|v| *v /= l1);
                MixtureAtom { p: p / sum, a: r.random_range(0.2..=1.0), w }
            })
            .collect();
        // absorb rounding so the masses sum to one
        let drift = 1.0 - atoms.iter().map(|a| a.p).sum::<f64>();
        atoms[0].p += drift;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[MixtureAtom] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `(Σ p_i |a_i|^p)^{1/p}` for this representation; an upper bound on the
    /// Barron norm `γ_p`.
    pub fn gamma(&self, p: f64) -> f64 {
        self.atoms.iter().map(|a| a.p * a.a.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok(self.value(x))
    }

    /// A.e. gradient `Σ p_i a_i σ'(⟨w_i, x⟩) w_i`.
    pub fn eval_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        Ok(Target::gradient(self, x))
    }
}

impl Target for BarronMixture {
    fn name(&self) -> &str {
        "barron-mixture"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.atoms.iter().map(|a| a.p * a.a * relu(dot(&a.w, x))).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for atom in &self.atoms {
            if dot(&atom.w, x) > 0.0 {
                for (gj, wj) in g.iter_mut().zip(&atom.w) {
                    *gj += atom.p * atom.a * wj;
                }
            }
        }
        g
    }

    /// `Σ p_i |a_i| ‖w_i‖_2`, a valid bound on `‖∇f‖_2`.
    fn gradient_bound(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.p * a.a.abs() * a.w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum()
    }
}

/// Draws `m` atoms i.i.d. from the mixing measure and returns the network
/// `(1/m) Σ_j a(w_j) σ(⟨w_j, x⟩)`.
pub fn sample_subnetwork(mix: &BarronMixture, m: usize, seed: u64) -> Result<TwoLayerNet> {
    if m == 0 {
        return Err(Error::InvalidArgument("width must be positive".into()));
    }
    let weights = WeightedIndex::new(mix.atoms.iter().map(|a| a.p))
        .map_err(|e| Error::InvalidArgument(format!("mixture weights: {e}")))?;
    let mut r = rng::from_seed(seed);
    let mut a = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m * mix.d);
    for _ in 0..m {
        let atom = &mix.atoms[weights.sample(&mut r)];
        a.push(atom.a / m as f64);
        w.extend_from_slice(&atom.w);
    }
    TwoLayerNet::from_flat(a, w, mix.d)
}

/// Monte Carlo errors of a subnetwork against its mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubnetworkErrors {
    /// `E_x |f̂ − f|²`.
    pub value_mse: f64,
    /// `E_x ‖∇f̂ − ∇f‖²`.
    pub gradient_mse: f64,
    /// Path norm of the subnetwork.
    pub path_norm: f64,
}

/// MC estimate over `n_mc` uniform points on `[-1, 1]^d`.
pub fn subnetwork_errors(mix: &BarronMixture, net: &TwoLayerNet, n_mc: usize, seed: u64) -> Result<SubnetworkErrors> {
    check_dim(mix.d, net.input_dim())?;
    if n_mc == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo point".into()));
    }
    let mut r = rng::from_seed(seed);
    let mut x = vec![0.0; mix.d];
    let (mut v_sum, mut g_sum) = (0.0, 0.0);
    for _ in 0..n_mc {
        x.iter_mut().for_each(|v| *v = r.random_range(-1.0..=1.0));
        let (f_net, g_net) = net.forward_with_gradient(&x)?;
        let f = mix.value(&x);
        v_sum += (f_net - f).powi(2);
        let g = Target::gradient(mix, &x);
        g_sum += g_net.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(SubnetworkErrors {
        value_mse: v_sum / n_mc as f64,
        gradient_mse: g_sum / n_mc as f64,
        path_norm: net.path_norm(),
    })
}

/// The three events of the random-feature construction for one draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationEvents {
    /// `L¹_U < 3γ₂²/m`.
    pub value: bool,
    /// `L²_U ≤ 7γ₂²/m`.
    pub gradient: bool,
    /// `A_U < 2γ₂`.
    pub path_norm: bool,
}

impl ApproximationEvents {
    pub fn evaluate(errors: &SubnetworkErrors, gamma2: f64, m: usize) -> Self {
        let g2 = gamma2 * gamma2 / m as f64;
        Self {
            value: errors.value_mse < 3.0 * g2,
            gradient: errors.gradient_mse <= 7.0 * g2,
            path_norm: errors.path_norm < 2.0 * gamma2,
        }
    }

    pub fn all(&self) -> bool {
        self.value && self.gradient && self.path_norm
    }
}

/// Empirical event frequencies over many independent subnetwork draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationReport {
    pub m: usize,
    pub n_trials: usize,
    pub n_mc: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub freq_value: f64,
    pub freq_gradient: f64,
    pub freq_path_norm: f64,
    pub freq_all: f64,
    pub mean_value_mse: f64,
    /// Standard error of `mean_value_mse` across trials.
    pub value_mse_std_error: f64,
    pub mean_gradient_mse: f64,
    pub mean_path_norm: f64,
    pub max_path_norm: f64,
}

/// Estimates how often the three approximation events hold.
pub fn verify_approximation_theorem(
    mix: &BarronMixture,
    m: usize,
    n_trials: usize,
    n_mc: usize,
    seed: u64,
) -> Result<ApproximationReport> {
    if n_trials < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trials, got {n_trials}")));
    }
    let gamma2 = mix.gamma(2.0);
    let trials = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let net = sample_subnetwork(mix, m, rng::derive_seed(seed, 2 * t))?;
            subnetwork_errors(mix, &net, n_mc, rng::derive_seed(seed, 2 * t + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = n_trials as f64;
    let freq = |pred: &dyn Fn(&ApproximationEvents) -> bool| {
        trials
            .iter()
            .filter(|e| pred(&ApproximationEvents::evaluate(e, gamma2, m)))
            .count() as f64
            / n
    };
    let mean = |f: &dyn Fn(&SubnetworkErrors) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let mean_value_mse = mean(&|e| e.value_mse);
    let var = trials.iter().map(|e| (e.value_mse - mean_value_mse).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ApproximationReport {
        m,
        n_trials,
        n_mc,
        gamma1: mix.gamma(1.0),
        gamma2,
        freq_value: freq(&|e| e.value),
        freq_gradient: freq(&|e| e.gradient),
        freq_path_norm: freq(&|e| e.path_norm),
        freq_all: freq(&|e| e.all()),
        mean_value_mse,
        value_mse_std_error: (var / n).sqrt(),
        mean_gradient_mse: mean(&|e| e.gradient_mse),
        mean_path_norm: mean(&|e| e.path_norm),
        max_path_norm: trials.iter().map(|e| e.path_norm).fold(0.0, f64::max),
    })
}
