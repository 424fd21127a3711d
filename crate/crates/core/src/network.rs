//! Two-layer ReLU network `f(x) = Σ_k a_k σ(⟨w_k, x⟩)` without biases.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Activation function. Only ReLU ships today.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative with `σ'(0) = 0`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
pub(crate) fn relu(z: f64) -> f64 {
    Activation::Relu.value(z)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Clamp to `[0, 1]`.
#[inline]
pub fn truncate(value: f64) -> f64 {
    value.clamp(0.0, 1.0)
}

/// Parameters `θ = {(a_k, w_k)}` of a width-`m` network on `R^d`.
///
/// Inner weights are stored row-major: row `k` is `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    m: usize,
    d: usize,
    a: Vec<f64>,
    w: Vec<f64>,
}

impl TwoLayerNet {
    /// Builds a net from outer weights and the rows of the inner weight matrix.
    pub fn new(a: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidArgument("width must be positive".into()));
        }
        check_dim(a.len(), rows.len())?;
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        let mut w = Vec::with_capacity(a.len() * d);
        for row in &rows {
            check_dim(d, row.len())?;
            w.extend_from_slice(row);
        }
        Self::from_flat(a, w, d)
    }

    /// Builds a net from outer weights and a flat row-major `m × d` matrix.
    pub fn from_flat(a: Vec<f64>, w: Vec<f64>, d: usize) -> Result<Self> {
        let m = a.len();
        if m == 0 || d == 0 {
            return Err(Error::InvalidArgument("width and dimension must be positive".into()));
        }
        check_dim(m * d, w.len())?;
        if a.iter().chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self { m, d, a, w })
    }

    /// All-zero network.
    pub fn zeros(m: usize, d: usize) -> Result<Self> {
        Self::from_flat(vec![0.0; m], vec![0.0; m * d], d)
    }

    /// Glorot-normal initialization: inner weights with std `sqrt(2/(d+1))`,
    /// outer weights with std `sqrt(2/(m+1))`.
    pub fn init_glorot(m: usize, d: usize, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidArgument("width and dimension must be positive".into()));
        }
        let mut rng = rng::from_seed(seed);
        let inner = Normal::new(0.0, (2.0 / (d as f64 + 1.0)).sqrt()).expect("positive std");
        let outer = Normal::new(0.0, (2.0 / (m as f64 + 1.0)).sqrt()).expect("positive std");
        let w: Vec<f64> = (0..m * d).map(|_| inner.sample(&mut rng)).collect();
        let a: Vec<f64> = (0..m).map(|_| outer.sample(&mut rng)).collect();
        Self::from_flat(a, w, d)
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn outer_weights(&self) -> &[f64] {
        &self.a
    }

    /// Flat row-major inner weight matrix.
    pub fn inner_weights(&self) -> &[f64] {
        &self.w
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.w[k * self.d..(k + 1) * self.d]
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.a, &mut self.w)
    }

    /// `Σ_k a_k σ(⟨w_k, x⟩)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(self.w.chunks_exact(self.d))
            .map(|(a, w)| a * relu(dot(w, x)))
            .sum()
    }

    /// Forward pass clamped to `[0, 1]`.
    pub fn truncated_forward(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(truncate)
    }

    /// A.e. gradient of the untruncated forward pass w.r.t. `x`:
    /// `Σ_k a_k σ'(⟨w_k, x⟩) w_k`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        let mut g = vec![0.0; self.d];
        self.accumulate_input_gradient(x, &mut g);
        Ok(g)
    }

    pub(crate) fn accumulate_input_gradient(&self, x: &[f64], g: &mut [f64]) {
        for (a, w) in self.a.iter().zip(self.w.chunks_exact(self.d)) {
            if dot(w, x) > 0.0 {
                for (gj, wj) in g.iter_mut().zip(w) {
                    *gj += a * wj;
                }
            }
        }
    }

    /// Value and input gradient in one pass.
    pub fn forward_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.d, x.len())?;
        let mut g = vec![0.0; self.d];
        let mut f = 0.0;
        for (a, w) in self.a.iter().zip(self.w.chunks_exact(self.d)) {
            let z = dot(w, x);
            if z > 0.0 {
                f += a * z;
                for (gj, wj) in g.iter_mut().zip(w) {
                    *gj += a * wj;
                }
            }
        }
        Ok((f, g))
    }

    /// Path norm `Σ_k |a_k| ‖w_k‖_1`.
    pub fn path_norm(&self) -> f64 {
        self.a
            .iter()
            .zip(self.w.chunks_exact(self.d))
            .map(|(a, w)| a.abs() * w.iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }

    /// Multiplies every outer weight by `factor`.
    pub fn scale_outer(&mut self, factor: f64) {
        self.a.iter_mut().for_each(|a| *a *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.w).all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct NetDocument {
    m: usize,
    d: usize,
    a: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
}

impl Serialize for TwoLayerNet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetDocument {
            m: self.m,
            d: self.d,
            a: self.a.clone(),
            w: self.w.chunks_exact(self.d).map(<[f64]>::to_vec).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TwoLayerNet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = NetDocument::deserialize(deserializer)?;
        if doc.a.len() != doc.m || doc.w.len() != doc.m {
            return Err(D::Error::custom("width does not match parameter shapes"));
        }
        if doc.w.iter().any(|row| row.len() != doc.d) {
            return Err(D::Error::custom("row length does not match input dimension"));
        }
        TwoLayerNet::new(doc.a, doc.w).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn net(a: &[f64], rows: &[&[f64]]) -> TwoLayerNet {
        TwoLayerNet::new(a.to_vec(), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    // Scalar-loop reimplementation used as an oracle.
    fn loop_forward(a: &[f64], rows: &[&[f64]], x: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..a.len() {
            let mut z = 0.0;
            for j in 0..x.len() {
                z += rows[k][j] * x[j];
            }
            if z > 0.0 {
                total += a[k] * z;
            }
        }
        total
    }

    #[test]
    fn forward_examples() {
        let single = net(&[1.0], &[&[1.0, 0.0]]);
        assert_eq!(single.forward(&[2.0, 5.0]).unwrap(), 2.0);
        assert_eq!(single.forward(&[-2.0, 5.0]).unwrap(), 0.0);

        let a = [1.0, -0.5];
        let rows: [&[f64]; 2] = [&[1.0, 1.0], &[2.0, 0.0]];
        let two = net(&a, &rows);
        assert_eq!(two.forward(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(loop_forward(&a, &rows, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let single = net(&[1.0], &[&[1.0, 0.0]]);
        assert!(matches!(
            single.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(single.input_gradient(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn truncation_clamps() {
        assert_eq!(truncate(1.7), 1.0);
        assert_eq!(truncate(-0.3), 0.0);
        assert_eq!(truncate(0.42), 0.42);
        let n = net(&[1.7], &[&[1.0]]);
        assert_eq!(n.truncated_forward(&[1.0]).unwrap(), 1.0);
        let n = net(&[-0.3], &[&[1.0]]);
        assert_eq!(n.truncated_forward(&[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn input_gradient_examples() {
        let n = net(&[2.0], &[&[1.0, 1.0]]);
        assert_eq!(n.input_gradient(&[1.0, 0.0]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(n.input_gradient(&[-3.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        // kink convention: σ'(0) = 0
        assert_eq!(n.input_gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let n = TwoLayerNet::init_glorot(8, 3, 11).unwrap();
        let mut r = rng::from_seed(5);
        let mut checked = 0;
        while checked < 20 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            if (0..8).any(|k| dot(n.row(k), &x).abs() <= 1e-3) {
                continue;
            }
            let g = n.input_gradient(&x).unwrap();
            let h = 1e-6;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (n.forward(&xp).unwrap() - n.forward(&xm).unwrap()) / (2.0 * h);
                let scale = g[j].abs().max(1e-8);
                assert!((fd - g[j]).abs() / scale < 1e-5, "component {j}: {fd} vs {}", g[j]);
            }
            checked += 1;
        }
    }

    #[test]
    fn path_norm_examples() {
        assert_eq!(net(&[1.0], &[&[1.0, -1.0]]).path_norm(), 2.0);
        assert_eq!(net(&[0.0, 5.0], &[&[9.0, 9.0], &[0.0, 0.0]]).path_norm(), 0.0);
        assert_eq!(net(&[2.0, -3.0], &[&[1.0, 0.0], &[0.5, -0.5]]).path_norm(), 5.0);
    }

    #[test]
    fn glorot_is_seeded() {
        let a = TwoLayerNet::init_glorot(16, 3, 42).unwrap();
        let b = TwoLayerNet::init_glorot(16, 3, 42).unwrap();
        let c = TwoLayerNet::init_glorot(16, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_inner_std() {
        let n = TwoLayerNet::init_glorot(10_000, 10, 3).unwrap();
        let w = n.inner_weights();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let target = (2.0_f64 / 11.0).sqrt();
        assert!((var.sqrt() / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let n = TwoLayerNet::init_glorot(5, 3, 9).unwrap();
        let s = n.to_json().unwrap();
        assert!(s.contains("\"W\""));
        assert_eq!(TwoLayerNet::from_json(&s).unwrap(), n);
        assert!(TwoLayerNet::from_json(r#"{"m":2,"d":1,"a":[1.0],"W":[[1.0]]}"#).is_err());
    }

    fn arb_net() -> impl Strategy<Value = TwoLayerNet> {
        (1usize..6, 1usize..4).prop_flat_map(|(m, d)| {
            (
                prop::collection::vec(-3.0..3.0f64, m),
                prop::collection::vec(-3.0..3.0f64, m * d),
                Just(d),
            )
                .prop_map(|(a, w, d)| TwoLayerNet::from_flat(a, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn positive_homogeneity(n in arb_net(), c in 0.1..10.0f64, seed in any::<u64>()) {
            let d = n.input_dim();
            let mut r = rng::from_seed(seed);
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let a: Vec<f64> = n.outer_weights().iter().map(|v| v / c).collect();
            let w: Vec<f64> = n.inner_weights().iter().map(|v| v * c).collect();
            let scaled = TwoLayerNet::from_flat(a, w, d).unwrap();
            let f0 = n.forward(&x).unwrap();
            let f1 = scaled.forward(&x).unwrap();
            prop_assert!((f0 - f1).abs() <= 1e-10 * (1.0 + f0.abs()));
            prop_assert!((n.path_norm() - scaled.path_norm()).abs() <= 1e-10 * (1.0 + n.path_norm()));
        }

        #[test]
        fn gradient_norm_bounded_by_path_norm(n in arb_net(), seed in any::<u64>()) {
            let d = n.input_dim();
            let mut r = rng::from_seed(seed);
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let g = n.input_gradient(&x).unwrap();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= n.path_norm() + 1e-12);
        }

        #[test]
        fn linear_within_activation_pattern(n in arb_net(), seed in any::<u64>(), t in 0.0..1.0f64) {
            let d = n.input_dim();
            let mut r = rng::from_seed(seed);
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + r.random_range(-1e-3..1e-3)).collect();
            let pattern = |p: &[f64]| (0..n.width()).map(|k| dot(n.row(k), p) > 0.0).collect::<Vec<_>>();
            prop_assume!(pattern(&x) == pattern(&y));
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            let expect = (1.0 - t) * n.forward(&x).unwrap() + t * n.forward(&y).unwrap();
            prop_assert!((n.forward(&z).unwrap() - expect).abs() < 1e-10);
        }
    }
}
