//! Labeled samples, uniform input sampling and X%-gradient-enhanced assembly.
//!
//! The on-disk CSV layout is `x_1..x_d, y, g_1..g_d`; a sample without
//! gradient information leaves every `g_j` cell empty. The JSON form is an
//! array of `{"x": [...], "y": ..., "y_grad": [...] | null}` objects.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// One observation `(x, f*(x), ∇f*(x))`; the gradient is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(default)]
    pub y_grad: Option<Vec<f64>>,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: f64, y_grad: Option<Vec<f64>>) -> Result<Self> {
        if let Some(g) = &y_grad {
            check_dim(x.len(), g.len())?;
        }
        Ok(Self { x, y, y_grad })
    }
}

/// Nonempty, dimensionally homogeneous list of samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let d = first.x.len();
        if d == 0 {
            return Err(Error::InvalidArgument("samples must have positive dimension".into()));
        }
        for s in &samples {
            check_dim(d, s.x.len())?;
            if let Some(g) = &s.y_grad {
                check_dim(d, g.len())?;
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].x.len()
    }

    /// Number of samples carrying a gradient label.
    pub fn gradient_count(&self) -> usize {
        self.samples.iter().filter(|s| s.y_grad.is_some()).count()
    }

    /// First `n` samples, preserving order.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.samples[..n.min(self.len())].to_vec())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.dim();
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=d)
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("y".to_string()))
            .chain((1..=d).map(|j| format!("g_{j}")))
            .collect();
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.x.iter().map(f64::to_string).collect();
            row.push(s.y.to_string());
            match &s.y_grad {
                Some(g) => row.extend(g.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), d)),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let d = headers.iter().filter(|h| h.starts_with("x_")).count();
        let has_grad_cols = headers.iter().any(|h| h.starts_with("g_"));
        let expected = if has_grad_cols { 2 * d + 1 } else { d + 1 };
        check_dim(expected, headers.len())?;
        let parse = |cell: &str| -> Result<f64> {
            cell.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad number {cell:?}: {e}")))
        };
        let mut samples = Vec::new();
        for record in r.records() {
            let record = record?;
            let x = (0..d).map(|j| parse(&record[j])).collect::<Result<Vec<_>>>()?;
            let y = parse(&record[d])?;
            let y_grad = if has_grad_cols && (d + 1..2 * d + 1).all(|j| !record[j].trim().is_empty()) {
                Some((d + 1..2 * d + 1).map(|j| parse(&record[j])).collect::<Result<Vec<_>>>()?)
            } else {
                None
            };
            samples.push(LabeledSample { x, y, y_grad });
        }
        Self::new(samples)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::new(serde_json::from_str(s)?)
    }
}

/// `n` i.i.d. points uniform on `[-1, 1]^d`.
pub fn sample_uniform_cube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::from_seed(seed);
    (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..=1.0)).collect())
        .collect()
}

/// Which fraction of the samples also carries gradient labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementSpec {
    /// Percentage `X ∈ [0, 100]`.
    pub percent: f64,
    pub seed: u64,
}

impl EnhancementSpec {
    pub fn new(percent: f64, seed: u64) -> Result<Self> {
        if !(0.0..=100.0).contains(&percent) {
            return Err(Error::InvalidArgument(format!("enhancement {percent}% outside [0, 100]")));
        }
        Ok(Self { percent, seed })
    }

    /// `round(X·n/100)`, ties to even.
    pub fn gradient_count(&self, n: usize) -> usize {
        (self.percent * n as f64 / 100.0).round_ties_even() as usize
    }
}

/// Labels every point with its value and attaches gradients to a uniformly
/// chosen subset of size `round(X·n/100)`.
pub fn assemble_enhanced(
    points: &[Vec<f64>],
    values: &[f64],
    gradients: &[Vec<f64>],
    spec: EnhancementSpec,
) -> Result<Dataset> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = points.len();
    check_dim(n, values.len())?;
    check_dim(n, gradients.len())?;
    let k = spec.gradient_count(n);
    let mut with_grad = vec![false; n];
    let mut r = rng::from_seed(spec.seed);
    for i in rand::seq::index::sample(&mut r, n, k) {
        with_grad[i] = true;
    }
    let samples = points
        .iter()
        .zip(values)
        .zip(gradients)
        .zip(with_grad)
        .map(|(((x, &y), g), keep)| LabeledSample::new(x.clone(), y, keep.then(|| g.clone())))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}

/// Re-applies an enhancement level to an already fully labeled dataset.
pub fn enhance(full: &Dataset, spec: EnhancementSpec) -> Result<Dataset> {
    let points: Vec<Vec<f64>> = full.samples().iter().map(|s| s.x.clone()).collect();
    let values: Vec<f64> = full.samples().iter().map(|s| s.y).collect();
    let grads = full
        .samples()
        .iter()
        .map(|s| {
            s.y_grad
                .clone()
                .ok_or_else(|| Error::InvalidArgument("source dataset lacks gradients".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_enhanced(&points, &values, &grads, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(points: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let values = points.iter().map(|x| x.iter().sum()).collect();
        let grads = points.iter().map(|x| vec![1.0; x.len()]).collect();
        (values, grads)
    }

    #[test]
    fn cube_samples_in_range_and_seeded() {
        let p = sample_uniform_cube(500, 3, 1);
        assert!(p.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(p, sample_uniform_cube(500, 3, 1));
        assert_ne!(p, sample_uniform_cube(500, 3, 2));
    }

    #[test]
    fn cube_mean_near_zero() {
        let n = 100_000;
        let p = sample_uniform_cube(n, 2, 8);
        // std of the sample mean: sqrt(1/3 / n)
        let sigma = (1.0 / 3.0 / n as f64).sqrt();
        for j in 0..2 {
            let mean = p.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 * sigma, "coordinate {j} mean {mean}");
        }
    }

    #[test]
    fn enhancement_counts() {
        let p = sample_uniform_cube(400, 2, 0);
        let (v, g) = labels(&p);
        for (pct, expect) in [(100.0, 400), (20.0, 80), (0.0, 0)] {
            let ds = assemble_enhanced(&p, &v, &g, EnhancementSpec::new(pct, 3).unwrap()).unwrap();
            assert_eq!(ds.len(), 400);
            assert_eq!(ds.gradient_count(), expect);
        }
    }

    #[test]
    fn rounding_is_half_to_even() {
        let spec = EnhancementSpec::new(50.0, 0).unwrap();
        assert_eq!(spec.gradient_count(5), 2); // 2.5 -> 2
        assert_eq!(spec.gradient_count(7), 4); // 3.5 -> 4
        assert!(EnhancementSpec::new(100.5, 0).is_err());
    }

    #[test]
    fn gradients_attach_to_existing_points() {
        let p = sample_uniform_cube(50, 3, 4);
        let (v, g) = labels(&p);
        let spec = EnhancementSpec::new(20.0, 9).unwrap();
        let ds = assemble_enhanced(&p, &v, &g, spec).unwrap();
        for (s, x) in ds.samples().iter().zip(&p) {
            assert_eq!(&s.x, x);
        }
        assert_eq!(ds, assemble_enhanced(&p, &v, &g, spec).unwrap());
    }

    #[test]
    fn csv_round_trip_with_missing_gradients() {
        let ds = Dataset::new(vec![
            LabeledSample::new(vec![0.1, -0.2], 0.3, Some(vec![1.0, 2.0])).unwrap(),
            LabeledSample::new(vec![0.5, 0.25], -1.0 / 3.0, None).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,y,g_1,g_2\n"));
        assert!(text.contains("0.5,0.25,-0.3333333333333333,,\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
        assert_eq!(Dataset::from_json(&ds.to_json().unwrap()).unwrap(), ds);
    }

    #[test]
    fn invalid_datasets_rejected() {
        assert!(matches!(Dataset::new(vec![]), Err(Error::EmptyDataset)));
        assert!(LabeledSample::new(vec![0.0, 1.0], 0.0, Some(vec![1.0])).is_err());
        let mixed = vec![
            LabeledSample::new(vec![0.0], 0.0, None).unwrap(),
            LabeledSample::new(vec![0.0, 1.0], 0.0, None).unwrap(),
        ];
        assert!(Dataset::new(mixed).is_err());
    }
}
