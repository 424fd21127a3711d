//! Stochastic elliptic problem `−∇·(a(x, Y) ∇u) = cos(x₁) sin(x₂)` on the unit
//! square with zero Dirichlet data, its quantity of interest `q = u(0.5, 0.5)`,
//! and discrete-adjoint sensitivities `dq/dY`.
//!
//! The random coefficient depends on `x₁` only:
//!
//! ```text
//! log(a − 0.5) = 1 + Y₁ (√π L / 2)^{1/2} + Σ_{k=2}^{d} ζ_k φ_k(x₁) Y_k,   L = 1/12
//! ζ_k = (√π L)^{1/2} exp(−(⌊k/2⌋ π L)² / 8)
//! φ_k = sin(⌊k/2⌋ π x₁) for even k, cos(⌊k/2⌋ π x₁) for odd k
//! ```
//!
//! Discretization is a 5-point finite-volume stencil on a uniform grid with
//! harmonic averaging of nodal coefficients on cell faces.

mod linalg;

pub use linalg::{
    conjugate_gradient, dense_solve, residual, solve_forward, BandedCholesky, CgReport, CsrMatrix,
};

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_uniform_cube, Dataset, LabeledSample};
use crate::error::{check_dim, Error, Result};

/// Correlation length of the coefficient expansion.
pub const CORRELATION_LENGTH: f64 = 1.0 / 12.0;

/// Default interior nodes per axis (`h = 1/64`).
pub const DEFAULT_GRID_N: usize = 63;

/// Default relative residual for iterative solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Uniform grid with `n` interior nodes per axis on `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid2D {
    n: usize,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interior node".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    /// Coordinate of grid line `i ∈ 0..=n+1` (0 and n+1 are boundary lines).
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn unknowns(&self) -> usize {
        self.n * self.n
    }

    /// Unknown index of interior node `(i, j)`, both in `1..=n`, with `i`
    /// running along `x₁`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.n + (i - 1)
    }

    /// Unknown index of the node at `(0.5, 0.5)`; requires odd `n`.
    pub fn center_index(&self) -> Result<usize> {
        if self.n % 2 == 1 {
            let c = self.n.div_ceil(2);
            Ok(self.index(c, c))
        } else {
            Err(Error::MissingCenterNode(self.n))
        }
    }
}

fn zeta(k: usize) -> f64 {
    let l = CORRELATION_LENGTH;
    let half = (k / 2) as f64;
    (PI.sqrt() * l).sqrt() * (-(half * PI * l).powi(2) / 8.0).exp()
}

fn phi(k: usize, x1: f64) -> f64 {
    let arg = (k / 2) as f64 * PI * x1;
    if k % 2 == 0 {
        arg.sin()
    } else {
        arg.cos()
    }
}

/// Multiplier of `Y_k` (1-based `k`) in `log(a − 0.5)` at `x₁`.
pub fn expansion_term(k: usize, x1: f64) -> f64 {
    if k == 1 {
        (PI.sqrt() * CORRELATION_LENGTH / 2.0).sqrt()
    } else {
        zeta(k) * phi(k, x1)
    }
}

/// `ζ_k` for `k ≥ 2`.
pub fn expansion_decay(k: usize) -> f64 {
    zeta(k)
}

/// Coefficient field for one realization of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    y: Vec<f64>,
}

impl CoefficientField {
    pub fn new(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidArgument("random vector must be nonempty".into()));
        }
        Ok(Self { y: y.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    fn log_excess(&self, x1: f64) -> f64 {
        1.0 + self
            .y
            .iter()
            .enumerate()
            .map(|(i, yk)| expansion_term(i + 1, x1) * yk)
            .sum::<f64>()
    }

    /// `a(x₁)`; always above 0.5.
    pub fn value(&self, x1: f64) -> f64 {
        0.5 + self.log_excess(x1).exp()
    }

    /// `∂a/∂Y_k` at `x₁`, `k` 1-based.
    pub fn sensitivity(&self, k: usize, x1: f64) -> f64 {
        (self.value(x1) - 0.5) * expansion_term(k, x1)
    }
}

/// `a(Y, x)` for `x ∈ [0, 1]²`.
pub fn coefficient(y: &[f64], x: [f64; 2]) -> Result<f64> {
    Ok(CoefficientField::new(y)?.value(x[0]))
}

/// Deterministic load `cos(x₁) sin(x₂)`.
pub fn load(x1: f64, x2: f64) -> f64 {
    x1.cos() * x2.sin()
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Assembles `A u = F` for coefficient `coef(x₁, x₂)` and load `rhs(x₁, x₂)`.
///
/// Face conductances are harmonic means of the two adjacent nodal values
/// (boundary nodes included) divided by `h²`; each face adds the same value
/// to both adjacent rows, so `A` is exactly symmetric.
pub fn assemble_with(
    grid: &Grid2D,
    coef: impl Fn(f64, f64) -> f64,
    rhs: impl Fn(f64, f64) -> f64,
) -> (CsrMatrix, Vec<f64>) {
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let node_a: Vec<Vec<f64>> = (0..=n + 1)
        .map(|i| (0..=n + 1).map(|j| coef(grid.coord(i), grid.coord(j))).collect())
        .collect();
    // fx[i][j]: face between (i, j) and (i+1, j); fy[i][j]: between (i, j) and (i, j+1)
    let fx: Vec<Vec<f64>> = (0..=n)
        .map(|i| (0..=n + 1).map(|j| harmonic(node_a[i][j], node_a[i + 1][j]) / h2).collect())
        .collect();
    let fy: Vec<Vec<f64>> = (0..=n + 1)
        .map(|i| (0..=n).map(|j| harmonic(node_a[i][j], node_a[i][j + 1]) / h2).collect())
        .collect();
    assemble_from_faces(grid, &fx, &fy, rhs)
}

fn assemble_from_faces(
    grid: &Grid2D,
    fx: &[Vec<f64>],
    fy: &[Vec<f64>],
    rhs: impl Fn(f64, f64) -> f64,
) -> (CsrMatrix, Vec<f64>) {
    let n = grid.n();
    let mut rows = Vec::with_capacity(grid.unknowns());
    let mut f = Vec::with_capacity(grid.unknowns());
    for j in 1..=n {
        for i in 1..=n {
            let (w, e, s, nn) = (fx[i - 1][j], fx[i][j], fy[i][j - 1], fy[i][j]);
            let mut row = Vec::with_capacity(5);
            if j > 1 {
                row.push((grid.index(i, j - 1), -s));
            }
            if i > 1 {
                row.push((grid.index(i - 1, j), -w));
            }
            row.push((grid.index(i, j), w + e + s + nn));
            if i < n {
                row.push((grid.index(i + 1, j), -e));
            }
            if j < n {
                row.push((grid.index(i, j + 1), -nn));
            }
            rows.push(row);
            f.push(rhs(grid.coord(i), grid.coord(j)));
        }
    }
    let a = CsrMatrix::from_rows(grid.unknowns(), rows).expect("stencil columns are sorted");
    (a, f)
}

/// System matrix and load vector for realization `y`.
pub fn assemble_system(y: &[f64], grid: &Grid2D) -> Result<(CsrMatrix, Vec<f64>)> {
    let field = CoefficientField::new(y)?;
    Ok(assemble_with(grid, |x1, _| field.value(x1), load))
}

/// `q = u(0.5, 0.5)`.
pub fn qoi(u: &[f64], grid: &Grid2D) -> Result<f64> {
    check_dim(grid.unknowns(), u.len())?;
    Ok(u[grid.center_index()?])
}

/// Per-face-column sums `Σ_j (λ_P − λ_Q)(u_P − u_Q)`, boundary values zero.
/// Returns `(sx, sy)` where `sx[i]` covers x₁-faces between columns `i` and
/// `i+1` (`i ∈ 0..=n`) and `sy[i]` covers x₂-faces inside column `i`
/// (`i ∈ 0..=n+1`, boundary columns are zero).
fn face_products(grid: &Grid2D, u: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n();
    let val = |v: &[f64], i: usize, j: usize| {
        if i == 0 || j == 0 || i > n || j > n {
            0.0
        } else {
            v[grid.index(i, j)]
        }
    };
    let mut sx = vec![0.0; n + 1];
    let mut sy = vec![0.0; n + 2];
    for j in 1..=n {
        for (i, s) in sx.iter_mut().enumerate() {
            *s += (val(lambda, i, j) - val(lambda, i + 1, j)) * (val(u, i, j) - val(u, i + 1, j));
        }
    }
    for (i, s) in sy.iter_mut().enumerate().take(n + 1).skip(1) {
        for j in 0..=n {
            *s += (val(lambda, i, j) - val(lambda, i, j + 1)) * (val(u, i, j) - val(u, i, j + 1));
        }
    }
    (sx, sy)
}

/// `dq/dY_k = −λᵀ (∂A/∂Y_k) u` given the forward solution `u` and the
/// adjoint solution `λ` of `Aᵀ λ = e_center`.
///
/// Uses `uᵀ A v = Σ_faces c_f (u_P − u_Q)(v_P − v_Q)` so every derivative
/// is a weighted sum over face columns.
fn adjoint_sensitivities(field: &CoefficientField, grid: &Grid2D, u: &[f64], lambda: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let (sx, sy) = face_products(grid, u, lambda);
    let a: Vec<f64> = (0..=n + 1).map(|i| field.value(grid.coord(i))).collect();
    (1..=field.dim())
        .map(|k| {
            let da: Vec<f64> = (0..=n + 1).map(|i| field.sensitivity(k, grid.coord(i))).collect();
            let mut total = 0.0;
            for i in 0..=n {
                let (p, q) = (a[i], a[i + 1]);
                let denom = (p + q) * (p + q);
                let dc = (2.0 * q * q / denom * da[i] + 2.0 * p * p / denom * da[i + 1]) / h2;
                total += dc * sx[i];
            }
            for i in 1..=n {
                // harmonic(a, a) = a along x₂-faces
                total += da[i] / h2 * sy[i];
            }
            -total
        })
        .collect()
}

/// Adjoint gradient `dq/dY` for a given forward solution, with the adjoint
/// system solved by CG on the same matrix.
pub fn qoi_gradient(y: &[f64], grid: &Grid2D, u: &[f64], tol: f64) -> Result<Vec<f64>> {
    check_dim(grid.unknowns(), u.len())?;
    let field = CoefficientField::new(y)?;
    let (a, _) = assemble_system(y, grid)?;
    let mut c = vec![0.0; grid.unknowns()];
    c[grid.center_index()?] = 1.0;
    // A is symmetric, so the adjoint operator is A itself.
    let lambda = solve_forward(&a, &c, tol)?;
    Ok(adjoint_sensitivities(&field, grid, u, &lambda))
}

/// Linear solver used by the realization pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky; one factorization serves forward and adjoint solves.
    Cholesky,
    /// Jacobi-preconditioned CG on the shared matrix.
    Cg { tol: f64 },
}

/// One solved realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeRealization {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub q: f64,
    pub q_grad: Vec<f64>,
}

/// Forward + adjoint pipeline on a fixed grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub grid: Grid2D,
    pub solver: LinearSolver,
}

impl PdeProblem {
    pub fn new(grid: Grid2D) -> Result<Self> {
        grid.center_index()?;
        Ok(Self { grid, solver: LinearSolver::Cholesky })
    }

    pub fn with_solver(mut self, solver: LinearSolver) -> Self {
        self.solver = solver;
        self
    }

    /// Solves forward and adjoint systems for `y` and returns `q`, `dq/dY`.
    pub fn realize(&self, y: &[f64]) -> Result<PdeRealization> {
        let grid = &self.grid;
        let field = CoefficientField::new(y)?;
        let (a, f) = assemble_with(grid, |x1, _| field.value(x1), load);
        let center = grid.center_index()?;
        let mut c = vec![0.0; grid.unknowns()];
        c[center] = 1.0;
        let (u, lambda) = match self.solver {
            LinearSolver::Cholesky => {
                let factor = BandedCholesky::factor(&a)?;
                (factor.solve(&f)?, factor.solve(&c)?)
            }
            LinearSolver::Cg { tol } => (solve_forward(&a, &f, tol)?, solve_forward(&a, &c, tol)?),
        };
        let q_grad = adjoint_sensitivities(&field, grid, &u, &lambda);
        Ok(PdeRealization { y: y.to_vec(), q: u[center], u, q_grad })
    }

    /// `q` alone (no adjoint solve).
    pub fn qoi_only(&self, y: &[f64]) -> Result<f64> {
        let (a, f) = assemble_system(y, &self.grid)?;
        let u = match self.solver {
            LinearSolver::Cholesky => BandedCholesky::factor(&a)?.solve(&f)?,
            LinearSolver::Cg { tol } => solve_forward(&a, &f, tol)?,
        };
        qoi(&u, &self.grid)
    }
}

/// Provenance written next to a generated realization dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqMetadata {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub grid_n: usize,
    pub h: f64,
    pub solver: LinearSolver,
    pub correlation_length: f64,
    pub qoi_location: [f64; 2],
}

/// `n` realizations with `Y` uniform on `[-1, 1]^d`; every sample carries
/// `(x = Y, y = q, y_grad = dq/dY)`.
pub fn generate_uq_dataset(d: usize, n: usize, problem: &PdeProblem, seed: u64) -> Result<(Dataset, UqMetadata)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("need at least one realization of positive dimension".into()));
    }
    let ys = sample_uniform_cube(n, d, seed);
    let samples = ys
        .par_iter()
        .map(|y| {
            let r = problem.realize(y)?;
            LabeledSample::new(r.y, r.q, Some(r.q_grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = UqMetadata {
        d,
        n,
        seed,
        grid_n: problem.grid.n(),
        h: problem.grid.h(),
        solver: problem.solver,
        correlation_length: CORRELATION_LENGTH,
        qoi_location: [0.5, 0.5],
    };
    Ok((Dataset::new(samples)?, meta))
}

/// Max nodal error of the discrete solution against `u* = sin(πx₁) sin(πx₂)`
/// with `a ≡ 1` and the matching load `2π² u*`.
pub fn manufactured_solution_error(grid: &Grid2D) -> Result<f64> {
    let exact = |x1: f64, x2: f64| (PI * x1).sin() * (PI * x2).sin();
    let (a, f) = assemble_with(grid, |_, _| 1.0, |x1, x2| 2.0 * PI * PI * exact(x1, x2));
    let u = BandedCholesky::factor(&a)?.solve(&f)?;
    let n = grid.n();
    let mut err: f64 = 0.0;
    for j in 1..=n {
        for i in 1..=n {
            err = err.max((u[grid.index(i, j)] - exact(grid.coord(i), grid.coord(j))).abs());
        }
    }
    Ok(err)
}
