//! Convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ zᵀ Q z + qᵀ z
//! subject to  A_eq z = b_eq
//!             l_in ≤ A_in z ≤ u_in
//! ```
//!
//! and are solved with an operator-splitting ADMM scheme ([`solve_qp`]).

mod admm;
pub mod ldl;
pub mod sparse;

use serde::{Deserialize, Serialize};

pub use admm::solve_qp;
pub use sparse::CscMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("inequality row {row} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { row: usize, lower: f64, upper: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("linear system factorization failed: {0}")]
    Factorization(#[from] ldl::LdlError),
}

/// A convex QP in canonical form. `q_matrix` holds the full symmetric matrix,
/// not just one triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProgram {
    pub num_vars: usize,
    pub q_matrix: CscMatrix,
    pub q: Vec<f64>,
    pub a_eq: CscMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: CscMatrix,
    pub l_in: Vec<f64>,
    pub u_in: Vec<f64>,
}

impl QuadraticProgram {
    /// Checks dimensions, symmetry and bound ordering.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars;
        let dim = |what: &str| Err(QpError::Dimension(what.to_string()));
        if self.q_matrix.nrows != n || self.q_matrix.ncols != n {
            return dim("Q must be num_vars × num_vars");
        }
        if self.q.len() != n {
            return dim("q must have num_vars entries");
        }
        if self.a_eq.ncols != n || self.a_eq.nrows != self.b_eq.len() {
            return dim("A_eq/b_eq shapes disagree");
        }
        if self.a_in.ncols != n
            || self.a_in.nrows != self.l_in.len()
            || self.a_in.nrows != self.u_in.len()
        {
            return dim("A_in/l_in/u_in shapes disagree");
        }
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !all_finite(&self.q_matrix.values) {
            return Err(QpError::NonFinite("Q"));
        }
        if !all_finite(&self.q) {
            return Err(QpError::NonFinite("q"));
        }
        if !all_finite(&self.a_eq.values) || !all_finite(&self.b_eq) {
            return Err(QpError::NonFinite("equality constraints"));
        }
        if !all_finite(&self.a_in.values) {
            return Err(QpError::NonFinite("A_in"));
        }
        for (row, (&lower, &upper)) in self.l_in.iter().zip(&self.u_in).enumerate() {
            if lower.is_nan() || upper.is_nan() {
                return Err(QpError::NonFinite("inequality bounds"));
            }
            if lower > upper {
                return Err(QpError::InvertedBounds { row, lower, upper });
            }
        }
        let scale = self.q_matrix.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let asym = self.q_matrix.asymmetry();
        if asym > 1e-12 * scale {
            return Err(QpError::Asymmetric(asym));
        }
        Ok(())
    }

    /// `½ zᵀ Q z + qᵀ z`
    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut qz = vec![0.0; self.num_vars];
        self.q_matrix.mul_vec(z, &mut qz);
        z.iter()
            .zip(&qz)
            .zip(&self.q)
            .map(|((zi, qzi), ci)| 0.5 * zi * qzi + ci * zi)
            .sum()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_in(&self) -> usize {
        self.l_in.len()
    }
}

/// Incremental assembly of a [`QuadraticProgram`].
#[derive(Debug, Clone, Default)]
pub struct QpBuilder {
    num_vars: usize,
    q_trip: Vec<(usize, usize, f64)>,
    q: Vec<f64>,
    eq_trip: Vec<(usize, usize, f64)>,
    b_eq: Vec<f64>,
    in_trip: Vec<(usize, usize, f64)>,
    l_in: Vec<f64>,
    u_in: Vec<f64>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with linear cost `c` and returns its index.
    pub fn add_var(&mut self, c: f64) -> usize {
        self.q.push(c);
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_linear_cost(&mut self, var: usize, c: f64) {
        self.q[var] += c;
    }

    /// Adds `w · z_i · z_j` to the objective (`w · z_i²` when `i == j`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, w: f64) {
        if i == j {
            self.q_trip.push((i, i, 2.0 * w));
        } else {
            self.q_trip.push((i, j, w));
            self.q_trip.push((j, i, w));
        }
    }

    /// Adds `Σ coef·z = rhs` and returns the row index.
    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.b_eq.len();
        self.eq_trip.extend(terms.iter().map(|&(v, c)| (row, v, c)));
        self.b_eq.push(rhs);
        row
    }

    /// Adds `lower ≤ Σ coef·z ≤ upper` and returns the row index.
    pub fn add_range(&mut self, terms: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let row = self.l_in.len();
        self.in_trip.extend(terms.iter().map(|&(v, c)| (row, v, c)));
        self.l_in.push(lower);
        self.u_in.push(upper);
        row
    }

    pub fn add_bounds(&mut self, var: usize, lower: f64, upper: f64) -> usize {
        self.add_range(&[(var, 1.0)], lower, upper)
    }

    pub fn build(self) -> QuadraticProgram {
        let n = self.num_vars;
        QuadraticProgram {
            num_vars: n,
            q_matrix: CscMatrix::from_triplets(n, n, &self.q_trip),
            q: self.q,
            a_eq: CscMatrix::from_triplets(self.b_eq.len(), n, &self.eq_trip),
            b_eq: self.b_eq,
            a_in: CscMatrix::from_triplets(self.l_in.len(), n, &self.in_trip),
            l_in: self.l_in,
            u_in: self.u_in,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    /// The constraints admit no point; `certificate` holds a Farkas direction.
    Infeasible,
    /// The objective is unbounded below; `certificate` holds a descent ray.
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// Multipliers for `[A_eq; A_in]`; positive on an active upper bound,
    /// negative on an active lower bound.
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    /// Primal residual relative to `1 + ‖scale‖∞` of the constraint terms.
    pub primal_residual: f64,
    /// Dual residual relative to `1 + ‖scale‖∞` of the stationarity terms.
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
    pub certificate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub check_interval: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-4,
            eps_dual_inf: 1e-4,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            adaptive_rho: true,
            polish: true,
            check_interval: 25,
        }
    }
}

/// Absolute optimality residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Measures how far `s` is from satisfying the KKT conditions of `p`.
///
/// Inequality multipliers are only credited on rows whose bound is active at
/// `s.z` within `tol`; a multiplier on an inactive row, or with the wrong
/// sign, shows up as a complementarity violation.
pub fn verify_kkt(p: &QuadraticProgram, s: &QpSolution, tol: f64) -> KktReport {
    let n = p.num_vars;
    let m_eq = p.num_eq();
    let z = &s.z;
    let mut y = s.y.clone();
    y.resize(m_eq + p.num_in(), 0.0);

    let mut primal = 0.0_f64;
    let mut aeq_z = vec![0.0; m_eq];
    p.a_eq.mul_vec(z, &mut aeq_z);
    for (v, b) in aeq_z.iter().zip(&p.b_eq) {
        primal = primal.max((v - b).abs());
    }
    let mut ain_z = vec![0.0; p.num_in()];
    p.a_in.mul_vec(z, &mut ain_z);
    let mut complementarity = 0.0_f64;
    for i in 0..p.num_in() {
        let (v, lo, hi) = (ain_z[i], p.l_in[i], p.u_in[i]);
        primal = primal.max(lo - v).max(v - hi);
        let yi = &mut y[m_eq + i];
        let viol = if *yi > 0.0 {
            if hi.is_finite() {
                *yi * (hi - v).max(0.0)
            } else {
                yi.abs()
            }
        } else if *yi < 0.0 {
            if lo.is_finite() {
                -*yi * (v - lo).max(0.0)
            } else {
                yi.abs()
            }
        } else {
            0.0
        };
        complementarity = complementarity.max(viol);
        let active = (*yi > 0.0 && hi - v <= tol) || (*yi < 0.0 && v - lo <= tol);
        if !active {
            *yi = 0.0;
        }
    }

    let mut grad = vec![0.0; n];
    p.q_matrix.mul_vec(z, &mut grad);
    let mut tmp = vec![0.0; n];
    p.a_eq.tr_mul_vec(&y[..m_eq], &mut tmp);
    for i in 0..n {
        grad[i] += p.q[i] + tmp[i];
    }
    p.a_in.tr_mul_vec(&y[m_eq..], &mut tmp);
    for i in 0..n {
        grad[i] += tmp[i];
    }
    KktReport {
        primal: primal.max(0.0),
        stationarity: sparse::inf_norm(&grad),
        complementarity,
    }
}
