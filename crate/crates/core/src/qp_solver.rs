//! Dense projection QP `min ||u - u_nom||^2  s.t.  A u <= b`.
//!
//! [`solve`] is a dual active-set method in the style of Goldfarb and Idnani,
//! specialised to an identity Hessian. It starts from the unconstrained
//! minimizer `u_nom`, repeatedly adds the most violated row and drops rows
//! whose multipliers would turn negative. Each step is exact, so the method
//! terminates with the true minimizer or a certificate that the constraint
//! polyhedron is empty.
//!
//! [`solve_oracle`] enumerates every candidate active set and is only meant
//! for cross-checking small instances.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Primal feasibility tolerance, in distance units of the normalized rows.
pub const PRIMAL_TOL: f64 = 1e-9;
/// Dual tolerance used in the ratio test.
pub const DUAL_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;

const DEPENDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("constraint set is empty")]
    Infeasible,
    #[error("active-set iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("problem data is not finite")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_nom: DVector<f64>,
    /// `M x N` constraint matrix; `M = 0` means unconstrained.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    pub fn new(u_nom: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, QpError> {
        let p = Self { u_nom, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn unconstrained(u_nom: DVector<f64>) -> Self {
        let n = u_nom.len();
        Self {
            u_nom,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.u_nom.len()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    fn validate(&self) -> Result<(), QpError> {
        if self.a.ncols() != self.u_nom.len() && self.a.nrows() > 0 {
            return Err(QpError::Dimension(format!(
                "A has {} columns but u_nom has {} entries",
                self.a.ncols(),
                self.u_nom.len()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(QpError::Dimension(format!(
                "A has {} rows but b has {} entries",
                self.a.nrows(),
                self.b.len()
            )));
        }
        let finite = self
            .u_nom
            .iter()
            .chain(self.a.iter())
            .chain(self.b.iter())
            .all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(QpError::NonFinite)
        }
    }

    /// `||u - u_nom||^2`.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        (u - &self.u_nom).norm_squared()
    }

    /// Largest constraint violation `max_i (A_i u - b_i)`, or 0 without rows.
    pub fn max_violation(&self, u: &DVector<f64>) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        (&self.a * u - &self.b).max().max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    /// Indices of the rows active at the solution, ascending.
    pub active_set: Vec<usize>,
    /// One multiplier per row with `u_star = u_nom - A^T multipliers`.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

impl QpSolution {
    /// Stationarity, complementarity, and primal and dual feasibility
    /// residuals, folded into one number.
    pub fn kkt_residual(&self, p: &QpProblem) -> f64 {
        let stationarity = if p.n_rows() == 0 {
            (&self.u_star - &p.u_nom).amax()
        } else {
            (&self.u_star - &p.u_nom + p.a.transpose() * &self.multipliers).amax()
        };
        let slack = &p.a * &self.u_star - &p.b;
        let complementarity = self
            .multipliers
            .iter()
            .zip(slack.iter())
            .map(|(l, s)| (l * s).abs())
            .fold(0.0, f64::max);
        let dual = self.multipliers.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max);
        stationarity
            .max(complementarity)
            .max(dual)
            .max(p.max_violation(&self.u_star))
    }
}

/// Rows scaled to unit norm, flipped to `n^T u >= d`.
struct NormalizedRows {
    normals: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    scale: Vec<f64>,
}

fn normalize_rows(p: &QpProblem) -> Result<NormalizedRows, QpError> {
    let m = p.n_rows();
    let mut out = NormalizedRows {
        normals: Vec::with_capacity(m),
        rhs: Vec::with_capacity(m),
        scale: Vec::with_capacity(m),
    };
    for i in 0..m {
        let row = p.a.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            // 0 <= b_i
            if p.b[i] < -PRIMAL_TOL {
                return Err(QpError::Infeasible);
            }
            out.normals.push(DVector::zeros(p.n_vars()));
            out.rhs.push(f64::NEG_INFINITY);
            out.scale.push(0.0);
            continue;
        }
        out.normals.push(-row / norm);
        out.rhs.push(-p.b[i] / norm);
        out.scale.push(norm);
    }
    Ok(out)
}

/// Least-squares coefficients `r` of `v` on the active normals and the
/// residual `z = v - N r`.
fn project_out(
    active: &[usize],
    rows: &NormalizedRows,
    v: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (DVector::zeros(0), v.clone());
    }
    let k = active.len();
    let basis = DMatrix::from_fn(v.len(), k, |r, c| rows.normals[active[c]][r]);
    // QR rather than normal equations: the Gram matrix squares the
    // conditioning and leaves a spurious residual for nearly dependent rows.
    let qr = basis.clone().qr();
    let q = qr.q();
    let qtv = q.transpose() * v;
    let coeffs = qr
        .r()
        .solve_upper_triangular(&qtv)
        .filter(|c| c.iter().all(|x| x.is_finite()))
        .or_else(|| basis.clone().pseudo_inverse(1e-14).ok().map(|pinv| pinv * v))
        .unwrap_or_else(|| DVector::zeros(k));
    // k independent normals in k dimensions leave nothing to project.
    let z = if k >= v.len() {
        DVector::zeros(v.len())
    } else {
        v - &q * &qtv
    };
    (coeffs, z)
}

/// Exact minimizer of `||u - u_nom||^2` over `{A u <= b}`.
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let m = problem.n_rows();
    let mut u = problem.u_nom.clone();
    if m == 0 {
        return Ok(QpSolution {
            u_star: u,
            active_set: Vec::new(),
            multipliers: DVector::zeros(0),
            iterations: 0,
        });
    }
    let rows = normalize_rows(problem)?;
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let slack = |u: &DVector<f64>, j: usize| rows.normals[j].dot(u) - rows.rhs[j];

    loop {
        // most violated inactive row, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for j in 0..m {
            if rows.scale[j] == 0.0 || active.contains(&j) {
                continue;
            }
            let s = slack(&u, j);
            if s < -PRIMAL_TOL && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((j, s));
            }
        }
        let Some((p, _)) = pick else {
            break;
        };
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > MAX_ITERATIONS {
                return Err(QpError::IterationLimit(MAX_ITERATIONS));
            }
            let np = &rows.normals[p];
            let (r, z) = project_out(&active, &rows, np);

            // dual step limit
            let mut t1 = f64::INFINITY;
            let mut drop_at: Option<usize> = None;
            for (idx, (&rj, &lj)) in r.iter().zip(lambda.iter()).enumerate() {
                if rj > DUAL_TOL {
                    let t = lj / rj;
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(idx);
                    }
                }
            }
            // full primal step onto row p
            let z_sq = z.norm_squared();
            let t2 = if z_sq.sqrt() > DEPENDENCE_TOL {
                -slack(&u, p) / z.dot(np)
            } else {
                f64::INFINITY
            };

            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            if t2.is_finite() {
                u += t * &z;
            }
            for (lj, rj) in lambda.iter_mut().zip(r.iter()) {
                *lj -= t * rj;
            }
            lambda_p += t;

            if t2 <= t1 {
                active.push(p);
                lambda.push(lambda_p);
                break;
            }
            let k = drop_at.expect("finite t1 has a blocking row");
            active.remove(k);
            lambda.remove(k);
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (&j, &lj) in active.iter().zip(lambda.iter()) {
        multipliers[j] = lj / rows.scale[j];
    }
    active.sort_unstable();
    Ok(QpSolution {
        u_star: u,
        active_set: active,
        multipliers,
        iterations,
    })
}

/// Enumerates all active sets of size at most `N` and returns the best
/// KKT point. Intended for `M <= 12`, `N <= 4`.
pub fn solve_oracle(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let m = problem.n_rows();
    let n = problem.n_vars();
    let mut best_kkt: Option<(f64, QpSolution)> = None;
    let mut best_primal: Option<(f64, QpSolution)> = None;

    for mask in 0u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        if subset.len() > n {
            continue;
        }
        let k = subset.len();
        let (u, mu) = if k == 0 {
            (problem.u_nom.clone(), DVector::zeros(0))
        } else {
            let a_s = DMatrix::from_fn(k, n, |r, c| problem.a[(subset[r], c)]);
            let b_s = DVector::from_fn(k, |r, _| problem.b[subset[r]]);
            let gram = &a_s * a_s.transpose();
            let Some(ch) = gram.clone().cholesky() else {
                continue;
            };
            let eig = gram.symmetric_eigenvalues();
            if eig.min() <= 1e-12 * eig.max().max(1.0) {
                continue;
            }
            let mu = ch.solve(&(&a_s * &problem.u_nom - &b_s));
            let u = &problem.u_nom - a_s.transpose() * &mu;
            (u, mu)
        };
        // Relative to the size of `A u`: a large candidate built from an
        // ill-conditioned Gram matrix carries proportionally larger rounding.
        let size = 1.0 + problem.a.amax() * u.amax() + problem.b.amax();
        if problem.max_violation(&u) > PRIMAL_TOL * size {
            continue;
        }
        let mut multipliers = DVector::zeros(m);
        for (i, &row) in subset.iter().enumerate() {
            multipliers[row] = mu[i];
        }
        let obj = problem.objective(&u);
        let sol = QpSolution {
            u_star: u,
            active_set: subset,
            multipliers,
            iterations: 0,
        };
        let dual_ok = mu.iter().all(|&x| x >= -DUAL_TOL);
        let slot = if dual_ok { &mut best_kkt } else { &mut best_primal };
        if slot.as_ref().is_none_or(|(o, _)| obj < *o) {
            *slot = Some((obj, sol));
        }
    }
    best_kkt
        .or(best_primal)
        .map(|(_, s)| s)
        .ok_or(QpError::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn problem(u_nom: &[f64], rows: &[&[f64]], b: &[f64]) -> QpProblem {
        let n = u_nom.len();
        let a = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        QpProblem::new(DVector::from_column_slice(u_nom), a, DVector::from_column_slice(b)).unwrap()
    }

    #[test]
    fn unconstrained_returns_nominal() {
        let p = QpProblem::unconstrained(DVector::from_vec(vec![3.0, -1.0]));
        let s = solve(&p).unwrap();
        assert_eq!(s.u_star, DVector::from_vec(vec![3.0, -1.0]));
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn single_halfplane_projection() {
        let p = problem(&[1.0, 0.0], &[&[1.0, 0.0]], &[0.0]);
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.u_star, DVector::from_vec(vec![0.0, 0.0]), epsilon = 1e-15);
        assert_eq!(s.active_set, vec![0]);
        assert_abs_diff_eq!(s.multipliers[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn corner_projection() {
        let p = problem(&[1.0, 1.0], &[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.u_star, DVector::from_vec(vec![0.0, 0.0]), epsilon = 1e-15);
        assert_eq!(s.active_set, vec![0, 1]);
        assert!(s.kkt_residual(&p) < 1e-12);
        let o = solve_oracle(&p).unwrap();
        assert_eq!(o.active_set, vec![0, 1]);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x <= -1 and -x <= -1
        let p = problem(&[0.0], &[&[1.0], &[-1.0]], &[-1.0, -1.0]);
        assert_eq!(solve(&p), Err(QpError::Infeasible));
        assert_eq!(solve_oracle(&p), Err(QpError::Infeasible));
        let p = problem(&[0.0, 0.0], &[&[0.0, 0.0]], &[-1.0]);
        assert_eq!(solve(&p), Err(QpError::Infeasible));
    }

    #[test]
    fn idle_when_nominal_is_feasible() {
        let p = problem(&[0.3, -0.2], &[&[1.0, 1.0], &[-1.0, 2.0]], &[1.0, 1.0]);
        let s = solve(&p).unwrap();
        assert_eq!(s.u_star, p.u_nom);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn drops_rows_that_become_slack() {
        // the first row added is not active at the optimum
        let p = problem(
            &[2.0, 0.0],
            &[&[1.0, 0.2], &[1.0, -1.0], &[1.0, 1.0]],
            &[1.0, 0.5, 0.5],
        );
        let s = solve(&p).unwrap();
        let o = solve_oracle(&p).unwrap();
        assert_abs_diff_eq!(s.u_star, o.u_star, epsilon = 1e-12);
        assert_eq!(s.active_set, o.active_set);
        assert!(s.kkt_residual(&p) < 1e-12);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let r = QpProblem::new(
            DVector::zeros(2),
            DMatrix::zeros(1, 3),
            DVector::zeros(1),
        );
        assert!(matches!(r, Err(QpError::Dimension(_))));
        let r = QpProblem::new(
            DVector::from_vec(vec![f64::NAN]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        );
        assert_eq!(r, Err(QpError::NonFinite));
    }

    #[test]
    fn nearly_dependent_rows_do_not_hide_infeasibility() {
        // Rows 1..3 are close to dependent; with row 0 the set is empty.
        let a = DMatrix::from_row_slice(
            4,
            3,
            &[
                0.0, 0.9900976201560215, 0.0,
                0.2387742820124026, -0.017905771115751767, -0.1544521501752392,
                0.0, 0.06715377757626041, 0.6416622127029932,
                -0.3897200475558877, -0.07208008921904262, -0.7133748328443513,
            ],
        );
        let b = DVector::from_vec(vec![0.0, -38.170911142380106, 0.0, 0.0]);
        for scale in [1.0, 0.01] {
            let p = QpProblem::new(DVector::zeros(3), &a * scale, &b * scale).unwrap();
            assert_eq!(solve(&p), Err(QpError::Infeasible));
            assert_eq!(solve_oracle(&p), Err(QpError::Infeasible));
        }
    }
}
