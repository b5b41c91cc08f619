//! Control barrier functions for the force-safe set and the supervisory QP.
//!
//! Each row of the safe set gives a constraint `b_i(x) = h'_i - H'_i r(q)`
//! that is positive inside. Since `b_i` has relative degree two, the barrier
//!
//! ```text
//! B_i = -ln(b_i / (1 + b_i)) + a_E b_E bdot_i^2 / (1 + b_E bdot_i^2)
//! ```
//!
//! carries a velocity term, and the condition
//! `L_f B_i + L_g B_i u <= gamma_i / B_i` becomes the row `A_i u <= b_i` of
//! the QP solved by [`crate::qp_solver`].

use nalgebra::{DMatrix, DVector, RowDVector};
use thiserror::Error;

use crate::env_geometry::SafeSet;
use crate::pcc_model::{self, ControlAffine, ModelError, RobotParams, RobotState};
use crate::qp_solver::{self, QpError, QpProblem, QpSolution};

/// Rows whose `L_g B` norm is below this are dropped for the step.
pub const DEGENERATE_ROW_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("state is outside the safe set: row {row} has b = {value}")]
    NotInSafeSet { row: usize, value: f64 },
    #[error("invalid barrier configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Named tunings. `High` is the most conservative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    None,
    Low,
    High,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::None, Preset::Low, Preset::High];

    pub fn name(self) -> &'static str {
        match self {
            Preset::None => "none",
            Preset::Low => "low",
            Preset::High => "high",
        }
    }

    /// `(a_E, b_E, gamma)`.
    pub fn constants(self) -> (f64, f64, f64) {
        match self {
            Preset::None => (0.0, 0.0, 0.0),
            Preset::Low => (2.0, 2.0, 2.0),
            Preset::High => (0.2, 0.2, 0.2),
        }
    }

    pub fn config(self) -> BarrierConfig {
        match self {
            Preset::None => BarrierConfig::Disabled,
            _ => {
                let (a_e, b_e, gamma) = self.constants();
                BarrierConfig::Active(BarrierTuning {
                    a_e,
                    b_e,
                    gamma: Gamma::Scalar(gamma),
                })
            }
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Preset::None),
            "low" => Ok(Preset::Low),
            "high" => Ok(Preset::High),
            other => Err(format!("unknown preset `{other}` (expected none, low or high)")),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Growth-rate constant, shared by all rows or given per row.
#[derive(Debug, Clone, PartialEq)]
pub enum Gamma {
    Scalar(f64),
    PerRow(Vec<f64>),
}

impl Gamma {
    pub fn for_row(&self, row: usize) -> Result<f64, CbfError> {
        match self {
            Gamma::Scalar(g) => Ok(*g),
            Gamma::PerRow(v) => v.get(row).copied().ok_or_else(|| {
                CbfError::InvalidConfig(format!("no gamma for row {row} ({} given)", v.len()))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierTuning {
    pub a_e: f64,
    pub b_e: f64,
    pub gamma: Gamma,
}

impl BarrierTuning {
    pub fn new(a_e: f64, b_e: f64, gamma: Gamma) -> Result<Self, CbfError> {
        let t = Self { a_e, b_e, gamma };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), CbfError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.a_e) || !positive(self.b_e) {
            return Err(CbfError::InvalidConfig(format!(
                "a_e and b_e must be positive, got {} and {}",
                self.a_e, self.b_e
            )));
        }
        let gammas: Vec<f64> = match &self.gamma {
            Gamma::Scalar(g) => vec![*g],
            Gamma::PerRow(v) => v.clone(),
        };
        if gammas.is_empty() || !gammas.iter().all(|&g| positive(g)) {
            return Err(CbfError::InvalidConfig(format!(
                "gamma entries must be positive, got {gammas:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierConfig {
    /// No filtering: `u* = u_nom`.
    Disabled,
    Active(BarrierTuning),
}

impl BarrierConfig {
    pub fn is_active(&self) -> bool {
        matches!(self, BarrierConfig::Active(_))
    }
}

/// `(b_i, bdot_i)` for every row of the safe set.
pub fn constraint_values(
    safe_set: &SafeSet,
    params: &RobotParams,
    state: &RobotState,
) -> Vec<(f64, f64)> {
    let r = pcc_model::fk_tip(params, &state.q);
    let rdot = pcc_model::tip_jacobian(params, &state.q) * &state.qd;
    safe_set
        .rows()
        .iter()
        .map(|f| (f.offset - f.coeffs.dot(&r), -f.coeffs.dot(&rdot)))
        .collect()
}

/// `-ln(b/(1+b)) + a_E b_E bdot^2 / (1 + b_E bdot^2)`.
pub fn barrier(tuning: &BarrierTuning, b: f64, bdot: f64) -> Result<f64, CbfError> {
    if !(b > 0.0) {
        return Err(CbfError::NotInSafeSet { row: 0, value: b });
    }
    let v = tuning.b_e * bdot * bdot;
    Ok(-(b / (1.0 + b)).ln() + tuning.a_e * v / (1.0 + v))
}

/// `dB/db`.
pub fn barrier_db(b: f64) -> f64 {
    -1.0 / (b * (1.0 + b))
}

/// `dB/dbdot`.
pub fn barrier_dbdot(tuning: &BarrierTuning, bdot: f64) -> f64 {
    let den = 1.0 + tuning.b_e * bdot * bdot;
    2.0 * tuning.a_e * tuning.b_e * bdot / (den * den)
}

/// Gradient of one barrier with respect to `q` and `qd`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierGradient {
    pub dq: RowDVector<f64>,
    pub dqd: RowDVector<f64>,
}

/// Per-row barrier values and derivatives at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub b: f64,
    pub bdot: f64,
    pub barrier: f64,
    pub gradient: BarrierGradient,
    pub lf: f64,
    pub lg: RowDVector<f64>,
    /// False when the row was dropped because `L_g B` vanished.
    pub active: bool,
}

fn row_gradients(
    tuning: &BarrierTuning,
    safe_set: &SafeSet,
    params: &RobotParams,
    state: &RobotState,
) -> Result<Vec<(f64, f64, f64, BarrierGradient)>, CbfError> {
    let (r, jac, jac_dot) = pcc_model::tip_kinematics(params, state);
    let rdot = &jac * &state.qd;
    let mut out = Vec::with_capacity(safe_set.rows().len());
    for (row, f) in safe_set.rows().iter().enumerate() {
        let b = f.offset - f.coeffs.dot(&r);
        let bdot = -f.coeffs.dot(&rdot);
        if !(b > 0.0) {
            return Err(CbfError::NotInSafeSet { row, value: b });
        }
        let value = barrier(tuning, b, bdot)?;
        // db/dq = dbdot/dqd = -H' J, dbdot/dq = -H' J_dot
        let db_dq = -(f.coeffs.transpose() * &jac);
        let dbdot_dq = -(f.coeffs.transpose() * &jac_dot);
        let gb = barrier_db(b);
        let gv = barrier_dbdot(tuning, bdot);
        let gradient = BarrierGradient {
            dq: RowDVector::from_iterator(
                params.n_seg(),
                db_dq.iter().zip(dbdot_dq.iter()).map(|(x, y)| gb * x + gv * y),
            ),
            dqd: RowDVector::from_iterator(params.n_seg(), db_dq.iter().map(|x| gv * x)),
        };
        out.push((b, bdot, value, gradient));
    }
    Ok(out)
}

/// `(dB_i/dq, dB_i/dqd)` for every row, by the chain rule through `b_i`
/// and `bdot_i`.
pub fn barrier_gradients(
    tuning: &BarrierTuning,
    safe_set: &SafeSet,
    params: &RobotParams,
    state: &RobotState,
) -> Result<Vec<BarrierGradient>, CbfError> {
    Ok(row_gradients(tuning, safe_set, params, state)?
        .into_iter()
        .map(|(_, _, _, g)| g)
        .collect())
}

/// Retained QP rows together with the full per-row evaluation.
#[derive(Debug, Clone)]
pub struct QpRows {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Safe-set row index of each QP row.
    pub kept: Vec<usize>,
    /// Safe-set rows dropped because `L_g B` vanished.
    pub dropped: Vec<usize>,
    pub evals: Vec<ConstraintEval>,
}

/// Assembles `A(x)` and `b(x)` from precomputed dynamics terms.
pub fn qp_rows_with(
    tuning: &BarrierTuning,
    safe_set: &SafeSet,
    params: &RobotParams,
    state: &RobotState,
    dyn_terms: &ControlAffine,
) -> Result<QpRows, CbfError> {
    let n = params.n_seg();
    let grads = row_gradients(tuning, safe_set, params, state)?;
    let mut evals = Vec::with_capacity(grads.len());
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (row, (b, bdot, value, gradient)) in grads.into_iter().enumerate() {
        let lf = gradient.dq.dot(&state.qd.transpose())
            + gradient.dqd.dot(&dyn_terms.qdd_drift.transpose());
        let lg = &gradient.dqd * &dyn_terms.qdd_input;
        let active = lg.norm() >= DEGENERATE_ROW_TOL;
        if active {
            kept.push(row);
        } else {
            dropped.push(row);
        }
        evals.push(ConstraintEval {
            b,
            bdot,
            barrier: value,
            gradient,
            lf,
            lg,
            active,
        });
    }
    let mut a = DMatrix::zeros(kept.len(), n);
    let mut rhs = DVector::zeros(kept.len());
    for (i, &row) in kept.iter().enumerate() {
        let e = &evals[row];
        a.set_row(i, &e.lg);
        rhs[i] = tuning.gamma.for_row(row)? / e.barrier - e.lf;
    }
    Ok(QpRows {
        a,
        b: rhs,
        kept,
        dropped,
        evals,
    })
}

/// Assembles `A(x)` and `b(x)`.
pub fn qp_rows(
    tuning: &BarrierTuning,
    safe_set: &SafeSet,
    params: &RobotParams,
    state: &RobotState,
) -> Result<QpRows, CbfError> {
    let terms = pcc_model::control_affine_terms(params, state)?;
    qp_rows_with(tuning, safe_set, params, state, &terms)
}

/// How the filtered input was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterStatus {
    /// Barrier disabled; nominal input passed through.
    Bypassed,
    /// Every row was dropped; nominal input passed through.
    NoRows,
    /// QP solved.
    Optimal,
    /// No input could be produced (state outside the set, infeasible QP).
    /// Only the last row of an aborted run carries this status.
    Failed,
}

impl FilterStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterStatus::Bypassed => "bypassed",
            FilterStatus::NoRows => "no_rows",
            FilterStatus::Optimal => "optimal",
            FilterStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub u_star: DVector<f64>,
    pub status: FilterStatus,
    pub dropped: Vec<usize>,
    pub solution: Option<QpSolution>,
}

/// Closest input to `u_nom` that satisfies every barrier condition.
pub fn filter_input(
    cfg: &BarrierConfig,
    safe_set: &SafeSet,
    params: &RobotParams,
    state: &RobotState,
    dyn_terms: &ControlAffine,
    u_nom: &DVector<f64>,
) -> Result<FilterOutput, CbfError> {
    let tuning = match cfg {
        BarrierConfig::Disabled => {
            return Ok(FilterOutput {
                u_star: u_nom.clone(),
                status: FilterStatus::Bypassed,
                dropped: Vec::new(),
                solution: None,
            })
        }
        BarrierConfig::Active(t) => t,
    };
    let rows = qp_rows_with(tuning, safe_set, params, state, dyn_terms)?;
    if rows.kept.is_empty() {
        return Ok(FilterOutput {
            u_star: u_nom.clone(),
            status: FilterStatus::NoRows,
            dropped: rows.dropped,
            solution: None,
        });
    }
    let problem = QpProblem::new(u_nom.clone(), rows.a, rows.b)?;
    let solution = qp_solver::solve(&problem)?;
    Ok(FilterOutput {
        u_star: solution.u_star.clone(),
        status: FilterStatus::Optimal,
        dropped: rows.dropped,
        solution: Some(solution),
    })
}
