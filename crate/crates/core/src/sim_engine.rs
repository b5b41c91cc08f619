//! Closed-loop simulation with a zero-order-hold supervisory filter.
//!
//! At every control tick the nominal sinusoid is evaluated, filtered through
//! the barrier QP, held constant over the control period, and the robot is
//! integrated with fixed-step Euler or RK4. One trajectory row is logged per
//! tick, together with the tip's deflection, contact force and safety margin.

use std::io::{self, Write};
use std::time::Instant;

use nalgebra::{DVector, Vector2};
use thiserror::Error;

use crate::cbf_filter::{self, BarrierConfig, CbfError, FilterStatus};
use crate::env_geometry::{expand_safe_set, DeformationModel, GeometryError, HalfspacePolytope, SafeSet};
use crate::pcc_model::{self, ModelError, RobotParams, RobotState};
use crate::qp_solver::QpError;

/// Joint angles beyond this are treated as a numerical blow-up.
pub const MAX_ABS_ANGLE: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("initial tip position is outside the safe set (row {row}, b = {value})")]
    StartOutsideSafeSet { row: usize, value: f64 },
    #[error("state left the safe set at t = {t} s (row {row}, b = {value})")]
    LeftSafeSet { t: f64, row: usize, value: f64 },
    #[error("barrier QP infeasible at t = {t} s")]
    Infeasible { t: f64 },
    #[error("barrier QP hit its iteration limit at t = {t} s")]
    IterationLimit { t: f64 },
    #[error("state became non-finite or left the sane range at t = {t} s")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cbf(CbfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

impl std::str::FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(format!("unknown integrator `{other}` (expected euler or rk4)")),
        }
    }
}

/// `u_nom,j(t) = A_j sin(2 pi f t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalSinusoid {
    pub amplitudes: Vec<f64>,
    pub freq: f64,
}

impl NominalSinusoid {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let s = (2.0 * std::f64::consts::PI * self.freq * t).sin();
        DVector::from_iterator(self.amplitudes.len(), self.amplitudes.iter().map(|a| a * s))
    }
}

pub fn nominal_control(nominal: &NominalSinusoid, t: f64) -> DVector<f64> {
    nominal.eval(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub control_hz: f64,
    pub duration: f64,
    pub integrator: Integrator,
    pub nominal: NominalSinusoid,
    pub initial_state: RobotState,
    pub seed: u64,
}

impl SimConfig {
    /// Integration steps per control period.
    pub fn substeps(&self) -> Result<usize, SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.control_hz.is_finite() && self.control_hz > 0.0) {
            return bad(format!("control_hz must be positive, got {}", self.control_hz));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        let ratio = 1.0 / (self.control_hz * self.dt);
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * steps {
            return bad(format!(
                "control period must be a whole number of integration steps (got {ratio})"
            ));
        }
        Ok(steps as usize)
    }

    /// Number of control periods in the horizon.
    pub fn ticks(&self) -> usize {
        (self.duration * self.control_hz).round() as usize
    }
}

fn derivative(
    params: &RobotParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    pcc_model::control_affine(params, &RobotState::from_vector(x), u)
}

fn sane(state: &RobotState) -> bool {
    state.is_finite() && state.q.iter().all(|q| q.abs() < MAX_ABS_ANGLE)
}

/// Advances the state by one integration step with `u` held constant.
pub fn step(
    params: &RobotParams,
    state: &RobotState,
    u: &DVector<f64>,
    dt: f64,
    integrator: Integrator,
) -> Result<RobotState, SimError> {
    let x = state.to_vector();
    let next = match integrator {
        Integrator::Euler => &x + dt * derivative(params, &x, u)?,
        Integrator::Rk4 => {
            let k1 = derivative(params, &x, u)?;
            let k2 = derivative(params, &(&x + 0.5 * dt * &k1), u)?;
            let k3 = derivative(params, &(&x + 0.5 * dt * &k2), u)?;
            let k4 = derivative(params, &(&x + dt * &k3), u)?;
            &x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        }
    };
    let next = RobotState::from_vector(&next);
    if sane(&next) {
        Ok(next)
    } else {
        Err(SimError::NonFinite { t: f64::NAN })
    }
}

/// One logged control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub tip: Vector2<f64>,
    pub u_nom: DVector<f64>,
    pub u_star: DVector<f64>,
    /// `b_i` for every safe-set row.
    pub b: Vec<f64>,
    /// Largest deflection over the generating rows.
    pub deflection: f64,
    pub force: f64,
    pub rho: f64,
    pub status: FilterStatus,
    pub dropped_rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Wall-clock time of each filter evaluation that solved a QP, seconds.
    /// Kept apart from `rows` so that logged data stays deterministic.
    pub qp_times: Vec<f64>,
}

impl Trajectory {
    pub fn csv_header(n_seg: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n_seg).map(|i| format!("q{i}")));
        cols.extend((1..=n_seg).map(|i| format!("qd{i}")));
        cols.push("rx".into());
        cols.push("ry".into());
        cols.extend((1..=n_seg).map(|i| format!("unom{i}")));
        cols.extend((1..=n_seg).map(|i| format!("u{i}")));
        for c in ["n", "F", "rho", "qp_status"] {
            cols.push(c.into());
        }
        cols.join(",")
    }

    /// Writes the trajectory as CSV, one row per control tick.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.rows.first().map_or(0, |r| r.q.len());
        writeln!(w, "{}", Self::csv_header(n))?;
        for row in &self.rows {
            let mut line = format!("{}", row.t);
            for v in row
                .q
                .iter()
                .chain(row.qd.iter())
                .chain([row.tip.x, row.tip.y].iter())
                .chain(row.u_nom.iter())
                .chain(row.u_star.iter())
                .chain([row.deflection, row.force, row.rho].iter())
            {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push(',');
            line.push_str(row.status.as_str());
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Scalar digest of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rho_min: f64,
    /// First logged time with `rho < 0`.
    pub t_violation: Option<f64>,
    /// Mean filter evaluation time over ticks that solved a QP, microseconds.
    pub mean_qp_us: f64,
    /// Largest `|u* - u_nom|` entry over the run, ignoring a failed last row.
    pub max_deviation: f64,
}

pub fn summarize(traj: &Trajectory) -> Summary {
    let rho_min = traj.rows.iter().map(|r| r.rho).fold(f64::INFINITY, f64::min);
    let t_violation = traj.rows.iter().find(|r| r.rho < 0.0).map(|r| r.t);
    let mean_qp_us = if traj.qp_times.is_empty() {
        0.0
    } else {
        1e6 * traj.qp_times.iter().sum::<f64>() / traj.qp_times.len() as f64
    };
    let max_deviation = traj
        .rows
        .iter()
        .filter(|r| r.status != FilterStatus::Failed)
        .map(|r| (&r.u_star - &r.u_nom).amax())
        .fold(0.0, f64::max);
    Summary {
        rho_min,
        t_violation,
        mean_qp_us,
        max_deviation,
    }
}

fn map_cbf(err: CbfError, t: f64) -> SimError {
    match err {
        CbfError::NotInSafeSet { row, value } => SimError::LeftSafeSet { t, row, value },
        CbfError::Qp(QpError::Infeasible) => SimError::Infeasible { t },
        CbfError::Qp(QpError::IterationLimit(_)) => SimError::IterationLimit { t },
        CbfError::Model(e) => SimError::Model(e),
        other => SimError::Cbf(other),
    }
}

/// A finished or aborted run. Errors that occur after the first tick are
/// kept in `failure` so the trajectory up to that point is not lost.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub trajectory: Trajectory,
    pub failure: Option<SimError>,
}

impl RunRecord {
    pub fn into_result(self) -> Result<Trajectory, SimError> {
        match self.failure {
            None => Ok(self.trajectory),
            Some(e) => Err(e),
        }
    }
}

/// Simulates the closed loop over `cfg.duration`.
pub fn run(
    params: &RobotParams,
    env: &HalfspacePolytope,
    model: &DeformationModel,
    barrier: &BarrierConfig,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    run_recorded(params, env, model, barrier, cfg)?.into_result()
}

/// Like [`run`], but returns the partial trajectory of an aborted run.
pub fn run_recorded(
    params: &RobotParams,
    env: &HalfspacePolytope,
    model: &DeformationModel,
    barrier: &BarrierConfig,
    cfg: &SimConfig,
) -> Result<RunRecord, SimError> {
    let safe_set = expand_safe_set(env, model)?;
    run_with_safe_set(params, &safe_set, model, barrier, cfg)
}

/// Like [`run_recorded`] with a prebuilt safe set. Returns `Err` only when
/// the inputs are rejected before the first tick.
pub fn run_with_safe_set(
    params: &RobotParams,
    safe_set: &SafeSet,
    model: &DeformationModel,
    barrier: &BarrierConfig,
    cfg: &SimConfig,
) -> Result<RunRecord, SimError> {
    let substeps = cfg.substeps()?;
    let n = params.n_seg();
    if cfg.nominal.amplitudes.len() != n {
        return Err(SimError::InvalidConfig(format!(
            "{} nominal amplitudes for {n} segments",
            cfg.nominal.amplitudes.len()
        )));
    }
    if cfg.initial_state.q.len() != n || cfg.initial_state.qd.len() != n {
        return Err(SimError::InvalidConfig(format!(
            "initial state does not have {n} segments"
        )));
    }
    if let BarrierConfig::Active(t) = barrier {
        t.validate().map_err(SimError::Cbf)?;
        t.gamma
            .for_row(safe_set.rows().len().saturating_sub(1))
            .map_err(SimError::Cbf)?;
    }
    if !sane(&cfg.initial_state) {
        return Err(SimError::NonFinite { t: 0.0 });
    }
    let b0 = cbf_filter::constraint_values(safe_set, params, &cfg.initial_state);
    if let Some((row, &(value, _))) = b0.iter().enumerate().find(|(_, (b, _))| !(*b > 0.0)) {
        return Err(SimError::StartOutsideSafeSet { row, value });
    }

    let ticks = cfg.ticks();
    let mut traj = Trajectory {
        rows: Vec::with_capacity(ticks + 1),
        qp_times: Vec::new(),
    };
    let mut state = cfg.initial_state.clone();
    for k in 0..=ticks {
        let t = k as f64 / cfg.control_hz;
        let u_nom = cfg.nominal.eval(t);

        let started = Instant::now();
        let filtered = pcc_model::control_affine_terms(params, &state)
            .map_err(CbfError::from)
            .and_then(|terms| {
                cbf_filter::filter_input(barrier, safe_set, params, &state, &terms, &u_nom)
            });
        let elapsed = started.elapsed().as_secs_f64();

        let (u_star, status, dropped, failure) = match filtered {
            Ok(out) => {
                if out.status == FilterStatus::Optimal {
                    traj.qp_times.push(elapsed);
                }
                (out.u_star, out.status, out.dropped, None)
            }
            Err(e) => (
                DVector::from_element(n, f64::NAN),
                FilterStatus::Failed,
                Vec::new(),
                Some(map_cbf(e, t)),
            ),
        };

        let tip = pcc_model::fk_tip(params, &state.q);
        let b = safe_set
            .rows()
            .iter()
            .map(|f| f.offset - f.coeffs.dot(&tip))
            .collect();
        let deflection = safe_set.max_deflection(&tip);
        traj.rows.push(TrajectoryRow {
            t,
            q: state.q.clone(),
            qd: state.qd.clone(),
            tip,
            u_nom,
            u_star: u_star.clone(),
            b,
            deflection,
            force: model.psi(deflection),
            rho: model.safety_margin(deflection),
            status,
            dropped_rows: dropped,
        });

        if failure.is_some() {
            return Ok(RunRecord {
                trajectory: traj,
                failure,
            });
        }
        if k == ticks {
            break;
        }
        for _ in 0..substeps {
            match step(params, &state, &u_star, cfg.dt, cfg.integrator) {
                Ok(next) => state = next,
                Err(e) => {
                    let e = match e {
                        SimError::NonFinite { .. } => SimError::NonFinite { t },
                        other => other,
                    };
                    return Ok(RunRecord {
                        trajectory: traj,
                        failure: Some(e),
                    });
                }
            }
        }
    }
    Ok(RunRecord {
        trajectory: traj,
        failure: None,
    })
}
