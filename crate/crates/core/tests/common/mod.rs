//! Fixtures and independent reference computations shared by the
//! integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use softcbf::config::RunConfig;
use softcbf::env_geometry::{DeformationModel, HalfspacePolytope};
use softcbf::pcc_model::{self, RobotParams, RobotState};
use softcbf::qp_solver::QpProblem;
use softcbf::sim_engine::{Integrator, NominalSinusoid, SimConfig};
use softcbf::{BarrierConfig, BarrierTuning, Gamma};

pub fn shipped_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper_sim.toml")
}

pub fn shipped_config() -> RunConfig {
    RunConfig::load(&shipped_config_path()).expect("shipped config loads")
}

/// Raw rows `(a, c)` meaning `a . r <= c`.
pub type RawRows = Vec<([f64; 2], f64)>;

/// Row for `y <= m x + c`.
pub fn upper(m: f64, c: f64) -> ([f64; 2], f64) {
    ([-m, 1.0], c)
}

/// Row for `y >= m x + c`.
pub fn lower(m: f64, c: f64) -> ([f64; 2], f64) {
    ([m, -1.0], -c)
}

/// Euclidean distance from `r` to the convex region `{a_i . p <= c_i}`,
/// computed by projecting onto every single line and every pairwise corner
/// and keeping the closest feasible candidate.
pub fn distance_to_region(rows: &[([f64; 2], f64)], r: Vector2<f64>) -> f64 {
    let feasible = |p: &Vector2<f64>| {
        rows.iter().all(|(a, c)| {
            let a = Vector2::new(a[0], a[1]);
            a.dot(p) <= c + 1e-12 * (1.0 + c.abs())
        })
    };
    if feasible(&r) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (a, c) in rows {
        let a = Vector2::new(a[0], a[1]);
        let p = r - a * ((a.dot(&r) - c) / a.norm_squared());
        if feasible(&p) {
            best = best.min((p - r).norm());
        }
    }
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let m = nalgebra::Matrix2::new(rows[i].0[0], rows[i].0[1], rows[j].0[0], rows[j].0[1]);
            if let Some(inv) = m.try_inverse() {
                let p = inv * Vector2::new(rows[i].1, rows[j].1);
                if feasible(&p) {
                    best = best.min((p - r).norm());
                }
            }
        }
    }
    best
}

/// Central difference of a vector-valued function along each coordinate.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(k, &col);
    }
    jac
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// KKT residuals of `(u, mu)` for `min |u - u_nom|^2 / 2 s.t. A u <= b`,
/// computed from scratch: stationarity, primal and dual feasibility and
/// complementarity.
pub fn kkt_residuals(p: &QpProblem, u: &DVector<f64>, mu: &DVector<f64>) -> [f64; 4] {
    let stationarity = (u - &p.u_nom + p.a.transpose() * mu).amax();
    let slack = &p.a * u - &p.b;
    let primal = slack.iter().fold(0.0_f64, |m, s| m.max(*s));
    let dual = mu.iter().fold(0.0_f64, |m, l| m.max(-*l));
    let comp = mu
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |m, (l, s)| m.max((l * s).abs()));
    [stationarity, primal, dual, comp]
}

/// A randomized closed-loop scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: &'static str,
    pub params: RobotParams,
    pub rows: RawRows,
    pub env: HalfspacePolytope,
    pub model: DeformationModel,
    pub tuning: BarrierTuning,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn barrier(&self) -> BarrierConfig {
        BarrierConfig::Active(self.tuning.clone())
    }
}

/// Draws an environment with one or two facets near the tip, a spring
/// contact with `n_max` in [5, 30] mm, an initial state inside the safe set
/// and a nominal sinusoid with amplitudes up to 120 hPa.
pub fn random_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let params = RobotParams::reference(2);
    loop {
        let q0 = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        let qd0 = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
        let state = RobotState::from_slices(&q0, &qd0);
        let tip = pcc_model::fk_tip(&params, &state.q);

        let gap = |rng: &mut R| rng.gen_range(0.01..0.06);
        let (kind, rows): (&'static str, RawRows) = match rng.gen_range(0..4) {
            0 => {
                let m = rng.gen_range(-0.8..0.8);
                ("upper", vec![upper(m, tip.y + gap(rng) - m * tip.x)])
            }
            1 => {
                let m = rng.gen_range(-0.8..0.8);
                ("lower", vec![lower(m, tip.y - gap(rng) - m * tip.x)])
            }
            2 => {
                let (m1, m2) = (rng.gen_range(0.3..1.0), rng.gen_range(-1.0..-0.3));
                let xv = tip.x + rng.gen_range(-0.05..0.05);
                let yv = tip.y + gap(rng) + 0.05;
                (
                    "roof",
                    vec![upper(m1, yv - m1 * xv), upper(m2, yv - m2 * xv)],
                )
            }
            _ => {
                let (m1, m2) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                (
                    "channel",
                    vec![
                        upper(m1, tip.y + gap(rng) - m1 * tip.x),
                        lower(m2, tip.y - gap(rng) - m2 * tip.x),
                    ],
                )
            }
        };
        let n_max = rng.gen_range(0.005..0.03);
        let k = rng.gen_range(5.0..20.0);
        let model = DeformationModel::linear_spring(k, k * n_max).unwrap();
        let env = match HalfspacePolytope::normalize(&rows) {
            Ok(env) => env,
            Err(_) => continue,
        };
        // Start strictly inside the no-contact set so b > 0 with margin.
        if !rows.iter().all(|(a, c)| a[0] * tip.x + a[1] * tip.y < c - 1e-3) {
            continue;
        }
        let tuning = BarrierTuning::new(
            rng.gen_range(0.2..2.0),
            rng.gen_range(0.2..2.0),
            Gamma::Scalar(rng.gen_range(0.2..2.0)),
        )
        .unwrap();
        let freq: f64 = rng.gen_range(0.03..0.1);
        let sim = SimConfig {
            dt: 1e-4,
            control_hz: 1000.0,
            duration: (0.5 / freq * 1000.0).round() / 1000.0,
            integrator: Integrator::Rk4,
            nominal: NominalSinusoid {
                amplitudes: vec![rng.gen_range(-120.0..120.0), rng.gen_range(-120.0..120.0)],
                freq,
            },
            initial_state: state,
            seed: 0,
        };
        return Scenario {
            kind,
            params,
            rows,
            env,
            model,
            tuning,
            sim,
        };
    }
}
