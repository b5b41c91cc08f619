//! Run-configuration files.
//!
//! A run is described by one TOML document with `[robot]`, `[environment]`,
//! `[barrier]`, `[sim]` and optional `[output]` and `[sweep]` tables. Unknown
//! keys are rejected so that typos surface as errors.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::cbf_filter::{BarrierConfig, BarrierTuning, CbfError, Gamma, Preset};
use crate::env_geometry::{DeformationModel, GeometryError, HalfspacePolytope};
use crate::pcc_model::{ModelError, RobotParams, RobotState};
use crate::sim_engine::{Integrator, NominalSinusoid, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("[robot] {0}")]
    Robot(#[from] ModelError),
    #[error("[environment] {0}")]
    Environment(#[from] GeometryError),
    #[error("[barrier] {0}")]
    Barrier(#[from] CbfError),
    #[error("[sim] {0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub robot: RobotSection,
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub barrier: BarrierSection,
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    pub n_seg: usize,
    pub lengths: Vec<f64>,
    /// Point mass per segment, kg.
    pub seg_mass: f64,
    pub k_diag: Vec<f64>,
    pub d_diag: Vec<f64>,
    pub lambda_diag: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    /// Rows `[a, b, c]` meaning `a x + b y <= c`.
    pub rows: Vec<[f64; 3]>,
    /// Surface stiffness, N/m.
    pub k: f64,
    /// Largest admissible normal force, N.
    pub f_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    Scalar(f64),
    PerRow(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub preset: Option<Preset>,
    pub a_e: Option<f64>,
    pub b_e: Option<f64>,
    pub gamma: Option<GammaValue>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub control_hz: f64,
    pub duration: f64,
    pub integrator: Integrator,
    /// Nominal sinusoid amplitude per segment, hPa.
    pub amplitudes: Vec<f64>,
    /// Nominal sinusoid frequency, Hz.
    pub freq: f64,
    pub q0: Option<Vec<f64>>,
    pub qd0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// When set, the sweep emits one row per gamma instead of the presets,
    /// using `a_e` and `b_e` from `[barrier]`.
    pub gammas: Option<Vec<f64>>,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: RobotParams,
    pub env_rows: Vec<([f64; 2], f64)>,
    pub env: HalfspacePolytope,
    pub model: DeformationModel,
    pub barrier: BarrierConfig,
    /// `"none"`, `"low"`, `"high"` or `"custom"`.
    pub barrier_label: String,
    pub sim: SimConfig,
    pub output_dir: Option<PathBuf>,
    pub sweep_gammas: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: RunConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: RunConfigFile) -> Result<Self, ConfigError> {
        let r = &file.robot;
        if r.n_seg == 0 {
            return Err(ConfigError::Invalid("[robot] n_seg must be at least 1".into()));
        }
        for (name, v) in [
            ("lengths", &r.lengths),
            ("k_diag", &r.k_diag),
            ("d_diag", &r.d_diag),
            ("lambda_diag", &r.lambda_diag),
        ] {
            if v.len() != r.n_seg {
                return Err(ConfigError::Invalid(format!(
                    "[robot] {name} has {} entries but n_seg = {}",
                    v.len(),
                    r.n_seg
                )));
            }
        }
        let params = RobotParams::new(
            r.lengths.clone(),
            vec![r.seg_mass; r.n_seg],
            r.k_diag.clone(),
            r.d_diag.clone(),
            r.lambda_diag.clone(),
        )?;

        let env_rows: Vec<([f64; 2], f64)> = file
            .environment
            .rows
            .iter()
            .map(|&[a, b, c]| ([a, b], c))
            .collect();
        let env = HalfspacePolytope::normalize(&env_rows)?;
        let model = DeformationModel::linear_spring(file.environment.k, file.environment.f_max)?;

        let (barrier, barrier_label) = resolve_barrier(&file.barrier)?;

        let s = &file.sim;
        let n = r.n_seg;
        let vec_or_zero = |name: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>, ConfigError> {
            match v {
                None => Ok(vec![0.0; n]),
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => Err(ConfigError::Invalid(format!(
                    "[sim] {name} has {} entries but n_seg = {n}",
                    v.len()
                ))),
            }
        };
        if s.amplitudes.len() != n {
            return Err(ConfigError::Invalid(format!(
                "[sim] amplitudes has {} entries but n_seg = {n}",
                s.amplitudes.len()
            )));
        }
        let sim = SimConfig {
            dt: s.dt,
            control_hz: s.control_hz,
            duration: s.duration,
            integrator: s.integrator,
            nominal: NominalSinusoid {
                amplitudes: s.amplitudes.clone(),
                freq: s.freq,
            },
            initial_state: RobotState::from_slices(
                &vec_or_zero("q0", &s.q0)?,
                &vec_or_zero("qd0", &s.qd0)?,
            ),
            seed: s.seed,
        };
        sim.substeps()?;

        let sweep_gammas = file.sweep.gammas.clone();
        if let Some(g) = &sweep_gammas {
            if g.is_empty() || g.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(ConfigError::Invalid(
                    "[sweep] gammas must be a non-empty list of positive numbers".into(),
                ));
            }
        }

        Ok(Self {
            params,
            env_rows,
            env,
            model,
            barrier,
            barrier_label,
            sim,
            output_dir: file.output.dir.clone(),
            sweep_gammas,
        })
    }

    /// `(a_e, b_e)` of the configured barrier, falling back to the low preset
    /// when the barrier is disabled.
    pub fn shape_constants(&self) -> (f64, f64) {
        match &self.barrier {
            BarrierConfig::Active(t) => (t.a_e, t.b_e),
            BarrierConfig::Disabled => {
                let (a, b, _) = Preset::Low.constants();
                (a, b)
            }
        }
    }
}

fn resolve_barrier(section: &BarrierSection) -> Result<(BarrierConfig, String), ConfigError> {
    let explicit = section.a_e.is_some() || section.b_e.is_some() || section.gamma.is_some();
    match (section.preset, explicit) {
        (Some(_), true) => Err(ConfigError::Invalid(
            "[barrier] give either `preset` or explicit a_e/b_e/gamma, not both".into(),
        )),
        (Some(p), false) => Ok((p.config(), p.name().to_string())),
        (None, false) => Ok((Preset::High.config(), Preset::High.name().to_string())),
        (None, true) => {
            let (Some(a_e), Some(b_e), Some(gamma)) =
                (section.a_e, section.b_e, section.gamma.clone())
            else {
                return Err(ConfigError::Invalid(
                    "[barrier] explicit tuning needs all of a_e, b_e and gamma".into(),
                ));
            };
            let gamma = match gamma {
                GammaValue::Scalar(g) => Gamma::Scalar(g),
                GammaValue::PerRow(v) => Gamma::PerRow(v),
            };
            let tuning = BarrierTuning::new(a_e, b_e, gamma)?;
            Ok((BarrierConfig::Active(tuning), "custom".to_string()))
        }
    }
}
