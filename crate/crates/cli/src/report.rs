use anyhow::Result;
use serde::Serialize;
use softcbf::sim_engine::Summary;
use softcbf::{BarrierConfig, Gamma};

use crate::simulate::Outcome;

/// One-line JSON digest printed by `run` and stored next to each CSV.
#[derive(Debug, Serialize)]
pub struct SummaryJson<'a> {
    pub preset: &'a str,
    pub rho_min: f64,
    pub t_violation: Option<f64>,
    pub mean_qp_us: f64,
    pub exit: u8,
}

impl<'a> SummaryJson<'a> {
    pub fn new(preset: &'a str, s: &Summary, exit: u8) -> Self {
        Self {
            preset,
            rho_min: s.rho_min,
            t_violation: s.t_violation,
            mean_qp_us: s.mean_qp_us,
            exit,
        }
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn gamma_text(g: &Gamma) -> String {
    match g {
        Gamma::Scalar(g) => g.to_string(),
        Gamma::PerRow(v) => v
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";"),
    }
}

/// CSV table `preset,a_e,b_e,gamma,rho_min,exit`, one line per run.
pub fn sweep_table(outcomes: &[Outcome]) -> String {
    let mut s = String::from("preset,a_e,b_e,gamma,rho_min,exit\n");
    for o in outcomes {
        let (a, b, g) = match &o.job.barrier {
            BarrierConfig::Disabled => ("-".to_string(), "-".to_string(), "-".to_string()),
            BarrierConfig::Active(t) => (t.a_e.to_string(), t.b_e.to_string(), gamma_text(&t.gamma)),
        };
        s.push_str(&format!(
            "{},{a},{b},{g},{},{}\n",
            o.job.label, o.summary.rho_min, o.exit
        ));
    }
    s
}
