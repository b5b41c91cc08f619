use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use softcbf::config::RunConfig;
use softcbf::sim_engine::{self, SimError, Summary};
use softcbf::{BarrierConfig, BarrierTuning, Gamma, Preset};

use crate::report::{self, SummaryJson};
use crate::CommonArgs;

pub const EXIT_SAFE: u8 = 0;
pub const EXIT_VIOLATION: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(i) = args.integrator {
        cfg.sim.integrator = i;
    }
    if let Some(dt) = args.dt {
        cfg.sim.dt = dt;
    }
    if let Some(d) = args.duration {
        cfg.sim.duration = d;
    }
    cfg.sim.substeps().context("after applying command-line overrides")?;
    Ok(cfg)
}

pub fn out_dir(cli: Option<&Path>, cfg_dir: Option<&Path>) -> PathBuf {
    cli.or(cfg_dir)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Exit code of one finished or aborted run. Solver and numerical failures
/// take precedence over a safety violation.
pub fn exit_code(summary: &Summary, failure: Option<&SimError>) -> u8 {
    match failure {
        Some(SimError::LeftSafeSet { .. }) => EXIT_VIOLATION,
        Some(_) => EXIT_FAILURE,
        None if summary.rho_min < 0.0 => EXIT_VIOLATION,
        None => EXIT_SAFE,
    }
}

/// One entry of a run or sweep.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub barrier: BarrierConfig,
}

#[derive(Debug)]
pub struct Outcome {
    pub job: Job,
    pub summary: Summary,
    pub failure: Option<SimError>,
    pub exit: u8,
}

/// Simulates `job`, writing `<label>.csv` and `<label>.summary.json` to `out`.
pub fn execute(cfg: &RunConfig, job: Job, out: &Path) -> Result<Outcome> {
    let record = sim_engine::run_recorded(&cfg.params, &cfg.env, &cfg.model, &job.barrier, &cfg.sim)
        .with_context(|| format!("run `{}`", job.label))?;
    let summary = sim_engine::summarize(&record.trajectory);
    let exit = exit_code(&summary, record.failure.as_ref());

    let csv = out.join(format!("{}.csv", job.label));
    let file = File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
    let mut w = BufWriter::new(file);
    record.trajectory.write_csv(&mut w)?;
    w.flush()?;

    let json = SummaryJson::new(&job.label, &summary, exit);
    let path = out.join(format!("{}.summary.json", job.label));
    fs::write(&path, json.to_line()? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    Ok(Outcome {
        job,
        summary,
        failure: record.failure,
        exit,
    })
}

pub fn cmd_run(args: &CommonArgs, preset: Option<Preset>) -> Result<u8> {
    let cfg = load_config(args)?;
    let out = out_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let job = match preset {
        Some(p) => Job {
            label: p.name().to_string(),
            barrier: p.config(),
        },
        None => Job {
            label: cfg.barrier_label.clone(),
            barrier: cfg.barrier.clone(),
        },
    };
    let outcome = execute(&cfg, job, &out)?;
    if let Some(e) = &outcome.failure {
        eprintln!("run `{}` stopped: {e}", outcome.job.label);
    }
    println!(
        "{}",
        SummaryJson::new(&outcome.job.label, &outcome.summary, outcome.exit).to_line()?
    );
    Ok(outcome.exit)
}

fn sweep_jobs(cfg: &RunConfig) -> Result<Vec<Job>> {
    match &cfg.sweep_gammas {
        None => Ok(Preset::ALL
            .iter()
            .map(|p| Job {
                label: p.name().to_string(),
                barrier: p.config(),
            })
            .collect()),
        Some(gammas) => {
            let (a_e, b_e) = cfg.shape_constants();
            gammas
                .iter()
                .map(|&g| {
                    Ok(Job {
                        label: format!("gamma-{g}"),
                        barrier: BarrierConfig::Active(BarrierTuning::new(
                            a_e,
                            b_e,
                            Gamma::Scalar(g),
                        )?),
                    })
                })
                .collect()
        }
    }
}

/// Runs every sweep entry. The exit code is the worst over entries with an
/// active barrier; a violation of the unfiltered run is the expected
/// baseline and does not fail the sweep.
pub fn cmd_sweep(args: &CommonArgs, parallel: bool) -> Result<u8> {
    let cfg = load_config(args)?;
    let out = out_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let jobs = sweep_jobs(&cfg)?;

    let outcomes: Vec<Result<Outcome>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .into_iter()
                .map(|job| {
                    let (cfg, out) = (&cfg, &out);
                    s.spawn(move || execute(cfg, job, out))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    } else {
        jobs.into_iter().map(|job| execute(&cfg, job, &out)).collect()
    };
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    for o in &outcomes {
        if let Some(e) = &o.failure {
            eprintln!("run `{}` stopped: {e}", o.job.label);
        }
    }
    let table = report::sweep_table(&outcomes);
    print!("{table}");
    let path = out.join("sweep.csv");
    fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;

    Ok(outcomes
        .iter()
        .filter(|o| o.job.barrier.is_active())
        .map(|o| o.exit)
        .max()
        .unwrap_or(EXIT_SAFE))
}
