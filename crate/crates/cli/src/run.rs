use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uee_core::baselines::{alternating, bandwidth_only_baseline, optimize_power_only};
use uee_core::model::ProblemInstance;
use uee_core::outer::{solve, SolveReport};
use uee_core::scenario::{generate, PerUser, ScenarioSpec};

use crate::config::{ConfigError, Format, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Algorithm {
    Proposed,
    #[value(name = "ao")]
    Alternating,
    #[value(name = "p_only")]
    PowerOnly,
    #[value(name = "b_only")]
    BandwidthOnly,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Proposed,
        Algorithm::Alternating,
        Algorithm::PowerOnly,
        Algorithm::BandwidthOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Alternating => "ao",
            Algorithm::PowerOnly => "p_only",
            Algorithm::BandwidthOnly => "b_only",
        }
    }

    pub fn run(self, inst: &ProblemInstance, cfg: &RunConfig) -> uee_core::Result<SolveReport> {
        match self {
            Algorithm::Proposed => solve(inst, &cfg.newton),
            Algorithm::Alternating => alternating(inst, &cfg.baselines),
            Algorithm::PowerOnly => optimize_power_only(inst, &cfg.baselines),
            Algorithm::BandwidthOnly => bandwidth_only_baseline(inst, &cfg.baselines),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "b_total")]
    BTotal,
    #[value(name = "n_users")]
    NUsers,
    Weights,
    #[value(name = "r_e_groups")]
    ReGroups,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::BTotal => "b_total",
            Axis::NUsers => "n_users",
            Axis::Weights => "weights",
            Axis::ReGroups => "r_e_groups",
        }
    }
}

/// One output line. Rows with `user_id` empty summarize a run; the others
/// carry one user each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run_id: usize,
    pub algorithm: String,
    pub axis: String,
    pub axis_value: String,
    pub n_users: usize,
    pub objective: f64,
    pub wall_time_s: f64,
    pub outer_iters: usize,
    pub kkt_residual: Option<f64>,
    pub user_id: Option<usize>,
    pub p_w: Option<f64>,
    pub b_hz: Option<f64>,
    pub uee: Option<f64>,
}

/// Results of one algorithm at one sweep point.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: usize,
    pub algorithm: Algorithm,
    pub axis_value: String,
    pub report: SolveReport,
}

impl RunResult {
    pub fn rows(&self, axis: &str) -> Vec<Row> {
        let r = &self.report;
        let summary = Row {
            run_id: self.run_id,
            algorithm: self.algorithm.as_str().to_string(),
            axis: axis.to_string(),
            axis_value: self.axis_value.clone(),
            n_users: r.allocation.p.len(),
            objective: r.objective,
            wall_time_s: r.wall_time,
            outer_iters: r.outer_iterations,
            kkt_residual: r.kkt_residual,
            user_id: None,
            p_w: None,
            b_hz: None,
            uee: None,
        };
        let mut out = vec![summary.clone()];
        for (n, ((&p, &b), &u)) in r
            .allocation
            .p
            .iter()
            .zip(&r.allocation.b)
            .zip(&r.per_user_uee)
            .enumerate()
        {
            out.push(Row {
                user_id: Some(n),
                p_w: Some(p),
                b_hz: Some(b),
                uee: Some(u),
                ..summary.clone()
            });
        }
        out
    }
}

/// Scenario variants along `axis`, labelled by their raw value text.
///
/// `b_total` takes Hz and `n_users` counts, comma separated. `weights` and
/// `r_e_groups` take comma-separated points whose per-group entries are
/// colon separated; `r_e_groups` entries are multiples of `r_min_bps`.
pub fn sweep_points(
    base: &ScenarioSpec,
    axis: Axis,
    values: &str,
) -> Result<Vec<(String, ScenarioSpec)>, ConfigError> {
    let bad = |v: &str| ConfigError(format!("bad {} value '{v}'", axis.as_str()));
    let mut out = Vec::new();
    for raw in values.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut spec = base.clone();
        match axis {
            Axis::BTotal => spec.b_total = raw.parse().map_err(|_| bad(raw))?,
            Axis::NUsers => spec.n_users = raw.parse().map_err(|_| bad(raw))?,
            Axis::Weights | Axis::ReGroups => {
                let groups = raw
                    .split(':')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad(raw))?;
                if axis == Axis::Weights {
                    spec.weights = PerUser::Groups { groups };
                } else {
                    let r_e = groups.iter().map(|s| s * base.r_min_bps).collect();
                    spec.r_e_bps = PerUser::Groups { groups: r_e };
                }
            }
        }
        spec.validate()
            .map_err(|e| ConfigError(format!("{raw}: {e}")))?;
        out.push((raw.to_string(), spec));
    }
    if out.is_empty() {
        return Err(ConfigError("no sweep values given".into()));
    }
    Ok(out)
}

/// Runs `algorithms` at every point on at most `jobs` threads. Results
/// come back in point order, then algorithm order.
pub fn run_points(
    points: &[(String, ScenarioSpec)],
    algorithms: &[Algorithm],
    cfg: &RunConfig,
    jobs: usize,
) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building the worker pool")?;
    let tasks: Vec<(usize, Algorithm)> = (0..points.len())
        .flat_map(|k| algorithms.iter().map(move |&a| (k, a)))
        .collect();
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(k, alg)| {
                let (label, spec) = &points[k];
                let inst = generate(spec).with_context(|| format!("generating point {label}"))?;
                let report = alg
                    .run(&inst, cfg)
                    .with_context(|| format!("{} at {label}", alg.as_str()))?;
                Ok(RunResult {
                    run_id: k,
                    algorithm: alg,
                    axis_value: label.clone(),
                    report,
                })
            })
            .collect()
    })
}

pub fn write_rows(rows: &[Row], format: Format, out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = sink;
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
