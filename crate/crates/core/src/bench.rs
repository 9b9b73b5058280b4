//! Experiment harness: timed solver runs, CSV reports, summaries and sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{exact_solve, ffd_solve, lower_bound, sfea_solve};
use crate::domain::{Cost, Instance, Placement};
use crate::error::{Error, Result};
use crate::mfea::{self, MfeaConfig, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Mfea,
    Sfea,
    Ffd,
    Exact,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Mfea, Solver::Sfea, Solver::Ffd, Solver::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Mfea => "mfea",
            Solver::Sfea => "sfea",
            Solver::Ffd => "ffd",
            Solver::Exact => "exact",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown solver {s:?}, expected one of mfea, sfea, ffd, exact"
                ))
            })
    }
}

/// What a single solver run produced. `wall_time_ms` covers the solver call only.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub placement: Placement,
    pub trace: Option<RunTrace>,
    pub wall_time_ms: f64,
}

pub fn run_solver(solver: Solver, instance: &Instance, cfg: &MfeaConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let (placement, trace) = match solver {
        Solver::Mfea => {
            let (p, t) = mfea::solve(instance, cfg)?;
            (p, Some(t))
        }
        Solver::Sfea => {
            let (p, t) = sfea_solve(instance, cfg)?;
            (p, Some(t))
        }
        Solver::Ffd => (ffd_solve(instance)?, None),
        Solver::Exact => (exact_solve(instance)?.1, None),
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(RunOutput {
        placement,
        trace,
        wall_time_ms,
    })
}

/// One row of a report: the four headline indicators plus per-resource detail.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub solver: String,
    pub instance: String,
    /// Free-form tag for the experiment cell, e.g. `rmp=0.5` in a sweep.
    pub label: String,
    pub seed: u64,
    pub repeat: usize,
    pub wall_time_ms: f64,
    pub utilization: f64,
    pub cpu_utilization: f64,
    pub ram_utilization: f64,
    pub disk_utilization: f64,
    pub servers: usize,
    pub cost: Cost,
    pub lower_bound: f64,
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "solver",
    "instance",
    "label",
    "seed",
    "repeat",
    "wall_time_ms",
    "utilization",
    "cpu_utilization",
    "ram_utilization",
    "disk_utilization",
    "servers",
    "cost",
    "lower_bound",
];

/// Index of the timing column, the only one allowed to differ between identical runs.
pub const REPORT_TIME_COLUMN: usize = 5;

impl RunReport {
    pub fn new(
        solver: Solver,
        instance_label: &str,
        label: &str,
        seed: u64,
        repeat: usize,
        instance: &Instance,
        output: &RunOutput,
    ) -> Self {
        let u = output.placement.utilization();
        RunReport {
            solver: solver.to_string(),
            instance: instance_label.to_string(),
            label: label.to_string(),
            seed,
            repeat,
            wall_time_ms: output.wall_time_ms,
            utilization: u.comprehensive,
            cpu_utilization: u.cpu,
            ram_utilization: u.ram,
            disk_utilization: u.disk,
            servers: output.placement.len(),
            cost: output.placement.cost(),
            lower_bound: lower_bound(instance),
        }
    }

    fn record(&self) -> [String; 13] {
        [
            self.solver.clone(),
            self.instance.clone(),
            self.label.clone(),
            self.seed.to_string(),
            self.repeat.to_string(),
            format!("{:.3}", self.wall_time_ms),
            format!("{:.6}", self.utilization),
            format!("{:.6}", self.cpu_utilization),
            format!("{:.6}", self.ram_utilization),
            format!("{:.6}", self.disk_utilization),
            self.servers.to_string(),
            self.cost.to_string(),
            format!("{:.2}", self.lower_bound),
        ]
    }
}

fn to_csv<const N: usize>(
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Internal(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub fn reports_to_csv(reports: &[RunReport]) -> Result<String> {
    to_csv(REPORT_COLUMNS, reports.iter().map(RunReport::record))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate of all reports sharing solver, instance and label.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub instance: String,
    pub label: String,
    pub runs: usize,
    pub time_ms: (f64, f64),
    pub utilization: (f64, f64),
    pub servers: (f64, f64),
    pub cost: (f64, f64),
    /// `(cost_ffd - cost) / cost_ffd` on mean costs, when FFD ran on the same instance.
    pub improvement_vs_ffd: Option<f64>,
    /// Same against SFEA.
    pub improvement_vs_sfea: Option<f64>,
}

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "solver",
    "instance",
    "label",
    "runs",
    "time_ms_mean",
    "time_ms_std",
    "utilization_mean",
    "utilization_std",
    "servers_mean",
    "servers_std",
    "cost_mean",
    "cost_std",
    "improvement_vs_ffd",
    "improvement_vs_sfea",
];

pub fn improvement(base: f64, cost: f64) -> f64 {
    (base - cost) / base
}

/// Groups reports by `(solver, instance, label)` in order of first appearance.
pub fn summarize(reports: &[RunReport]) -> Vec<SummaryRow> {
    type Key<'a> = (&'a str, &'a str, &'a str);
    let mut groups: Vec<(Key, Vec<&RunReport>)> = Vec::new();
    for r in reports {
        let key = (r.solver.as_str(), r.instance.as_str(), r.label.as_str());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let stat = |g: &[&RunReport], f: fn(&RunReport) -> f64| {
        mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let mut rows: Vec<SummaryRow> = groups
        .iter()
        .map(|((solver, instance, label), g)| SummaryRow {
            solver: solver.to_string(),
            instance: instance.to_string(),
            label: label.to_string(),
            runs: g.len(),
            time_ms: stat(g, |r| r.wall_time_ms),
            utilization: stat(g, |r| r.utilization),
            servers: stat(g, |r| r.servers as f64),
            cost: stat(g, |r| r.cost.as_f64()),
            improvement_vs_ffd: None,
            improvement_vs_sfea: None,
        })
        .collect();
    let base_cost = |rows: &[SummaryRow], solver: Solver, instance: &str| {
        rows.iter()
            .find(|r| r.solver == solver.name() && r.instance == instance)
            .map(|r| r.cost.0)
    };
    for i in 0..rows.len() {
        let ffd = base_cost(&rows, Solver::Ffd, &rows[i].instance);
        let sfea = base_cost(&rows, Solver::Sfea, &rows[i].instance);
        let cost = rows[i].cost.0;
        rows[i].improvement_vs_ffd = ffd.map(|b| improvement(b, cost));
        rows[i].improvement_vs_sfea = sfea.map(|b| improvement(b, cost));
    }
    rows
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    to_csv(
        SUMMARY_COLUMNS,
        rows.iter().map(|r| {
            [
                r.solver.clone(),
                r.instance.clone(),
                r.label.clone(),
                r.runs.to_string(),
                format!("{:.3}", r.time_ms.0),
                format!("{:.3}", r.time_ms.1),
                format!("{:.6}", r.utilization.0),
                format!("{:.6}", r.utilization.1),
                format!("{:.3}", r.servers.0),
                format!("{:.3}", r.servers.1),
                format!("{:.3}", r.cost.0),
                format!("{:.3}", r.cost.1),
                opt(r.improvement_vs_ffd),
                opt(r.improvement_vs_sfea),
            ]
        }),
    )
}

/// Runs `repeats` independent solves in parallel with seeds `seed, seed + 1, ...`.
/// Results come back in repeat order whatever order they finish in.
pub fn run_repeats(
    solver: Solver,
    instance: &Instance,
    cfg: &MfeaConfig,
    repeats: usize,
) -> Result<Vec<(u64, RunOutput)>> {
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let cfg = MfeaConfig {
                seed,
                ..cfg.clone()
            };
            run_solver(solver, instance, &cfg).map(|out| (seed, out))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Rmp,
    TaskSize,
    MutationProb,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Rmp => "rmp",
            SweepParam::TaskSize => "task-size",
            SweepParam::MutationProb => "mutation-prob",
        }
    }

    /// Returns `base` with this parameter set to `value`, validated.
    pub fn apply(self, base: &MfeaConfig, value: &str) -> Result<MfeaConfig> {
        let bad = || Error::InvalidConfig(format!("bad value {value:?} for {}", self.name()));
        let mut cfg = base.clone();
        match self {
            SweepParam::Rmp => cfg.rmp = value.parse().map_err(|_| bad())?,
            SweepParam::TaskSize => cfg.n_per_task = value.parse().map_err(|_| bad())?,
            SweepParam::MutationProb => cfg.mutation_prob = value.parse().map_err(|_| bad())?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParam::Rmp,
            SweepParam::TaskSize,
            SweepParam::MutationProb,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep parameter {s:?}")))
    }
}
