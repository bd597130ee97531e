//! Dataset evaluation, level sweeps and ablation modes.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::hierarchy::{solve, SolveOptions};
use crate::instance::{load_dataset, Instance};
use crate::perm::PermSolverConfig;
use crate::policy::{DecodeMode, EdgeScorePolicy};
use crate::solution::{validate_plan, RoutePlan};

/// Everything needed to run the pipeline on a dataset.
#[derive(Debug, Clone)]
pub struct SolverSetup {
    pub global: EdgeScorePolicy,
    pub local: EdgeScorePolicy,
    pub opts: SolveOptions,
    pub perm: PermSolverConfig,
    /// Base seed for sampling modes; instance `i` uses `seed + i`.
    pub seed: u64,
}

impl SolverSetup {
    pub fn new(global: EdgeScorePolicy, local: EdgeScorePolicy, opts: SolveOptions) -> Self {
        SolverSetup {
            global,
            local,
            opts,
            perm: PermSolverConfig::default(),
            seed: 0,
        }
    }

    fn options_for(&self, instance_id: usize) -> SolveOptions {
        let reseed = |m: DecodeMode| match m {
            DecodeMode::Sample { .. } => DecodeMode::Sample {
                seed: self.seed.wrapping_add(instance_id as u64),
            },
            other => other,
        };
        SolveOptions {
            global_mode: reseed(self.opts.global_mode),
            local_mode: reseed(self.opts.local_mode),
            ..self.opts.clone()
        }
    }

    pub fn solve_one(&self, inst: &Instance, instance_id: usize) -> Result<(RoutePlan, f64)> {
        let out = solve(inst, &self.global, &self.local, &self.options_for(instance_id), &self.perm)?;
        validate_plan(&out.plan, inst).into_result()?;
        let cost = out.cost();
        Ok((out.plan, cost))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance_id: usize,
    pub cost: f64,
    pub time_s: f64,
    pub n_routes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub avg_cost: f64,
    pub std_cost: f64,
    pub avg_time: f64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Aggregates rows; the standard deviation is the population one.
    pub fn from_rows(method: impl Into<String>, rows: Vec<EvalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(HlgpError::EmptyDataset);
        }
        let n = rows.len() as f64;
        let avg_cost = rows.iter().map(|r| r.cost).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.cost - avg_cost).powi(2)).sum::<f64>() / n;
        let avg_time = rows.iter().map(|r| r.time_s).sum::<f64>() / n;
        Ok(EvalReport {
            method: method.into(),
            avg_cost,
            std_cost: var.sqrt(),
            avg_time,
            rows,
        })
    }

    pub fn total_time(&self) -> f64 {
        self.rows.iter().map(|r| r.time_s).sum()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("instance_id,cost,time_s,n_routes\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.2},{}\n", r.instance_id, r.cost, r.time_s, r.n_routes));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| HlgpError::io(path, e))
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: avg {:.4} std {:.4} time {:.2}s over {} instances",
            self.method,
            self.avg_cost,
            self.std_cost,
            self.avg_time,
            self.rows.len()
        )
    }
}

fn timed_row(setup: &SolverSetup, inst: &Instance, id: usize) -> Result<EvalRow> {
    let start = Instant::now();
    let (plan, cost) = setup.solve_one(inst, id)?;
    let time_s = start.elapsed().as_secs_f64();
    Ok(EvalRow {
        instance_id: id,
        cost,
        time_s,
        n_routes: plan.tours.len(),
    })
}

/// Solves each instance in order, timing only the solve call.
pub fn eval_instances(instances: &[Instance], setup: &SolverSetup, method: &str) -> Result<EvalReport> {
    let rows = instances
        .iter()
        .enumerate()
        .map(|(id, inst)| timed_row(setup, inst, id))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(method, rows)
}

pub fn eval(dataset: impl AsRef<Path>, setup: &SolverSetup) -> Result<EvalReport> {
    let instances = load_dataset(dataset)?;
    let label = format!("K={}", setup.opts.levels);
    eval_instances(&instances, setup, &label)
}

/// One report per level count, all on the same instances and seeds. Every
/// instance is solved for all level counts before moving to the next one, so
/// slow drift in machine speed affects all counts alike.
pub fn k_sweep(instances: &[Instance], setup: &SolverSetup, ks: &[usize]) -> Result<Vec<EvalReport>> {
    let setups: Vec<SolverSetup> = ks
        .iter()
        .map(|&k| SolverSetup {
            opts: SolveOptions {
                levels: k,
                ..setup.opts.clone()
            },
            ..setup.clone()
        })
        .collect();
    let mut rows: Vec<Vec<EvalRow>> = vec![Vec::with_capacity(instances.len()); ks.len()];
    for (id, inst) in instances.iter().enumerate() {
        for (s, out) in setups.iter().zip(rows.iter_mut()) {
            out.push(timed_row(s, inst, id)?);
        }
    }
    ks.iter()
        .zip(rows)
        .map(|(k, r)| EvalReport::from_rows(format!("K={k}"), r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    Glob,
    GlobSubp,
    GlobLoc,
    GlobLocSubp,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Glob,
        AblationMode::GlobSubp,
        AblationMode::GlobLoc,
        AblationMode::GlobLocSubp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Glob => "glob.",
            AblationMode::GlobSubp => "glob.+subp.",
            AblationMode::GlobLoc => "glob.+loc.",
            AblationMode::GlobLocSubp => "glob.+loc.+subp.",
        }
    }

    /// `loc.` keeps the configured refinement levels (none otherwise) and
    /// `subp.` turns on residual restarts in the global decode.
    pub fn apply(self, opts: &SolveOptions) -> SolveOptions {
        let (loc, subp) = match self {
            AblationMode::Glob => (false, false),
            AblationMode::GlobSubp => (false, true),
            AblationMode::GlobLoc => (true, false),
            AblationMode::GlobLocSubp => (true, true),
        };
        SolveOptions {
            levels: if loc { opts.levels } else { 0 },
            restart: subp,
            ..opts.clone()
        }
    }
}

pub fn ablation(instances: &[Instance], setup: &SolverSetup, modes: &[AblationMode]) -> Result<Vec<EvalReport>> {
    modes
        .iter()
        .map(|m| {
            let s = SolverSetup {
                opts: m.apply(&setup.opts),
                ..setup.clone()
            };
            eval_instances(instances, &s, m.label())
        })
        .collect()
}
