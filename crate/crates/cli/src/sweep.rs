//! Paired Monte-Carlo sweeps. Every solver sees the same channel in a given
//! (axis value, trial) cell; rows are collected and written in a fixed order.

use rayon::prelude::*;

use coexist::channel::{sample_channel_set, trial_rng};
use coexist::ksearch::solve_p1;
use coexist::solver::solve;
use coexist::{Result, SemanticRateModel, SolveOptions, SolveReport, SolverKind, SystemConfig};

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Axis {
    /// Common QoS target in bits/s/Hz.
    Qos,
    /// Transmit SNR `P_T/σ²` in dB.
    Snr,
}

impl Axis {
    fn apply(self, cfg: &SystemConfig, value: f64) -> SystemConfig {
        match self {
            Axis::Qos => cfg.clone().with_qos(value),
            Axis::Snr => cfg.clone().with_snr_db(value),
        }
    }
}

struct Row {
    axis_value: f64,
    solver: SolverKind,
    trial: u64,
    report: Result<SolveReport>,
}

impl Row {
    fn feasible(&self) -> bool {
        matches!(&self.report, Ok(r) if r.feasible)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    base: &SystemConfig,
    model: &SemanticRateModel,
    opts: &SolveOptions,
    axis: Axis,
    grid: &[f64],
    trials: u64,
    depth: Option<u32>,
    kinds: &[SolverKind],
) -> std::result::Result<String, super::Failure> {
    let cfgs: Vec<SystemConfig> = grid
        .iter()
        .map(|&v| axis.apply(base, v).validated())
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, u64)> = (0..grid.len()).flat_map(|g| (0..trials).map(move |t| (g, t))).collect();
    let rows: Vec<Row> = cells
        .par_iter()
        .flat_map_iter(|&(g, trial)| {
            let cfg = &cfgs[g];
            let h = sample_channel_set(&mut trial_rng(cfg.seed, trial), cfg);
            kinds.iter().map(move |&kind| {
                let h = &h;
                let report = match depth {
                    Some(k) => solve(kind, h, cfg, model, k, opts),
                    None => solve_p1(h, cfg, model, kind, opts),
                };
                Row { axis_value: grid[g], solver: kind, trial, report }
            }).collect::<Vec<_>>()
        })
        .collect();

    let mut out = format!("# trials={trials}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["axis_value", "solver", "trial", "objective", "feasible", "wall_time", "k_opt"])
            .map_err(super::Failure::usage)?;
        for r in &rows {
            let (objective, wall, k) = match &r.report {
                Ok(rep) => (rep.objective.to_string(), rep.wall_time.to_string(), rep.depth.to_string()),
                Err(_) => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                r.axis_value.to_string(),
                r.solver.to_string(),
                r.trial.to_string(),
                objective,
                r.feasible().to_string(),
                wall,
                k,
            ])
            .map_err(super::Failure::usage)?;
        }
        // Summary rows: infeasible cells count as zero objective, `feasible`
        // holds the feasible fraction.
        for &v in grid {
            for &kind in kinds {
                let cell: Vec<&Row> = rows.iter().filter(|r| r.axis_value == v && r.solver == kind).collect();
                let scores: Vec<f64> = cell
                    .iter()
                    .map(|r| match &r.report {
                        Ok(rep) if rep.feasible => rep.objective,
                        _ => 0.0,
                    })
                    .collect();
                let walls: Vec<f64> = cell.iter().filter_map(|r| r.report.as_ref().ok()).map(|r| r.wall_time).collect();
                let frac = cell.iter().filter(|r| r.feasible()).count() as f64 / cell.len() as f64;
                let (m, s) = mean_std(&scores);
                let (wm, ws) = mean_std(&walls);
                for (label, obj, wall) in [("mean", m, wm), ("std", s, ws)] {
                    w.write_record([
                        v.to_string(),
                        kind.to_string(),
                        label.to_string(),
                        obj.to_string(),
                        frac.to_string(),
                        wall.to_string(),
                        String::new(),
                    ])
                    .map_err(super::Failure::usage)?;
                }
            }
        }
        w.flush().map_err(super::Failure::usage)?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

/// Sample mean and (n−1) standard deviation; NaN where undefined.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, if xs.len() > 1 { var.sqrt() } else { f64::NAN })
}
