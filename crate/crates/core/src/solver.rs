//! Solver options, solver selection and report assembly shared by every solver.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{check_feasible, objective_p1, sinr_all, Tolerances};
use crate::model::{Beamformer, ChannelSet, IterationCounts, SolveReport, SystemConfig};
use crate::semrate::SemanticRateModel;
use crate::{baselines, lpmmfp, mmfp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Stop the multiplier search once `Σ|λ − λ'| ≤ xi`.
    pub xi: f64,
    pub max_inner: usize,
    /// Stop the outer loop once the objective moves less than this.
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Switch to averaged multiplier updates when the step size grows.
    pub damping: bool,
    /// History length for Anderson mixing of the multiplier map; 0 gives the plain map.
    pub anderson_depth: usize,
    pub lambda_init: f64,
    pub lambda_cap: f64,
    /// Consecutive capped sweeps before the multiplier search is declared divergent.
    pub divergence_sweeps: usize,
    /// Uniform multiplier used by the one-shot direction step.
    pub lp_lambda0: f64,
    pub wmmse_tol: f64,
    pub wmmse_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            xi: 1e-5,
            max_inner: 200,
            tol_outer: 1e-4,
            max_outer: 100,
            damping: true,
            anderson_depth: 5,
            lambda_init: 0.01,
            lambda_cap: 1e6,
            divergence_sweeps: 3,
            lp_lambda0: 0.01,
            wmmse_tol: 1e-5,
            wmmse_max_iter: 200,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.xi) || !pos(self.tol_outer) || !pos(self.wmmse_tol) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_inner == 0 || self.max_outer == 0 || self.wmmse_max_iter == 0 || self.divergence_sweeps == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if !(self.lambda_init >= 0.0) || !(self.lp_lambda0 >= 0.0) || !pos(self.lambda_cap) {
            return Err(Error::InvalidConfig("multiplier settings must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "mmfp")]
    MmFp,
    #[serde(rename = "lp-mmfp")]
    LpMmFp,
    #[serde(rename = "zf-pc")]
    ZfPc,
    #[serde(rename = "mrt-pc")]
    MrtPc,
    #[serde(rename = "wmmse-pc")]
    WmmsePc,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::MmFp,
        SolverKind::LpMmFp,
        SolverKind::ZfPc,
        SolverKind::MrtPc,
        SolverKind::WmmsePc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::MmFp => "mmfp",
            SolverKind::LpMmFp => "lp-mmfp",
            SolverKind::ZfPc => "zf-pc",
            SolverKind::MrtPc => "mrt-pc",
            SolverKind::WmmsePc => "wmmse-pc",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownSolver(s.to_string()))
    }
}

/// Evaluates a final beamformer against the true (unscaled) model.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    solver: &str,
    beamformer: Beamformer,
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    iterations: IterationCounts,
    converged: bool,
    wall_time: f64,
) -> Result<SolveReport> {
    let sinr = sinr_all(&beamformer, h, cfg, false);
    let objective = objective_p1(&beamformer, h, cfg, k, model)?;
    let feas = check_feasible(&beamformer, h, cfg, k, Tolerances::for_config(cfg))?;
    Ok(SolveReport {
        solver: solver.to_string(),
        total_power: beamformer.total_power(),
        beamformer,
        depth: k,
        objective,
        sinr_sem: sinr.sem,
        sinr_bit_shared: sinr.bit_shared,
        sinr_bit_exclusive: sinr.bit_exclusive,
        bit_rates: feas.bit_rates,
        qos_slack: feas.qos_slack,
        iterations,
        wall_time,
        converged,
        feasible: feas.feasible && objective.is_finite(),
        trace: Vec::new(),
    })
}

/// Runs one solver at a fixed depth. `wall_time` covers the solve call only.
pub fn solve(
    kind: SolverKind,
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    let mut rep = match kind {
        SolverKind::MmFp => mmfp::solve_p2(h, cfg, model, k, opts)?,
        SolverKind::LpMmFp => lpmmfp::solve_lp(h, cfg, model, k, opts)?,
        SolverKind::ZfPc | SolverKind::MrtPc | SolverKind::WmmsePc => {
            baselines::solve_baseline(kind, h, cfg, model, k, opts)?
        }
    };
    rep.wall_time = start.elapsed().as_secs_f64();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!(matches!("sdr".parse::<SolverKind>(), Err(Error::UnknownSolver(_))));
    }

    #[test]
    fn options_json_fills_defaults() {
        let o: SolveOptions = serde_json::from_str(r#"{"xi": 1e-6}"#).unwrap();
        assert_eq!(o.xi, 1e-6);
        assert_eq!(o.max_inner, 200);
        o.validate().unwrap();
        let bad = SolveOptions { max_outer: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
