//! Exhaustive search over the downsampling depth.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ChannelSet, SolveReport, SystemConfig};
use crate::semrate::SemanticRateModel;
use crate::solver::{solve, SolveOptions, SolverKind};

/// One solve per depth in `[k_min, k_max]`, run in parallel, returned in depth order.
pub fn solve_all_depths(
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    kind: SolverKind,
    opts: &SolveOptions,
) -> Vec<(u32, Result<SolveReport>)> {
    let depths: Vec<u32> = cfg.depths().collect();
    depths
        .into_par_iter()
        .map(|k| (k, solve(kind, h, cfg, model, k, opts)))
        .collect()
}

/// Best feasible report; ties go to the smaller depth.
pub fn best_report(mut results: Vec<(u32, Result<SolveReport>)>) -> Option<SolveReport> {
    results.sort_by_key(|(k, _)| *k);
    let mut best: Option<SolveReport> = None;
    for (_, r) in results {
        let Ok(rep) = r else { continue };
        if !rep.feasible {
            continue;
        }
        if best.as_ref().is_none_or(|b| rep.objective > b.objective) {
            best = Some(rep);
        }
    }
    best
}

pub fn solve_p1(
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    kind: SolverKind,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    cfg.validate()?;
    let (lo, hi) = (cfg.k_min, cfg.k_max);
    if !model.covers(lo, hi) {
        return Err(Error::InvalidModel(format!("model does not cover depths {lo}..={hi}")));
    }
    let results = solve_all_depths(h, cfg, model, kind, opts);
    let wall: f64 = results.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|r| r.wall_time).sum();
    let mut best = best_report(results)
        .ok_or_else(|| Error::Infeasible(format!("no depth in {lo}..={hi} meets the QoS targets")))?;
    best.wall_time = wall;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel_set, trial_rng};

    #[test]
    fn singleton_range_matches_fixed_depth() {
        let cfg = SystemConfig::default().with_depth_range(4, 4);
        let model = SemanticRateModel::synthetic();
        let h = sample_channel_set(&mut trial_rng(1, 0), &cfg);
        let opts = SolveOptions::default();
        for kind in [SolverKind::MmFp, SolverKind::LpMmFp] {
            let a = solve_p1(&h, &cfg, &model, kind, &opts).unwrap();
            let b = solve(kind, &h, &cfg, &model, 4, &opts).unwrap();
            assert_eq!(a.depth, 4);
            assert_eq!(a.objective, b.objective);
            assert_eq!(a.beamformer, b.beamformer);
        }
    }

    #[test]
    fn unconstrained_search_takes_the_best_depth() {
        let cfg = SystemConfig::default().with_qos(0.0);
        let model = SemanticRateModel::synthetic();
        let h = sample_channel_set(&mut trial_rng(2, 0), &cfg);
        let opts = SolveOptions::default();
        let best = solve_p1(&h, &cfg, &model, SolverKind::MmFp, &opts).unwrap();
        for k in cfg.depths() {
            let r = solve(SolverKind::MmFp, &h, &cfg, &model, k, &opts).unwrap();
            assert!(best.objective >= r.objective);
            if r.objective == best.objective {
                assert!(best.depth <= k);
            }
        }
    }

    #[test]
    fn ties_go_to_the_smaller_depth() {
        let cfg = SystemConfig::default().with_depth_range(2, 3);
        let model = SemanticRateModel::synthetic();
        let h = sample_channel_set(&mut trial_rng(3, 0), &cfg);
        let mut rep = solve(SolverKind::MrtPc, &h, &cfg, &model, 3, &SolveOptions::default()).unwrap();
        rep.feasible = true;
        let mut low = rep.clone();
        low.depth = 2;
        let best = best_report(vec![(3, Ok(rep)), (2, Ok(low))]).unwrap();
        assert_eq!(best.depth, 2);
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let cfg = SystemConfig::default().with_qos(50.0);
        let model = SemanticRateModel::synthetic();
        let h = sample_channel_set(&mut trial_rng(4, 0), &cfg);
        let err = solve_p1(&h, &cfg, &model, SolverKind::LpMmFp, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn search_is_deterministic() {
        let cfg = SystemConfig::default();
        let model = SemanticRateModel::synthetic();
        let h = sample_channel_set(&mut trial_rng(5, 0), &cfg);
        let opts = SolveOptions::default();
        let a = solve_p1(&h, &cfg, &model, SolverKind::LpMmFp, &opts).unwrap();
        let b = solve_p1(&h, &cfg, &model, SolverKind::LpMmFp, &opts).unwrap();
        assert_eq!((a.depth, a.objective), (b.depth, b.objective));
    }
}
