//! Low-complexity variant: directions from a single closed-form solve with
//! uniform multipliers, then power allocation on those fixed directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, unit};
use crate::metrics::LinkGains;
use crate::mmfp::{self, AuxState, Geometry, ScalarGeometry, VectorGeometry};
use crate::model::{Beamformer, CVector, ChannelSet, IterationCounts, SolveReport, SystemConfig, C64};
use crate::semrate::SemanticRateModel;
use crate::solver::{build_report, SolveOptions};

/// One unit-norm direction per user, bit-users first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    #[serde(with = "crate::model::cvecs")]
    pub dirs: Vec<CVector>,
    pub n_bit: usize,
}

impl DirectionSet {
    /// Normalizes each column; a zero column is replaced by `fallback[u]`.
    pub fn from_columns(cols: Vec<CVector>, n_bit: usize, fallback: &ChannelSet) -> Self {
        let dirs = cols
            .into_iter()
            .enumerate()
            .map(|(u, c)| if c.norm() > 0.0 { unit(&c) } else { unit(fallback.user(u)) })
            .collect();
        DirectionSet { dirs, n_bit }
    }

    pub fn n_users(&self) -> usize {
        self.dirs.len()
    }

    /// Rotates each direction so that `h_uᴴ ṽ_u` is real and nonnegative.
    pub fn phase_aligned(&self, h: &ChannelSet) -> Self {
        let dirs = self
            .dirs
            .iter()
            .enumerate()
            .map(|(u, d)| {
                let c = inner(h.user(u), d);
                if c.norm() > 0.0 {
                    d * (c.conj() / c.norm())
                } else {
                    d.clone()
                }
            })
            .collect();
        DirectionSet { dirs, n_bit: self.n_bit }
    }

    /// `gain[u][j] = |h_uᴴ ṽ_j|²`.
    pub fn gains(&self, h: &ChannelSet) -> Vec<Vec<f64>> {
        h.iter()
            .map(|hu| self.dirs.iter().map(|d| inner(hu, d).norm_sqr()).collect())
            .collect()
    }

    pub fn beamformer(&self, alloc: &PowerAllocation) -> Beamformer {
        let cols = self
            .dirs
            .iter()
            .zip(alloc.powers())
            .map(|(d, p)| d * C64::new(p.max(0.0).sqrt(), 0.0))
            .collect();
        Beamformer::from_columns(cols, self.n_bit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p_bit: Vec<f64>,
    pub p_sem: Vec<f64>,
    pub iterations: IterationCounts,
    pub converged: bool,
    /// Objective of the allocation problem per outer iteration.
    pub trace: Vec<f64>,
}

impl PowerAllocation {
    pub fn powers(&self) -> impl Iterator<Item = f64> + '_ {
        self.p_bit.iter().chain(&self.p_sem).copied()
    }

    pub fn total(&self) -> f64 {
        self.powers().sum()
    }
}

/// Directions from one closed-form solve with every multiplier set to `lambda0`
/// and auxiliaries taken at MRT.
pub fn lp_directions(
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    lambda0: f64,
) -> Result<DirectionSet> {
    if !(lambda0 >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda0 must be nonnegative, got {lambda0}")));
    }
    h.check(cfg)?;
    let mrt = mmfp::mrt_init(h, cfg);
    let mut state = AuxState::new(cfg.n_bit, cfg.n_sem);
    mmfp::update_sinr_aux(&mrt, h, cfg, &mut state);
    mmfp::update_ratio_aux(&mrt, h, cfg, model, k, &mut state)?;
    let lambda: Vec<f64> = cfg.qos.iter().map(|&b| if b > 0.0 { lambda0 } else { 0.0 }).collect();
    let shared = cfg.shared_fraction(k)?;
    let w = mmfp::weights(&state, &lambda, cfg, shared);
    let (v, _) = VectorGeometry { channels: h }.solve(&w)?;
    Ok(DirectionSet::from_columns(v.iter().cloned().collect(), cfg.n_bit, h))
}

/// Power allocation on fixed directions by running the MM-FP loop on the
/// scalar effective-gain system, starting from an equal split.
pub fn allocate_power(
    dirs: &DirectionSet,
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<(DirectionSet, PowerAllocation)> {
    if dirs.n_users() != cfg.n_users() || dirs.n_bit != cfg.n_bit {
        return Err(Error::Dimension(format!(
            "{} directions for {} users",
            dirs.n_users(),
            cfg.n_users()
        )));
    }
    let aligned = dirs.phase_aligned(h);
    let geom = ScalarGeometry { gain: aligned.gains(h), n_bit: cfg.n_bit };
    let init = vec![(cfg.p_total / cfg.n_users() as f64).sqrt(); cfg.n_users()];
    let out = mmfp::run(&geom, cfg, model.params(k)?, cfg.shared_fraction(k)?, init, opts)?;
    let p: Vec<f64> = out.beams.iter().map(|s| s * s).collect();
    let alloc = PowerAllocation {
        p_bit: p[..cfg.n_bit].to_vec(),
        p_sem: p[cfg.n_bit..].to_vec(),
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
    };
    Ok((aligned, alloc))
}

/// Link gains of an amplitude vector on fixed directions; handy for checks.
pub fn allocation_gains(dirs: &DirectionSet, h: &ChannelSet, alloc: &PowerAllocation) -> LinkGains {
    LinkGains::compute(&dirs.beamformer(alloc), h)
}

/// Allocates power on `dirs` and builds the report.
pub(crate) fn report_on_directions(
    name: &str,
    dirs: &DirectionSet,
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let (aligned, alloc) = allocate_power(dirs, h, cfg, model, k, opts)?;
    let v = aligned.beamformer(&alloc);
    let mut rep = build_report(name, v, h, cfg, model, k, alloc.iterations, alloc.converged, 0.0)?;
    rep.trace = alloc.trace;
    Ok(rep)
}

pub fn solve_lp(
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let dirs = lp_directions(h, cfg, model, k, opts.lp_lambda0)?;
    report_on_directions("lp-mmfp", &dirs, h, cfg, model, k, opts)
}
