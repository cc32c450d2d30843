//! Classical direction rules followed by the same power allocation the
//! low-complexity solver uses.

use nalgebra::{SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::linalg::{inner, unit, CMatrix};
use crate::lpmmfp::{report_on_directions, DirectionSet};
use crate::model::{Beamformer, CVector, ChannelSet, SolveReport, SystemConfig, C64};
use crate::semrate::SemanticRateModel;
use crate::solver::{SolveOptions, SolverKind};

/// Condition threshold on the stacked channel for zero-forcing.
const ZF_RCOND: f64 = 1e-10;

pub fn mrt_directions(h: &ChannelSet) -> DirectionSet {
    DirectionSet { dirs: h.iter().map(unit).collect(), n_bit: h.n_bit() }
}

fn stacked(h: &ChannelSet) -> CMatrix {
    CMatrix::from_columns(&h.iter().cloned().collect::<Vec<_>>())
}

/// Normalized columns of `H (HᴴH)⁻¹`.
pub fn zf_directions(h: &ChannelSet) -> Result<DirectionSet> {
    let (n_t, users) = (h.n_t(), h.n_users());
    if users > n_t {
        return Err(Error::TooManyUsers { users, n_t });
    }
    let hm = stacked(h);
    let sv = SVD::new(hm.clone(), false, false).singular_values;
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if !(smin > ZF_RCOND * smax) {
        return Err(Error::RankDeficient);
    }
    let gram = hm.adjoint() * &hm;
    let inv = gram.try_inverse().ok_or(Error::RankDeficient)?;
    let v = hm * inv;
    Ok(DirectionSet {
        dirs: v.column_iter().map(|c| unit(&c.into_owned())).collect(),
        n_bit: h.n_bit(),
    })
}

/// `Σ_u log₂(1 + SINR_u)` with the true noise, every user treated as a rate user.
pub fn sum_rate(v: &[CVector], h: &ChannelSet, cfg: &SystemConfig) -> f64 {
    h.iter()
        .enumerate()
        .map(|(u, hu)| {
            let g: Vec<f64> = v.iter().map(|vj| inner(hu, vj).norm_sqr()).collect();
            let total: f64 = g.iter().sum();
            (1.0 + g[u] / (total - g[u] + cfg.noise(u))).log2()
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct WmmseRun {
    pub directions: DirectionSet,
    /// Sum rate after initialization and after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Transmit update for fixed receivers and weights: `v_k = w_k u_k* (J + μI)⁻¹ h_k`
/// with `J = Σ w_j |u_j|² h_j h_jᴴ` and `μ ≥ 0` chosen so that `Σ‖v_k‖² ≤ P_T`.
fn wmmse_transmit(h: &ChannelSet, u: &[C64], w: &[f64], p_total: f64) -> Vec<CVector> {
    let n = h.n_t();
    let mut j = CMatrix::zeros(n, n);
    for (k, hk) in h.iter().enumerate() {
        crate::linalg::add_outer(&mut j, w[k] * u[k].norm_sqr(), hk);
    }
    let eig = SymmetricEigen::new(j);
    let q = &eig.eigenvectors;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let rhs: Vec<CVector> = h.iter().enumerate().map(|(k, hk)| q.adjoint() * hk * (u[k] * w[k])).collect();
    let weight: Vec<f64> = (0..n).map(|i| rhs.iter().map(|r| r[i].norm_sqr()).sum()).collect();
    let floor = 1e-14 * lam.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let power = |mu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = lam[i] + mu;
                if d > floor {
                    weight[i] / (d * d)
                } else if weight[i] > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mu = if power(0.0) <= p_total {
        0.0
    } else {
        let mut hi = 1.0;
        while power(hi) > p_total {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p_total {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    };
    rhs.iter()
        .map(|r| {
            let scaled = CVector::from_iterator(
                n,
                (0..n).map(|i| {
                    let d = lam[i] + mu;
                    if d > floor {
                        r[i] / d
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }),
            );
            q * scaled
        })
        .collect()
}

/// Classical weighted-MMSE sum-rate maximization over all users with unit
/// weights, started from MRT at equal power.
pub fn wmmse_directions(h: &ChannelSet, cfg: &SystemConfig, opts: &SolveOptions) -> Result<WmmseRun> {
    h.check(cfg)?;
    let users = h.n_users();
    let mut v: Vec<CVector> = crate::mmfp::mrt_init(h, cfg).iter().cloned().collect();
    let mut trace = vec![sum_rate(&v, h, cfg)];
    let mut iterations = 0;
    while iterations < opts.wmmse_max_iter {
        iterations += 1;
        let mut u = Vec::with_capacity(users);
        let mut w = Vec::with_capacity(users);
        for (k, hk) in h.iter().enumerate() {
            let g: Vec<C64> = v.iter().map(|vj| inner(hk, vj)).collect();
            let total: f64 = g.iter().map(|c| c.norm_sqr()).sum::<f64>() + cfg.noise(k);
            u.push(g[k].conj() / total);
            let mse = 1.0 - g[k].norm_sqr() / total;
            w.push(1.0 / mse.max(1e-300));
        }
        v = wmmse_transmit(h, &u, &w, cfg.p_total);
        let rate = sum_rate(&v, h, cfg);
        let prev = *trace.last().unwrap();
        trace.push(rate);
        if (rate - prev).abs() < opts.wmmse_tol {
            break;
        }
    }
    let b = Beamformer::from_columns(v, h.n_bit());
    Ok(WmmseRun {
        directions: DirectionSet::from_columns(b.iter().cloned().collect(), h.n_bit(), h),
        trace,
        iterations,
    })
}

pub fn solve_baseline(
    kind: SolverKind,
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    h.check(cfg)?;
    let dirs = match kind {
        SolverKind::ZfPc => zf_directions(h)?,
        SolverKind::MrtPc => mrt_directions(h),
        SolverKind::WmmsePc => wmmse_directions(h, cfg, opts)?.directions,
        other => return Err(Error::UnknownSolver(format!("{other} is not a baseline"))),
    };
    report_on_directions(kind.name(), &dirs, h, cfg, model, k, opts)
}
