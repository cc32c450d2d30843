//! SINRs, bit rates, the semantic objective and feasibility checks.
//!
//! Two SINR flavors are used throughout. The plain form uses the true noise
//! powers. The regularized form scales every noise power by `Tr(VVᴴ)/P_T`,
//! which makes all SINRs invariant to rescaling `V` and lets solvers drop
//! the power constraint until a final normalization.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::inner;
use crate::model::{Beamformer, ChannelSet, SystemConfig, DEFAULT_TOL_POW_REL, DEFAULT_TOL_QOS};
use crate::semrate::SemanticRateModel;

/// Everything the SINR expressions need from a `(V, H)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    /// `cross[u][j] = |h_uᴴ v_j|²`, users in column order.
    pub cross: Vec<Vec<f64>>,
    /// `Re{h_uᴴ v_u}`.
    pub re_own: Vec<f64>,
    /// `Tr(VVᴴ)`.
    pub power: f64,
    pub n_bit: usize,
}

impl LinkGains {
    pub fn compute(v: &Beamformer, h: &ChannelSet) -> Self {
        let n = h.n_users();
        let mut cross = vec![vec![0.0; n]; n];
        let mut re_own = vec![0.0; n];
        for (u, hu) in h.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                let z = inner(hu, vj);
                cross[u][j] = z.norm_sqr();
                if u == j {
                    re_own[u] = z.re;
                }
            }
        }
        LinkGains {
            cross,
            re_own,
            power: v.total_power(),
            n_bit: h.n_bit(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.re_own.len()
    }

    pub fn signal(&self, u: usize) -> f64 {
        self.cross[u][u]
    }

    /// Received power from every stream, own included.
    pub fn total_all(&self, u: usize) -> f64 {
        self.cross[u].iter().sum()
    }

    /// Received power from bit-user streams, own included for bit-users.
    pub fn total_bit(&self, u: usize) -> f64 {
        self.cross[u][..self.n_bit].iter().sum()
    }

    pub fn interference_all(&self, u: usize) -> f64 {
        self.total_all(u) - self.signal(u)
    }

    pub fn interference_bit(&self, u: usize) -> f64 {
        let own = if u < self.n_bit { self.signal(u) } else { 0.0 };
        self.total_bit(u) - own
    }

    /// Multiplier applied to the noise powers.
    pub fn noise_scale(&self, cfg: &SystemConfig, regularized: bool) -> f64 {
        if regularized {
            self.power / cfg.p_total
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrBundle {
    pub sem: Vec<f64>,
    pub bit_shared: Vec<f64>,
    pub bit_exclusive: Vec<f64>,
    pub regularized: bool,
}

fn ratio(s: f64, den: f64) -> f64 {
    if den > 0.0 {
        s / den
    } else {
        0.0
    }
}

impl SinrBundle {
    pub fn from_gains(g: &LinkGains, cfg: &SystemConfig, regularized: bool) -> Self {
        let scale = g.noise_scale(cfg, regularized);
        let b = cfg.n_bit;
        let sem = (0..cfg.n_sem)
            .map(|t| {
                let u = b + t;
                ratio(g.signal(u), g.interference_all(u) + scale * cfg.sigma2_sem[t])
            })
            .collect();
        let bit_shared = (0..b)
            .map(|i| ratio(g.signal(i), g.interference_all(i) + scale * cfg.sigma2_bit[i]))
            .collect();
        let bit_exclusive = (0..b)
            .map(|i| ratio(g.signal(i), g.interference_bit(i) + scale * cfg.sigma2_bit[i]))
            .collect();
        SinrBundle { sem, bit_shared, bit_exclusive, regularized }
    }
}

pub fn sinr_all(v: &Beamformer, h: &ChannelSet, cfg: &SystemConfig, regularized: bool) -> SinrBundle {
    SinrBundle::from_gains(&LinkGains::compute(v, h), cfg, regularized)
}

/// `(M/L)·log₂(1+γ₁) + (1 − M/L)·log₂(1+γ₂)` per bit-user.
pub fn frame_rates(sinr: &SinrBundle, shared: f64) -> Vec<f64> {
    sinr.bit_shared
        .iter()
        .zip(&sinr.bit_exclusive)
        .map(|(&g1, &g2)| shared * g1.ln_1p() / std::f64::consts::LN_2 + (1.0 - shared) * g2.ln_1p() / std::f64::consts::LN_2)
        .collect()
}

pub fn bit_rate(v: &Beamformer, h: &ChannelSet, cfg: &SystemConfig, k: u32) -> Result<Vec<f64>> {
    let shared = cfg.shared_fraction(k)?;
    Ok(frame_rates(&sinr_all(v, h, cfg, false), shared))
}

pub fn objective_from_sinr(sem: &[f64], model: &SemanticRateModel, k: u32) -> Result<f64> {
    let p = model.params(k)?;
    Ok(sem.iter().map(|&g| p.value(g)).sum())
}

/// `Σ_t ε̃(K, γ_t)` with plain SINRs.
pub fn objective_p1(
    v: &Beamformer,
    h: &ChannelSet,
    cfg: &SystemConfig,
    k: u32,
    model: &SemanticRateModel,
) -> Result<f64> {
    objective_from_sinr(&sinr_all(v, h, cfg, false).sem, model, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub qos_ok: bool,
    pub power_ok: bool,
    pub bit_rates: Vec<f64>,
    /// `R_b − β_b`.
    pub qos_slack: Vec<f64>,
    /// `P_T − Tr(VVᴴ)`.
    pub power_slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub qos: f64,
    pub power: f64,
}

impl Tolerances {
    pub fn for_config(cfg: &SystemConfig) -> Self {
        Tolerances {
            qos: DEFAULT_TOL_QOS,
            power: DEFAULT_TOL_POW_REL * cfg.p_total,
        }
    }
}

pub fn check_feasible(
    v: &Beamformer,
    h: &ChannelSet,
    cfg: &SystemConfig,
    k: u32,
    tol: Tolerances,
) -> Result<Feasibility> {
    let bit_rates = bit_rate(v, h, cfg, k)?;
    let qos_slack: Vec<f64> = bit_rates.iter().zip(&cfg.qos).map(|(r, b)| r - b).collect();
    let power_slack = cfg.p_total - v.total_power();
    let qos_ok = qos_slack.iter().all(|&s| s >= -tol.qos);
    let power_ok = power_slack >= -tol.power;
    Ok(Feasibility {
        feasible: qos_ok && power_ok,
        qos_ok,
        power_ok,
        bit_rates,
        qos_slack,
        power_slack,
    })
}
