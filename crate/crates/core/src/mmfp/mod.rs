//! MM-FP: majorization-minimization on the semantic objective combined with
//! Lagrangian-dual and quadratic fractional-programming transforms of the
//! rate constraints, solved per iteration in semi-closed form with a
//! fixed-point search over the constraint multipliers.
//!
//! All rate expressions inside the transforms are in nats; QoS targets are
//! converted with `β·ln 2` and results reported back in bits.

use std::collections::VecDeque;
use std::f64::consts::LN_2;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{LinkGains, SinrBundle};
use crate::model::{Beamformer, ChannelSet, IterationCounts, SolveReport, SystemConfig, C64};
use crate::semrate::{LogisticParams, SemanticRateModel, SurrogateCoeffs};
use crate::solver::{build_report, SolveOptions};

pub mod geometry;

pub use geometry::{Geometry, ScalarGeometry, VectorGeometry, Weights};

/// Anchors below this are clamped; a sem-user with no signal has no useful tangent.
const MIN_ANCHOR: f64 = 1e-12;

/// Sweeps of uniform multiplier growth without residual decay before doubling.
const ESCALATE_AFTER: usize = 5;

/// Auxiliary variables of one MM-FP iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxState {
    /// Surrogate anchors `Γ⁰_t`.
    pub gamma0: Vec<f64>,
    /// Surrogate coefficients at the (possibly re-anchored) anchors.
    pub coeffs: Vec<SurrogateCoeffs>,
    /// Shared-period SINR auxiliaries of the dual transform.
    pub y: Vec<f64>,
    /// Exclusive-period SINR auxiliaries.
    pub z: Vec<f64>,
    /// Quadratic-transform auxiliaries: `x` for sem-users, `m`/`n` for bit-users.
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl AuxState {
    pub fn new(n_bit: usize, n_sem: usize) -> Self {
        let unit = SurrogateCoeffs { d_coef: 0.0, e_coef: 0.0, f_coef: 0.0, g_coef: 1.0, anchor: 1.0 };
        AuxState {
            gamma0: vec![1.0; n_sem],
            coeffs: vec![unit; n_sem],
            y: vec![0.0; n_bit],
            z: vec![0.0; n_bit],
            x: vec![0.0; n_sem],
            m: vec![0.0; n_bit],
            n: vec![0.0; n_bit],
            lambda: vec![0.0; n_bit],
        }
    }

    /// `κ_i = (M/L) m_i √(1+y_i) + (1 − M/L) n_i √(1+z_i)`.
    pub fn kappa(&self, i: usize, shared: f64) -> f64 {
        shared * self.m[i] * (1.0 + self.y[i]).sqrt() + (1.0 - shared) * self.n[i] * (1.0 + self.z[i]).sqrt()
    }
}

/// Refreshes `Γ⁰`, `y`, `z` from regularized SINRs of the current beamformer.
pub fn update_sinr_aux_gains(g: &LinkGains, cfg: &SystemConfig, state: &mut AuxState) {
    let s = SinrBundle::from_gains(g, cfg, true);
    state.gamma0 = s.sem;
    state.y = s.bit_shared;
    state.z = s.bit_exclusive;
}

pub fn update_sinr_aux(v: &Beamformer, h: &ChannelSet, cfg: &SystemConfig, state: &mut AuxState) {
    update_sinr_aux_gains(&LinkGains::compute(v, h), cfg, state);
}

/// Refreshes surrogate coefficients and `x`, `m`, `n`. Expects `Γ⁰`, `y`, `z`
/// to be current for the same beamformer.
pub fn update_ratio_aux_gains(g: &LinkGains, cfg: &SystemConfig, params: &LogisticParams, state: &mut AuxState) {
    let scale = g.power / cfg.p_total;
    let b = cfg.n_bit;
    state.coeffs = state.gamma0.iter().map(|&g0| params.safe_coeffs(g0.max(MIN_ANCHOR))).collect();
    state.x = (0..cfg.n_sem)
        .map(|t| {
            let u = b + t;
            let c = &state.coeffs[t];
            let den = c.f_coef * g.signal(u) + c.g_coef * (g.interference_all(u) + scale * cfg.sigma2_sem[t]);
            if den > 0.0 {
                g.re_own[u] / den
            } else {
                0.0
            }
        })
        .collect();
    let frac = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    state.m = (0..b)
        .map(|i| frac((1.0 + state.y[i]).sqrt() * g.re_own[i], g.total_all(i) + scale * cfg.sigma2_bit[i]))
        .collect();
    state.n = (0..b)
        .map(|i| frac((1.0 + state.z[i]).sqrt() * g.re_own[i], g.total_bit(i) + scale * cfg.sigma2_bit[i]))
        .collect();
}

pub fn update_ratio_aux(
    v: &Beamformer,
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    state: &mut AuxState,
) -> Result<()> {
    let params = model.params(k)?;
    update_ratio_aux_gains(&LinkGains::compute(v, h), cfg, params, state);
    Ok(())
}

/// Stationarity weights for multipliers `lambda`.
pub fn weights(state: &AuxState, lambda: &[f64], cfg: &SystemConfig, shared: f64) -> Weights {
    let b = cfg.n_bit;
    let mu: Vec<f64> = (0..b)
        .map(|j| lambda[j] * (shared * state.m[j].powi(2) + (1.0 - shared) * state.n[j].powi(2)))
        .collect();
    let shared_w: Vec<f64> = (0..b).map(|j| lambda[j] * shared * state.m[j].powi(2)).collect();
    let nu: Vec<f64> = state
        .coeffs
        .iter()
        .zip(&state.x)
        .map(|(c, x)| x * x * c.e_coef * c.g_coef)
        .collect();
    let own: Vec<f64> = state
        .coeffs
        .iter()
        .zip(&state.x)
        .map(|(c, x)| x * x * c.e_coef * c.f_coef)
        .collect();
    let noise = (mu.iter().zip(&cfg.sigma2_bit).map(|(a, s)| a * s).sum::<f64>()
        + nu.iter().zip(&cfg.sigma2_sem).map(|(a, s)| a * s).sum::<f64>())
        / cfg.p_total;
    Weights {
        noise,
        rho: (0..b).map(|i| lambda[i] * state.kappa(i, shared)).collect(),
        varsigma: state.coeffs.iter().zip(&state.x).map(|(c, x)| x * c.e_coef).collect(),
        mu,
        shared: shared_w,
        nu,
        own,
    }
}

/// Closed-form maximizer of the Lagrangian for fixed multipliers: one
/// factorization of `A` for all bit-users, one of `C` for all sem-users.
pub fn beamformers_from_lambda(
    lambda: &[f64],
    state: &AuxState,
    h: &ChannelSet,
    cfg: &SystemConfig,
    k: u32,
) -> Result<Beamformer> {
    let shared = cfg.shared_fraction(k)?;
    let w = weights(state, lambda, cfg, shared);
    Ok(VectorGeometry { channels: h }.solve(&w)?.0)
}

/// Dual-transformed rates `(R′₁, R′₂)` in bits, per bit-user, at the stored `y`, `z`.
pub fn dual_rates(g: &LinkGains, state: &AuxState, cfg: &SystemConfig) -> (Vec<f64>, Vec<f64>) {
    let scale = g.power / cfg.p_total;
    let r = |aux: f64, s: f64, den: f64| (aux.ln_1p() - aux + (1.0 + aux) * s / den) / LN_2;
    (0..cfg.n_bit)
        .map(|i| {
            let noise = scale * cfg.sigma2_bit[i];
            let s = g.signal(i);
            (
                r(state.y[i], s, g.total_all(i) + noise),
                r(state.z[i], s, g.total_bit(i) + noise),
            )
        })
        .unzip()
}

/// Quadratic-transformed rates `(R″₁, R″₂)` in bits, per bit-user.
pub fn quadratic_rates(g: &LinkGains, state: &AuxState, cfg: &SystemConfig) -> (Vec<f64>, Vec<f64>) {
    let scale = g.power / cfg.p_total;
    let r = |aux: f64, q: f64, re: f64, den: f64| {
        (aux.ln_1p() - aux + 2.0 * q * (1.0 + aux).sqrt() * re - q * q * den) / LN_2
    };
    (0..cfg.n_bit)
        .map(|i| {
            let noise = scale * cfg.sigma2_bit[i];
            (
                r(state.y[i], state.m[i], g.re_own[i], g.total_all(i) + noise),
                r(state.z[i], state.n[i], g.re_own[i], g.total_bit(i) + noise),
            )
        })
        .unzip()
}

/// Left-hand side of the transformed QoS constraint, in bits.
pub fn qos_surrogate(g: &LinkGains, state: &AuxState, cfg: &SystemConfig, shared: f64) -> Vec<f64> {
    let (r1, r2) = quadratic_rates(g, state, cfg);
    r1.iter().zip(&r2).map(|(a, b)| shared * a + (1.0 - shared) * b).collect()
}

/// Quadratic-transformed sem objective `Σ_t D + E(2x Re{h_tᴴv_t} − x²(F S + G(I + σ̃²)))`.
pub fn sem_surrogate(g: &LinkGains, state: &AuxState, cfg: &SystemConfig) -> f64 {
    let scale = g.power / cfg.p_total;
    (0..cfg.n_sem)
        .map(|t| {
            let u = cfg.n_bit + t;
            let c = &state.coeffs[t];
            let x = state.x[t];
            let den = c.f_coef * g.signal(u) + c.g_coef * (g.interference_all(u) + scale * cfg.sigma2_sem[t]);
            c.d_coef + c.e_coef * (2.0 * x * g.re_own[u] - x * x * den)
        })
        .sum()
}

/// Lagrangian of the per-iteration problem, in nats.
pub fn lagrangian(g: &LinkGains, state: &AuxState, lambda: &[f64], cfg: &SystemConfig, shared: f64) -> f64 {
    let qos = qos_surrogate(g, state, cfg, shared);
    let penalty: f64 = (0..cfg.n_bit)
        .map(|i| lambda[i] * (qos[i] - cfg.qos[i]) * LN_2)
        .sum();
    sem_surrogate(g, state, cfg) + penalty
}

#[derive(Debug, Clone)]
pub struct FixedPoint<B> {
    pub lambda: Vec<f64>,
    pub beams: B,
    pub sweeps: usize,
    pub converged: bool,
    /// Multipliers exceeded the cap for the configured number of sweeps.
    pub diverged: bool,
}

/// One multiplier update: the value of `λ_i` that makes constraint `i`
/// tight given the interference of the current beamformer, clamped at 0.
fn lambda_update(
    g: &LinkGains,
    q_bit: &[f64],
    state: &AuxState,
    cfg: &SystemConfig,
    shared: f64,
    active: &[bool],
) -> Vec<f64> {
    let scale = g.power / cfg.p_total;
    (0..cfg.n_bit)
        .map(|i| {
            if !active[i] {
                return 0.0;
            }
            let kappa = state.kappa(i, shared);
            let den = 2.0 * kappa * kappa * q_bit[i];
            if !(den > 0.0) {
                return 0.0;
            }
            let noise = scale * cfg.sigma2_bit[i];
            let (y, z, m, n) = (state.y[i], state.z[i], state.m[i], state.n[i]);
            let num = cfg.qos[i] * LN_2
                - shared * (y.ln_1p() - y - m * m * noise)
                - (1.0 - shared) * (z.ln_1p() - z - n * n * noise)
                + shared * m * m * g.total_all(i)
                + (1.0 - shared) * n * n * g.total_bit(i);
            (num / den).max(0.0)
        })
        .collect()
}

/// Anderson mixing over the last few `(λ, f(λ) − λ)` pairs of the multiplier map.
/// The plain map is often a weak contraction; mixing keeps its fixed points
/// and cuts the sweep count by orders of magnitude.
struct Anderson {
    depth: usize,
    xs: VecDeque<Vec<f64>>,
    rs: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson { depth, xs: VecDeque::new(), rs: VecDeque::new() }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.rs.clear();
    }

    /// Whether the last step used any history.
    fn is_mixing(&self) -> bool {
        self.depth > 0 && self.xs.len() > 1
    }

    fn step(&mut self, x: &[f64], r: &[f64]) -> Vec<f64> {
        let plain: Vec<f64> = x.iter().zip(r).map(|(a, b)| a + b).collect();
        if self.depth == 0 {
            return plain;
        }
        self.xs.push_back(x.to_vec());
        self.rs.push_back(r.to_vec());
        while self.xs.len() > self.depth + 1 {
            self.xs.pop_front();
            self.rs.pop_front();
        }
        let k = self.xs.len() - 1;
        if k == 0 {
            return plain;
        }
        let n = x.len();
        let dx = DMatrix::from_fn(n, k, |i, j| self.xs[j + 1][i] - self.xs[j][i]);
        let dr = DMatrix::from_fn(n, k, |i, j| self.rs[j + 1][i] - self.rs[j][i]);
        let scale = dr.abs().max();
        if !(scale > 0.0) {
            return plain;
        }
        let Ok(gamma) = dr.clone().svd(true, true).solve(&DVector::from_column_slice(r), 1e-12 * scale) else {
            return plain;
        };
        let corr = (dx + dr) * gamma;
        let mixed: Vec<f64> = plain.iter().zip(corr.iter()).map(|(p, c)| p - c).collect();
        if mixed.iter().all(|v| v.is_finite()) {
            mixed
        } else {
            plain
        }
    }
}

/// Fixed-point search for the multipliers of the per-iteration QCQP.
pub fn fixed_point<G: Geometry>(
    geom: &G,
    state: &AuxState,
    cfg: &SystemConfig,
    shared: f64,
    opts: &SolveOptions,
) -> Result<FixedPoint<G::Beams>> {
    let active: Vec<bool> = cfg.qos.iter().map(|&b| b > 0.0).collect();
    let mut lambda: Vec<f64> = active
        .iter()
        .map(|&a| if a { opts.lambda_init } else { 0.0 })
        .collect();
    let mut mixer = Anderson::new(opts.anderson_depth);
    let mut prev_delta = f64::INFINITY;
    let mut last_mixed = false;
    let mut damped = false;
    let mut rising = 0;
    // lowest-residual point seen so far and its plain image
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut over_cap = 0;
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let w = weights(state, &lambda, cfg, shared);
        let (beams, q_bit) = geom.solve(&w)?;
        let g = geom.gains(&beams);
        let update = lambda_update(&g, &q_bit, state, cfg, shared, &active);
        let resid: Vec<f64> = update.iter().zip(&lambda).map(|(a, b)| a - b).collect();
        let delta: f64 = resid.iter().map(|r| r.abs()).sum();
        if delta <= opts.xi {
            return Ok(FixedPoint { lambda, beams, sweeps, converged: true, diverged: false });
        }
        let grew = delta > prev_delta;
        let all_up = resid.iter().zip(&active).all(|(r, &a)| !a || *r > 0.0);
        rising = if all_up && delta > 0.5 * prev_delta { rising + 1 } else { 0 };
        let mut next: Vec<f64> = if rising >= ESCALATE_AFTER {
            // steady upward drift: the fixed point is far away or absent, so
            // jump geometrically and let the cap decide
            rising = 0;
            mixer.reset();
            last_mixed = false;
            update.iter().map(|u| 2.0 * u).collect()
        } else if grew && last_mixed {
            // a mixed step made things worse: restart plainly from the best point
            mixer.reset();
            last_mixed = false;
            best.as_ref().map_or_else(|| update.clone(), |(_, img)| img.clone())
        } else {
            if grew && opts.damping {
                damped = true;
            }
            let candidate = if damped { None } else { Some(mixer.step(&lambda, &resid)) };
            match candidate {
                Some(c) if c.iter().zip(&active).all(|(v, &a)| !a || *v >= 0.0) => {
                    last_mixed = mixer.is_mixing();
                    c
                }
                _ => {
                    mixer.reset();
                    last_mixed = false;
                    if damped {
                        lambda.iter().zip(&resid).map(|(l, r)| l + 0.5 * r).collect()
                    } else {
                        update.clone()
                    }
                }
            }
        };
        if best.as_ref().is_none_or(|(d, _)| delta < *d) {
            best = Some((delta, update));
        }
        prev_delta = delta;
        for (l, &a) in next.iter_mut().zip(&active) {
            *l = if a { l.max(0.0) } else { 0.0 };
        }
        if next.iter().any(|&l| l > opts.lambda_cap) {
            over_cap += 1;
            for l in next.iter_mut() {
                *l = l.min(opts.lambda_cap);
            }
            if over_cap >= opts.divergence_sweeps {
                let w = weights(state, &next, cfg, shared);
                let (beams, _) = geom.solve(&w)?;
                return Ok(FixedPoint { lambda: next, beams, sweeps, converged: false, diverged: true });
            }
        } else {
            over_cap = 0;
        }
        if sweeps >= opts.max_inner {
            return Ok(FixedPoint { lambda, beams, sweeps, converged: false, diverged: false });
        }
        lambda = next;
    }
}

pub fn lambda_fixed_point(
    state: &AuxState,
    h: &ChannelSet,
    cfg: &SystemConfig,
    k: u32,
    opts: &SolveOptions,
) -> Result<FixedPoint<Beamformer>> {
    let shared = cfg.shared_fraction(k)?;
    fixed_point(&VectorGeometry { channels: h }, state, cfg, shared, opts)
}

#[derive(Debug, Clone)]
pub struct MmOutcome<B> {
    /// Normalized to `Tr = P_T`.
    pub beams: B,
    pub state: AuxState,
    /// Fixed-depth objective after initialization and after every outer iteration.
    pub trace: Vec<f64>,
    pub iterations: IterationCounts,
    pub converged: bool,
    /// Outer iterations whose multiplier search hit the cap.
    pub restorations: usize,
}

fn regularized_objective(g: &LinkGains, cfg: &SystemConfig, params: &LogisticParams) -> f64 {
    SinrBundle::from_gains(g, cfg, true).sem.iter().map(|&x| params.value(x)).sum()
}

fn normalize<G: Geometry>(geom: &G, beams: &mut G::Beams, cfg: &SystemConfig) {
    let p = geom.gains(beams).power;
    if p > 0.0 && p.is_finite() {
        geom.rescale(beams, (cfg.p_total / p).sqrt());
    }
}

/// The MM-FP outer loop on any geometry.
pub fn run<G: Geometry>(
    geom: &G,
    cfg: &SystemConfig,
    params: &LogisticParams,
    shared: f64,
    init: G::Beams,
    opts: &SolveOptions,
) -> Result<MmOutcome<G::Beams>> {
    let mut beams = init;
    normalize(geom, &mut beams, cfg);
    let mut state = AuxState::new(cfg.n_bit, cfg.n_sem);
    let mut trace = vec![regularized_objective(&geom.gains(&beams), cfg, params)];
    let mut iterations = IterationCounts::default();
    let mut converged = false;
    let mut restorations = 0;
    while iterations.outer < opts.max_outer {
        iterations.outer += 1;
        let g = geom.gains(&beams);
        update_sinr_aux_gains(&g, cfg, &mut state);
        update_ratio_aux_gains(&g, cfg, params, &mut state);
        let fp = fixed_point(geom, &state, cfg, shared, opts)?;
        iterations.inner += fp.sweeps;
        if fp.diverged {
            restorations += 1;
        }
        state.lambda = fp.lambda;
        beams = fp.beams;
        normalize(geom, &mut beams, cfg);
        let obj = regularized_objective(&geom.gains(&beams), cfg, params);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if fp.converged && (obj - prev).abs() < opts.tol_outer {
            converged = true;
            break;
        }
    }
    Ok(MmOutcome { beams, state, trace, iterations, converged, restorations })
}

/// MRT directions with equal per-user power summing to `P_T`.
pub fn mrt_init(h: &ChannelSet, cfg: &SystemConfig) -> Beamformer {
    let per_user = (cfg.p_total / h.n_users() as f64).sqrt();
    let cols = h
        .iter()
        .map(|hu| hu * C64::new(per_user / hu.norm(), 0.0))
        .collect();
    Beamformer::from_columns(cols, h.n_bit())
}

pub fn solve_p2_outcome(
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<MmOutcome<Beamformer>> {
    h.check(cfg)?;
    let shared = cfg.shared_fraction(k)?;
    let params = model.params(k)?;
    run(&VectorGeometry { channels: h }, cfg, params, shared, mrt_init(h, cfg), opts)
}

/// Full MM-FP solve at fixed depth `k`; the returned beamformer uses the whole
/// power budget. QoS infeasibility shows up as `feasible = false`.
pub fn solve_p2(
    h: &ChannelSet,
    cfg: &SystemConfig,
    model: &SemanticRateModel,
    k: u32,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    let out = solve_p2_outcome(h, cfg, model, k, opts)?;
    let wall = start.elapsed().as_secs_f64();
    let mut rep = build_report("mmfp", out.beams, h, cfg, model, k, out.iterations, out.converged, wall)?;
    rep.trace = out.trace;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel_set, trial_rng};
    use crate::metrics::sinr_all;
    use crate::model::CVector;

    fn scalar(x: f64) -> CVector {
        CVector::from_vec(vec![C64::new(x, 0.0)])
    }

    #[test]
    fn sinr_aux_by_hand() {
        let mut cfg = SystemConfig::uniform(1, 1, 1, 0.0, 0.0);
        cfg.p_total = 2.0;
        let h = ChannelSet { h_bit: vec![scalar(1.0)], h_sem: vec![scalar(1.0)] };
        let v = Beamformer { v_bit: vec![scalar(1.0)], v_sem: vec![scalar(1.0)] };
        let mut st = AuxState::new(1, 1);
        update_sinr_aux(&v, &h, &cfg, &mut st);
        // Tr = 2, scaled noise = 1, one interferer of power 1
        assert!((st.y[0] - 0.5).abs() < 1e-15);
        assert!((st.z[0] - 1.0).abs() < 1e-15);
        assert!((st.gamma0[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sinr_aux_matches_regularized_bundle() {
        let cfg = SystemConfig::default();
        let h = sample_channel_set(&mut trial_rng(5, 0), &cfg);
        let v = mrt_init(&h, &cfg).scaled(1.7);
        let mut st = AuxState::new(cfg.n_bit, cfg.n_sem);
        update_sinr_aux(&v, &h, &cfg, &mut st);
        let s = sinr_all(&v, &h, &cfg, true);
        assert_eq!(st.gamma0, s.sem);
        assert_eq!(st.y, s.bit_shared);
        assert_eq!(st.z, s.bit_exclusive);
        assert!(st.y.iter().zip(&st.z).all(|(y, z)| z >= y));
    }

    #[test]
    fn ratio_aux_single_user() {
        let cfg = SystemConfig::uniform(4, 0, 1, 3.0, 0.0);
        let h = sample_channel_set(&mut trial_rng(9, 0), &cfg);
        let v = mrt_init(&h, &cfg);
        let model = SemanticRateModel::synthetic();
        let mut st = AuxState::new(0, 1);
        update_sinr_aux(&v, &h, &cfg, &mut st);
        update_ratio_aux(&v, &h, &cfg, &model, 3, &mut st).unwrap();
        let s = h.h_sem[0].dotc(&v.v_sem[0]);
        let c = st.coeffs[0];
        let expected = s.re / (c.f_coef * s.norm_sqr() + c.g_coef * cfg.sigma2_sem[0]);
        assert!((st.x[0] - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn scalar_collapse_by_hand() {
        // N_t = 1, B = T = 1: every matrix is a positive real number.
        let mut cfg = SystemConfig::uniform(1, 1, 1, 0.0, 0.5);
        cfg.sigma2_bit = vec![0.7];
        cfg.sigma2_sem = vec![1.3];
        let (hb, ht) = (0.8, 1.6);
        let h = ChannelSet { h_bit: vec![scalar(hb)], h_sem: vec![scalar(ht)] };
        let mut st = AuxState::new(1, 1);
        st.y = vec![0.4];
        st.z = vec![0.9];
        st.m = vec![0.3];
        st.n = vec![0.5];
        st.x = vec![0.6];
        st.coeffs = vec![SurrogateCoeffs { d_coef: 0.1, e_coef: 0.8, f_coef: 1.2, g_coef: 0.9, anchor: 1.0 }];
        let lambda = [2.0];
        let k = 3;
        let s = cfg.shared_fraction(k).unwrap();
        let v = beamformers_from_lambda(&lambda, &st, &h, &cfg, k).unwrap();

        let mu = 2.0 * (s * 0.09 + (1.0 - s) * 0.25);
        let nu = 0.36 * 0.8 * 0.9;
        let noise = (mu * 0.7 + nu * 1.3) / cfg.p_total;
        let a = noise + mu * hb * hb + nu * ht * ht;
        let rho = 2.0 * (s * 0.3 * 1.4f64.sqrt() + (1.0 - s) * 0.5 * 1.9f64.sqrt());
        assert!((v.v_bit[0][0].re - rho * hb / a).abs() < 1e-14);
        let b = noise + 0.36 * 0.8 * 1.2 * ht * ht + 2.0 * s * 0.09 * hb * hb;
        assert!((v.v_sem[0][0].re - 0.6 * 0.8 * ht / b).abs() < 1e-14);
        assert!(v.iter().all(|c| c[0].im.abs() < 1e-15));
    }

    #[test]
    fn inactive_constraints_release_multipliers() {
        let cfg = SystemConfig::default().with_qos(0.0);
        let h = sample_channel_set(&mut trial_rng(3, 0), &cfg);
        let v = mrt_init(&h, &cfg);
        let mut st = AuxState::new(cfg.n_bit, cfg.n_sem);
        update_sinr_aux(&v, &h, &cfg, &mut st);
        update_ratio_aux(&v, &h, &cfg, &SemanticRateModel::synthetic(), 3, &mut st).unwrap();
        let fp = lambda_fixed_point(&st, &h, &cfg, 3, &SolveOptions::default()).unwrap();
        assert!(fp.converged);
        assert!(fp.lambda.iter().all(|&l| l == 0.0));
        assert!(fp.beams.v_bit.iter().all(|v| v.norm() == 0.0));
        // sem part equals the unconstrained maximizer
        let free = beamformers_from_lambda(&vec![0.0; cfg.n_bit], &st, &h, &cfg, 3).unwrap();
        assert_eq!(free.v_sem, fp.beams.v_sem);
    }

    #[test]
    fn unconstrained_solve_is_monotone_and_normalized() {
        let cfg = SystemConfig::uniform(8, 0, 3, 0.0, 0.0);
        let model = SemanticRateModel::synthetic();
        for seed in 0..5 {
            let h = sample_channel_set(&mut trial_rng(seed, 0), &cfg);
            let rep = solve_p2(&h, &cfg, &model, 3, &SolveOptions::default()).unwrap();
            assert!(rep.trace.windows(2).all(|w| w[1] >= w[0] - 1e-8), "{:?}", rep.trace);
            assert!((rep.total_power - cfg.p_total).abs() < 1e-9 * cfg.p_total);
            assert!(rep.feasible);
        }
    }

    #[test]
    fn default_config_is_feasible() {
        let cfg = SystemConfig::default();
        let model = SemanticRateModel::synthetic();
        let h = sample_channel_set(&mut trial_rng(21, 0), &cfg);
        let rep = solve_p2(&h, &cfg, &model, 3, &SolveOptions::default()).unwrap();
        assert!(rep.feasible, "{:?}", rep.qos_slack);
        assert!(rep.qos_slack.iter().all(|&s| s >= -1e-3));
    }

    fn random_beamformer(h: &ChannelSet, seed: u64) -> Beamformer {
        use rand::Rng;
        let mut rng = trial_rng(seed, 99);
        let cols = h
            .iter()
            .map(|hu| CVector::from_fn(hu.len(), |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
            .collect();
        Beamformer::from_columns(cols, h.n_bit())
    }

    /// Rotates every column so that `h_uᴴ v_u` is real and nonnegative.
    fn phase_align(v: &mut Beamformer, h: &ChannelSet) {
        let n_bit = h.n_bit();
        for (u, col) in v.iter_mut().enumerate() {
            let hu = if u < n_bit { &h.h_bit[u] } else { &h.h_sem[u - n_bit] };
            let c = hu.dotc(col);
            *col *= c.conj() / c.norm();
        }
    }

    fn prepared(seed: u64, cfg: &SystemConfig, k: u32) -> (ChannelSet, Beamformer, AuxState) {
        let h = sample_channel_set(&mut trial_rng(seed, 0), cfg);
        let mut v = random_beamformer(&h, seed);
        phase_align(&mut v, &h);
        let mut st = AuxState::new(cfg.n_bit, cfg.n_sem);
        update_sinr_aux(&v, &h, cfg, &mut st);
        update_ratio_aux(&v, &h, cfg, &SemanticRateModel::synthetic(), k, &mut st).unwrap();
        (h, v, st)
    }

    #[test]
    fn sherman_morrison_matches_direct_solve() {
        use crate::linalg::{add_outer, factor, regularized_gram};
        let cfg = SystemConfig::uniform(8, 3, 3, 0.0, 1.0);
        for seed in 0..10 {
            let (h, _, st) = prepared(seed, &cfg, 3);
            let lambda = [0.3, 1.2, 0.05];
            let shared = cfg.shared_fraction(3).unwrap();
            let w = weights(&st, &lambda, &cfg, shared);
            let v = beamformers_from_lambda(&lambda, &st, &h, &cfg, 3).unwrap();
            for t in 0..3 {
                let mut b = regularized_gram(
                    8,
                    w.noise,
                    w.shared.iter().copied().zip(&h.h_bit).chain(w.nu.iter().copied().zip(&h.h_sem)),
                );
                add_outer(&mut b, w.own[t] - w.nu[t], &h.h_sem[t]);
                let direct = factor(b, "B").unwrap().solve(&h.h_sem[t]) * C64::new(w.varsigma[t], 0.0);
                assert!((&direct - &v.v_sem[t]).norm() < 1e-10 * direct.norm());
            }
        }
    }

    #[test]
    fn ratio_aux_are_stationary() {
        let cfg = SystemConfig::default();
        let (h, v, st) = prepared(4, &cfg, 3);
        let g = LinkGains::compute(&v, &h);
        let step = 1e-6;
        for i in 0..cfg.n_bit {
            for which in 0..2 {
                let eval = |delta: f64| {
                    let mut s2 = st.clone();
                    if which == 0 {
                        s2.m[i] += delta;
                    } else {
                        s2.n[i] += delta;
                    }
                    let (r1, r2) = quadratic_rates(&g, &s2, &cfg);
                    if which == 0 { r1[i] } else { r2[i] }
                };
                let d = (eval(step) - eval(-step)) / (2.0 * step);
                assert!(d.abs() < 1e-6, "user {i} aux {which}: {d}");
            }
        }
        for t in 0..cfg.n_sem {
            let eval = |delta: f64| {
                let mut s2 = st.clone();
                s2.x[t] += delta;
                sem_surrogate(&g, &s2, &cfg)
            };
            let d = (eval(step) - eval(-step)) / (2.0 * step);
            assert!(d.abs() < 1e-6, "sem {t}: {d}");
        }
    }

    #[test]
    fn transforms_are_tight_at_their_auxiliaries() {
        let cfg = SystemConfig::default();
        let model = SemanticRateModel::synthetic();
        for seed in 0..10 {
            let (h, v, st) = prepared(seed, &cfg, 4);
            let g = LinkGains::compute(&v, &h);
            let sinr = SinrBundle::from_gains(&g, &cfg, true);
            let (d1, d2) = dual_rates(&g, &st, &cfg);
            let (q1, q2) = quadratic_rates(&g, &st, &cfg);
            for i in 0..cfg.n_bit {
                assert!((d1[i] - sinr.bit_shared[i].ln_1p() / LN_2).abs() < 1e-9);
                assert!((d2[i] - sinr.bit_exclusive[i].ln_1p() / LN_2).abs() < 1e-9);
                assert!((q1[i] - d1[i]).abs() < 1e-9);
                assert!((q2[i] - d2[i]).abs() < 1e-9);
            }
            let params = model.params(4).unwrap();
            for t in 0..cfg.n_sem {
                let c = st.coeffs[t];
                let anchor_value = c.eval_sinr(st.gamma0[t]);
                assert!((anchor_value - params.value(st.gamma0[t])).abs() < 1e-9);
            }
            let exact: f64 = st.coeffs.iter().zip(&sinr.sem).map(|(c, &x)| c.eval_sinr(x)).sum();
            assert!((sem_surrogate(&g, &st, &cfg) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_is_stationary() {
        let cfg = SystemConfig::uniform(4, 2, 2, 0.0, 1.0);
        let (h, _, st) = prepared(7, &cfg, 3);
        let lambda = [0.4, 0.9];
        let shared = cfg.shared_fraction(3).unwrap();
        let v = beamformers_from_lambda(&lambda, &st, &h, &cfg, 3).unwrap();
        let lag = |v: &Beamformer| lagrangian(&LinkGains::compute(v, &h), &st, &lambda, &cfg, shared);
        let step = 1e-6;
        let mut worst = 0.0f64;
        for u in 0..v.n_users() {
            for r in 0..cfg.n_t {
                for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut plus = v.clone();
                    let mut minus = v.clone();
                    plus.iter_mut().nth(u).unwrap()[r] += dir * step;
                    minus.iter_mut().nth(u).unwrap()[r] -= dir * step;
                    worst = worst.max(((lag(&plus) - lag(&minus)) / (2.0 * step)).abs());
                }
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn multipliers_stay_nonnegative_and_tighten_active_constraints() {
        let cfg = SystemConfig::default();
        let model = SemanticRateModel::synthetic();
        let opts = SolveOptions::default();
        for seed in 0..5 {
            let h = sample_channel_set(&mut trial_rng(seed, 3), &cfg);
            let out = solve_p2_outcome(&h, &cfg, &model, 3, &opts).unwrap();
            let mut st = out.state.clone();
            let g = LinkGains::compute(&out.beams, &h);
            update_sinr_aux_gains(&g, &cfg, &mut st);
            update_ratio_aux_gains(&g, &cfg, model.params(3).unwrap(), &mut st);
            let fp = lambda_fixed_point(&st, &h, &cfg, 3, &opts).unwrap();
            assert!(fp.converged);
            assert!(fp.lambda.iter().all(|&l| l >= 0.0));
            let lhs = qos_surrogate(&LinkGains::compute(&fp.beams, &h), &st, &cfg, cfg.shared_fraction(3).unwrap());
            for i in 0..cfg.n_bit {
                if fp.lambda[i] > 0.0 {
                    assert!((lhs[i] - cfg.qos[i]).abs() < 1e-3, "{i}: {}", lhs[i]);
                }
            }
        }
    }
}
