//! Closed-form maximizers of the per-iteration Lagrangian.
//!
//! The MM-FP loop only touches beamformers through two operations: measuring
//! link gains and solving the stationarity condition for a given set of
//! weights. [`VectorGeometry`] does this for full `N_t`-dimensional
//! precoders; [`ScalarGeometry`] for per-user amplitudes on fixed directions.

use crate::error::{Error, Result};
use crate::linalg::{factor, quad_re, regularized_gram};
use crate::metrics::LinkGains;
use crate::model::{Beamformer, CVector, ChannelSet, C64};

/// Coefficients of the Lagrangian's stationarity condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// Identity regularizer `(Σ μ_j σ_bj² + Σ ν_j σ_tj²) / P_T`.
    pub noise: f64,
    /// Bit-user weight over both periods, `λ_j (M m_j² + (L−M) n_j²) / L`.
    pub mu: Vec<f64>,
    /// Bit-user weight over the shared period only, `λ_j M m_j² / L`.
    pub shared: Vec<f64>,
    /// Sem-user interference weight `x_j² E_j G_j`.
    pub nu: Vec<f64>,
    /// Sem-user own-signal weight `x_j² E_j F_j`.
    pub own: Vec<f64>,
    /// Bit-user amplitude `λ_i κ_i`.
    pub rho: Vec<f64>,
    /// Sem-user amplitude `x_i E_i`.
    pub varsigma: Vec<f64>,
}

pub trait Geometry {
    type Beams: Clone;

    fn gains(&self, beams: &Self::Beams) -> LinkGains;

    /// Stationary point of the Lagrangian plus `Re{h_bᴴ A⁻¹ h_b}` per bit-user
    /// (the quantity the multiplier update divides by).
    fn solve(&self, w: &Weights) -> Result<(Self::Beams, Vec<f64>)>;

    fn rescale(&self, beams: &mut Self::Beams, alpha: f64);
}

pub struct VectorGeometry<'a> {
    pub channels: &'a ChannelSet,
}

impl Geometry for VectorGeometry<'_> {
    type Beams = Beamformer;

    fn gains(&self, beams: &Beamformer) -> LinkGains {
        LinkGains::compute(beams, self.channels)
    }

    fn solve(&self, w: &Weights) -> Result<(Beamformer, Vec<f64>)> {
        let h = self.channels;
        let n = h.n_t();
        let mut q_bit = Vec::with_capacity(h.n_bit());
        let mut v_bit = Vec::with_capacity(h.n_bit());
        if h.n_bit() > 0 {
            let a = regularized_gram(
                n,
                w.noise,
                w.mu.iter().copied().zip(&h.h_bit).chain(w.nu.iter().copied().zip(&h.h_sem)),
            );
            let chol = factor(a, "A")?;
            for (i, hb) in h.h_bit.iter().enumerate() {
                let x = chol.solve(hb);
                q_bit.push(quad_re(hb, &x));
                v_bit.push(x * C64::new(w.rho[i], 0.0));
            }
        }
        let c = regularized_gram(
            n,
            w.noise,
            w.shared.iter().copied().zip(&h.h_bit).chain(w.nu.iter().copied().zip(&h.h_sem)),
        );
        let chol = factor(c, "C")?;
        let mut v_sem = Vec::with_capacity(h.n_sem());
        for (t, ht) in h.h_sem.iter().enumerate() {
            let x = chol.solve(ht);
            let (v, _) = sem_from_common(&x, ht, w, t)?;
            v_sem.push(v);
        }
        Ok((Beamformer { v_bit, v_sem }, q_bit))
    }

    fn rescale(&self, beams: &mut Beamformer, alpha: f64) {
        beams.scale(alpha);
    }
}

/// `B_t⁻¹ h_t` from `C⁻¹ h_t`: with `B_t = C − ω hhᴴ`, Sherman–Morrison gives
/// `B_t⁻¹ h = C⁻¹h / (1 − ω hᴴC⁻¹h)`.
pub(crate) fn sem_from_common(c_inv_h: &CVector, h: &CVector, w: &Weights, t: usize) -> Result<(CVector, f64)> {
    let q = quad_re(h, c_inv_h);
    let omega = w.nu[t] - w.own[t];
    let den = 1.0 - omega * q;
    if !(den > 0.0) {
        return Err(Error::DegenerateRegularizer(format!(
            "B_t for sem-user {t} is not positive definite"
        )));
    }
    Ok((c_inv_h * C64::new(w.varsigma[t] / den, 0.0), den))
}

/// Amplitudes on fixed unit-norm directions. `gain[u][k] = |h_uᴴ ṽ_k|²` and
/// the directions are phase-aligned so that `h_kᴴ ṽ_k = √gain[k][k]`.
pub struct ScalarGeometry {
    pub gain: Vec<Vec<f64>>,
    pub n_bit: usize,
}

impl Geometry for ScalarGeometry {
    type Beams = Vec<f64>;

    fn gains(&self, s: &Vec<f64>) -> LinkGains {
        let n = s.len();
        let cross = (0..n)
            .map(|u| (0..n).map(|j| s[j] * s[j] * self.gain[u][j]).collect())
            .collect();
        let re_own = (0..n).map(|u| s[u] * self.gain[u][u].sqrt()).collect();
        LinkGains {
            cross,
            re_own,
            power: s.iter().map(|x| x * x).sum(),
            n_bit: self.n_bit,
        }
    }

    fn solve(&self, w: &Weights) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.gain.len();
        let b = self.n_bit;
        let mut s = vec![0.0; n];
        let mut q_bit = vec![0.0; b];
        for k in 0..n {
            let sem_load: f64 = (0..n - b).map(|t| w.nu[t] * self.gain[b + t][k]).sum();
            let g = self.gain[k][k];
            if k < b {
                let a: f64 = w.noise + (0..b).map(|i| w.mu[i] * self.gain[i][k]).sum::<f64>() + sem_load;
                if !(a > 0.0) {
                    return Err(Error::DegenerateRegularizer("A is not positive definite".into()));
                }
                q_bit[k] = g / a;
                s[k] = w.rho[k] * g.sqrt() / a;
            } else {
                let t = k - b;
                let c: f64 = w.noise + (0..b).map(|i| w.shared[i] * self.gain[i][k]).sum::<f64>() + sem_load;
                let den = c - (w.nu[t] - w.own[t]) * g;
                if !(den > 0.0) {
                    return Err(Error::DegenerateRegularizer(format!(
                        "B_t for sem-user {t} is not positive definite"
                    )));
                }
                s[k] = w.varsigma[t] * g.sqrt() / den;
            }
        }
        Ok((s, q_bit))
    }

    fn rescale(&self, s: &mut Vec<f64>, alpha: f64) {
        for x in s {
            *x *= alpha;
        }
    }
}
