//! Domain types shared by every solver: system configuration, channel
//! realizations, beamformers and solve reports.
//!
//! Complex vectors serialize as arrays of `[re, im]` pairs so that JSON
//! output is platform independent and round-trips bit-exactly.

use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semrate::symbols_for_depth;

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;

/// Default QoS tolerance for feasibility verdicts, bits/s/Hz.
pub const DEFAULT_TOL_QOS: f64 = 1e-3;
/// Default relative power tolerance (multiplied by `p_total`).
pub const DEFAULT_TOL_POW_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas.
    pub n_t: usize,
    /// Number of bit-users `B`.
    pub n_bit: usize,
    /// Number of semantic users `T`.
    pub n_sem: usize,
    /// Sum transmit power budget (linear).
    pub p_total: f64,
    pub sigma2_bit: Vec<f64>,
    pub sigma2_sem: Vec<f64>,
    /// Data symbols per frame `L`.
    pub frame_len: u64,
    /// Per-bit-user rate floors, bits/s/Hz over the whole frame.
    pub qos: Vec<f64>,
    /// Encoder output channels `C`.
    pub filters: u64,
    /// Square image side `I`.
    pub image_size: u64,
    pub k_min: u32,
    pub k_max: u32,
    pub seed: u64,
}

impl Default for SystemConfig {
    /// `N_t = 16`, `B = 5`, `T = 3`, SNR 0 dB, β = 1, `L = 32768`,
    /// `C = I = 128`, `K ∈ [2, 6]`.
    fn default() -> Self {
        Self::uniform(16, 5, 3, 0.0, 1.0)
    }
}

impl SystemConfig {
    /// A config with `P_T = 1`, a common noise power `σ² = 10^(−snr_db/10)`
    /// and a common QoS target; frame and image constants at their defaults.
    pub fn uniform(n_t: usize, n_bit: usize, n_sem: usize, snr_db: f64, qos: f64) -> Self {
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        SystemConfig {
            n_t,
            n_bit,
            n_sem,
            p_total: 1.0,
            sigma2_bit: vec![sigma2; n_bit],
            sigma2_sem: vec![sigma2; n_sem],
            frame_len: 32_768,
            qos: vec![qos; n_bit],
            filters: 128,
            image_size: 128,
            k_min: 2,
            k_max: 6,
            seed: 0,
        }
    }

    /// Sets every user's noise power so that `P_T / σ² = 10^(snr_db/10)`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let sigma2 = self.p_total / 10f64.powf(snr_db / 10.0);
        self.sigma2_bit = vec![sigma2; self.n_bit];
        self.sigma2_sem = vec![sigma2; self.n_sem];
        self
    }

    pub fn with_qos(mut self, beta: f64) -> Self {
        self.qos = vec![beta; self.n_bit];
        self
    }

    pub fn with_depth_range(mut self, k_min: u32, k_max: u32) -> Self {
        self.k_min = k_min;
        self.k_max = k_max;
        self
    }

    pub fn n_users(&self) -> usize {
        self.n_bit + self.n_sem
    }

    /// Noise power of user `u` in column order (bit-users first).
    pub fn noise(&self, u: usize) -> f64 {
        if u < self.n_bit {
            self.sigma2_bit[u]
        } else {
            self.sigma2_sem[u - self.n_bit]
        }
    }

    /// Shared-period length `M_K`.
    pub fn symbols(&self, k: u32) -> Result<u64> {
        symbols_for_depth(k, self.filters, self.image_size)
    }

    /// `M_K / L`.
    pub fn shared_fraction(&self, k: u32) -> Result<f64> {
        let m = self.symbols(k)?;
        if m > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "M_{k} = {m} exceeds frame_len = {}",
                self.frame_len
            )));
        }
        Ok(m as f64 / self.frame_len as f64)
    }

    pub fn depths(&self) -> impl Iterator<Item = u32> {
        self.k_min..=self.k_max
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_t < 1 {
            return bad("n_t must be at least 1".into());
        }
        if self.n_sem < 1 {
            return bad("n_sem must be at least 1".into());
        }
        if !(self.p_total > 0.0) || !self.p_total.is_finite() {
            return bad("p_total must be positive".into());
        }
        if self.sigma2_bit.len() != self.n_bit {
            return bad(format!(
                "sigma2_bit has {} entries, expected n_bit = {}",
                self.sigma2_bit.len(),
                self.n_bit
            ));
        }
        if self.sigma2_sem.len() != self.n_sem {
            return bad(format!(
                "sigma2_sem has {} entries, expected n_sem = {}",
                self.sigma2_sem.len(),
                self.n_sem
            ));
        }
        if self.qos.len() != self.n_bit {
            return bad(format!(
                "qos has {} entries, expected n_bit = {}",
                self.qos.len(),
                self.n_bit
            ));
        }
        if self
            .sigma2_bit
            .iter()
            .chain(&self.sigma2_sem)
            .any(|&s| !(s > 0.0) || !s.is_finite())
        {
            return bad("noise powers must be positive".into());
        }
        if self.qos.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return bad("qos targets must be nonnegative".into());
        }
        if self.frame_len == 0 {
            return bad("frame_len must be positive".into());
        }
        if self.k_min > self.k_max {
            return bad(format!(
                "k_min = {} exceeds k_max = {}",
                self.k_min, self.k_max
            ));
        }
        for k in self.depths() {
            let m = self
                .symbols(k)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            if m > self.frame_len {
                return bad(format!(
                    "M_{k} = {m} exceeds frame_len = {}",
                    self.frame_len
                ));
            }
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

/// Serde adapter for `Vec<CVector>` as nested `[re, im]` arrays.
pub(crate) mod cvecs {
    use super::{CVector, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[CVector], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<[f64; 2]>> = v
            .iter()
            .map(|col| col.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVector>, D::Error> {
        let raw: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|col| CVector::from_iterator(col.len(), col.into_iter().map(|[re, im]| C64::new(re, im))))
            .collect())
    }
}

/// Channel vectors of one realization, `h_bit` then `h_sem`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    #[serde(with = "cvecs")]
    pub h_bit: Vec<CVector>,
    #[serde(with = "cvecs")]
    pub h_sem: Vec<CVector>,
}

impl ChannelSet {
    pub fn n_bit(&self) -> usize {
        self.h_bit.len()
    }

    pub fn n_sem(&self) -> usize {
        self.h_sem.len()
    }

    pub fn n_users(&self) -> usize {
        self.h_bit.len() + self.h_sem.len()
    }

    pub fn n_t(&self) -> usize {
        self.h_bit
            .first()
            .or_else(|| self.h_sem.first())
            .map_or(0, |h| h.len())
    }

    /// All channels in column order.
    pub fn iter(&self) -> impl Iterator<Item = &CVector> {
        self.h_bit.iter().chain(&self.h_sem)
    }

    pub fn user(&self, u: usize) -> &CVector {
        if u < self.h_bit.len() {
            &self.h_bit[u]
        } else {
            &self.h_sem[u - self.h_bit.len()]
        }
    }

    /// Checks the set against `cfg`: user counts, vector lengths and nonzero channels.
    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if self.h_bit.len() != cfg.n_bit || self.h_sem.len() != cfg.n_sem {
            return Err(Error::Dimension(format!(
                "channel set has {}+{} users, config expects {}+{}",
                self.h_bit.len(),
                self.h_sem.len(),
                cfg.n_bit,
                cfg.n_sem
            )));
        }
        for h in self.iter() {
            if h.len() != cfg.n_t {
                return Err(Error::Dimension(format!(
                    "channel of length {} but n_t = {}",
                    h.len(),
                    cfg.n_t
                )));
            }
            if h.norm_squared() == 0.0 {
                return Err(Error::Dimension("identically zero channel".into()));
            }
        }
        Ok(())
    }
}

/// Precoding matrix `V = [V_B, V_T]`, one column per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformer {
    #[serde(with = "cvecs")]
    pub v_bit: Vec<CVector>,
    #[serde(with = "cvecs")]
    pub v_sem: Vec<CVector>,
}

impl Beamformer {
    pub fn zeros(n_t: usize, n_bit: usize, n_sem: usize) -> Self {
        Beamformer {
            v_bit: vec![CVector::zeros(n_t); n_bit],
            v_sem: vec![CVector::zeros(n_t); n_sem],
        }
    }

    /// Splits column-ordered vectors into bit and sem parts.
    pub fn from_columns(mut cols: Vec<CVector>, n_bit: usize) -> Self {
        let v_sem = cols.split_off(n_bit);
        Beamformer { v_bit: cols, v_sem }
    }

    pub fn n_users(&self) -> usize {
        self.v_bit.len() + self.v_sem.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CVector> {
        self.v_bit.iter().chain(&self.v_sem)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut CVector> {
        self.v_bit.iter_mut().chain(self.v_sem.iter_mut())
    }

    pub fn column(&self, u: usize) -> &CVector {
        if u < self.v_bit.len() {
            &self.v_bit[u]
        } else {
            &self.v_sem[u - self.v_bit.len()]
        }
    }

    /// `Tr(V Vᴴ)`.
    pub fn total_power(&self) -> f64 {
        self.iter().map(|v| v.norm_squared()).sum()
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.iter_mut() {
            *v *= C64::new(alpha, 0.0);
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// Rescales to `Tr(V Vᴴ) = p_total`; a zero beamformer is returned unchanged.
    pub fn normalized(&self, p_total: f64) -> Self {
        let p = self.total_power();
        if p > 0.0 {
            self.scaled((p_total / p).sqrt())
        } else {
            self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct IterationCounts {
    pub outer: usize,
    /// Total inner (multiplier or allocation) sweeps across all outer iterations.
    pub inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub beamformer: Beamformer,
    pub depth: u32,
    /// Semantic objective `Σ ε̃(K, γ_t)`.
    pub objective: f64,
    pub sinr_sem: Vec<f64>,
    pub sinr_bit_shared: Vec<f64>,
    pub sinr_bit_exclusive: Vec<f64>,
    /// Frame-normalized bit rates `R_b`.
    pub bit_rates: Vec<f64>,
    /// `R_b − β_b`.
    pub qos_slack: Vec<f64>,
    pub total_power: f64,
    pub iterations: IterationCounts,
    pub wall_time: f64,
    pub converged: bool,
    pub feasible: bool,
    /// Objective trace across outer iterations, when the solver has one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
