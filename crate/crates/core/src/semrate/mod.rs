//! Semantic-rate model: the per-depth generalized logistic
//! `ε̃(K, γ) = a + d / (c + γ^{-e})`, the symbol-count law for the encoder
//! latent, and the minorizing surrogate used by the MM solvers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod fit;

pub use fit::{fit, DepthFit, FitOptions, FitReport, Sample};

/// Symbols needed to send the latent of an `I×I` image after `K`
/// downsampling stages with `C` output channels: `C·I²/4^{K+1}`.
pub fn symbols_for_depth(k: u32, filters: u64, image_size: u64) -> Result<u64> {
    let shift = k + 1;
    if shift >= 63 || !image_size.is_multiple_of(1u64 << shift) {
        return Err(Error::FractionalFeatureMap { image_size, shift });
    }
    let side = image_size >> shift;
    Ok(filters * side * side)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Generalized-logistic parameters for one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub a: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl LogisticParams {
    pub fn new(a: f64, c: f64, d: f64, e: f64) -> Self {
        LogisticParams { a, c, d, e }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.a, self.c, self.d, self.e].iter().all(|x| x.is_finite())
            && self.c > 0.0
            && self.d > 0.0
            && self.e > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "need finite a and positive c, d, e; got {self:?}"
            )))
        }
    }

    /// `ε̃(γ)`, extended continuously to `γ = 0` (value `a`).
    pub fn value(&self, gamma: f64) -> f64 {
        if gamma <= 0.0 {
            return self.a;
        }
        self.a + self.d / (self.c + gamma.powf(-self.e))
    }

    pub fn ceiling(&self) -> f64 {
        self.a + self.d / self.c
    }

    /// `ζ(Γ, Γ⁰) = a + d / (c + J(Γ, Γ⁰, e))`.
    pub fn surrogate(&self, gamma: f64, gamma0: f64) -> Result<f64> {
        let j = surrogate_j(gamma, gamma0, self.e)?;
        Ok(self.a + self.d / (self.c + j))
    }

    /// Coefficients `(D, E, F, G)` with `ζ = D + E·Γ/(F·Γ + G)` at anchor `gamma0`.
    pub fn coeffs(&self, gamma0: f64) -> SurrogateCoeffs {
        let LogisticParams { a, c, d, e } = *self;
        if e <= 1.0 {
            SurrogateCoeffs {
                d_coef: a,
                e_coef: d,
                f_coef: c + (1.0 - e) * gamma0.powf(-e),
                g_coef: e * gamma0.powf(1.0 - e),
                anchor: gamma0,
            }
        } else {
            let g0e = gamma0.powf(e);
            let g = c * (1.0 - e) * g0e + 1.0;
            SurrogateCoeffs {
                d_coef: a + d * (1.0 - e) * g0e / g,
                e_coef: d * e * gamma0.powf(e - 1.0) / g,
                f_coef: c * e * gamma0.powf(e - 1.0),
                g_coef: g,
                anchor: gamma0,
            }
        }
    }

    /// Like [`coeffs`](Self::coeffs), but for `e > 1` an anchor deep in the
    /// saturated region (where `G` would fall below 1/2) is moved down to the
    /// point where `G = 1/2`. The result is still a global minorizer of `ε̃`
    /// with `E, F, G > 0`; it is tight at the returned `anchor`.
    pub fn safe_coeffs(&self, gamma0: f64) -> SurrogateCoeffs {
        let LogisticParams { c, e, .. } = *self;
        if e > 1.0 && c * (e - 1.0) * gamma0.powf(e) > 0.5 {
            let anchor = (0.5 / (c * (e - 1.0))).powf(1.0 / e);
            return self.coeffs(anchor);
        }
        self.coeffs(gamma0)
    }
}

/// Upper bound `J(Γ, Γ⁰, e) ≥ Γ^{-e}`, tight at `Γ = Γ⁰`.
pub fn surrogate_j(gamma: f64, gamma0: f64, e: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(gamma0 > 0.0) || !(e > 0.0) {
        return Err(Error::Domain(format!(
            "surrogate needs positive arguments, got Γ={gamma}, Γ⁰={gamma0}, e={e}"
        )));
    }
    if e <= 1.0 {
        Ok((e * gamma0 + (1.0 - e) * gamma) / (gamma0.powf(e) * gamma))
    } else {
        let lin = gamma0 + e * (gamma - gamma0);
        if lin <= 0.0 {
            return Err(Error::Pole(lin));
        }
        Ok(1.0 / (gamma0.powf(e - 1.0) * lin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCoeffs {
    pub d_coef: f64,
    pub e_coef: f64,
    pub f_coef: f64,
    pub g_coef: f64,
    pub anchor: f64,
}

impl SurrogateCoeffs {
    /// `D + E·Γ/(F·Γ + G)`.
    pub fn eval_sinr(&self, gamma: f64) -> f64 {
        self.d_coef + self.e_coef * gamma / (self.f_coef * gamma + self.g_coef)
    }

    /// Same value written over signal power and interference-plus-noise.
    pub fn eval_parts(&self, signal: f64, interference: f64) -> f64 {
        let den = self.f_coef * signal + self.g_coef * interference;
        if den <= 0.0 {
            return self.d_coef;
        }
        self.d_coef + self.e_coef * signal / den
    }
}

/// Per-depth parameter table over a contiguous depth range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, LogisticParams>", into = "BTreeMap<u32, LogisticParams>")]
pub struct SemanticRateModel {
    params: BTreeMap<u32, LogisticParams>,
}

impl TryFrom<BTreeMap<u32, LogisticParams>> for SemanticRateModel {
    type Error = Error;

    fn try_from(params: BTreeMap<u32, LogisticParams>) -> Result<Self> {
        SemanticRateModel::new(params)
    }
}

impl From<SemanticRateModel> for BTreeMap<u32, LogisticParams> {
    fn from(m: SemanticRateModel) -> Self {
        m.params
    }
}

impl SemanticRateModel {
    pub fn new(params: BTreeMap<u32, LogisticParams>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidModel("no depths".into()));
        }
        for (k, p) in &params {
            p.validate()
                .map_err(|e| Error::InvalidModel(format!("depth {k}: {e}")))?;
        }
        let (lo, hi) = (*params.keys().next().unwrap(), *params.keys().last().unwrap());
        if (hi - lo + 1) as usize != params.len() {
            return Err(Error::InvalidModel(format!(
                "depths must be contiguous, got {:?}",
                params.keys().collect::<Vec<_>>()
            )));
        }
        Ok(SemanticRateModel { params })
    }

    /// One-depth model, handy for tests and fixed-`K` studies.
    pub fn single(k: u32, p: LogisticParams) -> Result<Self> {
        Self::new(BTreeMap::from([(k, p)]))
    }

    /// Synthetic placeholder table for `K = 2..=6`. The values are NOT
    /// measured from a trained codec; they only reproduce the qualitative
    /// shape of such curves (S-shaped in dB, lower ceiling for deeper
    /// downsampling, earlier rise for shorter latents). Fit a real table with
    /// [`fit`] before drawing quantitative conclusions.
    pub fn synthetic() -> Self {
        let rows = [
            (2, LogisticParams::new(0.20, 1.00, 0.78, 0.90)),
            (3, LogisticParams::new(0.20, 1.15, 0.84, 0.85)),
            (4, LogisticParams::new(0.20, 1.30, 0.86, 0.80)),
            (5, LogisticParams::new(0.20, 1.45, 0.84, 0.75)),
            (6, LogisticParams::new(0.20, 1.60, 0.80, 0.70)),
        ];
        Self::new(rows.into_iter().collect()).expect("synthetic table is valid")
    }

    pub fn params(&self, k: u32) -> Result<&LogisticParams> {
        self.params
            .get(&k)
            .ok_or_else(|| Error::InvalidModel(format!("no parameters for depth {k}")))
    }

    pub fn depth_range(&self) -> (u32, u32) {
        (
            *self.params.keys().next().unwrap(),
            *self.params.keys().last().unwrap(),
        )
    }

    pub fn covers(&self, k_min: u32, k_max: u32) -> bool {
        let (lo, hi) = self.depth_range();
        lo <= k_min && k_max <= hi
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &LogisticParams)> {
        self.params.iter().map(|(k, p)| (*k, p))
    }

    pub fn rate(&self, k: u32, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("SINR must be positive, got {gamma}")));
        }
        Ok(self.params(k)?.value(gamma))
    }

    pub fn surrogate_coeffs(&self, k: u32, gamma0: f64) -> Result<SurrogateCoeffs> {
        if !(gamma0 > 0.0) {
            return Err(Error::Domain(format!("anchor must be positive, got {gamma0}")));
        }
        Ok(self.params(k)?.coeffs(gamma0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symbol_table() {
        let got: Vec<u64> = (2..=6).map(|k| symbols_for_depth(k, 128, 128).unwrap()).collect();
        assert_eq!(got, vec![32768, 8192, 2048, 512, 128]);
        assert_eq!(symbols_for_depth(1, 128, 128).unwrap(), 131_072);
    }

    #[test]
    fn fractional_feature_map_is_rejected() {
        assert!(matches!(
            symbols_for_depth(3, 128, 100),
            Err(Error::FractionalFeatureMap { .. })
        ));
    }

    #[test]
    fn rate_examples() {
        let unit = LogisticParams::new(0.0, 1.0, 1.0, 1.0);
        assert!((unit.value(1.0) - 0.5).abs() < 1e-15);
        let sat = LogisticParams::new(0.2, 1.0, 0.8, 1.0);
        assert!((sat.value(1e300) - 1.0).abs() < 1e-12);
        assert!((sat.ceiling() - 1.0).abs() < 1e-15);
        let sq = LogisticParams::new(0.0, 1.0, 1.0, 2.0);
        assert!((sq.value(10.0) - 1.0 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn rate_rejects_nonpositive_sinr() {
        let m = SemanticRateModel::synthetic();
        assert!(matches!(m.rate(3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(m.rate(3, -1.0), Err(Error::Domain(_))));
        assert!(m.rate(9, 1.0).is_err());
    }

    #[test]
    fn surrogate_examples() {
        assert!((surrogate_j(4.0, 2.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((surrogate_j(1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let j = surrogate_j(2.0, 1.0, 2.0).unwrap();
        assert!((j - 1.0 / 3.0).abs() < 1e-15);
        assert!(0.25 <= j);
    }

    #[test]
    fn surrogate_pole_is_reported() {
        // Γ⁰ + e(Γ − Γ⁰) = 1 + 2(0.4 − 1) < 0
        assert!(matches!(surrogate_j(0.4, 1.0, 2.0), Err(Error::Pole(_))));
    }

    #[test]
    fn coefficient_example() {
        let p = LogisticParams::new(0.0, 1.0, 1.0, 1.0);
        let c = p.coeffs(1.0);
        assert_eq!((c.d_coef, c.e_coef, c.f_coef, c.g_coef), (0.0, 1.0, 1.0, 1.0));
        assert!((c.eval_sinr(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn coefficient_cases_meet_at_unit_exponent() {
        let below = LogisticParams::new(0.3, 1.7, 0.9, 1.0).coeffs(2.5);
        let above = LogisticParams::new(0.3, 1.7, 0.9, 1.0 + 1e-12).coeffs(2.5);
        assert!((below.f_coef - 1.7).abs() < 1e-15 && (below.g_coef - 1.0).abs() < 1e-15);
        for (x, y) in [
            (below.d_coef, above.d_coef),
            (below.e_coef, above.e_coef),
            (below.f_coef, above.f_coef),
            (below.g_coef, above.g_coef),
        ] {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn safe_coeffs_keep_g_positive() {
        let p = LogisticParams::new(0.1, 1.0, 0.8, 1.8);
        let raw = p.coeffs(100.0);
        assert!(raw.g_coef < 0.0);
        let safe = p.safe_coeffs(100.0);
        assert!((safe.g_coef - 0.5).abs() < 1e-12);
        assert!(safe.e_coef > 0.0 && safe.f_coef > 0.0);
        assert!(safe.anchor < 100.0);
        // still a minorizer, including far outside the e>1 pole region
        for &g in &[1e-6, 0.01, 0.3, 1.0, 10.0, 100.0, 1e4] {
            assert!(safe.eval_sinr(g) <= p.value(g) + 1e-12, "Γ={g}");
        }
        // untouched when G is comfortably positive
        assert_eq!(p.safe_coeffs(0.5), p.coeffs(0.5));
    }

    #[test]
    fn model_json_is_depth_map() {
        let m = SemanticRateModel::synthetic();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["3"]["a"], 0.20);
        assert_eq!(SemanticRateModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn model_rejects_gaps_and_bad_params() {
        let p = LogisticParams::new(0.1, 1.0, 1.0, 1.0);
        assert!(SemanticRateModel::new(BTreeMap::from([(2, p), (4, p)])).is_err());
        let bad = LogisticParams::new(0.1, -1.0, 1.0, 1.0);
        assert!(SemanticRateModel::single(2, bad).is_err());
        assert!(SemanticRateModel::from_json(r#"{"2": {"a":0,"c":1,"d":0,"e":1}}"#).is_err());
    }

    #[test]
    fn synthetic_ceilings_drop_with_depth() {
        let m = SemanticRateModel::synthetic();
        let ceilings: Vec<f64> = m.iter().map(|(_, p)| p.ceiling()).collect();
        assert!(ceilings.windows(2).all(|w| w[0] > w[1]));
    }

    fn params() -> impl Strategy<Value = LogisticParams> {
        (-0.5f64..0.5, 0.05f64..3.0, 0.05f64..2.0, 0.05f64..=2.0)
            .prop_map(|(a, c, d, e)| LogisticParams::new(a, c, d, e))
    }

    proptest! {
        #[test]
        fn rate_is_increasing(p in params(), lo in -20f64..30.0, step in 0.01f64..5.0) {
            let g1 = db_to_linear(lo);
            let g2 = db_to_linear(lo + step);
            prop_assert!(p.value(g2) > p.value(g1));
        }

        #[test]
        fn coefficients_reproduce_rate_at_anchor(p in params(), g0_db in -20f64..30.0) {
            let g0 = db_to_linear(g0_db);
            let c = p.coeffs(g0);
            let lhs = c.eval_sinr(g0);
            prop_assert!((lhs - p.value(g0)).abs() < 1e-12, "{} vs {}", lhs, p.value(g0));
        }

        #[test]
        fn coefficient_form_matches_surrogate(p in params(), g0_db in -10f64..10.0, r in 0.6f64..3.0) {
            let g0 = db_to_linear(g0_db);
            let g = g0 * r;
            let c = p.coeffs(g0);
            let via_j = p.surrogate(g, g0).unwrap();
            prop_assert!((c.eval_sinr(g) - via_j).abs() < 1e-10 * (1.0 + via_j.abs()));
        }

        #[test]
        fn unit_exponent_is_exact(g in 1e-4f64..1e4, g0 in 1e-4f64..1e4) {
            let j = surrogate_j(g, g0, 1.0).unwrap();
            prop_assert!((j - 1.0 / g).abs() <= 1e-12 * (1.0 / g));
        }
    }
}
