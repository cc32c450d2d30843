//! Least-squares fitting of the generalized logistic to `(K, SNR, score)`
//! tables: Nelder-Mead from a data-driven start, then Levenberg-Marquardt
//! polishing with the analytic Jacobian.
//!
//! Parameters are searched as `(a, ln c, ln d, ln e)` so that the fitted
//! curve is always increasing in SINR.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{db_to_linear, LogisticParams, SemanticRateModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub k: u32,
    pub snr_db: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_samples: usize,
    pub min_span_db: f64,
    /// Residual RMS above which a depth's fit is rejected.
    pub max_rms: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_samples: 8,
            min_span_db: 20.0,
            max_rms: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthFit {
    pub params: LogisticParams,
    pub rms: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: SemanticRateModel,
    pub fits: BTreeMap<u32, DepthFit>,
}

pub fn fit(samples: &[Sample], opts: &FitOptions) -> Result<FitReport> {
    if samples.is_empty() {
        return Err(Error::Fit("no samples".into()));
    }
    let mut by_depth: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for s in samples {
        if !s.snr_db.is_finite() || !s.score.is_finite() {
            return Err(Error::Fit(format!("non-finite sample {s:?}")));
        }
        by_depth
            .entry(s.k)
            .or_default()
            .push((db_to_linear(s.snr_db), s.score));
    }
    for (k, pts) in &by_depth {
        if pts.len() < opts.min_samples {
            return Err(Error::Fit(format!(
                "depth {k} has {} samples, need at least {}",
                pts.len(),
                opts.min_samples
            )));
        }
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(g, _)| {
            (lo.min(g), hi.max(g))
        });
        let span = 10.0 * (hi / lo).log10();
        if span < opts.min_span_db {
            return Err(Error::Fit(format!(
                "depth {k} spans {span:.1} dB, need at least {} dB",
                opts.min_span_db
            )));
        }
    }

    let fits: Vec<(u32, DepthFit)> = by_depth
        .par_iter()
        .map(|(&k, pts)| (k, fit_depth(pts)))
        .collect();

    for (k, f) in &fits {
        if !(f.rms <= opts.max_rms) {
            return Err(Error::Fit(format!(
                "depth {k} did not converge: residual RMS {:.4} exceeds {}",
                f.rms, opts.max_rms
            )));
        }
    }
    let fits: BTreeMap<u32, DepthFit> = fits.into_iter().collect();
    let model = SemanticRateModel::new(fits.iter().map(|(k, f)| (*k, f.params)).collect())?;
    Ok(FitReport { model, fits })
}

fn unpack(theta: &[f64; 4]) -> LogisticParams {
    LogisticParams::new(theta[0], theta[1].exp(), theta[2].exp(), theta[3].exp())
}

fn sse(theta: &[f64; 4], pts: &[(f64, f64)]) -> f64 {
    let p = unpack(theta);
    let s: f64 = pts.iter().map(|&(g, y)| (p.value(g) - y).powi(2)).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

fn fit_depth(pts: &[(f64, f64)]) -> DepthFit {
    let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-6);
    let start = [lo, 0.0, span.ln(), 0.0];
    let theta = nelder_mead(|t| sse(t, pts), start, 4000);
    let theta = levenberg_marquardt(pts, theta, 300);
    let params = unpack(&theta);
    DepthFit {
        params,
        rms: (sse(&theta, pts) / pts.len() as f64).sqrt(),
        samples: pts.len(),
    }
}

fn nelder_mead(f: impl Fn(&[f64; 4]) -> f64, start: [f64; 4], max_iter: usize) -> [f64; 4] {
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(5);
    simplex.push((start, f(&start)));
    for i in 0..4 {
        let mut p = start;
        p[i] += if i == 0 { 0.05 } else { 0.3 };
        simplex.push((p, f(&p)));
    }
    let lerp = |a: &[f64; 4], b: &[f64; 4], t: f64| -> [f64; 4] {
        std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[4].1 - simplex[0].1).abs() <= 1e-15 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: [f64; 4] =
            std::array::from_fn(|i| simplex[..4].iter().map(|s| s.0[i]).sum::<f64>() / 4.0);
        let worst = simplex[4];
        let refl = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[4] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (refl, fr);
        } else {
            let (target, ft) = if fr < worst.1 { (refl, fr) } else { worst };
            let con = lerp(&centroid, &target, 0.5);
            let fc = f(&con);
            if fc < ft {
                simplex[4] = (con, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].0
}

/// Residuals and Jacobian rows w.r.t. `(a, ln c, ln d, ln e)`.
fn residuals(theta: &[f64; 4], pts: &[(f64, f64)]) -> (Vec<f64>, Vec<Vector4<f64>>) {
    let p = unpack(theta);
    pts.iter()
        .map(|&(g, y)| {
            let lg = g.ln();
            let pw = (-p.e * lg).exp();
            let den = p.c + pw;
            let r = p.a + p.d / den - y;
            let row = Vector4::new(
                1.0,
                -p.d * p.c / (den * den),
                p.d / den,
                p.e * p.d * pw * lg / (den * den),
            );
            (r, row)
        })
        .unzip()
}

fn levenberg_marquardt(pts: &[(f64, f64)], mut theta: [f64; 4], max_iter: usize) -> [f64; 4] {
    let mut cost = sse(&theta, pts);
    let mut damping = 1e-3;
    for _ in 0..max_iter {
        let (r, rows) = residuals(&theta, pts);
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (ri, row) in r.iter().zip(&rows) {
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut lhs = jtj;
            for i in 0..4 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-jtr))) else {
                damping *= 10.0;
                continue;
            };
            let cand: [f64; 4] = std::array::from_fn(|i| theta[i] + step[i]);
            let c = sse(&cand, pts);
            if c <= cost {
                let small = step.norm() <= 1e-15 * (1.0 + Vector4::from(theta).norm());
                theta = cand;
                let rel = (cost - c) / cost.max(1e-300);
                cost = c;
                damping = (damping / 3.0).max(1e-15);
                improved = !small && rel > 1e-16;
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(k: u32, p: LogisticParams, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let snr_db = -10.0 + 30.0 * i as f64 / (n - 1) as f64;
                Sample { k, snr_db, score: p.value(db_to_linear(snr_db)) }
            })
            .collect()
    }

    #[test]
    fn too_few_samples() {
        let p = LogisticParams::new(0.3, 1.2, 0.9, 0.8);
        let err = fit(&grid(3, p, 7), &FitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("at least 8"), "{err}");
    }

    #[test]
    fn narrow_span() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| Sample { k: 2, snr_db: i as f64, score: 0.5 })
            .collect();
        assert!(fit(&samples, &FitOptions::default()).is_err());
    }

    #[test]
    fn empty_input() {
        assert!(fit(&[], &FitOptions::default()).is_err());
    }

    #[test]
    fn nonconvergent_fit_is_flagged() {
        // a zig-zag no monotone logistic can follow
        let samples: Vec<Sample> = (0..20)
            .map(|i| Sample { k: 2, snr_db: -10.0 + 2.0 * i as f64, score: if i % 2 == 0 { 0.0 } else { 1.0 } })
            .collect();
        let err = fit(&samples, &FitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("did not converge"), "{err}");
    }

    #[test]
    fn recovers_two_depths() {
        let p2 = LogisticParams::new(0.25, 1.0, 0.7, 0.9);
        let p3 = LogisticParams::new(0.2, 1.4, 0.8, 0.6);
        let mut samples = grid(2, p2, 25);
        samples.extend(grid(3, p3, 25));
        let rep = fit(&samples, &FitOptions::default()).unwrap();
        for (k, truth) in [(2, p2), (3, p3)] {
            let got = rep.model.params(k).unwrap();
            for (x, y) in [(got.a, truth.a), (got.c, truth.c), (got.d, truth.d), (got.e, truth.e)] {
                assert!(((x - y) / y).abs() < 1e-4, "depth {k}: {got:?} vs {truth:?}");
            }
            assert!(rep.fits[&k].rms < 1e-8);
        }
    }
}
