//! Clustered Saleh-Valenzuela MISO channels over a uniform linear array.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{CVector, ChannelSet, SystemConfig, C64};

/// Default number of propagation paths per user.
pub const DEFAULT_PATHS: usize = 10;

pub type ChannelRng = ChaCha8Rng;

/// Generator for trial `trial` of a run seeded with `seed`. Distinct trials
/// use distinct ChaCha streams, so trials can be drawn in any order or in parallel.
pub fn trial_rng(seed: u64, trial: u64) -> ChannelRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRealization {
    pub gains: Vec<C64>,
    /// Angles of departure in `[0, 2π)`.
    pub aods: Vec<f64>,
}

impl PathRealization {
    /// Draws `l_p` paths: all gains first (real then imaginary part of each),
    /// then all angles.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, l_p: usize) -> Self {
        let half = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
        let gains = (0..l_p)
            .map(|_| {
                let re = half.sample(rng);
                let im = half.sample(rng);
                C64::new(re, im)
            })
            .collect();
        let aods = (0..l_p).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        PathRealization { gains, aods }
    }

    /// `h = (1/√L_p) Σ δ_l a(θ_l)`.
    pub fn channel(&self, n_t: usize) -> CVector {
        let mut h = CVector::zeros(n_t);
        for (g, &theta) in self.gains.iter().zip(&self.aods) {
            h += steering_vector(theta, n_t) * *g;
        }
        let l_p = self.gains.len().max(1) as f64;
        h / C64::new(l_p.sqrt(), 0.0)
    }
}

/// ULA response `[1, e^{-jπ sinθ}, …, e^{-jπ(n_t−1) sinθ}]`.
pub fn steering_vector(theta: f64, n_t: usize) -> CVector {
    let phase = -PI * theta.sin();
    CVector::from_iterator(n_t, (0..n_t).map(|k| C64::from_polar(1.0, phase * k as f64)))
}

pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, n_t: usize, l_p: usize) -> CVector {
    assert!(l_p >= 1, "need at least one path");
    loop {
        let h = PathRealization::sample(rng, l_p).channel(n_t);
        if h.norm_squared() > 0.0 {
            return h;
        }
    }
}

/// Draws bit-user channels first, then sem-user channels, in index order.
pub fn sample_channel_set<R: Rng + ?Sized>(rng: &mut R, cfg: &SystemConfig) -> ChannelSet {
    sample_channel_set_with_paths(rng, cfg, DEFAULT_PATHS)
}

pub fn sample_channel_set_with_paths<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SystemConfig,
    l_p: usize,
) -> ChannelSet {
    let h_bit = (0..cfg.n_bit).map(|_| sample_channel(rng, cfg.n_t, l_p)).collect();
    let h_sem = (0..cfg.n_sem).map(|_| sample_channel(rng, cfg.n_t, l_p)).collect();
    ChannelSet { h_bit, h_sem }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(0.0, 4);
        assert!(a.iter().all(|&z| close(z, C64::new(1.0, 0.0))));
    }

    #[test]
    fn endfire_alternates() {
        let a = steering_vector(PI / 2.0, 2);
        assert!(close(a[0], C64::new(1.0, 0.0)));
        assert!(close(a[1], C64::new(-1.0, 0.0)));
    }

    #[test]
    fn thirty_degrees_gives_minus_j() {
        let a = steering_vector(PI / 6.0, 2);
        assert!(close(a[1], C64::new(0.0, -1.0)));
    }

    #[test]
    fn same_seed_same_set() {
        let cfg = SystemConfig::default();
        let a = sample_channel_set(&mut trial_rng(7, 3), &cfg);
        let b = sample_channel_set(&mut trial_rng(7, 3), &cfg);
        assert_eq!(a, b);
        assert_eq!(a.n_users(), 8);
        assert!(a.iter().all(|h| h.len() == 16));
        let c = sample_channel_set(&mut trial_rng(8, 3), &cfg);
        assert_ne!(a, c);
        let d = sample_channel_set(&mut trial_rng(7, 4), &cfg);
        assert_ne!(a, d);
    }

    #[test]
    fn degenerate_population() {
        let cfg = SystemConfig::uniform(4, 0, 1, 0.0, 0.0);
        let set = sample_channel_set(&mut trial_rng(1, 0), &cfg);
        assert_eq!(set.n_users(), 1);
        set.check(&cfg).unwrap();
    }

    #[test]
    fn angles_in_range() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..100 {
            let p = PathRealization::sample(&mut rng, DEFAULT_PATHS);
            assert_eq!(p.gains.len(), p.aods.len());
            assert!(p.aods.iter().all(|&t| (0.0..2.0 * PI).contains(&t)));
        }
    }
}
