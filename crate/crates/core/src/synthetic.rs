//! Seeded synthetic series with known structure, for demos and tests.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Parameters of `demand_t = a - b * price_t + persistence * demand_{t-1} + noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityConfig {
    pub n: usize,
    pub a: f64,
    /// Price sensitivity; positive means demand falls as price rises.
    pub b: f64,
    pub persistence: f64,
    pub noise_sd: f64,
    pub price_mean: f64,
    /// AR(1) coefficient of the price process.
    pub price_ar: f64,
    pub price_sd: f64,
    pub seed: u64,
}

impl Default for ElasticityConfig {
    fn default() -> Self {
        Self {
            n: 300,
            a: 40.0,
            b: 0.4,
            persistence: 0.3,
            noise_sd: 0.3,
            price_mean: 50.0,
            price_ar: 0.8,
            price_sd: 4.0,
            seed: 0,
        }
    }
}

/// Columns of a generated demand panel.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPanel {
    pub price: Vec<f64>,
    /// Independent AR(1) covariate unrelated to demand.
    pub index: Vec<f64>,
    pub demand: Vec<f64>,
}

pub fn negative_elasticity(cfg: &ElasticityConfig) -> DemandPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut price = Vec::with_capacity(cfg.n);
    let mut index = Vec::with_capacity(cfg.n);
    let mut demand = Vec::with_capacity(cfg.n);
    let mut p = cfg.price_mean;
    let mut q = 100.0;
    let mut d = (cfg.a - cfg.b * cfg.price_mean) / (1.0 - cfg.persistence);
    for _ in 0..cfg.n {
        p = cfg.price_mean + cfg.price_ar * (p - cfg.price_mean) + cfg.price_sd * normal();
        q = 100.0 + 0.9 * (q - 100.0) + 2.0 * normal();
        d = cfg.a - cfg.b * p + cfg.persistence * d + cfg.noise_sd * normal();
        price.push(p);
        index.push(q);
        demand.push(d);
    }
    DemandPanel { price, index, demand }
}

/// A cubic in `v` on `n` uniform nodes of `[-1, 1]`, plus Gaussian noise.
/// Returns `(clean, noisy)`.
pub fn cubic_with_noise(n: usize, sigma: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean: Vec<f64> = crate::denoise::nodes(n)
        .into_iter()
        .map(|v| 0.5 + 1.2 * v - 0.8 * v * v + 1.5 * v * v * v)
        .collect();
    let noisy = clean
        .iter()
        .map(|c| {
            let e: f64 = StandardNormal.sample(&mut rng);
            c + sigma * e
        })
        .collect();
    (clean, noisy)
}
