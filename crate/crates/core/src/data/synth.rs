//! A synthetic world with a planted user model.
//!
//! Each session has a latent unit preference vector `u`. The logging policy
//! recommends item `e` with probability proportional to
//! `exp(temperature · ⟨u, e⟩)` (optionally mixed with uniform exploration) and
//! the user responds positively iff `⟨u, e⟩ + Normal(0, noise) > threshold`.
//! Because the model is known, the true positive probability
//! `Φ((⟨u, e⟩ − threshold) / noise)` is available for every (session, item).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::catalog::{FeedbackClass, ItemCatalog, ItemId};
use super::io::Corpus;
use super::mdp::Session;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub catalog_size: usize,
    pub sessions: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub dim: usize,
    /// Standard deviation of the feedback noise.
    pub noise: f64,
    pub threshold: f64,
    pub temperature: f64,
    /// Probability that the logging policy recommends a uniform random item.
    pub explore: f64,
    /// Number of preference prototypes; 0 draws `u` uniformly on the sphere.
    pub prototypes: usize,
    /// Gaussian jitter added to a prototype before normalizing.
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            catalog_size: 500,
            sessions: 2000,
            min_length: 8,
            max_length: 14,
            dim: 20,
            noise: 0.05,
            threshold: 0.0,
            temperature: 3.0,
            explore: 0.0,
            prototypes: 0,
            jitter: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        kv.take_into("catalog_size", &mut c.catalog_size)?;
        kv.take_into("sessions", &mut c.sessions)?;
        kv.take_into("min_length", &mut c.min_length)?;
        kv.take_into("max_length", &mut c.max_length)?;
        kv.take_into("dim", &mut c.dim)?;
        kv.take_into("noise", &mut c.noise)?;
        kv.take_into("threshold", &mut c.threshold)?;
        kv.take_into("temperature", &mut c.temperature)?;
        kv.take_into("explore", &mut c.explore)?;
        kv.take_into("prototypes", &mut c.prototypes)?;
        kv.take_into("jitter", &mut c.jitter)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("catalog_size", self.catalog_size),
            ("sessions", self.sessions),
            ("min_length", self.min_length),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.max_length < self.min_length {
            return Err(Error::config("max_length < min_length"));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::config("noise must be a finite value >= 0"));
        }
        if !(0.0..=1.0).contains(&self.explore) {
            return Err(Error::config("explore must be in [0, 1]"));
        }
        if !self.temperature.is_finite() || !self.threshold.is_finite() || self.jitter.is_nan() || self.jitter < 0.0 {
            return Err(Error::config("temperature, threshold and jitter must be finite"));
        }
        Ok(())
    }
}

/// Ground-truth user model of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    preferences: Vec<Vec<f64>>,
    noise: f64,
    threshold: f64,
}

impl Oracle {
    pub fn preference(&self, session: usize) -> &[f64] {
        &self.preferences[session]
    }

    pub fn affinity(&self, session: usize, catalog: &ItemCatalog, item: ItemId) -> f64 {
        dot(&self.preferences[session], catalog.embedding(item))
    }

    /// True probability that the user of `session` responds positively.
    pub fn positive_probability(&self, session: usize, catalog: &ItemCatalog, item: ItemId) -> f64 {
        let margin = self.affinity(session, catalog, item) - self.threshold;
        if self.noise == 0.0 {
            return if margin > 0.0 { 1.0 } else { 0.0 };
        }
        Normal::new(0.0, 1.0).expect("standard normal").cdf(margin / self.noise)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates a catalog, logged sessions and the oracle that produced them.
pub fn synth_world(config: &SynthConfig, seed: u64) -> Result<(Corpus, Oracle)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config.catalog_size;
    let dim = config.dim;

    let emb = Tensor::from_shape_simple_fn((c, dim), || rng.random_range(-0.99..0.99));
    let width = c.to_string().len();
    let ids = (0..c).map(|i| format!("i{i:0width$}")).collect();
    let catalog = ItemCatalog::new(ids, emb)?;

    let prototypes: Vec<Vec<f64>> = (0..config.prototypes).map(|_| unit_gaussian(&mut rng, dim)).collect();

    let mut sessions = Vec::with_capacity(config.sessions);
    let mut preferences = Vec::with_capacity(config.sessions);
    let swidth = config.sessions.to_string().len();
    for s in 0..config.sessions {
        let u = if prototypes.is_empty() {
            unit_gaussian(&mut rng, dim)
        } else {
            let p = &prototypes[rng.random_range(0..prototypes.len())];
            let raw: Vec<f64> = p
                .iter()
                .map(|x| x + config.jitter * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = dot(&raw, &raw).sqrt().max(1e-12);
            raw.into_iter().map(|x| x / norm).collect()
        };

        let affinity: Vec<f64> = catalog.items().map(|i| dot(&u, catalog.embedding(i))).collect();
        let max = affinity
            .iter()
            .map(|a| config.temperature * a)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut cumulative = Vec::with_capacity(c);
        let mut acc = 0.0;
        for a in &affinity {
            acc += (config.temperature * a - max).exp();
            cumulative.push(acc);
        }

        let len = rng.random_range(config.min_length..=config.max_length);
        let mut events = Vec::with_capacity(len);
        for _ in 0..len {
            let item = if rng.random::<f64>() < config.explore {
                rng.random_range(0..c)
            } else {
                let x = rng.random::<f64>() * acc;
                cumulative.partition_point(|&v| v <= x).min(c - 1)
            };
            let noise: f64 = rng.sample(StandardNormal);
            let positive = affinity[item] + config.noise * noise > config.threshold;
            let f = if positive {
                FeedbackClass::POSITIVE
            } else {
                FeedbackClass::NEGATIVE
            };
            events.push((ItemId(item as u32), f));
        }
        sessions.push(Session {
            id: format!("s{s:0swidth$}"),
            events,
        });
        preferences.push(u);
    }
    Ok((
        Corpus { catalog, sessions },
        Oracle {
            preferences,
            noise: config.noise,
            threshold: config.threshold,
        },
    ))
}
