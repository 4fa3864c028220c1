use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::algorithm::train;
use super::config::TrainConfig;
use crate::data::{Corpus, Dataset};
use crate::error::{Error, Result};
use crate::eval::eval_discriminator;

/// Hyperparameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// State length; the dataset is rebuilt for every value.
    N,
    Lambda,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::N => "N",
            SweepParam::Lambda => "lambda",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(SweepParam::N),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(Error::config(format!(
                "unknown sweep parameter `{other}` (expected N or lambda)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub auc: Option<f64>,
    pub f1: f64,
    pub rounds: usize,
    pub test_samples: usize,
}

fn apply(config: &TrainConfig, param: SweepParam, value: f64) -> Result<TrainConfig> {
    let mut c = config.clone();
    match param {
        SweepParam::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::config(format!("N must be a positive integer, got {value}")));
            }
            c.n = value as usize;
        }
        SweepParam::Lambda => c.lambda = value,
    }
    c.validate()?;
    Ok(c)
}

/// Trains once per value and reports test-split AUC and F1 of the
/// discriminator.
pub fn sweep(corpus: &Corpus, config: &TrainConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    // validate every value before spending time on training
    let configs = values
        .iter()
        .map(|&v| apply(config, param, v))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(values.len());
    for (&value, c) in values.iter().zip(configs) {
        let dataset = Dataset::new(corpus.clone(), c.n, c.k, c.reward_map()?)?;
        let trained = train(&dataset, &c)?;
        let test = dataset.test();
        let m = eval_discriminator(&test, &trained.discriminator, dataset.catalog())?;
        info!("{param}={value}: AUC {:?} F1 {:.4}", m.auc, m.f1);
        out.push(SweepPoint {
            value,
            auc: m.auc,
            f1: m.f1,
            rounds: trained.rounds_run(),
            test_samples: m.samples,
        });
    }
    Ok(out)
}
