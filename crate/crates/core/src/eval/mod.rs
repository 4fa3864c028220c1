//! Evaluation of trained models against logged test transitions.

pub mod baselines;
pub mod metrics;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::data::{ItemCatalog, Transition};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::Tensor;
pub use baselines::{baseline_gru, baseline_lr, baseline_random, BaselineConfig, GruBaseline, LinearModel};
pub use metrics::{
    auc, auc_trapezoid, average_precision, f1, map_metric, ndcg_at_k, rank_catalog, Ranking, ScoredLabel,
};
pub use report::{write_report, Report};

/// F1 on thresholded predictions and AUC on scores; AUC is `None` when the
/// labels hold a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub f1: f64,
    pub auc: Option<f64>,
    pub samples: usize,
    pub positives: usize,
}

pub fn classification_metrics(predictions: &[bool], scored: &[ScoredLabel]) -> Result<ClassificationMetrics> {
    let labels: Vec<bool> = scored.iter().map(|s| s.label).collect();
    let f1 = f1(predictions, &labels)?;
    let auc = match auc(scored) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ClassificationMetrics {
        f1,
        auc,
        samples: scored.len(),
        positives: labels.iter().filter(|l| **l).count(),
    })
}

/// Feedback prediction quality of a discriminator on logged pairs.
pub fn eval_discriminator(
    test: &[Transition],
    disc: &Discriminator,
    catalog: &ItemCatalog,
) -> Result<ClassificationMetrics> {
    if test.is_empty() {
        return Err(Error::contract("empty test split"));
    }
    let k = disc.dims.k;
    let mut predictions = Vec::with_capacity(test.len());
    let mut scored = Vec::with_capacity(test.len());
    for chunk in test.chunks(1000) {
        let pairs: Vec<_> = chunk.iter().map(|t| (&t.state, t.action)).collect();
        for ((class, score), t) in disc.predict_batch(&pairs, catalog)?.into_iter().zip(chunk) {
            predictions.push(class.is_positive(k));
            scored.push(ScoredLabel::new(score, t.feedback.is_positive(k)));
        }
    }
    classification_metrics(&predictions, &scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetrics {
    pub map: f64,
    pub ndcg: f64,
    pub k: usize,
    pub samples: usize,
}

/// Ranks the catalog around each row of `outputs` (one per test transition)
/// and scores the logged action as the single relevant item.
pub fn ranking_metrics(
    test: &[Transition],
    outputs: &Tensor,
    catalog: &ItemCatalog,
    k: usize,
) -> Result<GeneratorMetrics> {
    if test.is_empty() {
        return Err(Error::contract("empty test split"));
    }
    if outputs.nrows() != test.len() {
        return Err(Error::shape(format!(
            "{} outputs for {} transitions",
            outputs.nrows(),
            test.len()
        )));
    }
    let mut ap = 0.0;
    let mut ndcg = 0.0;
    for (t, row) in test.iter().zip(outputs.rows()) {
        let ranking = Ranking::new(rank_catalog(&row.to_vec(), catalog, k)?, vec![t.action])?;
        ap += average_precision(&ranking)?;
        ndcg += ndcg_at_k(&ranking, k)?;
    }
    let n = test.len() as f64;
    Ok(GeneratorMetrics {
        map: ap / n,
        ndcg: ndcg / n,
        k,
        samples: test.len(),
    })
}

/// Policy-imitation quality of a generator: MAP and NDCG@k of the logged
/// next item among the catalog items nearest to `G(s)`.
pub fn eval_generator(
    test: &[Transition],
    gen: &Generator,
    catalog: &ItemCatalog,
    k: usize,
) -> Result<GeneratorMetrics> {
    if test.is_empty() {
        return Err(Error::contract("empty test split"));
    }
    let mut outputs = Tensor::zeros((test.len(), catalog.dim()));
    for (c, chunk) in test.chunks(1000).enumerate() {
        let states: Vec<_> = chunk.iter().map(|t| &t.state).collect();
        let out = gen.generate_batch(&states, catalog)?;
        outputs
            .slice_mut(ndarray::s![c * 1000..c * 1000 + chunk.len(), ..])
            .assign(&out);
    }
    ranking_metrics(test, &outputs, catalog, k)
}
