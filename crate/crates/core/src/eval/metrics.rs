//! Classification and ranking metrics.

use serde::{Deserialize, Serialize};

use crate::data::{ItemCatalog, ItemId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub score: f64,
    pub label: bool,
}

impl ScoredLabel {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

/// `2PR / (P + R)` for the positive class; 0 when `P + R = 0`.
pub fn f1(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("F1 of an empty sample"));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    // 2PR / (P + R) rewritten over counts; P + R = 0 exactly when TP = 0
    if tp == 0 {
        return Ok(0.0);
    }
    Ok((2 * tp) as f64 / (2 * tp + fp + fneg) as f64)
}

fn check_auc_input(samples: &[ScoredLabel]) -> Result<(usize, usize)> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::contract(format!("non-finite score {}", s.score)));
    }
    let pos = samples.iter().filter(|s| s.label).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from ranks in `O(n log n)`.
pub fn auc(samples: &[ScoredLabel]) -> Result<f64> {
    let (pos, neg) = check_auc_input(samples)?;
    let mut sorted: Vec<&ScoredLabel> = samples.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // count, for each positive, the negatives strictly below plus half the tied ones
    let mut concordant = 0.0;
    let mut negatives_below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p, mut n) = (0usize, 0usize);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].label {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        concordant += p as f64 * (negatives_below as f64 + 0.5 * n as f64);
        negatives_below += n;
        i = j;
    }
    Ok(concordant / (pos as f64 * neg as f64))
}

/// Area under the ROC curve by the trapezoidal rule over distinct thresholds.
pub fn auc_trapezoid(samples: &[ScoredLabel]) -> Result<f64> {
    let (pos, neg) = check_auc_input(samples)?;
    let mut sorted: Vec<&ScoredLabel> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].score;
        while i < sorted.len() && sorted[i].score == score {
            if sorted[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

/// Ranked items (best first) with binary relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub items: Vec<ItemId>,
    pub relevant: Vec<ItemId>,
}

impl Ranking {
    pub fn new(items: Vec<ItemId>, relevant: Vec<ItemId>) -> Result<Self> {
        let mut seen = items.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("ranking contains a duplicate item"));
        }
        Ok(Self { items, relevant })
    }

    fn is_relevant(&self, item: ItemId) -> bool {
        self.relevant.contains(&item)
    }
}

/// Average precision of one ranking.
pub fn average_precision(r: &Ranking) -> Result<f64> {
    if r.relevant.is_empty() {
        return Err(Error::contract("ranking without a relevant item"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in r.items.iter().enumerate() {
        if r.is_relevant(*item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / r.relevant.len() as f64)
}

/// Mean average precision.
pub fn map_metric(rankings: &[Ranking]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::contract("MAP of no rankings"));
    }
    let mut total = 0.0;
    for r in rankings {
        total += average_precision(r)?;
    }
    Ok(total / rankings.len() as f64)
}

/// Binary-relevance NDCG over the top `k` positions; 0 without relevant items.
pub fn ndcg_at_k(r: &Ranking, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::contract("NDCG cutoff must be >= 1"));
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = r
        .items
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| r.is_relevant(**item))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..r.relevant.len().min(k)).map(discount).sum();
    if ideal == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg / ideal)
}

/// Catalog items nearest to `g` by squared Euclidean distance, ties broken
/// by item id string, truncated to `k`.
pub fn rank_catalog(g: &[f64], catalog: &ItemCatalog, k: usize) -> Result<Vec<ItemId>> {
    if g.len() != catalog.dim() {
        return Err(Error::shape(format!(
            "query has {} entries, catalog embeddings have {}",
            g.len(),
            catalog.dim()
        )));
    }
    let mut scored: Vec<(f64, ItemId)> = catalog
        .items()
        .map(|item| {
            let d = catalog
                .embedding(item)
                .iter()
                .zip(g)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (d, item)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| catalog.id(a.1).cmp(catalog.id(b.1))));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(_, item)| item).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::from_rows;

    fn labels(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    fn samples(scores: &[f64], l: &[u8]) -> Vec<ScoredLabel> {
        scores
            .iter()
            .zip(labels(l))
            .map(|(&s, l)| ScoredLabel::new(s, l))
            .collect()
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&labels(&[1, 0, 1]), &labels(&[1, 0, 1])).unwrap(), 1.0);
        // TP=1, FP=1, FN=1
        assert_eq!(f1(&labels(&[1, 1, 0]), &labels(&[1, 0, 1])).unwrap(), 0.5);
        // TP=3, FP=1, FN=2
        let p = labels(&[1, 1, 1, 1, 0, 0, 0]);
        let l = labels(&[1, 1, 1, 0, 1, 1, 0]);
        assert!((f1(&p, &l).unwrap() - 2.0 * 0.45 / 1.35).abs() < 1e-15);
        assert_eq!(f1(&labels(&[0, 0]), &labels(&[0, 0])).unwrap(), 0.0);
        assert!(f1(&labels(&[0]), &labels(&[0, 1])).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&samples(&[0.9, 0.1], &[1, 0])).unwrap(), 1.0);
        assert_eq!(auc(&samples(&[0.3; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(auc(&samples(&[0.8, 0.6, 0.4, 0.2], &[1, 0, 1, 0])).unwrap(), 0.75);
        assert_eq!(
            auc_trapezoid(&samples(&[0.8, 0.6, 0.4, 0.2], &[1, 0, 1, 0])).unwrap(),
            0.75
        );
        assert!(matches!(
            auc(&samples(&[0.1, 0.2], &[1, 1])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn map_examples() {
        let r = |items: &[u32], rel: &[u32]| {
            Ranking::new(
                items.iter().map(|&i| ItemId(i)).collect(),
                rel.iter().map(|&i| ItemId(i)).collect(),
            )
            .unwrap()
        };
        assert_eq!(average_precision(&r(&[5, 1, 2], &[5])).unwrap(), 1.0);
        let ap = average_precision(&r(&[5, 1, 2, 3], &[5, 2])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert_eq!(average_precision(&r(&[0, 1, 2, 3], &[3])).unwrap(), 0.25);
        assert!(average_precision(&r(&[0, 1], &[])).is_err());
        assert!(Ranking::new(vec![ItemId(1), ItemId(1)], vec![]).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let r = |items: &[u32], rel: u32| {
            Ranking::new(items.iter().map(|&i| ItemId(i)).collect(), vec![ItemId(rel)]).unwrap()
        };
        assert_eq!(ndcg_at_k(&r(&[4, 1, 2], 4), 3).unwrap(), 1.0);
        let v = ndcg_at_k(&r(&[1, 4, 2], 4), 2).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15 && (v - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&r(&[1, 2, 4], 4), 2).unwrap(), 0.0);
        let empty = Ranking::new(vec![ItemId(0)], vec![]).unwrap();
        assert_eq!(ndcg_at_k(&empty, 3).unwrap(), 0.0);
        assert!(ndcg_at_k(&empty, 0).is_err());
    }

    #[test]
    fn ranking_examples() {
        // distances from the origin: 0.5, 0.1, 0.9
        let cat = ItemCatalog::new(
            vec!["x".into(), "y".into(), "z".into()],
            from_rows(3, 1, vec![0.5f64.sqrt(), 0.1f64.sqrt(), 0.9f64.sqrt()]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            rank_catalog(&[0.0], &cat, 3).unwrap(),
            vec![ItemId(1), ItemId(0), ItemId(2)]
        );
        assert_eq!(rank_catalog(&[0.9f64.sqrt()], &cat, 1).unwrap(), vec![ItemId(2)]);

        let tied = ItemCatalog::new(vec!["b".into(), "a".into()], from_rows(2, 1, vec![0.5, -0.5]).unwrap()).unwrap();
        assert_eq!(rank_catalog(&[0.0], &tied, 2).unwrap(), vec![ItemId(1), ItemId(0)]);
        assert!(rank_catalog(&[0.0, 1.0], &tied, 2).is_err());
    }
}
