//! Reference feedback predictors: uniform random scores, a sigmoid linear
//! model trained with squared loss, and a GRU classifier without the
//! real/fake axis.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{classification_metrics, ClassificationMetrics, ScoredLabel};
use crate::data::{FeedbackClass, ItemCatalog, State, Transition};
use crate::encoder::{ModelDims, StateBatch, StateEncoder};
use crate::error::{Error, Result};
use crate::generator::action_matrix;
use crate::nn::{adam_step, Activation, AdamConfig, Binding, Dense, Graph, ParameterStore, Tensor, Var, PROB_FLOOR};

/// Training schedule shared by the learned baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 500,
            lr: 0.001,
            seed: 0,
        }
    }
}

fn shuffled_batches(len: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// Uniform scores in `[0, 1)`; positive iff the score exceeds 0.5.
pub fn baseline_random(test: &[Transition], k: usize, seed: u64) -> Result<ClassificationMetrics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut preds = Vec::with_capacity(test.len());
    let mut scored = Vec::with_capacity(test.len());
    for t in test {
        let score: f64 = rng.random();
        preds.push(score > 0.5);
        scored.push(ScoredLabel::new(score, t.feedback.is_positive(k)));
    }
    classification_metrics(&preds, &scored)
}

/// `h(x) = σ(w·x + b)` fitted by minimizing `mean ½ (h(x) − y)²`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub store: ParameterStore,
    layer: Dense,
}

impl LinearModel {
    /// A zero-initialized model (every score is 0.5).
    pub fn zeros(features: usize) -> Result<Self> {
        let mut store = ParameterStore::new();
        store.insert("lr.weight", Tensor::zeros((1, features)))?;
        store.insert("lr.bias", Tensor::zeros((1, 1)))?;
        let layer = Dense::attach(&store, "lr", Activation::Identity)?;
        Ok(Self { store, layer })
    }

    fn forward(&self, g: &mut Graph, store: &ParameterStore, binding: Binding, x: Var) -> Result<Var> {
        let z = self.layer.forward(g, store, binding, x)?;
        Ok(g.sigmoid(z))
    }

    pub fn score(&self, features: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.constant(features.clone());
        let h = self.forward(&mut g, &self.store, Binding::Frozen, x)?;
        Ok(g.value(h).column(0).to_vec())
    }

    /// Mini-batch Adam on the squared loss; returns the per-epoch mean loss.
    pub fn fit(&mut self, features: &Tensor, targets: &[f64], config: &BaselineConfig) -> Result<Vec<f64>> {
        if features.nrows() != targets.len() || targets.is_empty() {
            return Err(Error::contract("features and targets must be non-empty and aligned"));
        }
        let adam = AdamConfig::with_lr(config.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut curve = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            let batches = shuffled_batches(targets.len(), config.batch_size, &mut rng);
            let mut sum = 0.0;
            for idx in &batches {
                let x = features.select(ndarray::Axis(0), idx);
                let y = Tensor::from_shape_fn((idx.len(), 1), |(r, _)| targets[idx[r]]);
                let mut g = Graph::new();
                let xv = g.constant(x);
                let yv = g.constant(y);
                let h = self.forward(&mut g, &self.store, Binding::Trainable, xv)?;
                let diff = g.sub(h, yv)?;
                let sq = g.square(diff);
                let m = g.mean(sq);
                let loss = g.scale(m, 0.5);
                sum += g.scalar(loss);
                g.backward(loss, &mut self.store)?;
                adam_step(&mut self.store, &adam)?;
            }
            curve.push(sum / batches.len() as f64);
        }
        Ok(curve)
    }
}

/// Concatenation of every `(e_n, one-hot f_n)` in the state followed by the
/// action embedding.
pub fn lr_features(rows: &[Transition], catalog: &ItemCatalog, k: usize) -> Result<Tensor> {
    let Some(first) = rows.first() else {
        return Err(Error::contract("no transitions"));
    };
    let n = first.state.len();
    let dim = catalog.dim();
    let width = n * (dim + k) + dim;
    let mut out = Tensor::zeros((rows.len(), width));
    for (r, t) in rows.iter().enumerate() {
        if t.state.len() != n {
            return Err(Error::shape("transitions with different state lengths"));
        }
        let mut row = Vec::with_capacity(width);
        for (item, f) in t.state.events() {
            catalog.check(*item)?;
            row.extend_from_slice(catalog.embedding(*item));
            row.extend(FeedbackClass::new(f.index(), k)?.indicator(k));
        }
        catalog.check(t.action)?;
        row.extend_from_slice(catalog.embedding(t.action));
        out.row_mut(r).iter_mut().zip(row).for_each(|(d, s)| *d = s);
    }
    Ok(out)
}

fn labels(rows: &[Transition], k: usize) -> Vec<bool> {
    rows.iter().map(|t| t.feedback.is_positive(k)).collect()
}

/// Trains the linear baseline on `train` and scores `test`.
pub fn baseline_lr(
    train: &[Transition],
    test: &[Transition],
    catalog: &ItemCatalog,
    k: usize,
    config: &BaselineConfig,
) -> Result<ClassificationMetrics> {
    if train.is_empty() {
        return Err(Error::contract("empty training split"));
    }
    let x = lr_features(train, catalog, k)?;
    let y: Vec<f64> = labels(train, k)
        .into_iter()
        .map(|l| if l { 1.0 } else { 0.0 })
        .collect();
    let mut model = LinearModel::zeros(x.ncols())?;
    model.fit(&x, &y, config)?;
    let scores = model.score(&lr_features(test, catalog, k)?)?;
    let truth = labels(test, k);
    let preds: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
    let scored: Vec<ScoredLabel> = scores.iter().zip(truth).map(|(&s, l)| ScoredLabel::new(s, l)).collect();
    classification_metrics(&preds, &scored)
}

/// State encoder, then `concat(u, e_a)` into a `K`-way softmax.
#[derive(Debug, Clone)]
pub struct GruBaseline {
    pub store: ParameterStore,
    pub dims: ModelDims,
    encoder: StateEncoder,
    head: Dense,
}

impl GruBaseline {
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        let mut store = ParameterStore::new();
        let encoder = StateEncoder::new(&mut store, "gru.enc", &dims, rng)?;
        let head = Dense::new(
            &mut store,
            "gru.head",
            dims.hidden + dims.embed,
            dims.k,
            Activation::Identity,
            rng,
        )?;
        Ok(Self {
            store,
            dims,
            encoder,
            head,
        })
    }

    pub fn outputs(&self) -> usize {
        self.head.output
    }

    fn logits(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        binding: Binding,
        batch: &StateBatch,
        actions: &Tensor,
    ) -> Result<Var> {
        let u = self.encoder.encode(g, store, binding, batch)?;
        let a = g.constant(actions.clone());
        let x = g.concat(&[u, a])?;
        self.head.forward(g, store, binding, x)
    }

    fn batch(&self, rows: &[&Transition], catalog: &ItemCatalog) -> Result<(StateBatch, Tensor)> {
        let states: Vec<&State> = rows.iter().map(|t| &t.state).collect();
        let actions: Vec<_> = rows.iter().map(|t| t.action).collect();
        Ok((
            StateBatch::new(&states, catalog, self.dims.n, self.dims.k)?,
            action_matrix(&actions, catalog)?,
        ))
    }

    /// Mini-batch Adam on the cross-entropy; returns per-epoch mean loss.
    pub fn fit(&mut self, train: &[Transition], catalog: &ItemCatalog, config: &BaselineConfig) -> Result<Vec<f64>> {
        if train.is_empty() {
            return Err(Error::contract("empty training split"));
        }
        let adam = AdamConfig::with_lr(config.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut curve = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            let batches = shuffled_batches(train.len(), config.batch_size, &mut rng);
            let mut sum = 0.0;
            for idx in &batches {
                let rows: Vec<&Transition> = idx.iter().map(|&i| &train[i]).collect();
                let (sb, actions) = self.batch(&rows, catalog)?;
                let targets: Vec<usize> = rows.iter().map(|t| t.feedback.index()).collect();
                let mut g = Graph::new();
                let logits = self.logits(&mut g, &self.store, Binding::Trainable, &sb, &actions)?;
                let p = g.softmax_rows(logits);
                let picked = g.gather(p, &targets)?;
                let logs = g.log_clamp(picked, PROB_FLOOR);
                let m = g.mean(logs);
                let loss = g.scale(m, -1.0);
                sum += g.scalar(loss);
                g.backward(loss, &mut self.store)?;
                adam_step(&mut self.store, &adam)?;
            }
            curve.push(sum / batches.len() as f64);
        }
        Ok(curve)
    }

    /// Class probabilities indexed by feedback class, one row per transition.
    pub fn probabilities(&self, rows: &[Transition], catalog: &ItemCatalog) -> Result<Tensor> {
        let mut out = Tensor::zeros((rows.len(), self.dims.k));
        for (c, chunk) in rows.chunks(1000).enumerate() {
            let refs: Vec<&Transition> = chunk.iter().collect();
            let (sb, actions) = self.batch(&refs, catalog)?;
            let mut g = Graph::new();
            let logits = self.logits(&mut g, &self.store, Binding::Frozen, &sb, &actions)?;
            let p = g.softmax_rows(logits);
            out.slice_mut(ndarray::s![c * 1000..c * 1000 + chunk.len(), ..])
                .assign(g.value(p));
        }
        Ok(out)
    }
}

/// Trains the GRU baseline on `train` and scores `test` by the positive-class
/// probability.
pub fn baseline_gru(
    train: &[Transition],
    test: &[Transition],
    catalog: &ItemCatalog,
    dims: ModelDims,
    config: &BaselineConfig,
) -> Result<ClassificationMetrics> {
    let mut model = GruBaseline::new(dims, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    model.fit(train, catalog, config)?;
    let probs = model.probabilities(test, catalog)?;
    let k = dims.k;
    let top = k - 1;
    let mut preds = Vec::with_capacity(test.len());
    let mut scored = Vec::with_capacity(test.len());
    for (row, t) in probs.rows().into_iter().zip(test) {
        // argmax with ties toward the more positive class
        let best = (0..k).rev().fold(top, |b, c| if row[c] > row[b] { c } else { b });
        preds.push(best == top);
        scored.push(ScoredLabel::new(row[top], t.feedback.is_positive(k)));
    }
    classification_metrics(&preds, &scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ItemId;
    use crate::nn::tensor::from_rows;

    #[test]
    fn zero_linear_model_scores_half() {
        let m = LinearModel::zeros(3).unwrap();
        let s = m
            .score(&from_rows(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap())
            .unwrap();
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn linear_model_separates_one_feature() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 - 49.5) / 50.0).collect();
        let y: Vec<f64> = xs.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
        let features = from_rows(100, 1, xs).unwrap();
        let mut m = LinearModel::zeros(1).unwrap();
        // 500 steps: 50 epochs of 10 batches
        let config = BaselineConfig {
            epochs: 50,
            batch_size: 10,
            lr: 0.01,
            seed: 1,
        };
        let curve = m.fit(&features, &y, &config).unwrap();
        assert!(curve.last().unwrap() < &curve[0]);
        let scores = m.score(&features).unwrap();
        let scored: Vec<ScoredLabel> = scores
            .iter()
            .zip(&y)
            .map(|(&s, &l)| ScoredLabel::new(s, l == 1.0))
            .collect();
        assert!(super::super::auc(&scored).unwrap() >= 0.95);
    }

    #[test]
    fn gru_baseline_has_k_outputs() {
        let dims = ModelDims {
            n: 1,
            embed: 2,
            feedback: 2,
            hidden: 3,
            ..ModelDims::default()
        };
        let m = GruBaseline::new(dims, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.outputs(), 2);
    }

    #[test]
    fn lr_feature_layout() {
        let cat = ItemCatalog::new(
            vec!["a".into(), "b".into()],
            from_rows(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        )
        .unwrap();
        let t = Transition {
            state: State::new(vec![(ItemId(1), FeedbackClass::POSITIVE)], 1).unwrap(),
            action: ItemId(0),
            feedback: FeedbackClass::NEGATIVE,
            reward: 0.0,
            session: 0,
            position: 1,
        };
        let x = lr_features(&[t], &cat, 2).unwrap();
        assert_eq!(x.row(0).to_vec(), vec![0.3, 0.4, 0.0, 1.0, 0.1, 0.2]);
    }

    #[test]
    fn random_baseline_is_seeded() {
        let rows: Vec<Transition> = (0..50)
            .map(|i| Transition {
                state: State::new(vec![(ItemId(0), FeedbackClass::NEGATIVE)], 1).unwrap(),
                action: ItemId(0),
                feedback: FeedbackClass((i % 2) as u8),
                reward: 0.0,
                session: i,
                position: 1,
            })
            .collect();
        assert_eq!(
            baseline_random(&rows, 2, 4).unwrap(),
            baseline_random(&rows, 2, 4).unwrap()
        );
    }
}
