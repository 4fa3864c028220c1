//! State encoder shared (structurally, never by parameters) between the
//! generator and the discriminator: a feedback embedding
//! `F_n = tanh(W_F f_n + b_F)` shared across positions, concatenated with the
//! item embedding, then a GRU whose final hidden state summarizes the state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ItemCatalog, State};
use crate::error::{Error, Result};
use crate::nn::{Activation, Binding, Dense, Graph, Gru, ParameterStore, Tensor, Var};

/// Layer sizes shared by both networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// State length N.
    pub n: usize,
    /// Number of feedback classes K.
    pub k: usize,
    /// Item embedding size |E|.
    pub embed: usize,
    /// Feedback embedding size |F|.
    pub feedback: usize,
    /// GRU hidden size H.
    pub hidden: usize,
    /// Discriminator action encoding size.
    pub action: usize,
    /// Discriminator classifier hidden width.
    pub head_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            n: 20,
            k: 2,
            embed: 20,
            feedback: 10,
            hidden: 128,
            action: 32,
            head_hidden: 128,
        }
    }
}

impl ModelDims {
    /// GRU input size |I| = |E| + |F|.
    pub fn input(&self) -> usize {
        self.embed + self.feedback
    }
}

/// Per-position inputs of a mini-batch of states: item embeddings
/// `[B × |E|]` and one-hot feedback `[B × K]` for each of the N positions.
#[derive(Debug, Clone)]
pub struct StateBatch {
    pub items: Vec<Tensor>,
    pub feedback: Vec<Tensor>,
}

impl StateBatch {
    pub fn new(states: &[&State], catalog: &ItemCatalog, n: usize, k: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let b = states.len();
        let dim = catalog.dim();
        let mut items = vec![Tensor::zeros((b, dim)); n];
        let mut feedback = vec![Tensor::zeros((b, k)); n];
        for (r, s) in states.iter().enumerate() {
            s.validate(catalog, n)?;
            for (t, (item, f)) in s.events().iter().enumerate() {
                if f.index() >= k {
                    return Err(Error::shape(format!("feedback class {} with K={k}", f.index())));
                }
                items[t]
                    .row_mut(r)
                    .iter_mut()
                    .zip(catalog.embedding(*item))
                    .for_each(|(d, s)| *d = *s);
                feedback[t][[r, f.index()]] = 1.0;
            }
        }
        Ok(Self { items, feedback })
    }

    pub fn len(&self) -> usize {
        self.items[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct StateEncoder {
    pub feedback: Dense,
    pub gru: Gru,
}

impl StateEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        dims: &ModelDims,
        rng: &mut R,
    ) -> Result<Self> {
        let feedback = Dense::new(
            store,
            &format!("{prefix}.feedback"),
            dims.k,
            dims.feedback,
            Activation::Tanh,
            rng,
        )?;
        let gru = Gru::new(store, &format!("{prefix}.gru"), dims.input(), dims.hidden, rng)?;
        Ok(Self { feedback, gru })
    }

    pub fn attach(store: &ParameterStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            feedback: Dense::attach(store, &format!("{prefix}.feedback"), Activation::Tanh)?,
            gru: Gru::attach(store, &format!("{prefix}.gru"))?,
        })
    }

    /// Final GRU hidden state `[B × H]`.
    pub fn encode(&self, g: &mut Graph, store: &ParameterStore, binding: Binding, batch: &StateBatch) -> Result<Var> {
        let mut inputs = Vec::with_capacity(batch.items.len());
        for (e, f) in batch.items.iter().zip(&batch.feedback) {
            let e = g.constant(e.clone());
            let f = g.constant(f.clone());
            let fe = self.feedback.forward(g, store, binding, f)?;
            inputs.push(g.concat(&[e, fe])?);
        }
        self.gru.encode(g, store, binding, &inputs)
    }
}
