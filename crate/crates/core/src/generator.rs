//! The policy imitator: encodes a state into a preference vector and decodes
//! it into a synthetic item embedding in `(-1, 1)^|E|`.

use rand::Rng;

use crate::data::{FeedbackClass, ItemCatalog, ItemId, State};
use crate::discriminator::{fake_mass, Discriminator};
use crate::encoder::{ModelDims, StateBatch, StateEncoder};
use crate::error::{Error, Result};
use crate::nn::{dense_forward, gru_step, Activation, Binding, Dense, Graph, ParameterStore, Tensor, Var, PROB_FLOOR};

pub const PREFIX: &str = "gen";

#[derive(Debug, Clone)]
pub struct Generator {
    pub store: ParameterStore,
    pub dims: ModelDims,
    encoder: StateEncoder,
    decoder: Vec<Dense>,
}

impl Generator {
    /// Encoder plus a two-layer decoder (`H → H` tanh, `H → |E|` tanh).
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        let mut store = ParameterStore::new();
        let encoder = StateEncoder::new(&mut store, &format!("{PREFIX}.enc"), &dims, rng)?;
        let decoder = vec![
            Dense::new(
                &mut store,
                &format!("{PREFIX}.dec0"),
                dims.hidden,
                dims.hidden,
                Activation::Tanh,
                rng,
            )?,
            Dense::new(
                &mut store,
                &format!("{PREFIX}.dec1"),
                dims.hidden,
                dims.embed,
                Activation::Tanh,
                rng,
            )?,
        ];
        Ok(Self {
            store,
            dims,
            encoder,
            decoder,
        })
    }

    /// Rebuilds a generator around parameters loaded from a checkpoint.
    pub fn attach(store: ParameterStore, dims: ModelDims) -> Result<Self> {
        let encoder = StateEncoder::attach(&store, &format!("{PREFIX}.enc"))?;
        let decoder = vec![
            Dense::attach(&store, &format!("{PREFIX}.dec0"), Activation::Tanh)?,
            Dense::attach(&store, &format!("{PREFIX}.dec1"), Activation::Tanh)?,
        ];
        check_dims(&encoder, &decoder, &dims)?;
        Ok(Self {
            store,
            dims,
            encoder,
            decoder,
        })
    }

    pub fn decoder(&self) -> &[Dense] {
        &self.decoder
    }

    pub fn encoder(&self) -> &StateEncoder {
        &self.encoder
    }

    /// `G_θ(s)` for a batch, `[B × |E|]`.
    /// Parameters are read from `store`, normally `self.store`.
    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, binding: Binding, batch: &StateBatch) -> Result<Var> {
        let mut h = self.encoder.encode(g, store, binding, batch)?;
        for layer in &self.decoder {
            h = layer.forward(g, store, binding, h)?;
        }
        Ok(h)
    }

    pub fn generate_batch(&self, states: &[&State], catalog: &ItemCatalog) -> Result<Tensor> {
        let batch = StateBatch::new(states, catalog, self.dims.n, self.dims.k)?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &self.store, Binding::Frozen, &batch)?;
        Ok(g.value(out).clone())
    }

    /// `F_n = tanh(W_F f_n + b_F)`.
    pub fn feedback_embed(&self, f: FeedbackClass) -> Result<Vec<f64>> {
        dense_forward(&f.indicator(self.dims.k), &self.encoder.feedback.params(&self.store))
    }

    /// Preference vector `p^E`: the final GRU state over `concat(e_n, F_n)`.
    pub fn encode_state(&self, s: &State, catalog: &ItemCatalog) -> Result<Vec<f64>> {
        s.validate(catalog, self.dims.n)?;
        let cell = self.encoder.gru.params(&self.store);
        let mut h = vec![0.0; self.dims.hidden];
        for (item, f) in s.events() {
            let mut x = catalog.embedding(*item).to_vec();
            x.extend(self.feedback_embed(*f)?);
            h = gru_step(&h, &x, &cell)?;
        }
        Ok(h)
    }

    /// `G_θ(s)` for one state.
    pub fn generate(&self, s: &State, catalog: &ItemCatalog) -> Result<Vec<f64>> {
        let mut h = self.encode_state(s, catalog)?;
        for layer in &self.decoder {
            h = dense_forward(&h, &layer.params(&self.store))?;
        }
        Ok(h)
    }
}

fn check_dims(encoder: &StateEncoder, decoder: &[Dense], dims: &ModelDims) -> Result<()> {
    let checks = [
        ("feedback embedding input", encoder.feedback.input, dims.k),
        ("feedback embedding size", encoder.feedback.output, dims.feedback),
        ("encoder input", encoder.gru.input, dims.input()),
        ("encoder hidden", encoder.gru.hidden, dims.hidden),
        ("decoder output", decoder.last().map_or(0, |d| d.output), dims.embed),
    ];
    for (what, found, expected) in checks {
        if found != expected {
            return Err(Error::Dimension {
                what: what.into(),
                found,
                expected,
            });
        }
    }
    Ok(())
}

/// Mean over rows of the squared Euclidean distance `‖target − generated‖²`.
pub fn sup_loss_var(g: &mut Graph, generated: Var, targets: Var) -> Result<Var> {
    let diff = g.sub(targets, generated)?;
    let sq = g.square(diff);
    let per_entry = g.mean(sq);
    let cols = g.value(generated).ncols() as f64;
    Ok(g.scale(per_entry, cols))
}

/// Mean of `log D_φ(s, G_θ(s))`, the fake-block mass, clamped before the log.
pub fn unsup_loss_var(g: &mut Graph, fake: Var) -> Var {
    let logs = g.log_clamp(fake, PROB_FLOOR);
    g.mean(logs)
}

/// Target embeddings `[B × |E|]` for a batch of actions.
pub fn action_matrix(actions: &[ItemId], catalog: &ItemCatalog) -> Result<Tensor> {
    let dim = catalog.dim();
    let mut out = Tensor::zeros((actions.len(), dim));
    for (r, a) in actions.iter().enumerate() {
        catalog.check(*a)?;
        out.row_mut(r)
            .iter_mut()
            .zip(catalog.embedding(*a))
            .for_each(|(d, s)| *d = *s);
    }
    Ok(out)
}

/// Supervised generator loss on `(s, a)` pairs.
pub fn gen_sup_loss(batch: &[(&State, ItemId)], catalog: &ItemCatalog, gen: &Generator) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let states: Vec<&State> = batch.iter().map(|(s, _)| *s).collect();
    let actions: Vec<ItemId> = batch.iter().map(|(_, a)| *a).collect();
    let sb = StateBatch::new(&states, catalog, gen.dims.n, gen.dims.k)?;
    let mut g = Graph::new();
    let out = gen.forward(&mut g, &gen.store, Binding::Frozen, &sb)?;
    let t = g.constant(action_matrix(&actions, catalog)?);
    let loss = sup_loss_var(&mut g, out, t)?;
    Ok(g.scalar(loss))
}

/// Adversarial generator loss with the discriminator held fixed.
pub fn gen_unsup_loss(states: &[&State], catalog: &ItemCatalog, gen: &Generator, disc: &Discriminator) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let sb = StateBatch::new(states, catalog, gen.dims.n, gen.dims.k)?;
    let mut g = Graph::new();
    let fake = gen.forward(&mut g, &gen.store, Binding::Frozen, &sb)?;
    let logits = disc.logits(&mut g, &disc.store, Binding::Frozen, &sb, fake)?;
    let mass = fake_mass(&mut g, logits, disc.layout, disc.dims.k)?;
    let loss = unsup_loss_var(&mut g, mass);
    Ok(g.scalar(loss))
}

/// `L_G = L_G^unsup + β · L_G^sup`.
pub fn gen_loss(unsup: f64, sup: f64, beta: f64) -> Result<f64> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::contract(format!("beta must be >= 0, got {beta}")));
    }
    Ok(unsup + beta * sup)
}

/// Builds `L_G` on the graph and returns `(total, unsup, sup)`.
pub fn gen_loss_var(
    g: &mut Graph,
    gen: &Generator,
    store: &ParameterStore,
    disc: &Discriminator,
    batch: &StateBatch,
    targets: &Tensor,
    beta: f64,
) -> Result<(Var, Var, Var)> {
    let fake = gen.forward(g, store, Binding::Trainable, batch)?;
    let logits = disc.logits(g, &disc.store, Binding::Frozen, batch, fake)?;
    let mass = fake_mass(g, logits, disc.layout, disc.dims.k)?;
    let unsup = unsup_loss_var(g, mass);
    let t = g.constant(targets.clone());
    let sup = sup_loss_var(g, fake, t)?;
    let weighted = g.scale(sup, beta);
    let total = g.add(unsup, weighted)?;
    Ok((total, unsup, sup))
}
