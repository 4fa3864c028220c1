//! Pre-training and the alternating adversarial loop.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::data::{upsample_positive, Dataset, FeedbackClass, ItemCatalog, State, Transition};
use crate::discriminator::{Discriminator, HeadLayout};
use crate::encoder::StateBatch;
use crate::error::{Error, Result};
use crate::eval::metrics::{auc, ScoredLabel};
use crate::generator::{action_matrix, gen_loss_var, sup_loss_var, Generator};
use crate::nn::{adam_step, Binding, Graph, Tensor};

/// Independent random streams derived from the run seed, so that changing
/// one phase's consumption never shifts another phase.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    GeneratorInit = 1,
    DiscriminatorInit = 2,
    Upsample = 3,
    GeneratorPretrain = 4,
    DiscriminatorPretrain = 5,
    Adversarial = 6,
    Validation = 7,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Seeded initial networks for `config`.
pub fn init_models(config: &TrainConfig, layout: HeadLayout) -> Result<(Generator, Discriminator)> {
    config.validate()?;
    let gen = Generator::new(config.dims(), &mut rng(config.seed, Stream::GeneratorInit))?;
    let disc = Discriminator::new(config.dims(), layout, &mut rng(config.seed, Stream::DiscriminatorInit))?;
    Ok((gen, disc))
}

/// Training inputs derived from a dataset: the (possibly up-sampled) stream
/// the optimizers see and an untouched validation sample.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub catalog: ItemCatalog,
    pub stream: Vec<Transition>,
    pub validation: Vec<Transition>,
}

impl Prepared {
    pub fn new(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        check_dataset(dataset, config)?;
        let train = dataset.train();
        if train.is_empty() {
            return Err(Error::contract("training split is empty"));
        }
        let upsample_seed = config.seed ^ (Stream::Upsample as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let stream = upsample_positive(&train, config.k, config.upsample_ratio, upsample_seed)?;
        let mut idx: Vec<usize> = (0..train.len()).collect();
        idx.shuffle(&mut rng(config.seed, Stream::Validation));
        idx.truncate(config.validation_size);
        idx.sort_unstable();
        let validation = idx.into_iter().map(|i| train[i].clone()).collect();
        Ok(Self {
            catalog: dataset.catalog().clone(),
            stream,
            validation,
        })
    }
}

/// Fails when the dataset and the configuration disagree on sizes.
pub fn check_dataset(dataset: &Dataset, config: &TrainConfig) -> Result<()> {
    for (what, found, expected) in [
        ("item embedding size |E|", dataset.catalog().dim(), config.embed),
        ("state length N", dataset.n, config.n),
        ("feedback classes K", dataset.k, config.k),
    ] {
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

/// Reshuffled passes over `0..len` in chunks of `batch`.
#[derive(Debug, Clone)]
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(len: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..len).collect(),
            cursor: len,
            batch,
            rng,
        }
    }

    /// The next chunk; a new shuffled pass starts when the current one is
    /// exhausted, so a pass may end with a short chunk.
    fn next(&mut self) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let lo = self.cursor;
        self.cursor = (lo + self.batch).min(self.order.len());
        &self.order[lo..self.cursor]
    }

    fn batches_per_pass(&self) -> usize {
        self.order.len().div_ceil(self.batch)
    }
}

/// A mini-batch in network form.
struct MiniBatch {
    states: StateBatch,
    actions: Tensor,
    feedback: Vec<FeedbackClass>,
}

impl MiniBatch {
    fn new(rows: &[&Transition], catalog: &ItemCatalog, config: &TrainConfig) -> Result<Self> {
        let states: Vec<&State> = rows.iter().map(|t| &t.state).collect();
        let actions: Vec<_> = rows.iter().map(|t| t.action).collect();
        Ok(Self {
            states: StateBatch::new(&states, catalog, config.n, config.k)?,
            actions: action_matrix(&actions, catalog)?,
            feedback: rows.iter().map(|t| t.feedback).collect(),
        })
    }

    fn from_stream(
        stream: &mut BatchStream,
        data: &[Transition],
        catalog: &ItemCatalog,
        config: &TrainConfig,
    ) -> Result<Self> {
        let rows: Vec<&Transition> = stream.next().iter().map(|&i| &data[i]).collect();
        Self::new(&rows, catalog, config)
    }
}

/// Per-epoch means and per-step values of a pre-training loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub epochs: Vec<f64>,
    pub steps: Vec<f64>,
}

fn guard(value: f64, round: usize, step: usize, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence {
            round,
            step,
            what: format!("{what} is {value}"),
        })
    }
}

/// Minimizes the supervised generator loss for `gen_pretrain_epochs`.
pub fn pretrain_generator(gen: &mut Generator, data: &Prepared, config: &TrainConfig) -> Result<LossCurve> {
    if data.stream.is_empty() {
        return Err(Error::contract("training split is empty"));
    }
    let adam = config.adam();
    let mut batches = BatchStream::new(
        data.stream.len(),
        config.batch_size,
        rng(config.seed, Stream::GeneratorPretrain),
    );
    let mut curve = LossCurve::default();
    for epoch in 0..config.gen_pretrain_epochs {
        let mut sum = 0.0;
        let per_pass = batches.batches_per_pass();
        for _ in 0..per_pass {
            let mb = MiniBatch::from_stream(&mut batches, &data.stream, &data.catalog, config)?;
            let mut g = Graph::new();
            let out = gen.forward(&mut g, &gen.store, Binding::Trainable, &mb.states)?;
            let target = g.constant(mb.actions);
            let loss = sup_loss_var(&mut g, out, target)?;
            let value = guard(g.scalar(loss), 0, curve.steps.len() + 1, "generator pre-training loss")?;
            g.backward(loss, &mut gen.store)?;
            adam_step(&mut gen.store, &adam)?;
            curve.steps.push(value);
            sum += value;
        }
        curve.epochs.push(sum / per_pass as f64);
        debug!(
            "generator pre-training epoch {} loss {:.5}",
            epoch + 1,
            curve.epochs[epoch]
        );
    }
    Ok(curve)
}

/// Minimizes the supervised discriminator loss for `disc_pretrain_epochs`,
/// each real batch paired with the same number of generated actions from the
/// frozen generator.
pub fn pretrain_discriminator(
    disc: &mut Discriminator,
    gen: &Generator,
    data: &Prepared,
    config: &TrainConfig,
) -> Result<LossCurve> {
    if data.stream.is_empty() {
        return Err(Error::contract("training split is empty"));
    }
    let adam = config.adam();
    let weights = config.disc_weights();
    let mut batches = BatchStream::new(
        data.stream.len(),
        config.batch_size,
        rng(config.seed, Stream::DiscriminatorPretrain),
    );
    let mut curve = LossCurve::default();
    for epoch in 0..config.disc_pretrain_epochs {
        let mut sum = 0.0;
        let per_pass = batches.batches_per_pass();
        for _ in 0..per_pass {
            let mb = MiniBatch::from_stream(&mut batches, &data.stream, &data.catalog, config)?;
            let fake = generate(gen, &mb.states)?;
            let mut g = Graph::new();
            let l = disc.loss_var(
                &mut g,
                &disc.store,
                Binding::Trainable,
                &mb.states,
                &mb.actions,
                &fake,
                &mb.feedback,
                weights,
            )?;
            let value = guard(
                g.scalar(l.sup),
                0,
                curve.steps.len() + 1,
                "discriminator pre-training loss",
            )?;
            g.backward(l.sup, &mut disc.store)?;
            adam_step(&mut disc.store, &adam)?;
            curve.steps.push(value);
            sum += value;
        }
        curve.epochs.push(sum / per_pass as f64);
        debug!(
            "discriminator pre-training epoch {} loss {:.5}",
            epoch + 1,
            curve.epochs[epoch]
        );
    }
    Ok(curve)
}

fn generate(gen: &Generator, states: &StateBatch) -> Result<Tensor> {
    let mut g = Graph::new();
    let out = gen.forward(&mut g, &gen.store, Binding::Frozen, states)?;
    Ok(g.value(out).clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Discriminator,
    Generator,
}

/// One optimizer step of the adversarial loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: usize,
    pub phase: Phase,
    pub loss: f64,
    pub unsup: f64,
    pub sup: f64,
    pub reals: usize,
    pub fakes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Mean discriminator loss over the round's steps (`NaN`-free; `None`
    /// when `d_steps = 0`).
    pub disc_loss: Option<f64>,
    pub gen_loss: Option<f64>,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversarialTrace {
    pub rounds: Vec<RoundRecord>,
    pub steps: Vec<StepRecord>,
    pub stopped_early: bool,
}

/// Validation AUC of the discriminator's positive score, `None` when the
/// sample holds a single class.
pub fn validation_auc(disc: &Discriminator, validation: &[Transition], catalog: &ItemCatalog) -> Result<Option<f64>> {
    if validation.is_empty() {
        return Ok(None);
    }
    let k = disc.dims.k;
    let mut samples = Vec::with_capacity(validation.len());
    for chunk in validation.chunks(1000) {
        let pairs: Vec<_> = chunk.iter().map(|t| (&t.state, t.action)).collect();
        for ((_, score), t) in disc.predict_batch(&pairs, catalog)?.into_iter().zip(chunk) {
            samples.push(ScoredLabel::new(score, t.feedback.is_positive(k)));
        }
    }
    match auc(&samples) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// True when the best validation AUC of the last `patience` rounds beats the
/// best before them by less than `delta`.
fn plateaued(history: &[f64], patience: usize, delta: f64) -> bool {
    if history.len() <= patience {
        return false;
    }
    let split = history.len() - patience;
    let before = history[..split].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let recent = history[split..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    recent - before < delta
}

/// Alternates `d_steps` discriminator updates and `g_steps` generator
/// updates for up to `rounds` rounds.
pub fn adversarial_train(
    gen: &mut Generator,
    disc: &mut Discriminator,
    data: &Prepared,
    config: &TrainConfig,
) -> Result<AdversarialTrace> {
    let mut trace = AdversarialTrace::default();
    if config.rounds == 0 || (config.d_steps == 0 && config.g_steps == 0) {
        return Ok(trace);
    }
    if data.stream.is_empty() {
        return Err(Error::contract("training split is empty"));
    }
    let adam = config.adam();
    let weights = config.disc_weights();
    let mut batches = BatchStream::new(
        data.stream.len(),
        config.batch_size,
        rng(config.seed, Stream::Adversarial),
    );
    let mut history = Vec::new();
    let mut step = 0;
    for round in 1..=config.rounds {
        let mut d_losses = Vec::with_capacity(config.d_steps);
        for _ in 0..config.d_steps {
            step += 1;
            let mb = MiniBatch::from_stream(&mut batches, &data.stream, &data.catalog, config)?;
            let fake = generate(gen, &mb.states)?;
            debug_assert_eq!(fake.nrows(), mb.actions.nrows());
            let mut g = Graph::new();
            let l = disc.loss_var(
                &mut g,
                &disc.store,
                Binding::Trainable,
                &mb.states,
                &mb.actions,
                &fake,
                &mb.feedback,
                weights,
            )?;
            let loss = guard(g.scalar(l.total), round, step, "discriminator loss")?;
            g.backward(l.total, &mut disc.store)?;
            adam_step(&mut disc.store, &adam)?;
            d_losses.push(loss);
            trace.steps.push(StepRecord {
                round,
                phase: Phase::Discriminator,
                loss,
                unsup: g.scalar(l.unsup),
                sup: g.scalar(l.sup),
                reals: mb.actions.nrows(),
                fakes: fake.nrows(),
            });
        }
        let mut g_losses = Vec::with_capacity(config.g_steps);
        for _ in 0..config.g_steps {
            step += 1;
            let mb = MiniBatch::from_stream(&mut batches, &data.stream, &data.catalog, config)?;
            let mut g = Graph::new();
            let (total, unsup, sup) =
                gen_loss_var(&mut g, gen, &gen.store, disc, &mb.states, &mb.actions, config.beta)?;
            let loss = guard(g.scalar(total), round, step, "generator loss")?;
            g.backward(total, &mut gen.store)?;
            adam_step(&mut gen.store, &adam)?;
            g_losses.push(loss);
            trace.steps.push(StepRecord {
                round,
                phase: Phase::Generator,
                loss,
                unsup: g.scalar(unsup),
                sup: g.scalar(sup),
                reals: mb.actions.nrows(),
                fakes: mb.actions.nrows(),
            });
        }
        let validation_auc = validation_auc(disc, &data.validation, &data.catalog)?;
        let record = RoundRecord {
            round,
            disc_loss: mean(&d_losses),
            gen_loss: mean(&g_losses),
            validation_auc,
        };
        info!(
            "round {round}: L_D {:?} L_G {:?} validation AUC {:?}",
            record.disc_loss, record.gen_loss, record.validation_auc
        );
        trace.rounds.push(record);
        if let Some(v) = validation_auc {
            history.push(v);
        }
        if config.early_stop && plateaued(&history, config.early_stop_patience, config.early_stop_delta) {
            trace.stopped_early = true;
            break;
        }
    }
    Ok(trace)
}

/// Everything a training run produced.
#[derive(Debug, Clone)]
pub struct Trained {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub config: TrainConfig,
    pub gen_pretrain: LossCurve,
    pub disc_pretrain: LossCurve,
    pub adversarial: AdversarialTrace,
}

impl Trained {
    pub fn rounds_run(&self) -> usize {
        self.adversarial.rounds.len()
    }
}

/// Pre-trains both networks. The effective config must already carry its
/// variant overrides.
pub fn pretrain(dataset: &Dataset, config: &TrainConfig) -> Result<Trained> {
    let data = Prepared::new(dataset, config)?;
    let (mut gen, mut disc) = init_models(config, config.layout())?;
    let gen_pretrain = pretrain_generator(&mut gen, &data, config)?;
    let disc_pretrain = pretrain_discriminator(&mut disc, &gen, &data, config)?;
    Ok(Trained {
        generator: gen,
        discriminator: disc,
        config: config.clone(),
        gen_pretrain,
        disc_pretrain,
        adversarial: AdversarialTrace::default(),
    })
}

/// The full recipe: pre-training followed by the adversarial rounds.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<Trained> {
    let data = Prepared::new(dataset, config)?;
    let (mut gen, mut disc) = init_models(config, config.layout())?;
    let gen_pretrain = pretrain_generator(&mut gen, &data, config)?;
    info!("generator pre-training done: {:?}", gen_pretrain.epochs);
    let disc_pretrain = pretrain_discriminator(&mut disc, &gen, &data, config)?;
    info!("discriminator pre-training done: {:?}", disc_pretrain.epochs);
    let adversarial = adversarial_train(&mut gen, &mut disc, &data, config)?;
    Ok(Trained {
        generator: gen,
        discriminator: disc,
        config: config.clone(),
        gen_pretrain,
        disc_pretrain,
        adversarial,
    })
}
