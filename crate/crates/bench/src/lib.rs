//! Shared fixtures for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use usersim_core::data::{synth_world, Dataset, SynthConfig, Transition};
use usersim_core::discriminator::{Discriminator, HeadLayout};
use usersim_core::generator::{action_matrix, Generator};
use usersim_core::nn::Tensor;
use usersim_core::training::TrainConfig;

/// A synthetic dataset and freshly initialized networks at paper-scale
/// layer sizes with the given state length.
pub struct Fixture {
    pub dataset: Dataset,
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl Fixture {
    pub fn new(n: usize) -> Self {
        let synth = SynthConfig {
            sessions: 400,
            min_length: n + 2,
            max_length: n + 6,
            ..SynthConfig::default()
        };
        let (corpus, _) = synth_world(&synth, 11).expect("synthetic world");
        let config = TrainConfig {
            n,
            ..TrainConfig::default()
        };
        let dataset = Dataset::new(corpus, n, config.k, config.reward_map().unwrap()).expect("dataset");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let generator = Generator::new(config.dims(), &mut rng).unwrap();
        let discriminator = Discriminator::new(config.dims(), HeadLayout::Full, &mut rng).unwrap();
        Self {
            dataset,
            config,
            generator,
            discriminator,
        }
    }

    /// The first `size` training transitions.
    pub fn batch(&self, size: usize) -> Vec<Transition> {
        self.dataset.train().into_iter().take(size).collect()
    }

    pub fn targets(&self, batch: &[Transition]) -> Tensor {
        let actions: Vec<_> = batch.iter().map(|t| t.action).collect();
        action_matrix(&actions, self.dataset.catalog()).unwrap()
    }
}
