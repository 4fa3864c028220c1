//! Simulator contract: purity, thread independence and feedback sampling.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use usersim_core::data::{synth_world, Dataset, FeedbackClass, ItemId, RewardMap, State, SynthConfig};
use usersim_core::env::{popular_policy, random_policy, EnvState, FeedbackMode, ResetSource, Simulator, StepOutcome};
use usersim_core::training::{init_models, train, Checkpoint, EnvBundle, TrainConfig};
use usersim_core::Error;

fn trained_checkpoint() -> Checkpoint {
    let synth = SynthConfig {
        catalog_size: 30,
        sessions: 80,
        min_length: 5,
        max_length: 8,
        dim: 4,
        prototypes: 3,
        temperature: 8.0,
        explore: 0.3,
        jitter: 0.05,
        ..SynthConfig::default()
    };
    let (corpus, _) = synth_world(&synth, 5).unwrap();
    let c = TrainConfig {
        n: 3,
        embed: 4,
        feedback: 3,
        hidden: 8,
        action: 4,
        head_hidden: 8,
        batch_size: 50,
        gen_pretrain_epochs: 1,
        disc_pretrain_epochs: 1,
        rounds: 2,
        seed: 4,
        ..TrainConfig::default()
    };
    let d = Dataset::new(corpus, c.n, c.k, c.reward_map().unwrap()).unwrap();
    let t = train(&d, &c).unwrap();
    Checkpoint::from_trained(&t, Some(EnvBundle::from_dataset(&d)))
}

fn run_episode(sim: &Simulator, episode: u64, horizon: usize) -> Vec<StepOutcome> {
    let mut env = sim.reset(ResetSource::Sampled, episode).unwrap();
    let mut policy = random_policy(sim.catalog().len(), episode);
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let a = policy(&env.state);
        let o = sim.step(&env, a).unwrap();
        env = o.next.clone();
        out.push(o);
    }
    out
}

#[test]
fn parallel_episodes_match_sequential_ones() {
    let ckpt = trained_checkpoint();
    let sim = Simulator::from_checkpoint(&ckpt, FeedbackMode::Sample, 21).unwrap();
    let sequential: Vec<_> = (0..8).map(|e| run_episode(&sim, e, 30)).collect();
    let parallel: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .rev()
            .map(|e| {
                (
                    e,
                    scope.spawn({
                        let sim = &sim;
                        move || run_episode(sim, e, 30)
                    }),
                )
            })
            .collect();
        let mut out: Vec<_> = handles.into_iter().map(|(e, h)| (e, h.join().unwrap())).collect();
        out.sort_by_key(|(e, _)| *e);
        out.into_iter().map(|(_, r)| r).collect()
    });
    assert_eq!(sequential, parallel);
}

#[test]
fn argmax_feedback_is_a_function_of_state_and_action() {
    let ckpt = trained_checkpoint();
    let sim = Simulator::from_checkpoint(&ckpt, FeedbackMode::Argmax, 0).unwrap();
    for (i, s) in sim.reset_states().iter().take(20).enumerate() {
        let a = ItemId((i % sim.catalog().len()) as u32);
        let outcomes: Vec<_> = (0..4)
            .map(|seed| {
                let env = sim.reset(ResetSource::Explicit(s.clone()), seed).unwrap();
                EnvState {
                    steps: seed as usize * 7,
                    ..env
                }
            })
            .map(|env| sim.step(&env, a).unwrap().feedback)
            .collect();
        assert!(outcomes.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn rewards_stay_in_the_reward_map_image() {
    let ckpt = trained_checkpoint();
    let popularity = ckpt.environment.as_ref().unwrap().popularity.clone();
    for mode in [FeedbackMode::Argmax, FeedbackMode::Sample] {
        let sim = Simulator::from_checkpoint(&ckpt, mode, 9).unwrap();
        let image = sim.rewards().values().to_vec();
        for e in 0..5 {
            let start = sim.reset(ResetSource::Sampled, e).unwrap();
            let t = sim.rollout(start, popular_policy(&popularity), 25).unwrap();
            assert!(t.steps.iter().all(|s| image.contains(&s.reward)));
            assert!(t.final_state.state.len() == sim.n());
        }
    }
}

#[test]
fn sampled_resets_cover_many_states() {
    let ckpt = trained_checkpoint();
    let sim = Simulator::from_checkpoint(&ckpt, FeedbackMode::Argmax, 3).unwrap();
    let distinct: std::collections::HashSet<State> = (0..1000)
        .map(|s| sim.reset(ResetSource::Sampled, s).unwrap().state)
        .collect();
    assert!(distinct.len() > 1);
    assert!(distinct.iter().all(|s| sim.reset_states().contains(s)));
}

#[test]
fn sampled_feedback_passes_a_chi_square_check() {
    // three feedback classes from an untrained network give non-trivial probabilities
    let c = TrainConfig {
        n: 2,
        k: 3,
        embed: 4,
        feedback: 2,
        hidden: 5,
        action: 3,
        head_hidden: 5,
        rewards: vec![-1.0, 0.0, 1.0],
        seed: 8,
        ..TrainConfig::default()
    };
    let ckpt = trained_checkpoint();
    let catalog = ckpt.environment.unwrap().catalog;
    let (_, disc) = init_models(&c, c.layout()).unwrap();
    let s = State::new(vec![(ItemId(1), FeedbackClass(2)), (ItemId(4), FeedbackClass(0))], 2).unwrap();
    let sim = Simulator::new(
        disc,
        catalog,
        RewardMap::new(c.rewards.clone()).unwrap(),
        vec![],
        FeedbackMode::Sample,
        77,
    )
    .unwrap();
    let action = ItemId(6);
    let p = sim.feedback_probabilities(&s, action).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let trials = 10_000;
    let mut counts = [0usize; 3];
    for seed in 0..trials {
        let env = sim.reset(ResetSource::Explicit(s.clone()), seed).unwrap();
        counts[sim.step(&env, action).unwrap().feedback.index()] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&p)
        .map(|(&o, &q)| {
            let e = q * trials as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new(2.0).unwrap().inverse_cdf(0.999);
    assert!(
        stat < critical,
        "chi-square {stat} >= {critical}, counts {counts:?}, p {p:?}"
    );
    assert!(matches!(sim.reset(ResetSource::Sampled, 0), Err(Error::Contract(_))));
}

#[test]
fn checkpoint_without_environment_cannot_simulate() {
    let mut ckpt = trained_checkpoint();
    ckpt.environment = None;
    assert!(matches!(
        Simulator::from_checkpoint(&ckpt, FeedbackMode::Argmax, 0),
        Err(Error::Contract(_))
    ));
}
