//! Training-loop, checkpoint and evaluation invariants on a small planted world.

use usersim_core::data::{synth_world, Corpus, Dataset, SynthConfig};
use usersim_core::eval::{eval_discriminator, eval_generator};
use usersim_core::training::{
    adversarial_train, init_models, load_checkpoint, pretrain_discriminator, pretrain_generator, save_checkpoint,
    train, Checkpoint, EnvBundle, Phase, Prepared, TrainConfig,
};
use usersim_core::Error;

fn world() -> Corpus {
    let synth = SynthConfig {
        catalog_size: 40,
        sessions: 120,
        min_length: 6,
        max_length: 10,
        dim: 4,
        temperature: 10.0,
        explore: 0.3,
        prototypes: 4,
        jitter: 0.05,
        ..SynthConfig::default()
    };
    synth_world(&synth, 3).unwrap().0
}

fn config() -> TrainConfig {
    TrainConfig {
        n: 3,
        embed: 4,
        feedback: 3,
        hidden: 8,
        action: 4,
        head_hidden: 8,
        batch_size: 64,
        gen_pretrain_epochs: 2,
        disc_pretrain_epochs: 2,
        rounds: 3,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn dataset(c: &TrainConfig) -> Dataset {
    Dataset::new(world(), c.n, c.k, c.reward_map().unwrap()).unwrap()
}

#[test]
fn identical_inputs_give_identical_parameters() {
    let c = config();
    let d = dataset(&c);
    let a = train(&d, &c).unwrap();
    let b = train(&d, &c).unwrap();
    assert!(a.generator.store.values_bit_equal(&b.generator.store));
    assert!(a.discriminator.store.values_bit_equal(&b.discriminator.store));
    assert_eq!(a.adversarial, b.adversarial);
    let other = train(&d, &TrainConfig { seed: 12, ..c }).unwrap();
    assert!(!a.generator.store.values_bit_equal(&other.generator.store));
}

#[test]
fn every_discriminator_step_is_balanced() {
    let c = TrainConfig {
        d_steps: 3,
        g_steps: 2,
        ..config()
    };
    let t = train(&dataset(&c), &c).unwrap();
    let disc_steps: Vec<_> = t
        .adversarial
        .steps
        .iter()
        .filter(|s| s.phase == Phase::Discriminator)
        .collect();
    assert_eq!(disc_steps.len(), 3 * c.rounds);
    assert!(disc_steps.iter().all(|s| s.reals == s.fakes && s.reals > 0));
    let gen_steps = t
        .adversarial
        .steps
        .iter()
        .filter(|s| s.phase == Phase::Generator)
        .count();
    assert_eq!(gen_steps, 2 * c.rounds);
}

#[test]
fn each_phase_only_moves_its_own_network() {
    let c = config();
    let d = dataset(&c);
    let data = Prepared::new(&d, &c).unwrap();
    let (mut gen, mut disc) = init_models(&c, c.layout()).unwrap();

    let disc_before = disc.store.clone();
    let gen_before = gen.store.clone();
    pretrain_generator(&mut gen, &data, &c).unwrap();
    assert!(disc.store.values_bit_equal(&disc_before));
    assert!(!gen.store.values_bit_equal(&gen_before));

    let gen_snapshot = gen.store.clone();
    pretrain_discriminator(&mut disc, &gen, &data, &c).unwrap();
    assert!(gen.store.values_bit_equal(&gen_snapshot));
    assert!(!disc.store.values_bit_equal(&disc_before));

    // generator-only rounds leave the discriminator untouched and vice versa
    let disc_snapshot = disc.store.clone();
    let g_only = TrainConfig {
        d_steps: 0,
        g_steps: 2,
        ..c.clone()
    };
    adversarial_train(&mut gen, &mut disc, &data, &g_only).unwrap();
    assert!(disc.store.values_bit_equal(&disc_snapshot));
    assert!(!gen.store.values_bit_equal(&gen_snapshot));

    let gen_snapshot = gen.store.clone();
    let d_only = TrainConfig {
        d_steps: 2,
        g_steps: 0,
        ..c
    };
    adversarial_train(&mut gen, &mut disc, &data, &d_only).unwrap();
    assert!(gen.store.values_bit_equal(&gen_snapshot));
    assert!(!disc.store.values_bit_equal(&disc_snapshot));
}

fn moving_average(xs: &[f64], w: usize) -> (f64, f64) {
    let head = xs[..w].iter().sum::<f64>() / w as f64;
    let tail = xs[xs.len() - w..].iter().sum::<f64>() / w as f64;
    (head, tail)
}

#[test]
fn pretraining_losses_trend_down() {
    let c = TrainConfig {
        gen_pretrain_epochs: 25,
        disc_pretrain_epochs: 25,
        lr: 0.01,
        ..config()
    };
    let d = dataset(&c);
    let data = Prepared::new(&d, &c).unwrap();
    let (mut gen, mut disc) = init_models(&c, c.layout()).unwrap();
    let g = pretrain_generator(&mut gen, &data, &c).unwrap();
    assert!(g.steps.len() >= 20);
    let (start, end) = moving_average(&g.steps, 10);
    assert!(end < start, "generator: {start} -> {end}");
    let dl = pretrain_discriminator(&mut disc, &gen, &data, &c).unwrap();
    let (start, end) = moving_average(&dl.steps, 10);
    assert!(end < start, "discriminator: {start} -> {end}");
}

#[test]
fn checkpoint_file_round_trip_is_bit_exact() {
    let c = config();
    let d = dataset(&c);
    let t = train(&d, &c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ckpt = Checkpoint::from_trained(&t, Some(EnvBundle::from_dataset(&d)));
    save_checkpoint(&ckpt, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert!(back.generator.store.values_bit_equal(&t.generator.store));
    assert!(back.discriminator.store.values_bit_equal(&t.discriminator.store));
    assert_eq!(back.config, c);
    assert_eq!(back.round, c.rounds);
    assert_eq!(back.environment, ckpt.environment);
    assert!(matches!(
        load_checkpoint(&dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn checkpoint_with_mismatched_config_is_rejected() {
    let c = config();
    let t = train(&dataset(&c), &c).unwrap();
    let bytes = Checkpoint::from_trained(&t, None).encode().unwrap();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let line = text.lines().find(|l| l.starts_with("config ")).unwrap().to_string();
    let edited = line.replace("\"hidden\":8", "\"hidden\":9");
    assert_ne!(edited, line);
    let needle = line.as_bytes();
    let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    let mut out = bytes[..at].to_vec();
    out.extend_from_slice(edited.as_bytes());
    out.extend_from_slice(&bytes[at + needle.len()..]);
    match Checkpoint::decode(&out) {
        Err(e @ Error::Dimension { .. }) => assert_eq!(e.exit_code(), 2),
        other => panic!("expected a dimension error, got {:?}", other.err()),
    }
}

#[test]
fn evaluation_leaves_the_dataset_untouched() {
    let c = config();
    let d = dataset(&c);
    let t = train(&d, &c).unwrap();
    let before = serde_json::to_string(&d.corpus).unwrap();
    let test = d.test();
    let test_before = test.clone();
    eval_discriminator(&test, &t.discriminator, d.catalog()).unwrap();
    eval_generator(&test, &t.generator, d.catalog(), 10).unwrap();
    assert_eq!(serde_json::to_string(&d.corpus).unwrap(), before);
    assert_eq!(test, test_before);
}
