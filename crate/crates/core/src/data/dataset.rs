use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::ItemCatalog;
use super::io::Corpus;
use super::mdp::{build_transitions, RewardMap, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// A corpus with its derived transitions, each tagged train or test.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub n: usize,
    pub k: usize,
    pub rewards: RewardMap,
    transitions: Vec<Transition>,
    split: Vec<Split>,
}

impl Dataset {
    /// Builds sliding-window transitions for every session and tags each
    /// session's final transition as test.
    pub fn new(corpus: Corpus, n: usize, k: usize, rewards: RewardMap) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("N must be positive"));
        }
        if rewards.classes() != k {
            return Err(Error::config(format!(
                "reward map has {} classes, K is {k}",
                rewards.classes()
            )));
        }
        let mut transitions = Vec::new();
        for (i, s) in corpus.sessions.iter().enumerate() {
            if let Some((_, f)) = s.events.iter().find(|(_, f)| f.index() >= k) {
                return Err(Error::contract(format!("session `{}` has class {} >= K", s.id, f.0)));
            }
            transitions.extend(build_transitions(s, i, n, &rewards));
        }
        let split = split_tags(&transitions);
        Ok(Self {
            corpus,
            n,
            k,
            rewards,
            transitions,
            split,
        })
    }

    pub fn catalog(&self) -> &ItemCatalog {
        &self.corpus.catalog
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn tags(&self) -> &[Split] {
        &self.split
    }

    pub fn split_train_test(&self) -> (Vec<Transition>, Vec<Transition>) {
        split_train_test(&self.transitions)
    }

    pub fn train(&self) -> Vec<Transition> {
        self.split_train_test().0
    }

    pub fn test(&self) -> Vec<Transition> {
        self.split_train_test().1
    }

    /// Number of sessions that contributed at least one transition.
    pub fn contributing_sessions(&self) -> usize {
        self.split.iter().filter(|s| **s == Split::Test).count()
    }
}

fn split_tags(transitions: &[Transition]) -> Vec<Split> {
    (0..transitions.len())
        .map(|i| match transitions.get(i + 1) {
            Some(next) if next.session == transitions[i].session => Split::Train,
            _ => Split::Test,
        })
        .collect()
}

/// Puts each session's last transition into the test set and all earlier
/// ones into the training set. Expects transitions grouped by session in
/// chronological order, as produced by [`build_transitions`].
pub fn split_train_test(transitions: &[Transition]) -> (Vec<Transition>, Vec<Transition>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (t, tag) in transitions.iter().zip(split_tags(transitions)) {
        match tag {
            Split::Train => train.push(t.clone()),
            Split::Test => test.push(t.clone()),
        }
    }
    (train, test)
}

/// Appends seeded duplicates of positive transitions until the positive
/// share reaches `target_ratio`. Returns the input unchanged if the share is
/// already high enough.
pub fn upsample_positive(train: &[Transition], k: usize, target_ratio: f64, seed: u64) -> Result<Vec<Transition>> {
    if !(0.0..=1.0).contains(&target_ratio) {
        return Err(Error::config(format!("target ratio {target_ratio} outside [0, 1]")));
    }
    let positives: Vec<&Transition> = train.iter().filter(|t| t.feedback.is_positive(k)).collect();
    let total = train.len();
    let p = positives.len();
    if target_ratio == 0.0 || (total > 0 && p as f64 >= target_ratio * total as f64) {
        return Ok(train.to_vec());
    }
    if p == 0 {
        return Err(Error::Unsatisfiable(format!(
            "no positive transitions to reach ratio {target_ratio}"
        )));
    }
    if target_ratio >= 1.0 {
        return Err(Error::Unsatisfiable(
            "ratio 1 needs every transition positive; negatives are never removed".into(),
        ));
    }
    // smallest k with (p + k) >= ratio * (total + k)
    let need = ((target_ratio * total as f64 - p as f64) / (1.0 - target_ratio)).ceil();
    let mut extra = need.max(0.0) as usize;
    while ((p + extra) as f64) < target_ratio * (total + extra) as f64 {
        extra += 1;
    }
    while extra > 0 && ((p + extra - 1) as f64) >= target_ratio * (total + extra - 1) as f64 {
        extra -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = train.to_vec();
    out.extend((0..extra).map(|_| (*positives.choose(&mut rng).expect("nonempty")).clone()));
    Ok(out)
}
