//! A gym-style environment around a trained discriminator.
//!
//! The simulator is immutable and can be shared between threads. Each
//! episode carries its own seed; in sample mode the draw at step `t` depends
//! only on `(episode seed, t)`, so stepping is a pure function of its inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{next_state, FeedbackClass, ItemCatalog, ItemId, RewardMap, State};
use crate::discriminator::{class_probs, decide, Discriminator};
use crate::error::{Error, Result};
use crate::training::{Checkpoint, EnvBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackMode {
    /// Most likely real-block class, ties toward the more positive class.
    Argmax,
    /// A draw from the renormalized real-block probabilities.
    Sample,
}

impl std::str::FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(FeedbackMode::Argmax),
            "sample" => Ok(FeedbackMode::Sample),
            other => Err(Error::config(format!("unknown feedback mode `{other}`"))),
        }
    }
}

/// Where an episode starts.
#[derive(Debug, Clone, PartialEq)]
pub enum ResetSource {
    /// A uniformly drawn held-out initial state.
    Sampled,
    Explicit(State),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub state: State,
    pub steps: usize,
    pub episode_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub feedback: FeedbackClass,
    pub reward: f64,
    pub next: EnvState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: State,
    pub action: ItemId,
    pub feedback: FeedbackClass,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub total_reward: f64,
    pub final_state: EnvState,
}

/// SplitMix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Simulator {
    disc: Discriminator,
    catalog: ItemCatalog,
    rewards: RewardMap,
    reset_states: Vec<State>,
    mode: FeedbackMode,
    base_seed: u64,
}

impl Simulator {
    pub fn new(
        disc: Discriminator,
        catalog: ItemCatalog,
        rewards: RewardMap,
        reset_states: Vec<State>,
        mode: FeedbackMode,
        base_seed: u64,
    ) -> Result<Self> {
        let n = disc.dims.n;
        if catalog.dim() != disc.dims.embed {
            return Err(Error::Dimension {
                what: "catalog embedding size".into(),
                found: catalog.dim(),
                expected: disc.dims.embed,
            });
        }
        if rewards.classes() != disc.dims.k {
            return Err(Error::config(format!(
                "reward map has {} classes, K is {}",
                rewards.classes(),
                disc.dims.k
            )));
        }
        for s in &reset_states {
            s.validate(&catalog, n)?;
        }
        Ok(Self {
            disc,
            catalog,
            rewards,
            reset_states,
            mode,
            base_seed,
        })
    }

    /// Builds a simulator from a checkpoint that carries its environment.
    pub fn from_checkpoint(ckpt: &Checkpoint, mode: FeedbackMode, base_seed: u64) -> Result<Self> {
        let EnvBundle {
            catalog, reset_states, ..
        } = ckpt
            .environment
            .clone()
            .ok_or_else(|| Error::contract("checkpoint has no environment bundle"))?;
        Self::new(
            ckpt.discriminator.clone(),
            catalog,
            ckpt.config.reward_map()?,
            reset_states,
            mode,
            base_seed,
        )
    }

    pub fn catalog(&self) -> &ItemCatalog {
        &self.catalog
    }

    pub fn rewards(&self) -> &RewardMap {
        &self.rewards
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.disc.dims.n
    }

    pub fn reset_states(&self) -> &[State] {
        &self.reset_states
    }

    /// Starts an episode. The episode seed mixes the base seed with `seed`.
    pub fn reset(&self, source: ResetSource, seed: u64) -> Result<EnvState> {
        let episode_seed = mix(self.base_seed ^ mix(seed));
        let state = match source {
            ResetSource::Explicit(s) => {
                s.validate(&self.catalog, self.n())?;
                s
            }
            ResetSource::Sampled => {
                if self.reset_states.is_empty() {
                    return Err(Error::contract("no initial states to sample from"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
                self.reset_states[rng.random_range(0..self.reset_states.len())].clone()
            }
        };
        Ok(EnvState {
            state,
            steps: 0,
            episode_seed,
        })
    }

    /// Probability of each feedback class (indexed by class) for recommending
    /// `action` in `s`: the real block renormalized to sum to one.
    pub fn feedback_probabilities(&self, s: &State, action: ItemId) -> Result<Vec<f64>> {
        self.catalog.check(action)?;
        let k = self.disc.dims.k;
        let p = class_probs(&self.disc.classify(s, self.catalog.embedding(action), &self.catalog)?)?;
        let mass: f64 = p[..k].iter().sum();
        Ok((0..k).map(|c| p[FeedbackClass(c as u8).logit_slot(k)] / mass).collect())
    }

    /// Applies `action`; `env` is left untouched.
    pub fn step(&self, env: &EnvState, action: ItemId) -> Result<StepOutcome> {
        self.catalog.check(action)?;
        let k = self.disc.dims.k;
        let feedback = match self.mode {
            FeedbackMode::Argmax => {
                let logits = self
                    .disc
                    .classify(&env.state, self.catalog.embedding(action), &self.catalog)?;
                decide(&class_probs(&logits)?, k)?.0
            }
            FeedbackMode::Sample => {
                let probs = self.feedback_probabilities(&env.state, action)?;
                let mut rng = ChaCha8Rng::seed_from_u64(env.episode_seed);
                rng.set_stream(env.steps as u64);
                let u: f64 = rng.random();
                // walk classes from the most positive, matching logit slot order
                let mut acc = 0.0;
                let mut chosen = FeedbackClass::from_logit_slot(k - 1, k);
                for slot in 0..k {
                    let class = FeedbackClass::from_logit_slot(slot, k);
                    acc += probs[class.index()];
                    if u < acc {
                        chosen = class;
                        break;
                    }
                }
                chosen
            }
        };
        let next = EnvState {
            state: next_state(&env.state, action, feedback, &self.catalog)?,
            steps: env.steps + 1,
            episode_seed: env.episode_seed,
        };
        Ok(StepOutcome {
            feedback,
            reward: self.rewards.reward(feedback),
            next,
        })
    }

    /// Runs `policy` for `horizon` steps from `start`.
    pub fn rollout<P>(&self, start: EnvState, mut policy: P, horizon: usize) -> Result<Trajectory>
    where
        P: FnMut(&State) -> ItemId,
    {
        if horizon == 0 {
            return Err(Error::contract("horizon must be >= 1"));
        }
        let mut env = start;
        let mut steps = Vec::with_capacity(horizon);
        let mut total = 0.0;
        for t in 0..horizon {
            let action = policy(&env.state);
            if !self.catalog.contains(action) {
                return Err(Error::UnknownItem(format!(
                    "#{} returned by the policy at step {}",
                    action.0,
                    t + 1
                )));
            }
            let out = self.step(&env, action)?;
            total += out.reward;
            steps.push(TrajectoryStep {
                state: env.state.clone(),
                action,
                feedback: out.feedback,
                reward: out.reward,
            });
            env = out.next;
        }
        Ok(Trajectory {
            steps,
            total_reward: total,
            final_state: env,
        })
    }
}

/// Uniformly random recommendations.
pub fn random_policy(catalog_size: usize, seed: u64) -> impl FnMut(&State) -> ItemId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |_| ItemId(rng.random_range(0..catalog_size) as u32)
}

/// The most logged item that is not already in the state window.
pub fn popular_policy(popularity: &[usize]) -> impl FnMut(&State) -> ItemId {
    let mut order: Vec<usize> = (0..popularity.len()).collect();
    order.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));
    move |s: &State| {
        let seen = |i: usize| s.events().iter().any(|(item, _)| item.index() == i);
        let pick = order.iter().copied().find(|&i| !seen(i)).unwrap_or(order[0]);
        ItemId(pick as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminator::HeadLayout;
    use crate::encoder::ModelDims;
    use crate::nn::tensor::{from_rows, row};
    use crate::nn::Tensor;

    fn dims() -> ModelDims {
        ModelDims {
            n: 2,
            k: 2,
            embed: 2,
            feedback: 2,
            hidden: 3,
            action: 2,
            head_hidden: 3,
        }
    }

    fn catalog() -> ItemCatalog {
        ItemCatalog::new(
            vec!["a".into(), "b".into(), "c".into()],
            from_rows(3, 2, vec![0.5, -0.2, -0.7, 0.1, 0.3, 0.9]).unwrap(),
        )
        .unwrap()
    }

    /// A discriminator whose logits are the constant `bias`.
    fn constant_disc(bias: &[f64]) -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(dims(), HeadLayout::Full, &mut rng).unwrap();
        d.store.set_value("disc.head1.weight", Tensor::zeros((4, 3))).unwrap();
        d.store.set_value("disc.head1.bias", row(bias)).unwrap();
        d
    }

    fn sim(bias: &[f64], mode: FeedbackMode) -> Simulator {
        let s0 = State::new(
            vec![
                (ItemId(0), FeedbackClass::POSITIVE),
                (ItemId(1), FeedbackClass::NEGATIVE),
            ],
            2,
        )
        .unwrap();
        let s1 = State::new(
            vec![
                (ItemId(2), FeedbackClass::NEGATIVE),
                (ItemId(2), FeedbackClass::POSITIVE),
            ],
            2,
        )
        .unwrap();
        Simulator::new(
            constant_disc(bias),
            catalog(),
            RewardMap::default(),
            vec![s0, s1],
            mode,
            9,
        )
        .unwrap()
    }

    #[test]
    fn explicit_reset_wraps_state() {
        let sim = sim(&[0.0; 4], FeedbackMode::Argmax);
        let s = sim.reset_states()[1].clone();
        let env = sim.reset(ResetSource::Explicit(s.clone()), 3).unwrap();
        assert_eq!((env.state, env.steps), (s, 0));
        let bad = State::new(vec![(ItemId(0), FeedbackClass::POSITIVE)], 1).unwrap();
        assert!(matches!(
            sim.reset(ResetSource::Explicit(bad), 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn sampled_reset_is_seeded_and_varied() {
        let sim = sim(&[0.0; 4], FeedbackMode::Argmax);
        assert_eq!(
            sim.reset(ResetSource::Sampled, 5).unwrap(),
            sim.reset(ResetSource::Sampled, 5).unwrap()
        );
        let distinct: std::collections::HashSet<_> = (0..100)
            .map(|s| sim.reset(ResetSource::Sampled, s).unwrap().state)
            .collect();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn uniform_logits_argmax_is_positive() {
        let sim = sim(&[0.0; 4], FeedbackMode::Argmax);
        let env = sim.reset(ResetSource::Sampled, 0).unwrap();
        let out = sim.step(&env, ItemId(1)).unwrap();
        assert_eq!(out.feedback, FeedbackClass::POSITIVE);
        assert_eq!(out.reward, 1.0);
        assert_eq!(out.next.steps, 1);
        assert_eq!(
            out.next.state,
            next_state(&env.state, ItemId(1), FeedbackClass::POSITIVE, sim.catalog()).unwrap()
        );
        assert_eq!(env.steps, 0);
        assert!(matches!(sim.step(&env, ItemId(9)), Err(Error::UnknownItem(_))));
    }

    #[test]
    fn probabilities_follow_real_block() {
        let sim = sim(&[0.9f64.ln(), 0.1f64.ln(), 0.0, 0.0], FeedbackMode::Sample);
        let env = sim.reset(ResetSource::Sampled, 0).unwrap();
        let p = sim.feedback_probabilities(&env.state, ItemId(0)).unwrap();
        assert!((p[FeedbackClass::POSITIVE.index()] - 0.9).abs() < 1e-12);
        assert!((p[FeedbackClass::NEGATIVE.index()] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rollout_totals_and_errors() {
        let sim = sim(&[0.3, -0.2, 0.0, 0.1], FeedbackMode::Sample);
        let start = sim.reset(ResetSource::Sampled, 1).unwrap();
        let t = sim.rollout(start.clone(), |_| ItemId(2), 1).unwrap();
        assert_eq!(t.steps.len(), 1);
        let t = sim.rollout(start.clone(), random_policy(3, 4), 6).unwrap();
        let sum: f64 = t.steps.iter().map(|s| sim.rewards().reward(s.feedback)).sum();
        assert_eq!(t.total_reward, sum);
        assert_eq!(t, sim.rollout(start.clone(), random_policy(3, 4), 6).unwrap());
        let err = sim.rollout(start.clone(), |_| ItemId(7), 3).unwrap_err();
        assert!(err.to_string().contains("step 1"));
        assert!(sim.rollout(start, |_| ItemId(0), 0).is_err());
    }

    #[test]
    fn popular_policy_skips_seen_items() {
        let mut p = popular_policy(&[5, 9, 1]);
        let s = State::new(
            vec![
                (ItemId(1), FeedbackClass::POSITIVE),
                (ItemId(1), FeedbackClass::POSITIVE),
            ],
            2,
        )
        .unwrap();
        assert_eq!(p(&s), ItemId(0));
    }
}
