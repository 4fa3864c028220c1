use serde::{Deserialize, Serialize};

use super::catalog::{FeedbackClass, ItemCatalog, ItemId};
use crate::error::{Error, Result};

/// One logged (item, feedback) pair.
pub type Event = (ItemId, FeedbackClass);

/// A chronological browsing session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub events: Vec<Event>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// The N most recent (item, feedback) pairs, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State(Vec<Event>);

impl State {
    pub fn new(events: Vec<Event>, n: usize) -> Result<Self> {
        if events.len() != n || n == 0 {
            return Err(Error::contract(format!(
                "state needs exactly {n} events, got {}",
                events.len()
            )));
        }
        Ok(State(events))
    }

    pub fn events(&self) -> &[Event] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, catalog: &ItemCatalog, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::contract(format!(
                "state has {} events, expected {n}",
                self.0.len()
            )));
        }
        self.0.iter().try_for_each(|(item, _)| catalog.check(*item))
    }
}

/// Per-class reward values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMap(Vec<f64>);

impl RewardMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("reward map needs one finite value per class"));
        }
        Ok(RewardMap(values))
    }

    /// `0.0` for negative, `1.0` for positive; evenly spaced for larger K.
    pub fn default_for(k: usize) -> Self {
        let top = (k.max(2) - 1) as f64;
        RewardMap((0..k).map(|i| i as f64 / top).collect())
    }

    pub fn reward(&self, f: FeedbackClass) -> f64 {
        self.0[f.index()]
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for RewardMap {
    fn default() -> Self {
        Self::default_for(2)
    }
}

/// A logged `(s, a, r)` tuple with the feedback that produced `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: ItemId,
    pub feedback: FeedbackClass,
    pub reward: f64,
    /// Index of the originating session in its corpus.
    pub session: usize,
    /// Position of `action` inside the session.
    pub position: usize,
}

/// Sliding-window tuples of one session: the first `n` pairs form the
/// initial state and every later item is one action. Sessions with at most
/// `n` events produce nothing.
pub fn build_transitions(session: &Session, session_index: usize, n: usize, rewards: &RewardMap) -> Vec<Transition> {
    if n == 0 || session.len() <= n {
        return Vec::new();
    }
    (n..session.len())
        .map(|pos| {
            let (action, feedback) = session.events[pos];
            Transition {
                state: State(session.events[pos - n..pos].to_vec()),
                action,
                feedback,
                reward: rewards.reward(feedback),
                session: session_index,
                position: pos,
            }
        })
        .collect()
}

/// Drops the oldest pair and appends `(action, feedback)`.
pub fn next_state(s: &State, action: ItemId, feedback: FeedbackClass, catalog: &ItemCatalog) -> Result<State> {
    catalog.check(action)?;
    if s.0.is_empty() {
        return Err(Error::contract("empty state"));
    }
    let mut events = Vec::with_capacity(s.0.len());
    events.extend_from_slice(&s.0[1..]);
    events.push((action, feedback));
    Ok(State(events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::zeros;

    const NEG: FeedbackClass = FeedbackClass::NEGATIVE;
    const POS: FeedbackClass = FeedbackClass::POSITIVE;

    fn catalog(n: usize) -> ItemCatalog {
        ItemCatalog::new((0..n).map(|i| format!("i{i}")).collect(), zeros(n, 2)).unwrap()
    }

    fn session(len: usize) -> Session {
        Session {
            id: "s".into(),
            events: (0..len)
                .map(|i| (ItemId(i as u32), if i % 2 == 0 { POS } else { NEG }))
                .collect(),
        }
    }

    #[test]
    fn sliding_window_example() {
        // [A,B,C,D,E] with N = 3
        let s = session(5);
        let t = build_transitions(&s, 0, 3, &RewardMap::default());
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].state.events(), &s.events[0..3]);
        assert_eq!(t[0].action, ItemId(3));
        assert_eq!(t[0].feedback, NEG);
        assert_eq!(t[0].reward, 0.0);
        assert_eq!(t[1].state.events(), &s.events[1..4]);
        assert_eq!(t[1].action, ItemId(4));
        assert_eq!(t[1].reward, 1.0);
    }

    #[test]
    fn boundary_lengths() {
        assert_eq!(build_transitions(&session(4), 0, 3, &RewardMap::default()).len(), 1);
        assert!(build_transitions(&session(3), 0, 3, &RewardMap::default()).is_empty());
    }

    #[test]
    fn next_state_shifts() {
        let cat = catalog(4);
        let s = State::new(vec![(ItemId(0), POS), (ItemId(1), NEG), (ItemId(2), POS)], 3).unwrap();
        let next = next_state(&s, ItemId(3), NEG, &cat).unwrap();
        assert_eq!(next.events(), &[(ItemId(1), NEG), (ItemId(2), POS), (ItemId(3), NEG)]);
        assert_eq!(s.len(), 3);
        assert!(matches!(
            next_state(&s, ItemId(9), NEG, &cat),
            Err(Error::UnknownItem(_))
        ));
    }

    #[test]
    fn n_steps_replace_window() {
        let cat = catalog(6);
        let mut s = State::new(vec![(ItemId(0), POS), (ItemId(1), NEG), (ItemId(2), POS)], 3).unwrap();
        let added = [(ItemId(3), NEG), (ItemId(4), NEG), (ItemId(5), POS)];
        for (a, f) in added {
            s = next_state(&s, a, f, &cat).unwrap();
        }
        assert_eq!(s.events(), &added);
    }

    #[test]
    fn state_length_enforced() {
        assert!(State::new(vec![(ItemId(0), POS)], 2).is_err());
    }
}
