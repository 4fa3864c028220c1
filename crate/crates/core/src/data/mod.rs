//! Logs, catalogs, MDP tuples and the synthetic planted world.

pub mod catalog;
pub mod dataset;
pub mod io;
pub mod mdp;
pub mod synth;

pub use catalog::{FeedbackClass, ItemCatalog, ItemId};
pub use dataset::{split_train_test, upsample_positive, Dataset, Split};
pub use io::{ingest_logs, Corpus, IngestReport};
pub use mdp::{build_transitions, next_state, Event, RewardMap, Session, State, Transition};
pub use synth::{synth_world, Oracle, SynthConfig};
