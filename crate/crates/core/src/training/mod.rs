//! The training recipe: supervised pre-training of both networks followed by
//! alternating adversarial rounds, plus checkpoints and parameter sweeps.

pub mod algorithm;
pub mod checkpoint;
pub mod config;
pub mod sweep;

pub use algorithm::{
    adversarial_train, check_dataset, init_models, pretrain, pretrain_discriminator, pretrain_generator, train,
    validation_auc, AdversarialTrace, LossCurve, Phase, Prepared, RoundRecord, StepRecord, Trained,
};
pub use checkpoint::{checkpoint_file_name, load_checkpoint, save_checkpoint, Checkpoint, EnvBundle};
pub use config::{apply_variant, TrainConfig, Variant};
pub use sweep::{sweep, SweepParam, SweepPoint};
