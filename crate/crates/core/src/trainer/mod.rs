//! Two-stage training: the entity identifier first, then the graph encoder
//! and decoder with alternating parameter-group updates.

mod stage1;
mod stage2;

pub use stage1::{train_stage1, Stage1Config, Stage1Epoch, Stage1Report};
pub use stage2::{
    config_hash, prepare_corpus, train_prepared, train_stage2, Phase, Stage2Config, Stage2Epoch, Stage2Report,
    Stage2Trainer, StepLosses,
};
