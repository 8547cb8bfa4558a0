//! Loading and saving trained models.

use std::path::Path;
use std::sync::Arc;

use solace_core::classifier::ClassifierModel;
use solace_core::responder::{LanguageModel, Seq2SeqModel};
use solace_core::text::EmbeddingTable;

use crate::checkpoint;
use crate::error::{in_file, Result};

pub fn save_classifier(path: &Path, m: &ClassifierModel) -> Result<()> {
    checkpoint::save(path, &m.to_checkpoint())
}

pub fn load_classifier(path: &Path, table: Arc<EmbeddingTable>) -> Result<ClassifierModel> {
    ClassifierModel::from_checkpoint(&checkpoint::load(path)?, table).map_err(|e| in_file(path, e))
}

pub fn save_seq2seq(path: &Path, m: &Seq2SeqModel) -> Result<()> {
    checkpoint::save(path, &m.to_checkpoint())
}

pub fn load_seq2seq(path: &Path, table: Arc<EmbeddingTable>) -> Result<Seq2SeqModel> {
    Seq2SeqModel::from_checkpoint(&checkpoint::load(path)?, table).map_err(|e| in_file(path, e))
}

pub fn save_lm(path: &Path, m: &LanguageModel) -> Result<()> {
    checkpoint::save(path, &m.to_checkpoint())
}

pub fn load_lm(path: &Path, table: Arc<EmbeddingTable>) -> Result<LanguageModel> {
    LanguageModel::from_checkpoint(&checkpoint::load(path)?, table).map_err(|e| in_file(path, e))
}
