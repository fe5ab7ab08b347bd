//! Task heads on top of the encoder: attention pooling, the classifier
//! head, losses, context enrichment and the assembled [`PromiseModel`].

mod checkpoint;
mod head;
mod loss;
mod model;
mod pooling;

use crate::corpus::PromiseRecord;

pub use checkpoint::{read_tensors, write_tensors, Manifest, FORMAT_VERSION, MANIFEST_FILE, PARAMS_FILE};
pub use head::{ClassifierHead, HeadConfig};
pub use loss::{
    combined_loss, inverse_frequency_weights, softmax, task_loss, ClassWeights, LossConfig, LossKind,
};
pub use model::{model_input, Example, ForwardVars, ModelConfig, ModelKind, PromiseModel, TaskHeadOutput};
pub use pooling::{attention_pool, AttentionPooler, PoolOutput, PooledVars};

/// Stand-in for an unknown page number.
pub const PAGE_SENTINEL: &str = "?";

/// The `[PAGE p] [TAG] ` marker block.
pub fn context_prefix(page: Option<u32>, source_tag: &str) -> String {
    let page = page.map_or_else(|| PAGE_SENTINEL.to_string(), |p| p.to_string());
    format!("[PAGE {page}] [{source_tag}] ")
}

/// Prepends page and source markers to the record text.
pub fn enrich_context(record: &PromiseRecord) -> String {
    context_prefix(record.page_number, &record.source_tag) + &record.raw_text
}
