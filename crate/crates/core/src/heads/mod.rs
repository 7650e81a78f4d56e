//! Task heads over an encoder [`RunTrace`](crate::model::RunTrace).

mod classifier;
mod completion;
mod summarizer;

pub use classifier::{argmax, ClassifierHead};
pub use completion::{predict_topk, CompletionHead, CompletionOutput, Suggestion};
pub use summarizer::{AttentionDecoder, DecoderConfig, EncoderMemory};
