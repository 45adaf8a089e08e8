//! Argument-annotation pipeline: corpus ingestion, tag schemes, a subword
//! tokenizer, a segment-recurrent encoder with its training loop, task
//! codecs, metrics, ensembling and cross-scheme correspondence.

pub mod aae;
pub mod autodiff;
pub mod codecs;
pub mod correspondence;
pub mod document;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod render;
pub mod schemes;
pub mod synth;
pub mod tokenizer;
pub mod training;

pub use codecs::{encode_corpus, encode_document, ComponentStrategy, EncodedExample, Task};
pub use correspondence::{collapse_to_words, cross_tabulate, CorrespondenceMatrix};
pub use document::{
    read_corpus, write_corpus, AnnotatedDocument, AnnotationSpan, ArgRelation, CharRange, Rater,
    RelationKind, Stance, Unit,
};
pub use encoder::{
    classify_positions, classify_sequence, forward_segment, stream_document, MemoryState,
    ModelConfig, Params,
};
pub use ensemble::{build_seed_plan, synthesize_labels, train_universal, SeedPlan};
pub use error::{Error, Result};
pub use metrics::{cohen_kappa, evaluate, prf1, EvalReport, StopMetric};
pub use schemes::{
    resolve_pair, resolve_votes, validate_annotation, SchemeId, TagId, TagSet, Violation,
};
pub use tokenizer::{TokenizedText, Vocab};
pub use training::{
    masked_cross_entropy, predict_example, train, train_split, EpochRecord, LossReport,
    TrainConfig, TrainOutcome,
};
