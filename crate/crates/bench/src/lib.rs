//! Shared inputs for the benchmarks in `benches/`.

use argannot_core::codecs::encode_arrow;
use argannot_core::synth::arrow_essays;
use argannot_core::{
    AnnotatedDocument, EncodedExample, ModelConfig, Params, Rater, SchemeId, TagSet, Vocab,
};

pub struct Workload {
    pub docs: Vec<AnnotatedDocument>,
    pub vocab: Vocab,
    pub examples: Vec<EncodedExample>,
    pub params: Params,
}

/// `n` synthetic ARROW essays, a vocabulary over them and a freshly
/// initialized model with the given width and segment length.
pub fn arrow_workload(n: usize, width: usize, segment_len: usize) -> Workload {
    let docs = arrow_essays(n, 5, 1, Some(Rater::Human1));
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let vocab = Vocab::train(&texts, 500).expect("corpus is small");
    let examples = docs
        .iter()
        .map(|d| encode_arrow(d, &vocab).expect("synthetic docs encode"))
        .collect();
    let labels = TagSet::builtin(SchemeId::Arrow).num_labels();
    let params = Params::init(&ModelConfig::toy(2, 2, width, segment_len, 500, labels), 0)
        .expect("valid config");
    Workload {
        docs,
        vocab,
        examples,
        params,
    }
}
