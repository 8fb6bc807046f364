//! Synthetic corpus and exhaustive oracles used to verify the toolkit.

mod enumerate;
mod toy;

pub use enumerate::{compensated_log_sum_exp, enumerate_paths, Enumeration, MAX_PATHS};
pub use toy::{
    format_conll, generate_toy, read_manifest, sha256_hex, ToyCorpus, MANIFEST, SPLITS, TOY_LABELS, TOY_SEED,
    TOY_SENTENCES,
};
