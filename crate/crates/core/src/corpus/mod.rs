//! CoNLL column files, vocabularies, pretrained embeddings and padded batches.

mod alphabet;
mod batch;
mod conll;
mod embeddings;

pub use alphabet::{build_alphabets, Alphabet, Alphabets, PAD, PAD_STR, UNK, UNK_STR};
pub use batch::{encode_sentence, make_batches, Batch, EncodedSentence};
pub use conll::{
    normalize_word, parse_conll, parse_feature_column, read_conll, ReadMode, Sentence, Token,
    NBEST_HEADER,
};
pub use embeddings::{load_pretrained, parse_pretrained, random_embedding, Coverage};
