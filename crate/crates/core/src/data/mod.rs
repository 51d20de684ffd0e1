//! Text processing, the BIO codec, span scoring, vocabularies, corpus files
//! and the synthetic corpus generator.

mod bio;
mod corpus;
mod generate;
mod metrics;
mod text;
mod vocab;

pub use bio::{bio_decode, bio_decode_counting, bio_encode, parse_tag, Bio, BioError, TagSpan};
pub use corpus::{
    count_bio_repairs, encode_document, encode_tokens, load_corpus, parse_document, save_corpus,
    write_corpus, CorpusError, Document, EncodedDocument, EncodedSentence, Sentence,
};
pub use generate::{document_text, generate_corpus};
pub use metrics::{span_prf, span_tally, Misaligned, Prf, SpanCounts, SpanReport, SpanTally};
pub use text::{split_sentences, tokenize};
pub use vocab::{
    build_vocab, LabelSet, Vocab, ENTITY_TYPES, PAD, PAD_ID, SENTENCE_CLASSES, UNK, UNK_ID,
};
