//! Line-delimited JSON corpora and the id-encoded form the model consumes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bio::{bio_decode, parse_tag, Bio, TagSpan};
use super::vocab::{LabelSet, Vocab};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub class: String,
}

impl Sentence {
    pub fn spans(&self) -> Vec<TagSpan> {
        bio_decode(&self.tags).expect("validated at ingestion")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Invalid {
        line: usize,
        field: String,
        message: String,
    },
}

impl Document {
    /// Structural checks against a label inventory. `line` is only used in
    /// the error.
    pub fn validate(&self, labels: &LabelSet, line: usize) -> Result<(), CorpusError> {
        let invalid = |field: String, message: String| CorpusError::Invalid {
            line,
            field,
            message,
        };
        if self.sentences.is_empty() {
            return Err(invalid(
                "sentences".into(),
                "document has no sentences".into(),
            ));
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.tokens.is_empty() {
                return Err(invalid(
                    format!("sentences[{i}].tokens"),
                    "empty sentence".into(),
                ));
            }
            if s.tags.len() != s.tokens.len() {
                return Err(invalid(
                    format!("sentences[{i}].tags"),
                    format!("{} tags for {} tokens", s.tags.len(), s.tokens.len()),
                ));
            }
            if let Some(t) = s
                .tokens
                .iter()
                .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
            {
                return Err(invalid(
                    format!("sentences[{i}].tokens"),
                    format!("invalid token {t:?}"),
                ));
            }
            for tag in &s.tags {
                let known = labels.tag_id(tag).is_some() && parse_tag(tag).is_ok();
                if !known {
                    return Err(invalid(
                        format!("sentences[{i}].tags"),
                        format!("unknown tag {tag:?}"),
                    ));
                }
            }
            if labels.class_id(&s.class).is_none() {
                return Err(invalid(
                    format!("sentences[{i}].class"),
                    format!("unknown class {:?}", s.class),
                ));
            }
        }
        Ok(())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}

/// Parses one corpus line.
pub fn parse_document(
    line: &str,
    line_no: usize,
    labels: &LabelSet,
) -> Result<Document, CorpusError> {
    let doc: Document = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    doc.validate(labels, line_no)?;
    Ok(doc)
}

/// Reads a corpus; blank lines are skipped, an empty file is an empty corpus.
pub fn load_corpus(path: &Path, labels: &LabelSet) -> Result<Vec<Document>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_document(&line, i + 1, labels)?);
    }
    Ok(docs)
}

pub fn write_corpus<W: Write>(docs: &[Document], mut w: W) -> io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_corpus(docs: &[Document], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_corpus(docs, BufWriter::new(file)).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A sentence as token ids, with gold ids when available.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub token_ids: Vec<usize>,
    pub tag_ids: Option<Vec<usize>>,
    pub class_id: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedDocument {
    pub id: String,
    pub sentences: Vec<EncodedSentence>,
}

/// Maps a validated document to ids; unseen tokens become `<unk>`.
pub fn encode_document(doc: &Document, vocab: &Vocab, labels: &LabelSet) -> EncodedDocument {
    EncodedDocument {
        id: doc.id.clone(),
        sentences: doc
            .sentences
            .iter()
            .map(|s| EncodedSentence {
                token_ids: vocab.encode(&s.tokens),
                tag_ids: Some(
                    s.tags
                        .iter()
                        .map(|t| labels.tag_id(t).expect("validated tag"))
                        .collect(),
                ),
                class_id: Some(labels.class_id(&s.class).expect("validated class")),
            })
            .collect(),
    }
}

/// Ids for unlabeled token sequences.
pub fn encode_tokens<S: AsRef<str>>(
    id: &str,
    sentences: &[Vec<S>],
    vocab: &Vocab,
) -> EncodedDocument {
    EncodedDocument {
        id: id.to_string(),
        sentences: sentences
            .iter()
            .map(|s| EncodedSentence {
                token_ids: vocab.encode(s),
                tag_ids: None,
                class_id: None,
            })
            .collect(),
    }
}

/// Counts `I-X` tags that do not continue an `X` run.
pub fn count_bio_repairs(doc: &Document) -> usize {
    doc.sentences
        .iter()
        .map(|s| {
            let mut prev: Option<&str> = None;
            let mut repairs = 0;
            for tag in &s.tags {
                prev = match parse_tag(tag) {
                    Ok(Bio::Outside) | Err(_) => None,
                    Ok(Bio::Begin(l)) => Some(l),
                    Ok(Bio::Inside(l)) => {
                        if prev != Some(l) {
                            repairs += 1;
                        }
                        Some(l)
                    }
                };
            }
            repairs
        })
        .sum()
}
