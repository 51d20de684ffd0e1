//! Record-at-a-time extraction with a trained checkpoint.
//!
//! Input lines are either raw `{"id", "text"}` records, which are split into
//! sentences and tokenized, or pre-tokenized `{"id", "sentences": [{"tokens"}]}`
//! records (corpus files qualify; gold fields are ignored).

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::{encode_tokens, split_sentences, tokenize};
use crate::model::ModelError;
use crate::train::{decode_spans, Checkpoint};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceExtraction {
    pub class: String,
    pub entities: Vec<Entity>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub id: String,
    pub sentences: Vec<SentenceExtraction>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("document has no sentences")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
}

#[derive(Deserialize)]
struct TokenSentence {
    tokens: Vec<String>,
}

#[derive(Deserialize)]
struct TokenRecord {
    id: String,
    sentences: Vec<TokenSentence>,
}

/// Runs the model over tokenized sentences.
pub fn extract_tokens(
    ck: &Checkpoint,
    id: &str,
    sentences: &[Vec<String>],
) -> Result<ExtractionRecord, ExtractError> {
    if sentences.is_empty() {
        return Err(ExtractError::Empty);
    }
    let doc = encode_tokens(id, sentences, &ck.vocab);
    let pred = ck.model.predict_document(&doc)?;
    let sentences = sentences
        .iter()
        .zip(pred.tags.iter().zip(&pred.classes))
        .map(|(tokens, (tags, &class))| SentenceExtraction {
            class: ck.labels.class(class).to_string(),
            entities: decode_spans(tags, &ck.labels)
                .into_iter()
                .map(|s| Entity {
                    text: tokens[s.start..s.end].join(" "),
                    start: s.start,
                    end: s.end,
                    label: s.label,
                })
                .collect(),
        })
        .collect();
    Ok(ExtractionRecord {
        id: id.to_string(),
        sentences,
    })
}

/// Sentence-splits and tokenizes `text`, then extracts.
pub fn extract_text(
    ck: &Checkpoint,
    id: &str,
    text: &str,
) -> Result<ExtractionRecord, ExtractError> {
    let sentences: Vec<Vec<String>> = split_sentences(text)
        .iter()
        .map(|s| tokenize(s))
        .filter(|t| !t.is_empty())
        .collect();
    extract_tokens(ck, id, &sentences)
}

/// Parses one input line and extracts from it.
pub fn extract_line(
    ck: &Checkpoint,
    line: &str,
    pretokenized: bool,
) -> Result<ExtractionRecord, ExtractError> {
    let bad = |e: serde_json::Error| ExtractError::Malformed(e.to_string());
    if pretokenized {
        let r: TokenRecord = serde_json::from_str(line).map_err(bad)?;
        let sentences: Vec<Vec<String>> = r.sentences.into_iter().map(|s| s.tokens).collect();
        if sentences.iter().any(|s| s.is_empty()) {
            return Err(ExtractError::Malformed("sentence with no tokens".into()));
        }
        extract_tokens(ck, &r.id, &sentences)
    } else {
        let r: RawRecord = serde_json::from_str(line).map_err(bad)?;
        extract_text(ck, &r.id, &r.text)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub succeeded: usize,
    pub failed: usize,
}

/// Extracts every non-blank line of `input`, writing one JSON record per line
/// to `out` (flushed per record) and one error object per failed record to
/// `errors`.
pub fn extract_stream<R: BufRead, W: Write, E: Write>(
    ck: &Checkpoint,
    input: R,
    mut out: W,
    mut errors: E,
    pretokenized: bool,
) -> io::Result<StreamSummary> {
    let mut summary = StreamSummary::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match extract_line(ck, &line, pretokenized) {
            Ok(rec) => {
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n")?;
                out.flush()?;
                summary.succeeded += 1;
            }
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").cloned())
                    .unwrap_or(serde_json::Value::Null);
                let obj = serde_json::json!({"line": i + 1, "id": id, "error": e.to_string()});
                writeln!(errors, "{obj}")?;
                summary.failed += 1;
            }
        }
    }
    out.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, document_text, generate_corpus, LabelSet};
    use crate::linalg::Rng;
    use crate::model::{HierConfig, HierModel};

    fn checkpoint() -> Checkpoint {
        let labels = LabelSet::lawsuit();
        let vocab = build_vocab(&generate_corpus(5, 2), 1);
        let mut cfg = HierConfig::new(vocab.len(), labels.tag_count(), labels.class_count());
        cfg.embed_dim = 4;
        cfg.sent_hidden = 4;
        cfg.doc_hidden = 3;
        let mut model = HierModel::new(cfg, &mut Rng::new(1)).unwrap();
        // favor B-PLA then I-PLA so some spans come out
        model.emit_b.value.set(1, 0, 2.0);
        model.emit_b.value.set(2, 0, 1.0);
        Checkpoint {
            model,
            vocab,
            labels,
        }
    }

    #[test]
    fn raw_and_pretokenized_agree() {
        let ck = checkpoint();
        let doc = &generate_corpus(1, 9)[0];
        let raw = serde_json::json!({"id": doc.id, "text": document_text(doc)}).to_string();
        let tok = serde_json::to_string(doc).unwrap();
        let a = extract_line(&ck, &raw, false).unwrap();
        let b = extract_line(&ck, &tok, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sentences.len(), doc.sentences.len());
    }

    #[test]
    fn entity_text_matches_tokens() {
        let ck = checkpoint();
        let sentences = vec![vec!["John".to_string(), "Smith".into(), "sued".into()]];
        let rec = extract_tokens(&ck, "x", &sentences).unwrap();
        for e in &rec.sentences[0].entities {
            assert_eq!(e.text, sentences[0][e.start..e.end].join(" "));
            assert!(ck.labels.tag_id(&format!("B-{}", e.label)).is_some());
        }
        let v = serde_json::to_value(&rec).unwrap();
        assert!(v["sentences"][0]["class"].is_string());
    }

    #[test]
    fn pretokenized_bypasses_tokenizer() {
        let ck = checkpoint();
        // would be split into two tokens by the tokenizer
        let line = r#"{"id": "p", "sentences": [{"tokens": ["Smith,"]}]}"#;
        let rec = extract_line(&ck, line, true).unwrap();
        assert!(rec.sentences[0].entities.iter().all(|e| e.end <= 1));
        let raw = extract_line(&ck, r#"{"id": "p", "text": "Smith,"}"#, false).unwrap();
        assert_eq!(raw.sentences.len(), 1);
    }

    #[test]
    fn stream_reports_errors_and_continues() {
        let ck = checkpoint();
        let input = "{\"id\": \"a\", \"text\": \"The court ruled.\"}\nnot json\n\n{\"id\": \"b\", \"text\": \"  \"}\n{\"id\": \"c\", \"text\": \"Done.\"}\n";
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let s = extract_stream(&ck, input.as_bytes(), &mut out, &mut err, false).unwrap();
        assert_eq!(
            s,
            StreamSummary {
                succeeded: 2,
                failed: 2
            }
        );
        let out = String::from_utf8(out).unwrap();
        let ids: Vec<String> = out
            .lines()
            .map(|l| serde_json::from_str::<ExtractionRecord>(l).unwrap().id)
            .collect();
        assert_eq!(ids, ["a", "c"]);
        let err = String::from_utf8(err).unwrap();
        let errs: Vec<serde_json::Value> = err
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(errs[0]["line"], 2);
        assert_eq!(errs[1]["id"], "b");
        assert_eq!(errs[1]["error"], "document has no sentences");
    }

    #[test]
    fn empty_input_yields_nothing() {
        let ck = checkpoint();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let s = extract_stream(&ck, "".as_bytes(), &mut out, &mut err, false).unwrap();
        assert_eq!(s, StreamSummary::default());
        assert!(out.is_empty() && err.is_empty());
    }
}
