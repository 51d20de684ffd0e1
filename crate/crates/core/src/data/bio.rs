//! BIO tag codec and span algebra.

use serde::{Deserialize, Serialize};

/// Half-open token interval `[start, end)` carrying an entity label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TagSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl TagSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BioError {
    #[error("span {start}..{end} is empty or exceeds sentence length {len}")]
    OutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span starting at {0} overlaps the previous span")]
    Overlap(usize),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

/// Parses `O`, `B-X` or `I-X` with a nonempty label `X`.
pub fn parse_tag(tag: &str) -> Result<Bio<'_>, BioError> {
    if tag == "O" {
        return Ok(Bio::Outside);
    }
    match tag.split_once('-') {
        Some(("B", label)) if !label.is_empty() => Ok(Bio::Begin(label)),
        Some(("I", label)) if !label.is_empty() => Ok(Bio::Inside(label)),
        _ => Err(BioError::UnknownTag(tag.to_string())),
    }
}

pub fn bio_encode(spans: &[TagSpan], len: usize) -> Result<Vec<String>, BioError> {
    let mut tags = vec!["O".to_string(); len];
    let mut sorted: Vec<&TagSpan> = spans.iter().collect();
    sorted.sort();
    let mut covered_to = 0;
    for s in sorted {
        if s.start >= s.end || s.end > len {
            return Err(BioError::OutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
        if s.start < covered_to {
            return Err(BioError::Overlap(s.start));
        }
        tags[s.start] = format!("B-{}", s.label);
        for t in &mut tags[s.start + 1..s.end] {
            *t = format!("I-{}", s.label);
        }
        covered_to = s.end;
    }
    Ok(tags)
}

/// Decodes tags into spans, returning the spans and the number of repairs
/// (an `I-X` that does not continue an `X` run opens a new span).
pub fn bio_decode_counting<S: AsRef<str>>(tags: &[S]) -> Result<(Vec<TagSpan>, usize), BioError> {
    let mut spans = Vec::new();
    let mut repairs = 0;
    let mut open: Option<(usize, &str)> = None;
    for (t, tag) in tags.iter().enumerate() {
        match parse_tag(tag.as_ref())? {
            Bio::Outside => {
                if let Some((s, l)) = open.take() {
                    spans.push(TagSpan::new(s, t, l));
                }
            }
            Bio::Begin(label) => {
                if let Some((s, l)) = open.take() {
                    spans.push(TagSpan::new(s, t, l));
                }
                open = Some((t, label));
            }
            Bio::Inside(label) => match open {
                Some((_, l)) if l == label => {}
                _ => {
                    if let Some((s, l)) = open.take() {
                        spans.push(TagSpan::new(s, t, l));
                    }
                    repairs += 1;
                    open = Some((t, label));
                }
            },
        }
    }
    if let Some((s, l)) = open {
        spans.push(TagSpan::new(s, tags.len(), l));
    }
    Ok((spans, repairs))
}

pub fn bio_decode<S: AsRef<str>>(tags: &[S]) -> Result<Vec<TagSpan>, BioError> {
    bio_decode_counting(tags).map(|(spans, _)| spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        assert_eq!(bio_encode(&[], 3).unwrap(), vec!["O", "O", "O"]);
        assert_eq!(
            bio_encode(&[TagSpan::new(0, 2, "PLA")], 3).unwrap(),
            vec!["B-PLA", "I-PLA", "O"]
        );
        assert_eq!(
            bio_encode(&[TagSpan::new(0, 1, "PLA"), TagSpan::new(2, 3, "DEF")], 3).unwrap(),
            vec!["B-PLA", "O", "B-DEF"]
        );
    }

    #[test]
    fn encode_errors() {
        assert_eq!(
            bio_encode(&[TagSpan::new(0, 2, "A"), TagSpan::new(1, 3, "B")], 4),
            Err(BioError::Overlap(1))
        );
        assert!(matches!(
            bio_encode(&[TagSpan::new(2, 5, "A")], 4),
            Err(BioError::OutOfRange { .. })
        ));
        assert!(matches!(
            bio_encode(&[TagSpan::new(2, 2, "A")], 4),
            Err(BioError::OutOfRange { .. })
        ));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            bio_decode(&["B-PLA", "I-PLA", "O", "B-DEF"]).unwrap(),
            vec![TagSpan::new(0, 2, "PLA"), TagSpan::new(3, 4, "DEF")]
        );
        assert_eq!(
            bio_decode_counting(&["O", "I-COURT"]).unwrap(),
            (vec![TagSpan::new(1, 2, "COURT")], 1)
        );
        assert_eq!(
            bio_decode(&["B-PLA", "I-DEF"]).unwrap(),
            vec![TagSpan::new(0, 1, "PLA"), TagSpan::new(1, 2, "DEF")]
        );
        assert_eq!(
            bio_decode(&["B-A", "B-A", "I-A"]).unwrap(),
            vec![TagSpan::new(0, 1, "A"), TagSpan::new(1, 3, "A")]
        );
    }

    #[test]
    fn decode_rejects_unknown_tags() {
        for bad in ["X-PLA", "B-", "b-PLA", "", "OUT"] {
            assert_eq!(
                bio_decode(&[bad]),
                Err(BioError::UnknownTag(bad.to_string()))
            );
        }
    }

    fn span_layout() -> impl Strategy<Value = (Vec<TagSpan>, usize)> {
        // a sequence of (gap, width, label) triples laid out left to right
        (
            1usize..=12,
            prop::collection::vec((0usize..3, 1usize..4, 0usize..3), 0..6),
        )
            .prop_map(|(len, parts)| {
                let labels = ["PLA", "DEF", "COURT"];
                let mut spans = Vec::new();
                let mut pos = 0;
                for (gap, width, l) in parts {
                    let start = pos + gap;
                    let end = start + width;
                    if end > len {
                        break;
                    }
                    spans.push(TagSpan::new(start, end, labels[l]));
                    pos = end;
                }
                (spans, len)
            })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode((spans, len) in span_layout()) {
            let tags = bio_encode(&spans, len).unwrap();
            let (back, repairs) = bio_decode_counting(&tags).unwrap();
            prop_assert_eq!(back, spans);
            prop_assert_eq!(repairs, 0);
        }
    }
}
