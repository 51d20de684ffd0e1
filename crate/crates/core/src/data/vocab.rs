use std::collections::HashMap;

use super::corpus::Document;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Entity types recognized by the tagger.
pub const ENTITY_TYPES: [&str; 6] = ["PLA", "DEF", "COURT", "DATE", "AMT", "JUDGE"];
/// Sentence roles, in document order.
pub const SENTENCE_CLASSES: [&str; 5] = ["CAPTION", "FACTS", "CLAIM", "RULING", "OTHER"];

/// Dense token ids with `<pad> = 0` and `<unk> = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from an id-ordered token list whose first two entries must be
    /// the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < 2 || tokens[0] != PAD || tokens[1] != UNK {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary entry {t:?}"));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Unknown tokens map to `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}

/// Tokens with frequency `>= min_count`, ordered by descending frequency and
/// then lexicographically.
pub fn build_vocab(corpus: &[Document], min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for s in &doc.sentences {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && t != PAD && t != UNK)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens = vec![PAD.to_string(), UNK.to_string()];
    tokens.extend(entries.into_iter().map(|(t, _)| t.to_string()));
    Vocab::from_tokens(tokens).expect("reserved entries present")
}

/// Tag and sentence-class inventories with their id maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    tags: Vec<String>,
    classes: Vec<String>,
    tag_index: HashMap<String, usize>,
    class_index: HashMap<String, usize>,
}

impl LabelSet {
    /// `O` is always tag 0.
    pub fn new(tags: Vec<String>, classes: Vec<String>) -> Result<Self, String> {
        if tags.first().map(String::as_str) != Some("O") {
            return Err("tag inventory must start with \"O\"".into());
        }
        if classes.is_empty() {
            return Err("class inventory is empty".into());
        }
        let index = |v: &[String], what: &str| -> Result<HashMap<String, usize>, String> {
            let mut m = HashMap::new();
            for (i, s) in v.iter().enumerate() {
                if m.insert(s.clone(), i).is_some() {
                    return Err(format!("duplicate {what} {s:?}"));
                }
            }
            Ok(m)
        };
        Ok(Self {
            tag_index: index(&tags, "tag")?,
            class_index: index(&classes, "class")?,
            tags,
            classes,
        })
    }

    /// `O`, then `B-X`, `I-X` for each entity type; the fixed class list.
    pub fn lawsuit() -> Self {
        let mut tags = vec!["O".to_string()];
        for e in ENTITY_TYPES {
            tags.push(format!("B-{e}"));
            tags.push(format!("I-{e}"));
        }
        Self::new(
            tags,
            SENTENCE_CLASSES.iter().map(|s| s.to_string()).collect(),
        )
        .expect("valid inventory")
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tag_index.get(tag).copied()
    }

    pub fn class_id(&self, class: &str) -> Option<usize> {
        self.class_index.get(class).copied()
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn class(&self, id: usize) -> &str {
        &self.classes[id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::Sentence;

    fn doc(tokens: &[&str]) -> Document {
        Document {
            id: "d".into(),
            sentences: vec![Sentence {
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
                tags: vec!["O".into(); tokens.len()],
                class: "FACTS".into(),
            }],
        }
    }

    #[test]
    fn threshold_and_order() {
        let v = build_vocab(&[doc(&["a", "b", "a", "a"])], 2);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
        let v = build_vocab(&[doc(&["b", "a", "b", "a", "c"])], 1);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b", "c"]);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.id("b"), 3);
    }

    #[test]
    fn rebuild_is_identical() {
        let d = [doc(&["x", "y", "z", "y"]), doc(&["q", "x"])];
        assert_eq!(build_vocab(&d, 1), build_vocab(&d, 1));
    }

    #[test]
    fn lawsuit_labels() {
        let l = LabelSet::lawsuit();
        assert_eq!(l.tag_count(), 13);
        assert_eq!(l.tag(0), "O");
        assert_eq!(l.tag_id("I-JUDGE"), Some(12));
        assert_eq!(l.class_id("OTHER"), Some(4));
    }
}
