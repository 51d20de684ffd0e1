use serde::{Deserialize, Serialize};

use crate::data::{bio_decode, EncodedDocument, LabelSet, SpanReport, SpanTally, TagSpan};
use crate::model::{HierModel, ModelError, Prediction};

/// Evaluation report. Vacuous ratios (no tokens, no sentences) are 1.0,
/// matching the empty-set span convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub token_acc: f64,
    pub span: SpanReport,
    pub class_acc: f64,
    pub docs: usize,
}

fn ratio(hit: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

/// Spans of a tag-id sequence, repairing stray `I-` tags.
pub fn decode_spans(tag_ids: &[usize], labels: &LabelSet) -> Vec<TagSpan> {
    let tags: Vec<&str> = tag_ids.iter().map(|&t| labels.tag(t)).collect();
    bio_decode(&tags).expect("label set tags are valid BIO tags")
}

/// Scores predictions against the gold annotations of `docs`.
///
/// Panics if a document lacks gold or the prediction shapes do not match.
pub fn score_predictions(
    docs: &[EncodedDocument],
    preds: &[Prediction],
    labels: &LabelSet,
) -> Metrics {
    assert_eq!(docs.len(), preds.len(), "one prediction per document");
    let (mut tok_hit, mut tok_total, mut cls_hit, mut cls_total) = (0, 0, 0, 0);
    let mut tally = SpanTally::default();
    for (doc, pred) in docs.iter().zip(preds) {
        assert_eq!(
            doc.sentences.len(),
            pred.tags.len(),
            "sentence count of {}",
            doc.id
        );
        for (i, s) in doc.sentences.iter().enumerate() {
            let gold = s.tag_ids.as_ref().expect("gold tags");
            let got = &pred.tags[i];
            assert_eq!(
                gold.len(),
                got.len(),
                "token count of {} sentence {}",
                doc.id,
                i
            );
            tok_hit += gold.iter().zip(got).filter(|(a, b)| a == b).count();
            tok_total += gold.len();
            tally.add_sentence(&decode_spans(got, labels), &decode_spans(gold, labels));
            cls_hit += usize::from(s.class_id.expect("gold class") == pred.classes[i]);
            cls_total += 1;
        }
    }
    Metrics {
        token_acc: ratio(tok_hit, tok_total),
        span: tally.report(),
        class_acc: ratio(cls_hit, cls_total),
        docs: docs.len(),
    }
}

pub fn evaluate(
    model: &HierModel,
    docs: &[EncodedDocument],
    labels: &LabelSet,
) -> Result<Metrics, ModelError> {
    let preds = docs
        .iter()
        .map(|d| model.predict_document(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(score_predictions(docs, &preds, labels))
}
