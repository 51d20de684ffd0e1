//! Training loop, evaluation and checkpoints.
//!
//! Gradients are accumulated document by document over `batch_docs`
//! documents, averaged, clipped to a global norm and applied with Adam. Model
//! selection keeps the epoch with the best dev span-F1.

mod checkpoint;
mod eval;
mod optim;

pub use checkpoint::{Checkpoint, CheckpointError, MAGIC, VERSION};
pub use eval::{decode_spans, evaluate, score_predictions, Metrics};
pub use optim::{adam_step, clip_global, global_grad_norm, AdamConfig, AdamState, NonFiniteGrad};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{build_vocab, encode_document, Document, EncodedDocument, LabelSet};
use crate::linalg::Rng;
use crate::model::{HierConfig, HierModel, ModelError, TaggerMode};
use crate::nn::Parameters;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub batch_docs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lambda_sent: f64,
    pub tagger_mode: TaggerMode,
    pub embed_dim: usize,
    pub sent_hidden: usize,
    pub doc_hidden: usize,
    /// Zeroes the document context in token features and shrinks the
    /// document encoder to a single unit.
    pub ablate_doc_context: bool,
    /// Training tokens seen fewer times map to `<unk>`.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            batch_docs: 8,
            max_epochs: 100,
            patience: 5,
            seed: 1,
            lambda_sent: 0.5,
            tagger_mode: TaggerMode::Crf,
            embed_dim: 32,
            sent_hidden: 32,
            doc_hidden: 32,
            ablate_doc_context: false,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed override {0:?} (expected key=value)")]
    MalformedOverride(String),
    #[error("config file must hold a flat JSON object")]
    NotAnObject,
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl TrainConfig {
    /// Layers a flat JSON object and then `key=value` overrides on top of
    /// `self`. Override values are parsed as JSON, falling back to a string.
    pub fn with_overrides(
        &self,
        file: Option<&Value>,
        sets: &[String],
    ) -> Result<Self, ConfigError> {
        let mut merged: Map<String, Value> =
            match serde_json::to_value(self).expect("config serializes") {
                Value::Object(m) => m,
                _ => unreachable!("struct serializes to an object"),
            };
        if let Some(file) = file {
            let obj = file.as_object().ok_or(ConfigError::NotAnObject)?;
            for (k, v) in obj {
                merged.insert(k.clone(), v.clone());
            }
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::MalformedOverride(s.clone()))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::MalformedOverride(s.clone()));
            }
            let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            merged.insert(k.to_string(), v);
        }
        let cfg: Self = serde_json::from_value(Value::Object(merged))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            ));
        }
        for (name, v) in [
            ("batch_docs", self.batch_docs),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("min_count", self.min_count),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        self.model_config(2, 1, 1)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn model_config(
        &self,
        vocab_size: usize,
        tag_count: usize,
        class_count: usize,
    ) -> HierConfig {
        HierConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            sent_hidden: self.sent_hidden,
            doc_hidden: if self.ablate_doc_context {
                1
            } else {
                self.doc_hidden
            },
            tag_count,
            class_count,
            tagger_mode: self.tagger_mode,
            lambda_sent: self.lambda_sent,
            ablate_doc_context: self.ablate_doc_context,
        }
    }
}

/// One line of the history file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-document joint loss over the epoch.
    pub train_loss: f64,
    pub dev_f1: Option<f64>,
    pub dev_class_acc: Option<f64>,
    pub dev_token_acc: Option<f64>,
    pub steps: usize,
    pub clipped_steps: usize,
    pub clip_factor_mean: f64,
    pub clip_factor_min: f64,
    pub improved: bool,
    /// Set on the epoch whose parameters were kept.
    pub selected: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.epochs {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("non-finite loss {loss} in epoch {epoch} on document {doc}")]
    NonFiniteLoss {
        epoch: usize,
        doc: String,
        loss: f64,
    },
    #[error("epoch {epoch}: {source}")]
    NonFiniteGrad {
        epoch: usize,
        #[source]
        source: NonFiniteGrad,
    },
    #[error("non-finite global gradient norm {norm} in epoch {epoch}")]
    NonFiniteGradNorm { epoch: usize, norm: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl TrainError {
    /// Whether training failed because the numbers blew up rather than
    /// because of bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Self::NonFiniteLoss { .. }
                | Self::NonFiniteGrad { .. }
                | Self::NonFiniteGradNorm { .. }
        )
    }
}

/// Trains `model` in place of a copy and returns the selected parameters.
///
/// `rng` drives the per-epoch shuffles. `on_epoch` sees every record as soon
/// as the epoch finishes; `selected` is only final in the returned history.
pub fn train(
    mut model: HierModel,
    train_docs: &[EncodedDocument],
    dev_docs: &[EncodedDocument],
    labels: &LabelSet,
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HierModel, History), TrainError> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let adam = cfg.adam();
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, f64, HierModel)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    model.zero_grads();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let (mut steps, mut clipped, mut factor_sum, mut factor_min) = (0, 0, 0.0, 1.0f64);
        for batch in order.chunks(cfg.batch_docs) {
            for &i in batch {
                let doc = &train_docs[i];
                let loss = model.loss_document(doc)?;
                loss_sum += loss;
                // the running sum can overflow even when each term is finite
                if !loss_sum.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        doc: doc.id.clone(),
                        loss,
                    });
                }
            }
            if batch.len() > 1 {
                let scale = 1.0 / batch.len() as f64;
                for p in model.params_mut() {
                    p.grad.scale_in_place(scale);
                }
            }
            let norm = global_grad_norm(&model);
            if !norm.is_finite() {
                return Err(TrainError::NonFiniteGradNorm { epoch, norm });
            }
            let factor = clip_global(&mut model, cfg.clip_norm);
            adam_step(&mut model, &mut state, &adam)
                .map_err(|source| TrainError::NonFiniteGrad { epoch, source })?;
            steps += 1;
            factor_sum += factor;
            factor_min = factor_min.min(factor);
            clipped += usize::from(factor < 1.0);
        }

        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_docs.len() as f64,
            dev_f1: None,
            dev_class_acc: None,
            dev_token_acc: None,
            steps,
            clipped_steps: clipped,
            clip_factor_mean: factor_sum / steps as f64,
            clip_factor_min: factor_min,
            improved: false,
            selected: false,
            warning: None,
        };
        let mut stop = false;
        if dev_docs.is_empty() {
            record.warning = Some("empty dev set; keeping the final epoch".into());
            if epoch == cfg.max_epochs {
                best = Some((epoch, f64::NAN, model.clone()));
            }
        } else {
            let m = evaluate(&model, dev_docs, labels)?;
            let f1 = m.span.micro.f1;
            record.dev_f1 = Some(f1);
            record.dev_class_acc = Some(m.class_acc);
            record.dev_token_acc = Some(m.token_acc);
            record.improved = best.as_ref().is_none_or(|(_, b, _)| f1 > *b);
            if record.improved {
                best = Some((epoch, f1, model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    stop = true;
                    stopped_early = epoch < cfg.max_epochs;
                }
            }
        }
        on_epoch(&record);
        epochs.push(record);
        if stop {
            break;
        }
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch ran");
    epochs[best_epoch - 1].selected = true;
    Ok((
        best_model,
        History {
            epochs,
            best_epoch,
            stopped_early,
        },
    ))
}

/// Result of training from raw corpora.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub history: History,
    /// Metrics of the selected model on the dev set, if there is one.
    pub dev_metrics: Option<Metrics>,
}

/// Builds the vocabulary from `train_docs`, initializes a model from
/// `cfg.seed` and trains it. One generator seeded once drives both the
/// initialization and the shuffles.
pub fn fit(
    train_docs: &[Document],
    dev_docs: &[Document],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainRun, TrainError> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let labels = LabelSet::lawsuit();
    let vocab = build_vocab(train_docs, cfg.min_count);
    let enc = |docs: &[Document]| -> Vec<EncodedDocument> {
        docs.iter()
            .map(|d| encode_document(d, &vocab, &labels))
            .collect()
    };
    let (train_enc, dev_enc) = (enc(train_docs), enc(dev_docs));
    let mut rng = Rng::new(cfg.seed);
    let model = HierModel::new(
        cfg.model_config(vocab.len(), labels.tag_count(), labels.class_count()),
        &mut rng,
    )?;
    let (model, history) = train(
        model, &train_enc, &dev_enc, &labels, cfg, &mut rng, on_epoch,
    )?;
    let dev_metrics = if dev_enc.is_empty() {
        None
    } else {
        Some(evaluate(&model, &dev_enc, &labels)?)
    };
    Ok(TrainRun {
        checkpoint: Checkpoint {
            model,
            vocab,
            labels,
        },
        history,
        dev_metrics,
    })
}
