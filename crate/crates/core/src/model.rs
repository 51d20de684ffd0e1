//! Two-level recurrent encoder with a token tagging head and a sentence
//! classification head.
//!
//! Wiring, per sentence `i` with tokens `t`:
//!
//! ```text
//! x[i,t]  = embedding[w[i,t]]
//! u[i,t]  = sentence BiGRU over x[i,·]               (2H)
//! v[i]    = [last_fwd ; last_bwd] of that BiGRU      (2H)
//! c[i]    = document BiGRU over v[1..m]              (2D)
//! class   = W_c c[i] + b_c
//! emit    = W_e [u[i,t] ; c[i]] + b_e
//! ```
//!
//! Tagging uses either an independent softmax per token or a linear-chain
//! CRF on top of the emissions.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfParams};
use crate::data::{EncodedDocument, EncodedSentence};
use crate::linalg::{self, glorot_init, Matrix, Rng};
use crate::nn::{
    bigru_backward, bigru_forward, dense_backward, dense_backward_rows, dense_forward,
    dense_forward_rows, embed_backward, embed_forward, grad_check, softmax_ce, BiGruCache,
    GradCheckError, GradCheckReport, GruCell, ParamTensor, Parameters,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaggerMode {
    Softmax,
    Crf,
}

impl FromStr for TaggerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(Self::Softmax),
            "crf" => Ok(Self::Crf),
            other => Err(format!(
                "unknown tagger mode {other:?} (expected softmax or crf)"
            )),
        }
    }
}

impl fmt::Display for TaggerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Softmax => "softmax",
            Self::Crf => "crf",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub sent_hidden: usize,
    pub doc_hidden: usize,
    pub tag_count: usize,
    pub class_count: usize,
    pub tagger_mode: TaggerMode,
    pub lambda_sent: f64,
    /// Drops the document context from token features.
    #[serde(default)]
    pub ablate_doc_context: bool,
}

impl HierConfig {
    pub fn new(vocab_size: usize, tag_count: usize, class_count: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 32,
            sent_hidden: 32,
            doc_hidden: 32,
            tag_count,
            class_count,
            tagger_mode: TaggerMode::Crf,
            lambda_sent: 0.5,
            ablate_doc_context: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("sent_hidden", self.sent_hidden),
            ("doc_hidden", self.doc_hidden),
            ("tag_count", self.tag_count),
            ("class_count", self.class_count),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!(
                "{name} must be at least 1"
            )));
        }
        if !self.lambda_sent.is_finite() || self.lambda_sent < 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "lambda_sent must be finite and non-negative, got {}",
                self.lambda_sent
            )));
        }
        Ok(())
    }

    /// Width of the token feature vector `[u ; c]`.
    pub fn feature_dim(&self) -> usize {
        2 * self.sent_hidden + 2 * self.doc_hidden
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let (v, e, h, d, k, c) = (
            self.vocab_size,
            self.embed_dim,
            self.sent_hidden,
            self.doc_hidden,
            self.tag_count,
            self.class_count,
        );
        let gru =
            |input: usize, hidden: usize| 3 * hidden * input + 3 * hidden * hidden + 3 * hidden;
        let crf = match self.tagger_mode {
            TaggerMode::Crf => k * k + 2 * k,
            TaggerMode::Softmax => 0,
        };
        v * e + 2 * gru(e, h) + 2 * gru(2 * h, d) + k * self.feature_dim() + k + c * 2 * d + c + crf
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("document {0:?} has no sentences")]
    EmptyDocument(String),
    #[error("document {doc:?}: sentence {sentence} is empty")]
    EmptySentence { doc: String, sentence: usize },
    #[error("document {doc:?}: token id {id} at sentence {sentence}, position {position} is outside the vocabulary of {vocab}")]
    TokenOutOfRange {
        doc: String,
        sentence: usize,
        position: usize,
        id: usize,
        vocab: usize,
    },
    #[error("document {doc:?}: sentence {sentence} has no gold {what}")]
    MissingGold {
        doc: String,
        sentence: usize,
        what: &'static str,
    },
    #[error("document {doc:?}: sentence {sentence}: {message}")]
    BadGold {
        doc: String,
        sentence: usize,
        message: String,
    },
    #[error("parameter {name:?}: {message}")]
    BadParameter { name: String, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierModel {
    pub config: HierConfig,
    pub embedding: ParamTensor,
    pub sent_fwd: GruCell,
    pub sent_bwd: GruCell,
    pub doc_fwd: GruCell,
    pub doc_bwd: GruCell,
    pub emit_w: ParamTensor,
    pub emit_b: ParamTensor,
    pub class_w: ParamTensor,
    pub class_b: ParamTensor,
    pub crf: Option<CrfParams>,
}

struct SentenceCache {
    ids: Vec<usize>,
    bigru: BiGruCache,
    features: Matrix,
}

/// Everything backward needs from one forward pass.
pub struct DocCache {
    sentences: Vec<SentenceCache>,
    doc_bigru: BiGruCache,
    doc_reps: Matrix,
}

pub struct DocForward {
    /// One `n_i x K` matrix per sentence.
    pub emissions: Vec<Matrix>,
    pub class_logits: Vec<Vec<f64>>,
    /// Per-sentence token representations `u` (`n_i x 2H`).
    pub token_reps: Vec<Matrix>,
    /// Document-contextual sentence vectors `c` (`m x 2D`).
    pub doc_reps: Matrix,
    pub cache: DocCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub tags: Vec<Vec<usize>>,
    pub classes: Vec<usize>,
    pub class_probs: Vec<Vec<f64>>,
}

impl HierModel {
    /// Glorot-initialized weights, zero biases, zero CRF scores.
    pub fn new(config: HierConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let (e, h, d) = (config.embed_dim, config.sent_hidden, config.doc_hidden);
        let embedding = ParamTensor::new("embedding", glorot_init(config.vocab_size, e, rng));
        let sent_fwd = GruCell::new("sent.fwd", e, h, rng);
        let sent_bwd = GruCell::new("sent.bwd", e, h, rng);
        let doc_fwd = GruCell::new("doc.fwd", 2 * h, d, rng);
        let doc_bwd = GruCell::new("doc.bwd", 2 * h, d, rng);
        let emit_w = ParamTensor::new(
            "emit.W",
            glorot_init(config.tag_count, config.feature_dim(), rng),
        );
        let emit_b = ParamTensor::zeros("emit.b", config.tag_count, 1);
        let class_w = ParamTensor::new("class.W", glorot_init(config.class_count, 2 * d, rng));
        let class_b = ParamTensor::zeros("class.b", config.class_count, 1);
        let crf = match config.tagger_mode {
            TaggerMode::Crf => Some(CrfParams::zeros(config.tag_count)),
            TaggerMode::Softmax => None,
        };
        Ok(Self {
            config,
            embedding,
            sent_fwd,
            sent_bwd,
            doc_fwd,
            doc_bwd,
            emit_w,
            emit_b,
            class_w,
            class_b,
            crf,
        })
    }

    /// Every parameter set to zero.
    pub fn zeros(config: HierConfig) -> Result<Self, ModelError> {
        let mut m = Self::new(config, &mut Rng::new(0))?;
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        Ok(m)
    }

    /// Rebuilds a model from named tensors; every name in the inventory must
    /// be present exactly once with the expected shape.
    pub fn from_tensors(
        config: HierConfig,
        tensors: Vec<(String, Matrix)>,
    ) -> Result<Self, ModelError> {
        let mut model = Self::zeros(config)?;
        let mut by_name: HashMap<String, Matrix> = HashMap::with_capacity(tensors.len());
        for (name, value) in tensors {
            if by_name.insert(name.clone(), value).is_some() {
                return Err(ModelError::BadParameter {
                    name,
                    message: "appears twice".into(),
                });
            }
        }
        for p in model.params_mut() {
            let value = by_name
                .remove(&p.name)
                .ok_or_else(|| ModelError::BadParameter {
                    name: p.name.clone(),
                    message: "missing".into(),
                })?;
            if value.shape() != p.value.shape() {
                return Err(ModelError::BadParameter {
                    name: p.name.clone(),
                    message: format!(
                        "shape {}x{}, expected {}x{}",
                        value.rows(),
                        value.cols(),
                        p.value.rows(),
                        p.value.cols()
                    ),
                });
            }
            p.value = value;
        }
        if let Some(name) = by_name.into_keys().min() {
            return Err(ModelError::BadParameter {
                name,
                message: "not part of this model".into(),
            });
        }
        Ok(model)
    }

    fn check_input(&self, doc: &EncodedDocument) -> Result<(), ModelError> {
        if doc.sentences.is_empty() {
            return Err(ModelError::EmptyDocument(doc.id.clone()));
        }
        let vocab = self.config.vocab_size;
        for (i, s) in doc.sentences.iter().enumerate() {
            if s.token_ids.is_empty() {
                return Err(ModelError::EmptySentence {
                    doc: doc.id.clone(),
                    sentence: i,
                });
            }
            if let Some((position, &id)) =
                s.token_ids.iter().enumerate().find(|(_, &id)| id >= vocab)
            {
                return Err(ModelError::TokenOutOfRange {
                    doc: doc.id.clone(),
                    sentence: i,
                    position,
                    id,
                    vocab,
                });
            }
        }
        Ok(())
    }

    fn check_gold(&self, doc: &EncodedDocument) -> Result<(), ModelError> {
        for (i, s) in doc.sentences.iter().enumerate() {
            let missing = |what| ModelError::MissingGold {
                doc: doc.id.clone(),
                sentence: i,
                what,
            };
            let bad = |message: String| ModelError::BadGold {
                doc: doc.id.clone(),
                sentence: i,
                message,
            };
            let tags = s.tag_ids.as_ref().ok_or_else(|| missing("tags"))?;
            let class = s.class_id.ok_or_else(|| missing("class"))?;
            if tags.len() != s.token_ids.len() {
                return Err(bad(format!(
                    "{} tags for {} tokens",
                    tags.len(),
                    s.token_ids.len()
                )));
            }
            if let Some(&t) = tags.iter().find(|&&t| t >= self.config.tag_count) {
                return Err(bad(format!("tag id {t} out of range")));
            }
            if class >= self.config.class_count {
                return Err(bad(format!("class id {class} out of range")));
            }
        }
        Ok(())
    }

    pub fn forward_document(&self, doc: &EncodedDocument) -> Result<DocForward, ModelError> {
        self.check_input(doc)?;
        let h = self.config.sent_hidden;
        let d = self.config.doc_hidden;
        let m = doc.sentences.len();

        let mut sent_vecs = Matrix::zeros(m, 2 * h);
        let mut token_reps = Vec::with_capacity(m);
        let mut sent_caches = Vec::with_capacity(m);
        for (i, s) in doc.sentences.iter().enumerate() {
            let xs = embed_forward(&self.embedding, &s.token_ids);
            let out = bigru_forward(&self.sent_fwd, &self.sent_bwd, &xs);
            let row = sent_vecs.row_mut(i);
            row[..h].copy_from_slice(&out.last_fwd);
            row[h..].copy_from_slice(&out.last_bwd);
            token_reps.push(out.token_reps);
            sent_caches.push((s.token_ids.clone(), out.cache));
        }

        let doc_out = bigru_forward(&self.doc_fwd, &self.doc_bwd, &sent_vecs);
        let doc_reps = doc_out.token_reps;

        let class_logits: Vec<Vec<f64>> = (0..m)
            .map(|i| dense_forward(&self.class_w, &self.class_b, doc_reps.row(i)))
            .collect();

        let mut emissions = Vec::with_capacity(m);
        let mut sentences = Vec::with_capacity(m);
        for (i, (ids, bigru)) in sent_caches.into_iter().enumerate() {
            let u = &token_reps[i];
            let mut features = Matrix::zeros(u.rows(), self.config.feature_dim());
            for t in 0..u.rows() {
                let row = features.row_mut(t);
                row[..2 * h].copy_from_slice(u.row(t));
                if !self.config.ablate_doc_context {
                    row[2 * h..].copy_from_slice(doc_reps.row(i));
                }
            }
            emissions.push(dense_forward_rows(&self.emit_w, &self.emit_b, &features));
            sentences.push(SentenceCache {
                ids,
                bigru,
                features,
            });
        }
        debug_assert_eq!(doc_reps.cols(), 2 * d);

        Ok(DocForward {
            emissions,
            class_logits,
            token_reps,
            doc_reps: doc_reps.clone(),
            cache: DocCache {
                sentences,
                doc_bigru: doc_out.cache,
                doc_reps,
            },
        })
    }

    /// Backpropagates emission and class-logit gradients into every tensor.
    pub fn backward(&mut self, cache: DocCache, d_emissions: &[Matrix], d_class: &[Vec<f64>]) {
        let h = self.config.sent_hidden;
        let d = self.config.doc_hidden;
        let DocCache {
            sentences,
            doc_bigru,
            doc_reps,
        } = cache;
        let m = sentences.len();

        let mut d_doc = Matrix::zeros(m, 2 * d);
        let mut d_tokens = Vec::with_capacity(m);
        for (i, s) in sentences.iter().enumerate() {
            let d_feat = dense_backward_rows(
                &mut self.emit_w,
                &mut self.emit_b,
                &s.features,
                &d_emissions[i],
            );
            let mut du = Matrix::zeros(d_feat.rows(), 2 * h);
            for t in 0..d_feat.rows() {
                du.row_mut(t).copy_from_slice(&d_feat.row(t)[..2 * h]);
                if !self.config.ablate_doc_context {
                    linalg::axpy(d_doc.row_mut(i), 1.0, &d_feat.row(t)[2 * h..]);
                }
            }
            d_tokens.push(du);
            let dc = dense_backward(
                &mut self.class_w,
                &mut self.class_b,
                doc_reps.row(i),
                &d_class[i],
            );
            linalg::axpy(d_doc.row_mut(i), 1.0, &dc);
        }

        let zeros = vec![0.0; d];
        let d_sent_vecs = bigru_backward(
            &mut self.doc_fwd,
            &mut self.doc_bwd,
            doc_bigru,
            &d_doc,
            &zeros,
            &zeros,
        );

        for (i, (s, du)) in sentences.into_iter().zip(&d_tokens).enumerate() {
            let dv = d_sent_vecs.row(i);
            let dxs = bigru_backward(
                &mut self.sent_fwd,
                &mut self.sent_bwd,
                s.bigru,
                du,
                &dv[..h],
                &dv[h..],
            );
            embed_backward(&mut self.embedding, &s.ids, &dxs);
        }
    }

    /// Joint loss `T + λ S` with per-token and per-sentence normalization;
    /// accumulates gradients into every parameter.
    pub fn loss_document(&mut self, doc: &EncodedDocument) -> Result<f64, ModelError> {
        self.check_input(doc)?;
        self.check_gold(doc)?;
        let fwd = self.forward_document(doc)?;
        let total_tokens: usize = doc.sentences.iter().map(|s| s.token_ids.len()).sum();
        let m = doc.sentences.len();
        let tok_w = 1.0 / total_tokens as f64;
        let cls_w = self.config.lambda_sent / m as f64;

        let mut loss = 0.0;
        let mut d_emissions = Vec::with_capacity(m);
        let mut d_class = Vec::with_capacity(m);
        for (i, s) in doc.sentences.iter().enumerate() {
            let gold = s.tag_ids.as_ref().expect("checked");
            let em = &fwd.emissions[i];
            let d_em = match self.crf.as_mut() {
                Some(crf) => {
                    let (nll, d_em) = crf::nll_and_grads(em, gold, crf, tok_w);
                    loss += tok_w * nll;
                    d_em
                }
                None => {
                    let mut d_em = Matrix::zeros(em.rows(), em.cols());
                    for (t, &g) in gold.iter().enumerate() {
                        let (ce, d) = softmax_ce(em.row(t), g);
                        loss += tok_w * ce;
                        linalg::axpy(d_em.row_mut(t), tok_w, &d);
                    }
                    d_em
                }
            };
            d_emissions.push(d_em);

            let (ce, d) = softmax_ce(&fwd.class_logits[i], s.class_id.expect("checked"));
            loss += cls_w * ce;
            d_class.push(d.iter().map(|x| cls_w * x).collect());
        }
        self.backward(fwd.cache, &d_emissions, &d_class);
        Ok(loss)
    }

    pub fn predict_document(&self, doc: &EncodedDocument) -> Result<Prediction, ModelError> {
        let fwd = self.forward_document(doc)?;
        let tags = fwd
            .emissions
            .iter()
            .map(|em| match &self.crf {
                Some(crf) => crf::viterbi(em, crf).0,
                None => (0..em.rows()).map(|t| linalg::argmax(em.row(t))).collect(),
            })
            .collect();
        let classes = fwd.class_logits.iter().map(|l| linalg::argmax(l)).collect();
        let class_probs = fwd
            .class_logits
            .iter()
            .map(|l| linalg::softmax(l))
            .collect();
        Ok(Prediction {
            tags,
            classes,
            class_probs,
        })
    }

    /// Convenience for unlabeled token-id sentences.
    pub fn predict_ids(&self, sentences: &[Vec<usize>]) -> Result<Prediction, ModelError> {
        let doc = EncodedDocument {
            id: String::new(),
            sentences: sentences
                .iter()
                .map(|ids| EncodedSentence {
                    token_ids: ids.clone(),
                    tag_ids: None,
                    class_id: None,
                })
                .collect(),
        };
        self.predict_document(&doc)
    }
}

impl Parameters for HierModel {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut v = vec![&self.embedding];
        v.extend(self.sent_fwd.params());
        v.extend(self.sent_bwd.params());
        v.extend(self.doc_fwd.params());
        v.extend(self.doc_bwd.params());
        v.extend([&self.emit_w, &self.emit_b, &self.class_w, &self.class_b]);
        if let Some(crf) = &self.crf {
            v.extend(crf.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.sent_fwd.params_mut());
        v.extend(self.sent_bwd.params_mut());
        v.extend(self.doc_fwd.params_mut());
        v.extend(self.doc_bwd.params_mut());
        v.extend([
            &mut self.emit_w,
            &mut self.emit_b,
            &mut self.class_w,
            &mut self.class_b,
        ]);
        if let Some(crf) = &mut self.crf {
            v.extend(crf.params_mut());
        }
        v
    }
}

/// The fixed toy setting used by gradient checks: V=20, E=4, H=3, D=3, K=5,
/// C=3, with a random two-sentence document. Draws the document first, then
/// the parameters, from `rng`.
pub fn toy_setup(mode: TaggerMode, rng: &mut Rng) -> (HierModel, EncodedDocument) {
    let mut cfg = HierConfig::new(20, 5, 3);
    cfg.embed_dim = 4;
    cfg.sent_hidden = 3;
    cfg.doc_hidden = 3;
    cfg.tagger_mode = mode;
    let doc = random_document(rng, 2, 20, 5, 3);
    let mut model = HierModel::new(cfg, rng).expect("valid toy config");
    // nonzero biases and CRF scores so every coordinate is exercised
    for p in model.params_mut() {
        if p.value.cols() == 1 || p.name.starts_with("crf.") {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.2 * rng.gauss());
        }
    }
    (model, doc)
}

/// Runs the gradient check on the toy setting, with one random stream seeded
/// by `seed` driving the document, the parameters and the sampled coordinates.
pub fn toy_gradcheck(
    mode: TaggerMode,
    seed: u64,
    eps: f64,
    sample: usize,
) -> Result<GradCheckReport, GradCheckError> {
    let mut rng = Rng::new(seed);
    let (mut model, doc) = toy_setup(mode, &mut rng);
    grad_check(
        &mut model,
        |m| m.loss_document(&doc).expect("toy document is valid"),
        eps,
        sample,
        &mut rng,
    )
}

/// Random labeled document with `m` sentences of 2 to 6 tokens.
pub fn random_document(
    rng: &mut Rng,
    m: usize,
    vocab: usize,
    tags: usize,
    classes: usize,
) -> EncodedDocument {
    EncodedDocument {
        id: "random".into(),
        sentences: (0..m)
            .map(|_| {
                let n = rng.range_inclusive(2, 6);
                EncodedSentence {
                    token_ids: (0..n).map(|_| rng.below(vocab)).collect(),
                    tag_ids: Some((0..n).map(|_| rng.below(tags)).collect()),
                    class_id: Some(rng.below(classes)),
                }
            })
            .collect(),
    }
}
