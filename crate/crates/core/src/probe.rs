//! The bias probe: L2-regularized binary logistic regression on TFIDF
//! features.
//!
//! The objective is
//!
//! ```text
//! f(w, b) = (1/N) Σ log(1 + exp(-s_i (w·x_i + b))) + λ‖w‖² / (2N)
//! ```
//!
//! with `s_i = ±1` and the bias left unregularized. Dividing the penalty by
//! `N` makes `λ = 1` equivalent to a unit inverse regularization strength on
//! the summed loss, whatever the dataset size. It is minimized with L-BFGS
//! and a backtracking Armijo line search until the gradient norm drops below
//! the tolerance.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Label};
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, vectorize_articles, SparseVector, VocabParams, Vocabulary, WeightedToken};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub l2_weight: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
    /// Recorded with the model. The optimizer starts from zero and uses no
    /// randomness, so training is deterministic regardless.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            l2_weight: 1.0,
            tolerance: 1e-6,
            max_iterations: 1000,
            memory: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub l2_weight: f64,
    pub seed: u64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub examples: usize,
}

/// Weights and bias of a trained logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probability: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// The regularized mean logistic loss over a fixed training set.
///
/// Parameters are packed as `[w_0, …, w_{d-1}, b]`.
pub struct LogisticObjective<'a> {
    features: &'a [SparseVector],
    targets: Vec<f64>,
    dim: usize,
    l2_weight: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(features: &'a [SparseVector], labels: &[Label], l2_weight: f64) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "features vs labels",
                left: features.len(),
                right: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let positives = labels.iter().filter(|l| l.is_positive()).count();
        if positives == 0 {
            return Err(Error::SingleLabel(0));
        }
        if positives == labels.len() {
            return Err(Error::SingleLabel(1));
        }
        if !(l2_weight >= 0.0 && l2_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("l2_weight {l2_weight}")));
        }
        let dim = features[0].dim();
        for (i, x) in features.iter().enumerate() {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.dim() });
            }
            if !x.is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        Ok(LogisticObjective {
            features,
            targets: labels.iter().map(|l| l.as_u8() as f64).collect(),
            dim,
            l2_weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.value_and_gradient(params).0
    }

    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = params.split_at(self.dim);
        let b = b[0];
        let n = self.features.len() as f64;
        let mut grad = vec![0.0; self.dim + 1];
        let mut loss = 0.0;
        for (x, &y) in self.features.iter().zip(&self.targets) {
            let z = x.dot(w) + b;
            let sign = 2.0 * y - 1.0;
            loss += softplus(-sign * z);
            let residual = sigmoid(z) - y;
            for &(i, v) in x.entries() {
                grad[i] += residual * v;
            }
            grad[self.dim] += residual;
        }
        let reg = self.l2_weight / n;
        let sq: f64 = w.iter().map(|v| v * v).sum();
        for (g, wi) in grad.iter_mut().zip(w) {
            *g = *g / n + reg * wi;
        }
        grad[self.dim] /= n;
        (loss / n + 0.5 * reg * sq, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: returns `-H g` for the L-BFGS inverse-Hessian estimate.
fn lbfgs_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Fits the logistic model. Stops at gradient norm ≤ `tolerance`, at the
/// iteration cap, or when the line search can make no further progress; the
/// outcome is recorded in [`TrainingMeta`].
pub fn train(features: &[SparseVector], labels: &[Label], params: &TrainParams) -> Result<LogisticModel> {
    let objective = LogisticObjective::new(features, labels, params.l2_weight)?;
    let mut x = vec![0.0; objective.dim() + 1];
    let (mut f, mut g) = objective.value_and_gradient(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(params.memory);
    let mut iterations = 0;
    const ARMIJO: f64 = 1e-4;

    while iterations < params.max_iterations && norm(&g) > params.tolerance {
        let mut d = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = objective.value_and_gradient(&trial);
            if ft <= f + ARMIJO * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else {
            break;
        };
        iterations += 1;
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == params.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = next;
        f = f_next;
        g = g_next;
    }

    let gradient_norm = norm(&g);
    let bias = x.pop().unwrap_or(0.0);
    Ok(LogisticModel {
        weights: x,
        bias,
        meta: TrainingMeta {
            l2_weight: params.l2_weight,
            seed: params.seed,
            iterations,
            gradient_norm,
            objective: f,
            tolerance: params.tolerance,
            converged: gradient_norm <= params.tolerance,
            examples: features.len(),
        },
    })
}

impl LogisticModel {
    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// Probability of the positive label; label 1 iff probability ≥ 0.5.
    pub fn predict(&self, features: &[SparseVector]) -> Result<Vec<Prediction>> {
        features
            .iter()
            .map(|x| {
                if x.dim() != self.weights.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.weights.len(),
                        got: x.dim(),
                    });
                }
                let probability = sigmoid(self.decision(x));
                Ok(Prediction {
                    label: Label::from_bool(probability >= 0.5),
                    probability,
                })
            })
            .collect()
    }
}

/// Top-weighted tokens on each side of the decision boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Salience {
    pub positive: Vec<WeightedToken>,
    pub negative: Vec<WeightedToken>,
}

/// A logistic model bound to the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbeFile", into = "ProbeFile")]
pub struct LinearProbe {
    pub model: LogisticModel,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct ProbeFile {
    vocab_hash: String,
    weights: Vec<f64>,
    bias: f64,
    metadata: TrainingMeta,
    vocab: Vocabulary,
}

impl From<LinearProbe> for ProbeFile {
    fn from(p: LinearProbe) -> Self {
        ProbeFile {
            vocab_hash: p.vocab.fingerprint(),
            weights: p.model.weights,
            bias: p.model.bias,
            metadata: p.model.meta,
            vocab: p.vocab,
        }
    }
}

impl TryFrom<ProbeFile> for LinearProbe {
    type Error = String;

    fn try_from(f: ProbeFile) -> std::result::Result<Self, String> {
        if f.vocab.fingerprint() != f.vocab_hash {
            return Err("vocabulary hash does not match the stored vocabulary".into());
        }
        if f.weights.len() != f.vocab.len() {
            return Err(format!("{} weights for {} tokens", f.weights.len(), f.vocab.len()));
        }
        Ok(LinearProbe {
            model: LogisticModel {
                weights: f.weights,
                bias: f.bias,
                meta: f.metadata,
            },
            vocab: f.vocab,
        })
    }
}

impl LinearProbe {
    pub fn new(model: LogisticModel, vocab: Vocabulary) -> Result<Self> {
        if model.weights.len() != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                got: model.weights.len(),
            });
        }
        Ok(LinearProbe { model, vocab })
    }

    pub fn predict(&self, features: &[SparseVector]) -> Result<Vec<Prediction>> {
        self.model.predict(features)
    }

    pub fn predict_articles(&self, articles: &[Article]) -> Vec<Prediction> {
        let features = vectorize_articles(articles, &self.vocab);
        self.model
            .predict(&features)
            .expect("vectors built from the probe's own vocabulary")
    }

    /// Top-`k` tokens by signed weight, descending for the positive list and
    /// ascending for the negative list; ties broken by token.
    pub fn salient_features(&self, k: usize) -> Result<Salience> {
        let v = self.vocab.len();
        if k > v {
            return Err(Error::KTooLarge { k, size: v });
        }
        let mut order: Vec<usize> = (0..v).collect();
        let w = &self.model.weights;
        let entry = |i: usize| WeightedToken {
            token: self.vocab.token(i).to_owned(),
            weight: w[i],
            count: self.vocab.document_frequency(i),
        };
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then_with(|| self.vocab.token(a).cmp(self.vocab.token(b))));
        let positive = order.iter().take(k).map(|&i| entry(i)).collect();
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then_with(|| self.vocab.token(a).cmp(self.vocab.token(b))));
        let negative = order.iter().take(k).map(|&i| entry(i)).collect();
        Ok(Salience { positive, negative })
    }

    /// Indices of the `d` largest-magnitude weights (ties by token).
    pub fn top_feature_indices(&self, d: usize) -> Vec<usize> {
        let w = &self.model.weights;
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| {
            w[b].abs()
                .total_cmp(&w[a].abs())
                .then_with(|| self.vocab.token(a).cmp(self.vocab.token(b)))
        });
        order.truncate(d);
        order
    }
}

/// Builds a vocabulary over `articles` and trains a probe on it.
pub fn train_probe(articles: &[Article], vocab_params: &VocabParams, params: &TrainParams) -> Result<LinearProbe> {
    let vocab = build_vocabulary(articles, vocab_params)?;
    let features = vectorize_articles(articles, &vocab);
    let labels: Vec<Label> = articles.iter().map(|a| a.label).collect();
    let model = train(&features, &labels, params)?;
    LinearProbe::new(model, vocab)
}
