//! Binary text classifier: embedding → Bi-LSTM → LSTM → sigmoid.
//!
//! The Bi-LSTM emits its full concatenated sequence, the top LSTM reads it,
//! and the top layer's final hidden state feeds a single sigmoid unit. The
//! same code path serves both the sentiment task (1 = positive) and the
//! counseling-relatedness task (1 = related).

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{sigmoid, Squash};
use crate::checkpoint::Checkpoint;
use crate::loss::{bce_logit_grad, bce_term};
use crate::lstm::{backward_sequence, bilstm_cached, run_cached, LstmCellParams, LstmState, StepCache, WeightInit};
use crate::params::{prefixed, Parameters};
use crate::tensor::dot;
use crate::text::{compute_pad_length, pad_truncate, EmbeddingTable, PadPolicy, TextPipeline};
use crate::train::{fit, EpochRecord, Objective, TrainHistory, TrainSchedule};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskTag {
    Sentiment,
    Relatedness,
}

impl TaskTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskTag::Sentiment => "sentiment",
            TaskTag::Relatedness => "relatedness",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sentiment" => Some(TaskTag::Sentiment),
            "relatedness" => Some(TaskTag::Relatedness),
            _ => None,
        }
    }
}

/// One labelled text, as read from a `<label>\t<text>` dataset line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub label: u8,
    pub text: String,
}

impl LabeledText {
    pub fn new(label: u8, text: impl Into<String>) -> Self {
        LabeledText {
            label,
            text: text.into(),
        }
    }
}

/// Scores a raw text with a probability in `[0, 1]`.
pub trait Scorer {
    fn score(&self, text: &str) -> f64;
}

impl<F: Fn(&str) -> f64> Scorer for F {
    fn score(&self, text: &str) -> f64 {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Units per direction of the bidirectional layer.
    pub bilstm_units: usize,
    pub lstm_units: usize,
    pub task: TaskTag,
    pub decision_threshold: f64,
    pub schedule: TrainSchedule,
    pub pad: PadPolicy,
    pub squash: Squash,
    pub init: WeightInit,
    /// Train a copy of the embedding matrix instead of keeping it frozen.
    pub train_embeddings: bool,
    /// Held-out fraction when no validation set is supplied.
    pub val_fraction: f64,
    pub pipeline: TextPipeline,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            bilstm_units: 32,
            lstm_units: 16,
            task: TaskTag::Sentiment,
            decision_threshold: 0.5,
            schedule: TrainSchedule::default(),
            pad: PadPolicy::default(),
            squash: Squash::Sigmoid,
            init: WeightInit::default(),
            train_embeddings: false,
            val_fraction: 0.1,
            pipeline: TextPipeline::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bilstm_units == 0 || self.lstm_units == 0 {
            return Err(Error::config("layer widths must be at least 1"));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::config("decision threshold must lie in (0, 1)"));
        }
        if !(self.pad.coverage > 0.0 && self.pad.coverage <= 1.0) {
            return Err(Error::config("pad coverage must lie in (0, 1]"));
        }
        self.schedule.validate()
    }
}

/// Trainable weights of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierNet {
    /// Trainable copy of the embedding matrix; empty while embeddings are frozen.
    pub embedding: Tensor,
    pub fwd: LstmCellParams,
    pub bwd: LstmCellParams,
    pub top: LstmCellParams,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl ClassifierNet {
    pub fn init<R: Rng + ?Sized>(
        embed_dim: usize,
        bilstm_units: usize,
        lstm_units: usize,
        squash: Squash,
        init: WeightInit,
        rng: &mut R,
    ) -> Self {
        let fwd = LstmCellParams::init(embed_dim, bilstm_units, squash, init, rng);
        let bwd = LstmCellParams::init(embed_dim, bilstm_units, squash, init, rng);
        let top = LstmCellParams::init(2 * bilstm_units, lstm_units, squash, init, rng);
        let mut head_w = Tensor::vector(lstm_units);
        let limit = init.limit(lstm_units, 1);
        for v in head_w.data_mut() {
            *v = rng.random_range(-limit..limit);
        }
        ClassifierNet {
            embedding: Tensor::empty(),
            fwd,
            bwd,
            top,
            head_w,
            head_b: Tensor::vector(1),
        }
    }

    pub fn bilstm_units(&self) -> usize {
        self.fwd.hidden_dim()
    }

    pub fn lstm_units(&self) -> usize {
        self.top.hidden_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    fn validate(&self) -> Result<()> {
        self.fwd.validate()?;
        self.bwd.validate()?;
        self.top.validate()?;
        if self.bwd.input_dim() != self.embed_dim()
            || self.bwd.hidden_dim() != self.bilstm_units()
            || self.top.input_dim() != 2 * self.bilstm_units()
            || self.head_w.shape() != [self.lstm_units()]
            || self.head_b.shape() != [1]
        {
            return Err(Error::config("classifier layer shapes are inconsistent"));
        }
        Ok(())
    }
}

impl Parameters for ClassifierNet {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = prefixed("", vec![("embedding", &self.embedding)]).collect();
        out.extend(self.fwd.named_with_prefix("fwd"));
        out.extend(self.bwd.named_with_prefix("bwd"));
        out.extend(self.top.named_with_prefix("top"));
        out.push(("head_w".to_string(), &self.head_w));
        out.push(("head_b".to_string(), &self.head_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if !self.embedding.is_empty() {
            out.push(&mut self.embedding);
        }
        out.extend(self.fwd.all_mut());
        out.extend(self.bwd.all_mut());
        out.extend(self.top.all_mut());
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    fn zeros_like(&self) -> Self {
        ClassifierNet {
            embedding: self.embedding.zeros_like(),
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.zeros_like(),
            top: self.top.zeros_like(),
            head_w: self.head_w.zeros_like(),
            head_b: self.head_b.zeros_like(),
        }
    }
}

/// A padded index sequence with its binary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub indices: Vec<usize>,
    pub label: u8,
}

struct Forward {
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
    top: Vec<StepCache>,
    prob: f64,
}

fn embedding_rows<'a>(net: &'a ClassifierNet, table: &'a EmbeddingTable, indices: &[usize]) -> Vec<&'a [f64]> {
    if net.embedding.is_empty() {
        indices.iter().map(|&i| table.vector(i)).collect()
    } else {
        indices.iter().map(|&i| net.embedding.row(i)).collect()
    }
}

fn forward(net: &ClassifierNet, table: &EmbeddingTable, indices: &[usize]) -> Forward {
    let xs = embedding_rows(net, table, indices);
    let (f, b) = bilstm_cached(&xs, &net.fwd, &net.bwd);
    let bi = crate::lstm::concat_directions(&f, &b);
    let top = run_cached(&net.top, bi.iter().map(Vec::as_slice), &LstmState::zeros(net.lstm_units()));
    let z = dot(&top.last().expect("non-empty sequence").h, net.head_w.data()) + net.head_b.data()[0];
    Forward {
        fwd: f,
        bwd: b,
        top,
        prob: sigmoid(z),
    }
}

/// Probability output of the network for an already-padded index sequence.
pub fn forward_prob(net: &ClassifierNet, table: &EmbeddingTable, indices: &[usize]) -> f64 {
    forward(net, table, indices).prob
}

/// Accumulates `scale · ∂loss/∂θ` of one example into `grad`; returns its loss.
fn backward(net: &ClassifierNet, table: &EmbeddingTable, ex: &Example, scale: f64, grad: &mut ClassifierNet) -> f64 {
    let fw = forward(net, table, &ex.indices);
    let y = f64::from(ex.label);
    let loss = bce_term(fw.prob, y);
    let dz = bce_logit_grad(fw.prob, y) * scale;
    let n = ex.indices.len();
    let h_top = &fw.top[n - 1].h;

    for (g, h) in grad.head_w.data_mut().iter_mut().zip(h_top) {
        *g += dz * h;
    }
    grad.head_b.data_mut()[0] += dz;

    let units = net.lstm_units();
    let mut dh_top = vec![vec![0.0; units]; n];
    dh_top[n - 1] = net.head_w.data().iter().map(|w| w * dz).collect();
    let (d_bi, _) = backward_sequence(&net.top, &fw.top, &dh_top, None, &mut grad.top, true);

    let hb = net.bilstm_units();
    let dh_f: Vec<Vec<f64>> = d_bi.iter().map(|d| d[..hb].to_vec()).collect();
    // Backward-cell step k saw position n-1-k.
    let dh_b: Vec<Vec<f64>> = (0..n).map(|k| d_bi[n - 1 - k][hb..].to_vec()).collect();
    let want_dx = !net.embedding.is_empty();
    let (dx_f, _) = backward_sequence(&net.fwd, &fw.fwd, &dh_f, None, &mut grad.fwd, want_dx);
    let (dx_b, _) = backward_sequence(&net.bwd, &fw.bwd, &dh_b, None, &mut grad.bwd, want_dx);
    if want_dx {
        for (t, &idx) in ex.indices.iter().enumerate() {
            if idx == 0 {
                continue; // the pad row stays zero
            }
            let row = grad.embedding.row_mut(idx);
            crate::tensor::add_assign(row, &dx_f[t]);
            crate::tensor::add_assign(row, &dx_b[n - 1 - t]);
        }
    }
    loss
}

/// BCE objective over padded examples with a fixed embedding table.
pub struct ClassifierObjective<'a> {
    pub table: &'a EmbeddingTable,
}

impl Objective for ClassifierObjective<'_> {
    type Params = ClassifierNet;
    type Example = Example;

    fn loss(&self, net: &ClassifierNet, batch: &[&Example]) -> Result<f64> {
        check_batch(batch)?;
        let total: f64 = batch
            .iter()
            .map(|ex| bce_term(forward(net, self.table, &ex.indices).prob, f64::from(ex.label)))
            .sum();
        Ok(total / batch.len() as f64)
    }

    fn loss_and_grad(&self, net: &ClassifierNet, batch: &[&Example]) -> Result<(f64, ClassifierNet)> {
        check_batch(batch)?;
        let mut grad = net.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            total += backward(net, self.table, ex, scale, &mut grad);
        }
        Ok((total * scale, grad))
    }
}

fn check_batch(batch: &[&Example]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.iter().any(|e| e.indices.is_empty()) {
        return Err(Error::invalid("example with an empty index sequence"));
    }
    Ok(())
}

/// A trained classifier bundled with everything needed to score raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub task: TaskTag,
    pub threshold: f64,
    pub pad_length: usize,
    pub pipeline: TextPipeline,
    pub net: ClassifierNet,
    pub table: Arc<EmbeddingTable>,
}

/// A score plus whether the text cleaned down to nothing (and was scored on
/// the all-pad sequence).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreResult {
    pub score: f64,
    pub empty_input: bool,
}

impl ClassifierModel {
    pub fn encode(&self, text: &str) -> (Vec<usize>, bool) {
        let seq = self.pipeline.encode(text, &self.table);
        let empty = seq.is_empty();
        (pad_truncate(&seq, self.pad_length).indices, empty)
    }

    pub fn predict_score(&self, text: &str) -> ScoreResult {
        let (indices, empty_input) = self.encode(text);
        ScoreResult {
            score: forward_prob(&self.net, &self.table, &indices),
            empty_input,
        }
    }

    pub fn predict_label(&self, text: &str) -> u8 {
        label_for(self.predict_score(text).score, self.threshold)
    }

    pub fn evaluate(&self, test: &[LabeledText]) -> Result<EvalReport> {
        if test.is_empty() {
            return Err(Error::invalid("evaluation set is empty"));
        }
        let pairs = test.iter().map(|ex| (self.predict_label(&ex.text), ex.label));
        Ok(EvalReport::from_predictions(pairs))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            self.net.embed_dim(),
            vec![self.net.bilstm_units(), self.net.lstm_units()],
            self.net.fwd.squash,
        );
        ck.set_meta("kind", "classifier");
        ck.set_meta("task_tag", self.task.as_str());
        ck.set_meta("pad_length", self.pad_length);
        ck.set_meta("threshold", self.threshold);
        ck.set_meta("vocab_fingerprint", alloc::format!("{:016x}", self.table.fingerprint()));
        ck.set_meta("clean_profile", profile_name(self.pipeline));
        if !self.net.embedding.is_empty() {
            ck.push("embedding", &self.net.embedding);
        }
        ck.push_lstm("fwd", &self.net.fwd);
        ck.push_lstm("bwd", &self.net.bwd);
        ck.push_lstm("top", &self.net.top);
        ck.push("head_w", &self.net.head_w);
        ck.push("head_b", &self.net.head_b);
        ck
    }

    /// Rebuilds a model; `table` must be the embedding table it was trained with.
    pub fn from_checkpoint(ck: &Checkpoint, table: Arc<EmbeddingTable>) -> Result<Self> {
        ck.check_version()?;
        if ck.meta("kind")? != "classifier" {
            return Err(Error::invalid("checkpoint is not a classifier"));
        }
        let fp = alloc::format!("{:016x}", table.fingerprint());
        if ck.meta("vocab_fingerprint")? != fp {
            return Err(Error::invalid("embedding table does not match the one the model was trained with"));
        }
        let task = TaskTag::parse(ck.meta("task_tag")?).ok_or_else(|| Error::invalid("unknown task_tag"))?;
        let net = ClassifierNet {
            embedding: ck.tensor_or_empty("embedding"),
            fwd: ck.lstm("fwd")?,
            bwd: ck.lstm("bwd")?,
            top: ck.lstm("top")?,
            head_w: ck.tensor("head_w")?.clone(),
            head_b: ck.tensor("head_b")?.clone(),
        };
        net.validate()?;
        if net.embed_dim() != table.dim()
            || (!net.embedding.is_empty() && net.embedding.shape() != table.matrix().shape())
        {
            return Err(Error::invalid("checkpoint embedding width does not match the table"));
        }
        let pad_length: usize = ck.meta_parse("pad_length")?;
        if pad_length == 0 {
            return Err(Error::invalid("pad_length must be at least 1"));
        }
        Ok(ClassifierModel {
            task,
            threshold: ck.meta_parse("threshold")?,
            pad_length,
            pipeline: parse_profile(ck.meta.get("clean_profile").map(String::as_str))?,
            net,
            table,
        })
    }
}

pub(crate) fn profile_name(p: TextPipeline) -> &'static str {
    match p.profile {
        crate::text::CleanProfile::Cjk => "cjk",
        crate::text::CleanProfile::PassThrough => "pass-through",
    }
}

pub(crate) fn parse_profile(s: Option<&str>) -> Result<TextPipeline> {
    let profile = match s {
        None | Some("cjk") => crate::text::CleanProfile::Cjk,
        Some("pass-through") => crate::text::CleanProfile::PassThrough,
        Some(other) => return Err(Error::invalid(alloc::format!("unknown clean profile {other:?}"))),
    };
    Ok(TextPipeline { profile })
}

impl Scorer for ClassifierModel {
    fn score(&self, text: &str) -> f64 {
        self.predict_score(text).score
    }
}

/// `1` iff `score ≥ threshold`.
pub fn label_for(score: f64, threshold: f64) -> u8 {
    u8::from(score >= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Notes about zero denominators.
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut warnings = Vec::new();
        let ratio = |num: usize, den: usize, what: &str, warnings: &mut Vec<String>| {
            if den == 0 {
                warnings.push(alloc::format!("{what} undefined (zero denominator); reported as 0"));
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, "precision", &mut warnings);
        let recall = ratio(tp, tp + fn_, "recall", &mut warnings);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let total = tp + fp + fn_ + tn;
        let accuracy = if total == 0 { 0.0 } else { (tp + tn) as f64 / total as f64 };
        EvalReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            accuracy,
            warnings,
        }
    }

    /// Builds the confusion matrix from `(predicted, actual)` label pairs.
    pub fn from_predictions(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (pred, actual) in pairs {
            match (pred, actual) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub history: TrainHistory,
}

/// Seeded shuffle split; the last `fraction` becomes the validation set.
pub fn split_holdout<T: Clone>(data: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut shuffled = data.to_vec();
    shuffled.shuffle(&mut rng);
    let n_val = libm::round(data.len() as f64 * fraction) as usize;
    let n_val = n_val.min(data.len().saturating_sub(1));
    let val = shuffled.split_off(data.len() - n_val);
    (shuffled, val)
}

/// Full training pipeline: clean → segment → index → pad → fit.
///
/// With `val = None` a seeded holdout of `cfg.val_fraction` is carved out of
/// `train`. The pad length is sized on the training split and stored in the
/// model.
pub fn train_classifier<F>(
    train: &[LabeledText],
    val: Option<&[LabeledText]>,
    cfg: &ClassifierConfig,
    table: Arc<EmbeddingTable>,
    on_epoch: F,
) -> Result<TrainedClassifier>
where
    F: FnMut(&EpochRecord, &ClassifierModel) -> Result<Option<String>>,
{
    cfg.validate()?;
    if let Some(bad) = train.iter().chain(val.unwrap_or(&[])).find(|e| e.label > 1) {
        return Err(Error::invalid(alloc::format!("label {} is not binary", bad.label)));
    }
    let has = |l: u8| train.iter().any(|e| e.label == l);
    if !has(0) || !has(1) {
        return Err(Error::invalid("training set must contain both labels"));
    }
    let (train_split, val_split) = match val {
        Some(v) => (train.to_vec(), v.to_vec()),
        None => split_holdout(train, cfg.val_fraction, cfg.schedule.rng_seed),
    };

    let encode = |e: &LabeledText| cfg.pipeline.encode(&e.text, &table);
    let train_seqs: Vec<_> = train_split.iter().map(encode).collect();
    let pad_length = compute_pad_length(train_seqs.iter().map(|s| s.len()), cfg.pad.coverage)?.max(1);
    let to_examples = |seqs: Vec<crate::text::IndexedSeq>, src: &[LabeledText]| -> Vec<Example> {
        seqs.iter()
            .zip(src)
            .map(|(s, e)| Example {
                indices: pad_truncate(s, pad_length).indices,
                label: e.label,
            })
            .collect()
    };
    let val_seqs: Vec<_> = val_split.iter().map(encode).collect();
    let train_ex = to_examples(train_seqs, &train_split);
    let val_ex = to_examples(val_seqs, &val_split);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.schedule.rng_seed);
    rng.set_stream(1);
    let mut net = ClassifierNet::init(table.dim(), cfg.bilstm_units, cfg.lstm_units, cfg.squash, cfg.init, &mut rng);
    if cfg.train_embeddings {
        net.embedding = table.matrix().clone();
    }

    let wrap = |net: ClassifierNet| ClassifierModel {
        task: cfg.task,
        threshold: cfg.decision_threshold,
        pad_length,
        pipeline: cfg.pipeline,
        net,
        table: table.clone(),
    };
    let obj = ClassifierObjective { table: &table };
    let mut on_epoch = on_epoch;
    let (net, history) = fit(&obj, net, &train_ex, &val_ex, &cfg.schedule, |rec, p| {
        on_epoch(rec, &wrap(p.clone()))
    })?;
    Ok(TrainedClassifier {
        model: wrap(net),
        history,
    })
}
