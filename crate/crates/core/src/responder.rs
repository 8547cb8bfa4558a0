//! Encoder-decoder response generation with beam search and MMI reranking.
//!
//! Token ids follow the embedding table: `0` is PAD (and unknown words),
//! `1..=K` are words, `K + 1` is EOS and `K + 2` is BOS. The decoder starts
//! from the encoder's final `(h, c)`, reads BOS, and at every step projects
//! its hidden state to vocabulary logits; PAD is excluded from the softmax.
//! Candidates from the beam are reranked by `log p(T|S) − λ log U(T)` where
//! `U` is a separately trained target-side language model.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{masked_logsumexp, Squash};
use crate::checkpoint::Checkpoint;
use crate::classifier::{parse_profile, profile_name, split_holdout};
use crate::lstm::{backward_sequence, run_cached, step_cached, LstmCellParams, LstmState, StepCache, WeightInit};
use crate::params::{prefixed, Parameters};
use crate::tensor::{add_assign, mat_vec_acc, outer_acc, vec_mat_acc};
use crate::text::{EmbeddingTable, IndexedSeq, TextPipeline};
use crate::train::{fit, EpochRecord, Objective, TrainHistory, TrainSchedule};
use crate::{Error, Result, Tensor};

pub const PAD: usize = 0;

/// Default reply when the input is unusable or decoding produced nothing.
pub const DEFAULT_FALLBACK: &str = "我在听，可以再多说一些吗？";

/// Special-token layout for a table of `K` words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub words: usize,
}

impl Vocab {
    pub fn eos(self) -> usize {
        self.words + 1
    }

    pub fn bos(self) -> usize {
        self.words + 2
    }

    pub fn size(self) -> usize {
        self.words + 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Casual,
    Counseling,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Casual => "casual",
            Role::Counseling => "counseling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "casual" => Some(Role::Casual),
            "counseling" => Some(Role::Counseling),
            _ => None,
        }
    }
}

/// Input vectors for tokens: table rows (or a trainable copy) for words and
/// PAD, plus two trainable rows for EOS and BOS.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    /// `2 × dim`: row 0 EOS, row 1 BOS.
    pub special: Tensor,
    /// Trainable copy of the table matrix; empty while frozen.
    pub words: Tensor,
}

impl TokenEmbedding {
    fn init<R: Rng + ?Sized>(table: &EmbeddingTable, trainable_words: bool, rng: &mut R) -> Self {
        let mut special = Tensor::matrix(2, table.dim());
        for v in special.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        TokenEmbedding {
            special,
            words: if trainable_words { table.matrix().clone() } else { Tensor::empty() },
        }
    }

    #[inline]
    fn vector<'a>(&'a self, table: &'a EmbeddingTable, tok: usize) -> &'a [f64] {
        let k = table.len();
        if tok > k {
            self.special.row(tok - k - 1)
        } else if self.words.is_empty() {
            table.vector(tok)
        } else {
            self.words.row(tok)
        }
    }

    fn add_grad(&mut self, k: usize, tok: usize, d: &[f64]) {
        if tok > k {
            add_assign(self.special.row_mut(tok - k - 1), d);
        } else if tok != PAD && !self.words.is_empty() {
            add_assign(self.words.row_mut(tok), d);
        }
    }

    fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("special", &self.special), ("words", &self.words)]
    }

    fn all_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.special];
        if !self.words.is_empty() {
            v.push(&mut self.words);
        }
        v
    }

    fn zeros_like(&self) -> Self {
        TokenEmbedding {
            special: self.special.zeros_like(),
            words: self.words.zeros_like(),
        }
    }
}

/// Recurrent decoder cell plus the vocabulary projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderHead {
    pub cell: LstmCellParams,
    /// `hidden × vocab`
    pub proj_w: Tensor,
    pub proj_b: Tensor,
}

impl DecoderHead {
    fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, vocab: usize, squash: Squash, init: WeightInit, rng: &mut R) -> Self {
        let mut proj_w = Tensor::matrix(hidden, vocab);
        init.fill(&mut proj_w, rng);
        DecoderHead {
            cell: LstmCellParams::init(dim, hidden, squash, init, rng),
            proj_w,
            proj_b: Tensor::vector(vocab),
        }
    }

    fn zeros_like(&self) -> Self {
        DecoderHead {
            cell: self.cell.zeros_like(),
            proj_w: self.proj_w.zeros_like(),
            proj_b: self.proj_b.zeros_like(),
        }
    }

    fn all_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.cell.all_mut();
        v.push(&mut self.proj_w);
        v.push(&mut self.proj_b);
        v
    }

    fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut v = self.cell.named_with_prefix(prefix);
        v.push(("proj_w".to_string(), &self.proj_w));
        v.push(("proj_b".to_string(), &self.proj_b));
        v
    }

    pub fn vocab_size(&self) -> usize {
        self.proj_b.len()
    }

    /// Log-probabilities over the vocabulary from a hidden state; PAD is −∞.
    fn log_probs(&self, h: &[f64]) -> Vec<f64> {
        let mut logits = self.proj_b.data().to_vec();
        vec_mat_acc(h, &self.proj_w, &mut logits);
        let lse = masked_logsumexp(&logits, |i| i != PAD);
        logits
            .iter()
            .enumerate()
            .map(|(i, &z)| if i == PAD { f64::NEG_INFINITY } else { z - lse })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqNet {
    pub embed: TokenEmbedding,
    pub encoder: LstmCellParams,
    pub decoder: DecoderHead,
}

impl Parameters for Seq2SeqNet {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = prefixed("embed", self.embed.named()).collect();
        v.extend(self.encoder.named_with_prefix("encoder"));
        v.extend(self.decoder.named("decoder"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.embed.all_mut();
        v.extend(self.encoder.all_mut());
        v.extend(self.decoder.all_mut());
        v
    }

    fn zeros_like(&self) -> Self {
        Seq2SeqNet {
            embed: self.embed.zeros_like(),
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmNet {
    pub embed: TokenEmbedding,
    pub decoder: DecoderHead,
}

impl Parameters for LmNet {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = prefixed("embed", self.embed.named()).collect();
        v.extend(self.decoder.named("decoder"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.embed.all_mut();
        v.extend(self.decoder.all_mut());
        v
    }

    fn zeros_like(&self) -> Self {
        LmNet {
            embed: self.embed.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }
}

struct DecodeTrace {
    steps: Vec<StepCache>,
    log_probs: Vec<Vec<f64>>,
}

fn decode_forward(
    embed: &TokenEmbedding,
    head: &DecoderHead,
    table: &EmbeddingTable,
    init: &LstmState,
    inputs: &[usize],
) -> DecodeTrace {
    let steps = run_cached(&head.cell, inputs.iter().map(|&t| embed.vector(table, t)), init);
    let log_probs = steps.iter().map(|s| head.log_probs(&s.h)).collect();
    DecodeTrace { steps, log_probs }
}

/// Teacher-forced negative log-likelihood of `targets` (PAD targets are not
/// scored). Returns `(nll_sum, scored_count)`.
fn nll(trace: &DecodeTrace, targets: &[usize]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for (lp, &t) in trace.log_probs.iter().zip(targets) {
        if t != PAD {
            sum -= lp[t];
            count += 1;
        }
    }
    (sum, count)
}

/// Backprop of `scale · nll` through the decoder; returns the gradient on
/// the initial state.
#[allow(clippy::too_many_arguments)]
fn decode_backward(
    head: &DecoderHead,
    table: &EmbeddingTable,
    inputs: &[usize],
    targets: &[usize],
    trace: &DecodeTrace,
    scale: f64,
    g_embed: &mut TokenEmbedding,
    g_head: &mut DecoderHead,
) -> LstmState {
    let hidden = head.cell.hidden_dim();
    let mut dh = vec![vec![0.0; hidden]; inputs.len()];
    for (t, (&target, lp)) in targets.iter().zip(&trace.log_probs).enumerate() {
        if target == PAD {
            continue;
        }
        let dz: Vec<f64> = lp
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                if j == PAD {
                    0.0
                } else {
                    (libm::exp(l) - f64::from(u8::from(j == target))) * scale
                }
            })
            .collect();
        outer_acc(&mut g_head.proj_w, &trace.steps[t].h, &dz);
        add_assign(g_head.proj_b.data_mut(), &dz);
        mat_vec_acc(&head.proj_w, &dz, &mut dh[t]);
    }
    let (dxs, dinit) = backward_sequence(&head.cell, &trace.steps, &dh, None, &mut g_head.cell, true);
    let k = table.len();
    for (&tok, dx) in inputs.iter().zip(&dxs) {
        g_embed.add_grad(k, tok, dx);
    }
    dinit
}

fn teacher_io(tgt: &[usize], vocab: Vocab) -> (Vec<usize>, Vec<usize>) {
    let mut inputs = vec![vocab.bos()];
    inputs.extend_from_slice(tgt);
    let mut targets = tgt.to_vec();
    targets.push(vocab.eos());
    (inputs, targets)
}

/// A source/target pair of token ids (targets without BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// Mean per-token cross-entropy of `p(T|S)` under teacher forcing.
pub struct Seq2SeqObjective<'a> {
    pub table: &'a EmbeddingTable,
}

impl Seq2SeqObjective<'_> {
    fn vocab(&self) -> Vocab {
        Vocab { words: self.table.len() }
    }

    fn encode(&self, net: &Seq2SeqNet, src: &[usize]) -> Vec<StepCache> {
        run_cached(
            &net.encoder,
            src.iter().map(|&t| net.embed.vector(self.table, t)),
            &LstmState::zeros(net.encoder.hidden_dim()),
        )
    }
}

fn check_pairs(batch: &[&PairExample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.iter().any(|e| e.src.is_empty()) {
        return Err(Error::invalid("pair with an empty source"));
    }
    Ok(())
}

impl Objective for Seq2SeqObjective<'_> {
    type Params = Seq2SeqNet;
    type Example = PairExample;

    fn loss(&self, net: &Seq2SeqNet, batch: &[&PairExample]) -> Result<f64> {
        check_pairs(batch)?;
        let mut total = 0.0;
        for ex in batch {
            let enc = self.encode(net, &ex.src);
            let (inputs, targets) = teacher_io(&ex.tgt, self.vocab());
            let trace = decode_forward(&net.embed, &net.decoder, self.table, &enc.last().unwrap().state(), &inputs);
            let (s, n) = nll(&trace, &targets);
            total += s / n as f64;
        }
        Ok(total / batch.len() as f64)
    }

    fn loss_and_grad(&self, net: &Seq2SeqNet, batch: &[&PairExample]) -> Result<(f64, Seq2SeqNet)> {
        check_pairs(batch)?;
        let mut grad = net.zeros_like();
        let mut total = 0.0;
        let k = self.table.len();
        for ex in batch {
            let enc = self.encode(net, &ex.src);
            let (inputs, targets) = teacher_io(&ex.tgt, self.vocab());
            let init = enc.last().unwrap().state();
            let trace = decode_forward(&net.embed, &net.decoder, self.table, &init, &inputs);
            let (s, n) = nll(&trace, &targets);
            total += s / n as f64;
            let scale = 1.0 / (n as f64 * batch.len() as f64);
            let dinit = decode_backward(
                &net.decoder,
                self.table,
                &inputs,
                &targets,
                &trace,
                scale,
                &mut grad.embed,
                &mut grad.decoder,
            );
            let zeros = vec![vec![0.0; net.encoder.hidden_dim()]; enc.len()];
            let (dxs, _) = backward_sequence(
                &net.encoder,
                &enc,
                &zeros,
                Some((&dinit.h, &dinit.c)),
                &mut grad.encoder,
                true,
            );
            for (&tok, dx) in ex.src.iter().zip(&dxs) {
                grad.embed.add_grad(k, tok, dx);
            }
        }
        Ok((total / batch.len() as f64, grad))
    }
}

/// Mean per-token cross-entropy of the unconditional target model.
pub struct LmObjective<'a> {
    pub table: &'a EmbeddingTable,
}

impl Objective for LmObjective<'_> {
    type Params = LmNet;
    type Example = Vec<usize>;

    fn loss(&self, net: &LmNet, batch: &[&Vec<usize>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let vocab = Vocab { words: self.table.len() };
        let init = LstmState::zeros(net.decoder.cell.hidden_dim());
        let mut total = 0.0;
        for ex in batch {
            let (inputs, targets) = teacher_io(ex, vocab);
            let trace = decode_forward(&net.embed, &net.decoder, self.table, &init, &inputs);
            let (s, n) = nll(&trace, &targets);
            total += s / n as f64;
        }
        Ok(total / batch.len() as f64)
    }

    fn loss_and_grad(&self, net: &LmNet, batch: &[&Vec<usize>]) -> Result<(f64, LmNet)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let vocab = Vocab { words: self.table.len() };
        let init = LstmState::zeros(net.decoder.cell.hidden_dim());
        let mut grad = net.zeros_like();
        let mut total = 0.0;
        for ex in batch {
            let (inputs, targets) = teacher_io(ex, vocab);
            let trace = decode_forward(&net.embed, &net.decoder, self.table, &init, &inputs);
            let (s, n) = nll(&trace, &targets);
            total += s / n as f64;
            let scale = 1.0 / (n as f64 * batch.len() as f64);
            decode_backward(
                &net.decoder,
                self.table,
                &inputs,
                &targets,
                &trace,
                scale,
                &mut grad.embed,
                &mut grad.decoder,
            );
        }
        Ok((total / batch.len() as f64, grad))
    }
}

/// One decoding step: feed `prev`, return log-probabilities for the next
/// token and the new state.
pub trait StepModel {
    fn vocab(&self) -> Vocab;
    fn log_step(&self, state: &LstmState, prev: usize) -> Result<(Vec<f64>, LstmState)>;
}

fn check_token(vocab: Vocab, tok: usize) -> Result<()> {
    if tok >= vocab.size() {
        return Err(Error::invalid(alloc::format!(
            "token id {tok} outside vocabulary of {}",
            vocab.size()
        )));
    }
    Ok(())
}

fn head_step(
    embed: &TokenEmbedding,
    head: &DecoderHead,
    table: &EmbeddingTable,
    state: &LstmState,
    prev: usize,
) -> (Vec<f64>, LstmState) {
    let cache = step_cached(embed.vector(table, prev), &state.h, &state.c, &head.cell);
    (head.log_probs(&cache.h), cache.state())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub role: Role,
    pub pipeline: TextPipeline,
    pub net: Seq2SeqNet,
    pub table: Arc<EmbeddingTable>,
}

impl Seq2SeqModel {
    /// Final encoder state for a source sequence.
    pub fn encode(&self, src: &[usize]) -> Result<LstmState> {
        if src.is_empty() {
            return Err(Error::invalid("empty source sequence"));
        }
        let vocab = self.vocab();
        let mut state = LstmState::zeros(self.net.encoder.hidden_dim());
        for &t in src {
            check_token(vocab, t)?;
            let c = step_cached(self.net.embed.vector(&self.table, t), &state.h, &state.c, &self.net.encoder);
            state = c.state();
        }
        Ok(state)
    }

    /// Next-token distribution after feeding `prev`; PAD has probability 0.
    pub fn decode_step(&self, state: &LstmState, prev: usize) -> Result<(Vec<f64>, LstmState)> {
        let (lp, st) = self.log_step(state, prev)?;
        Ok((lp.into_iter().map(libm::exp).collect(), st))
    }

    /// `log p(tokens | src)` under teacher forcing, starting from BOS.
    pub fn sequence_logprob(&self, src: &[usize], tokens: &[usize]) -> Result<f64> {
        let mut state = self.encode(src)?;
        score_tokens(self, &mut state, tokens)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            self.table.dim(),
            vec![self.net.encoder.hidden_dim(), self.net.decoder.cell.hidden_dim()],
            self.net.encoder.squash,
        );
        ck.set_meta("kind", "seq2seq");
        ck.set_meta("role", self.role.as_str());
        ck.set_meta("vocab_fingerprint", alloc::format!("{:016x}", self.table.fingerprint()));
        ck.set_meta("clean_profile", profile_name(self.pipeline));
        push_embed(&mut ck, &self.net.embed);
        ck.push_lstm("encoder", &self.net.encoder);
        push_head(&mut ck, &self.net.decoder);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, table: Arc<EmbeddingTable>) -> Result<Self> {
        check_header(ck, "seq2seq", &table)?;
        let role = Role::parse(ck.meta("role")?).ok_or_else(|| Error::invalid("unknown responder role"))?;
        let net = Seq2SeqNet {
            embed: read_embed(ck, &table)?,
            encoder: ck.lstm("encoder")?,
            decoder: read_head(ck, &table)?,
        };
        if net.encoder.input_dim() != table.dim() || net.encoder.hidden_dim() != net.decoder.cell.hidden_dim() {
            return Err(Error::invalid("encoder and decoder shapes disagree"));
        }
        Ok(Seq2SeqModel {
            role,
            pipeline: parse_profile(ck.meta.get("clean_profile").map(String::as_str))?,
            net,
            table,
        })
    }
}

impl StepModel for Seq2SeqModel {
    fn vocab(&self) -> Vocab {
        Vocab { words: self.table.len() }
    }

    fn log_step(&self, state: &LstmState, prev: usize) -> Result<(Vec<f64>, LstmState)> {
        check_token(self.vocab(), prev)?;
        Ok(head_step(&self.net.embed, &self.net.decoder, &self.table, state, prev))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    pub net: LmNet,
    pub table: Arc<EmbeddingTable>,
}

impl LanguageModel {
    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.net.decoder.cell.hidden_dim())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            self.table.dim(),
            vec![self.net.decoder.cell.hidden_dim()],
            self.net.decoder.cell.squash,
        );
        ck.set_meta("kind", "lm");
        ck.set_meta("role", "lm");
        ck.set_meta("vocab_fingerprint", alloc::format!("{:016x}", self.table.fingerprint()));
        push_embed(&mut ck, &self.net.embed);
        push_head(&mut ck, &self.net.decoder);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, table: Arc<EmbeddingTable>) -> Result<Self> {
        check_header(ck, "lm", &table)?;
        let net = LmNet {
            embed: read_embed(ck, &table)?,
            decoder: read_head(ck, &table)?,
        };
        Ok(LanguageModel { net, table })
    }
}

impl StepModel for LanguageModel {
    fn vocab(&self) -> Vocab {
        Vocab { words: self.table.len() }
    }

    fn log_step(&self, state: &LstmState, prev: usize) -> Result<(Vec<f64>, LstmState)> {
        check_token(self.vocab(), prev)?;
        Ok(head_step(&self.net.embed, &self.net.decoder, &self.table, state, prev))
    }
}

fn push_embed(ck: &mut Checkpoint, e: &TokenEmbedding) {
    ck.push("embed.special", &e.special);
    if !e.words.is_empty() {
        ck.push("embed.words", &e.words);
    }
}

fn push_head(ck: &mut Checkpoint, h: &DecoderHead) {
    ck.push_lstm("decoder", &h.cell);
    ck.push("proj_w", &h.proj_w);
    ck.push("proj_b", &h.proj_b);
}

fn check_header(ck: &Checkpoint, kind: &str, table: &EmbeddingTable) -> Result<()> {
    ck.check_version()?;
    if ck.meta("kind")? != kind {
        return Err(Error::invalid(alloc::format!("checkpoint is not a {kind} model")));
    }
    if ck.meta("vocab_fingerprint")? != alloc::format!("{:016x}", table.fingerprint()) {
        return Err(Error::invalid("embedding table does not match the one the model was trained with"));
    }
    Ok(())
}

fn read_embed(ck: &Checkpoint, table: &EmbeddingTable) -> Result<TokenEmbedding> {
    let e = TokenEmbedding {
        special: ck.tensor("embed.special")?.clone(),
        words: ck.tensor_or_empty("embed.words"),
    };
    if e.special.shape() != [2, table.dim()] || (!e.words.is_empty() && e.words.shape() != table.matrix().shape()) {
        return Err(Error::invalid("embedding tensors do not match the table"));
    }
    Ok(e)
}

fn read_head(ck: &Checkpoint, table: &EmbeddingTable) -> Result<DecoderHead> {
    let h = DecoderHead {
        cell: ck.lstm("decoder")?,
        proj_w: ck.tensor("proj_w")?.clone(),
        proj_b: ck.tensor("proj_b")?.clone(),
    };
    let vocab = Vocab { words: table.len() }.size();
    if h.cell.input_dim() != table.dim()
        || h.proj_w.shape() != [h.cell.hidden_dim(), vocab]
        || h.proj_b.shape() != [vocab]
    {
        return Err(Error::invalid("decoder tensors do not match the table"));
    }
    Ok(h)
}

fn score_tokens<M: StepModel + ?Sized>(model: &M, state: &mut LstmState, tokens: &[usize]) -> Result<f64> {
    let vocab = model.vocab();
    let mut prev = vocab.bos();
    let mut total = 0.0;
    for &t in tokens {
        check_token(vocab, t)?;
        if t == PAD {
            return Err(Error::invalid("PAD cannot be scored"));
        }
        let (lp, next) = model.log_step(state, prev)?;
        total += lp[t];
        *state = next;
        prev = t;
    }
    Ok(total)
}

/// `log U(tokens)`: the language model's stepwise log-probabilities summed
/// from BOS through the last given token.
pub fn lm_score(lm: &LanguageModel, tokens: &[usize]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::invalid("cannot score an empty token list"));
    }
    let mut state = lm.initial_state();
    score_tokens(lm, &mut state, tokens)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// Maximum generated tokens before EOS is forced.
    pub max_len: usize,
    /// MMI weight on the language-model penalty.
    pub lambda: f64,
    /// Minimum hypothesis length, counting EOS.
    pub min_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 5,
            max_len: 20,
            lambda: 0.5,
            min_len: 1,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::config("beam_width must be at least 1"));
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return Err(Error::config("need max_len >= min_len >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    /// Generated tokens after BOS, ending in EOS once finished.
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub state: LstmState,
    pub finished: bool,
}

/// Best-first ordering: higher score, then lexicographically smaller token
/// ids, then shorter.
pub fn rank_order(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.cmp(b))
        .then_with(|| a.len().cmp(&b.len()))
}

/// Beam search from an arbitrary start state.
pub fn beam_search_from<M: StepModel + ?Sized>(
    model: &M,
    init: LstmState,
    cfg: &DecodeConfig,
) -> Result<Vec<BeamHypothesis>> {
    cfg.validate()?;
    let vocab = model.vocab();
    let (eos, bos) = (vocab.eos(), vocab.bos());
    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        state: init,
        finished: false,
    }];
    let mut pool: Vec<BeamHypothesis> = Vec::new();

    for _ in 0..cfg.max_len {
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (hi, h) in live.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(bos);
            let (lp, st) = model.log_step(&h.state, prev)?;
            next_states.push(st);
            for (tok, &l) in lp.iter().enumerate() {
                if tok == PAD || l == f64::NEG_INFINITY {
                    continue;
                }
                if tok == eos && h.tokens.len() + 1 < cfg.min_len {
                    continue;
                }
                cands.push((hi, tok, h.logprob + l));
            }
        }
        let seq = |&(hi, tok, _): &(usize, usize, f64)| {
            let mut t = live[hi].tokens.clone();
            t.push(tok);
            t
        };
        let mut keyed: Vec<(Vec<usize>, (usize, usize, f64))> = cands.iter().map(|c| (seq(c), *c)).collect();
        keyed.sort_by(|a, b| rank_order(a.1 .2, &a.0, b.1 .2, &b.0));
        keyed.truncate(cfg.beam_width);

        let mut next_live = Vec::new();
        for (tokens, (hi, tok, lp)) in keyed {
            let h = BeamHypothesis {
                tokens,
                logprob: lp,
                state: next_states[hi].clone(),
                finished: tok == eos,
            };
            if h.finished {
                pool.push(h);
            } else {
                next_live.push(h);
            }
        }
        live = next_live;
        if pool.len() >= cfg.beam_width || live.is_empty() {
            live.clear();
            break;
        }
    }

    // Hypotheses still open at max_len are closed with EOS, scored normally.
    for mut h in live {
        let prev = *h.tokens.last().expect("non-empty after max_len steps");
        let (lp, st) = model.log_step(&h.state, prev)?;
        h.logprob += lp[eos];
        h.tokens.push(eos);
        h.state = st;
        h.finished = true;
        pool.push(h);
    }
    pool.sort_by(|a, b| rank_order(a.logprob, &a.tokens, b.logprob, &b.tokens));
    pool.truncate(cfg.beam_width);
    Ok(pool)
}

/// N-best responses for `src`, best first.
pub fn beam_search(model: &Seq2SeqModel, src: &IndexedSeq, cfg: &DecodeConfig) -> Result<Vec<BeamHypothesis>> {
    let init = model.encode(&src.indices)?;
    beam_search_from(model, init, cfg)
}

/// Index of the candidate maximizing `logp − λ·logu`, using the beam's
/// tie-break. Candidates are `(tokens, log p(T|S), log U(T))`.
pub fn mmi_select(cands: &[(&[usize], f64, f64)], lambda: f64) -> Option<usize> {
    let score = |c: &(&[usize], f64, f64)| if lambda == 0.0 { c.1 } else { c.1 - lambda * c.2 };
    (0..cands.len()).min_by(|&a, &b| {
        let (ca, cb) = (&cands[a], &cands[b]);
        rank_order(score(ca), ca.0, score(cb), cb.0)
    })
}

/// Reranks an N-best list with the anti-language-model objective.
pub fn mmi_rerank<'a>(nbest: &'a [BeamHypothesis], lm: &LanguageModel, lambda: f64) -> Result<&'a BeamHypothesis> {
    if nbest.is_empty() {
        return Err(Error::invalid("cannot rerank an empty N-best list"));
    }
    let mut scored = Vec::with_capacity(nbest.len());
    for h in nbest {
        let u = if lambda == 0.0 { 0.0 } else { lm_score(lm, &h.tokens)? };
        scored.push((h.tokens.as_slice(), h.logprob, u));
    }
    Ok(&nbest[mmi_select(&scored, lambda).expect("non-empty")])
}

/// Concatenates the words of `tokens`, skipping specials and PAD.
pub fn detokenize(tokens: &[usize], table: &EmbeddingTable) -> String {
    tokens.iter().filter_map(|&t| table.word(t)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub text: String,
    pub tokens: Vec<usize>,
    /// The fallback reply was used.
    pub fallback: bool,
}

/// clean → segment → index → beam search → MMI rerank → detokenize.
///
/// Inputs that clean to nothing, and decodes that produce no words, yield
/// `fallback` with the flag set.
pub fn generate(
    model: &Seq2SeqModel,
    lm: Option<&LanguageModel>,
    src_text: &str,
    cfg: &DecodeConfig,
    fallback: &str,
) -> Result<Generated> {
    let src = model.pipeline.encode(src_text, &model.table);
    let canned = || Generated {
        text: fallback.to_string(),
        tokens: Vec::new(),
        fallback: true,
    };
    if src.is_empty() {
        return Ok(canned());
    }
    let nbest = beam_search(model, &src, cfg)?;
    let best = match lm {
        Some(lm) => mmi_rerank(&nbest, lm, cfg.lambda)?,
        None => nbest.first().ok_or_else(|| Error::invalid("beam produced no hypotheses"))?,
    };
    let text = detokenize(&best.tokens, &model.table);
    if text.is_empty() {
        return Ok(canned());
    }
    Ok(Generated {
        text,
        tokens: best.tokens.clone(),
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqConfig {
    pub hidden: usize,
    pub schedule: TrainSchedule,
    pub squash: Squash,
    pub init: WeightInit,
    pub train_embeddings: bool,
    pub pipeline: TextPipeline,
    /// Longer sources keep their last tokens, longer targets their first.
    pub max_tokens: usize,
    pub val_fraction: f64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            hidden: 64,
            schedule: TrainSchedule::default(),
            squash: Squash::Sigmoid,
            init: WeightInit::default(),
            train_embeddings: false,
            pipeline: TextPipeline::default(),
            max_tokens: 30,
            val_fraction: 0.1,
        }
    }
}

impl Seq2SeqConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.max_tokens == 0 {
            return Err(Error::config("hidden size and max_tokens must be at least 1"));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSeq2Seq {
    pub model: Seq2SeqModel,
    pub history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct TrainedLm {
    pub model: LanguageModel,
    pub history: TrainHistory,
}

/// Encodes text pairs, dropping pairs where either side is empty.
pub fn encode_pairs(pairs: &[(String, String)], table: &EmbeddingTable, cfg: &Seq2SeqConfig) -> Vec<PairExample> {
    pairs
        .iter()
        .filter_map(|(q, a)| {
            let mut src = cfg.pipeline.encode(q, table).indices;
            let mut tgt = cfg.pipeline.encode(a, table).indices;
            if src.is_empty() || tgt.is_empty() {
                return None;
            }
            if src.len() > cfg.max_tokens {
                src.drain(..src.len() - cfg.max_tokens);
            }
            tgt.truncate(cfg.max_tokens);
            Some(PairExample { src, tgt })
        })
        .collect()
}

/// Trains `p(T|S)` with teacher forcing. With `val = None` a seeded holdout
/// is carved out of the training pairs.
pub fn train_seq2seq<F>(
    pairs: &[(String, String)],
    val: Option<&[(String, String)]>,
    cfg: &Seq2SeqConfig,
    role: Role,
    table: Arc<EmbeddingTable>,
    mut on_epoch: F,
) -> Result<TrainedSeq2Seq>
where
    F: FnMut(&EpochRecord, &Seq2SeqModel) -> Result<Option<String>>,
{
    cfg.validate()?;
    let all = encode_pairs(pairs, &table, cfg);
    if all.is_empty() {
        return Err(Error::invalid("no usable question/answer pairs"));
    }
    let (train, val) = match val {
        Some(v) => (all, encode_pairs(v, &table, cfg)),
        None => split_holdout(&all, cfg.val_fraction, cfg.schedule.rng_seed),
    };
    train_seq2seq_examples(&train, &val, cfg, role, table, |r, m| on_epoch(r, m))
}

/// Trains on already-encoded pairs.
pub fn train_seq2seq_examples<F>(
    train: &[PairExample],
    val: &[PairExample],
    cfg: &Seq2SeqConfig,
    role: Role,
    table: Arc<EmbeddingTable>,
    mut on_epoch: F,
) -> Result<TrainedSeq2Seq>
where
    F: FnMut(&EpochRecord, &Seq2SeqModel) -> Result<Option<String>>,
{
    cfg.validate()?;
    let vocab = Vocab { words: table.len() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.schedule.rng_seed);
    rng.set_stream(1);
    let embed = TokenEmbedding::init(&table, cfg.train_embeddings, &mut rng);
    let encoder = LstmCellParams::init(table.dim(), cfg.hidden, cfg.squash, cfg.init, &mut rng);
    let decoder = DecoderHead::init(table.dim(), cfg.hidden, vocab.size(), cfg.squash, cfg.init, &mut rng);
    let net = Seq2SeqNet { embed, encoder, decoder };
    let wrap = |net: Seq2SeqNet| Seq2SeqModel {
        role,
        pipeline: cfg.pipeline,
        net,
        table: table.clone(),
    };
    let obj = Seq2SeqObjective { table: &table };
    let (net, history) = fit(&obj, net, train, val, &cfg.schedule, |r, p| on_epoch(r, &wrap(p.clone())))?;
    Ok(TrainedSeq2Seq {
        model: wrap(net),
        history,
    })
}

/// Trains the unconditional language model on target-side sentences.
pub fn train_lm<F>(
    sentences: &[String],
    cfg: &Seq2SeqConfig,
    table: Arc<EmbeddingTable>,
    mut on_epoch: F,
) -> Result<TrainedLm>
where
    F: FnMut(&EpochRecord, &LanguageModel) -> Result<Option<String>>,
{
    cfg.validate()?;
    let seqs: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            let mut v = cfg.pipeline.encode(s, &table).indices;
            v.truncate(cfg.max_tokens);
            v
        })
        .filter(|v| !v.is_empty())
        .collect();
    if seqs.is_empty() {
        return Err(Error::invalid("no usable sentences for the language model"));
    }
    let (train, val) = split_holdout(&seqs, cfg.val_fraction, cfg.schedule.rng_seed);
    train_lm_examples(&train, &val, cfg, table, |r, m| on_epoch(r, m))
}

pub fn train_lm_examples<F>(
    train: &[Vec<usize>],
    val: &[Vec<usize>],
    cfg: &Seq2SeqConfig,
    table: Arc<EmbeddingTable>,
    mut on_epoch: F,
) -> Result<TrainedLm>
where
    F: FnMut(&EpochRecord, &LanguageModel) -> Result<Option<String>>,
{
    cfg.validate()?;
    let vocab = Vocab { words: table.len() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.schedule.rng_seed);
    rng.set_stream(3);
    let net = LmNet {
        embed: TokenEmbedding::init(&table, cfg.train_embeddings, &mut rng),
        decoder: DecoderHead::init(table.dim(), cfg.hidden, vocab.size(), cfg.squash, cfg.init, &mut rng),
    };
    let wrap = |net: LmNet| LanguageModel {
        net,
        table: table.clone(),
    };
    let obj = LmObjective { table: &table };
    let (net, history) = fit(&obj, net, train, val, &cfg.schedule, |r, p| on_epoch(r, &wrap(p.clone())))?;
    Ok(TrainedLm {
        model: wrap(net),
        history,
    })
}

/// A freshly initialized (untrained) model, mostly useful for tests.
pub fn random_seq2seq(table: Arc<EmbeddingTable>, hidden: usize, squash: Squash, seed: u64) -> Seq2SeqModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocab { words: table.len() };
    let init = WeightInit::Uniform(1.0);
    let net = Seq2SeqNet {
        embed: TokenEmbedding::init(&table, false, &mut rng),
        encoder: LstmCellParams::init(table.dim(), hidden, squash, init, &mut rng),
        decoder: DecoderHead::init(table.dim(), hidden, vocab.size(), squash, init, &mut rng),
    };
    Seq2SeqModel {
        role: Role::Casual,
        pipeline: TextPipeline::default(),
        net,
        table,
    }
}

/// A freshly initialized (untrained) language model.
pub fn random_lm(table: Arc<EmbeddingTable>, hidden: usize, squash: Squash, seed: u64) -> LanguageModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocab { words: table.len() };
    let init = WeightInit::Uniform(1.0);
    LanguageModel {
        net: LmNet {
            embed: TokenEmbedding::init(&table, false, &mut rng),
            decoder: DecoderHead::init(table.dim(), hidden, vocab.size(), squash, init, &mut rng),
        },
        table,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::lstm_cell_step;
    use crate::text::CleanProfile;
    use alloc::format;
    use rand::Rng;

    fn table(words: usize, dim: usize, seed: u64) -> Arc<EmbeddingTable> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chars = "天地人日月山水火木金";
        Arc::new(
            EmbeddingTable::from_entries(
                dim,
                chars
                    .chars()
                    .take(words)
                    .map(|c| (c.to_string(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
            )
            .unwrap(),
        )
    }

    /// Every sequence of non-EOS, non-PAD tokens up to `max_len`, closed
    /// with EOS, scored independently.
    fn exhaustive_best(model: &Seq2SeqModel, src: &[usize], max_len: usize) -> (Vec<usize>, f64) {
        let v = model.vocab();
        let body: Vec<usize> = (1..v.size()).filter(|&t| t != v.eos()).collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..=max_len {
            let mut next = Vec::new();
            for prefix in &frontier {
                let mut seq = prefix.clone();
                seq.push(v.eos());
                let lp = model.sequence_logprob(src, &seq).unwrap();
                let better = match &best {
                    None => true,
                    Some((bt, bl)) => rank_order(lp, &seq, *bl, bt) == Ordering::Less,
                };
                if better {
                    best = Some((seq, lp));
                }
                if prefix.len() < max_len {
                    for &t in &body {
                        let mut p = prefix.clone();
                        p.push(t);
                        next.push(p);
                    }
                }
            }
            frontier = next;
        }
        best.unwrap()
    }

    #[test]
    fn beam_matches_exhaustive_search() {
        for words in [1, 2] {
            let t = table(words, 3, 40 + words as u64);
            for seed in 0..20 {
                let m = random_seq2seq(t.clone(), 3, Squash::Sigmoid, seed);
                let cfg = DecodeConfig {
                    beam_width: 64,
                    max_len: 3,
                    ..DecodeConfig::default()
                };
                let src = [1, words, 1];
                let nbest = beam_search_from(&m, m.encode(&src).unwrap(), &cfg).unwrap();
                let (tokens, lp) = exhaustive_best(&m, &src, 3);
                assert_eq!(nbest[0].tokens, tokens, "seed {seed}");
                assert!((nbest[0].logprob - lp).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stored_logprob_matches_rescoring_and_list_is_sorted() {
        let t = table(6, 4, 1);
        for seed in 0..10 {
            let m = random_seq2seq(t.clone(), 5, Squash::Tanh, seed);
            let src = [3, 1, 4];
            let nbest = beam_search_from(&m, m.encode(&src).unwrap(), &DecodeConfig::default()).unwrap();
            assert!(!nbest.is_empty() && nbest.len() <= 5);
            for h in &nbest {
                assert!(h.finished && h.logprob <= 0.0);
                assert_eq!(*h.tokens.last().unwrap(), m.vocab().eos());
                assert!((m.sequence_logprob(&src, &h.tokens).unwrap() - h.logprob).abs() < 1e-9);
            }
            for w in nbest.windows(2) {
                assert_ne!(rank_order(w[0].logprob, &w[0].tokens, w[1].logprob, &w[1].tokens), Ordering::Greater);
            }
        }
    }

    #[test]
    fn width_one_is_greedy() {
        let t = table(5, 3, 2);
        for seed in 0..10 {
            let m = random_seq2seq(t.clone(), 4, Squash::Sigmoid, seed);
            let cfg = DecodeConfig {
                beam_width: 1,
                max_len: 6,
                ..DecodeConfig::default()
            };
            let init = m.encode(&[2, 2]).unwrap();
            let beam = beam_search_from(&m, init.clone(), &cfg).unwrap();
            let (mut state, mut prev, mut greedy) = (init, m.vocab().bos(), Vec::new());
            for _ in 0..cfg.max_len {
                let (p, s) = m.decode_step(&state, prev).unwrap();
                let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
                greedy.push(best);
                if best == m.vocab().eos() {
                    break;
                }
                state = s;
                prev = best;
            }
            if *greedy.last().unwrap() != m.vocab().eos() {
                greedy.push(m.vocab().eos());
            }
            assert_eq!(beam.len(), 1);
            assert_eq!(beam[0].tokens, greedy);
        }
    }

    #[test]
    fn all_mass_on_eos() {
        let t = table(4, 3, 3);
        let mut m = random_seq2seq(t, 3, Squash::Sigmoid, 9);
        m.net.decoder.proj_w.fill(0.0);
        let eos = m.vocab().eos();
        m.net.decoder.proj_b.data_mut()[eos] = 60.0;
        let nbest = beam_search(&m, &IndexedSeq { indices: vec![1], source_text: String::new() }, &DecodeConfig::default()).unwrap();
        assert_eq!(nbest[0].tokens, vec![eos]);
        assert!(nbest[0].logprob.abs() < 1e-12);
    }

    #[test]
    fn min_len_delays_eos() {
        let t = table(4, 3, 3);
        let mut m = random_seq2seq(t, 3, Squash::Sigmoid, 9);
        let eos = m.vocab().eos();
        m.net.decoder.proj_b.data_mut()[eos] = 20.0;
        let cfg = DecodeConfig {
            min_len: 3,
            ..DecodeConfig::default()
        };
        for h in beam_search_from(&m, m.encode(&[1]).unwrap(), &cfg).unwrap() {
            assert!(h.tokens.len() >= 3);
            assert_eq!(h.tokens.iter().filter(|&&x| x == eos).count(), 1);
        }
    }

    #[test]
    fn decode_step_is_a_distribution_without_pad() {
        let t = table(7, 4, 4);
        let m = random_seq2seq(t, 5, Squash::Sigmoid, 1);
        let mut state = m.encode(&[1, 2, 3]).unwrap();
        let mut prev = m.vocab().bos();
        for step in 0..6 {
            let (p, s) = m.decode_step(&state, prev).unwrap();
            assert_eq!(p[PAD], 0.0);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            state = s;
            prev = 1 + step % 7;
        }
        assert!(m.decode_step(&state, m.vocab().size()).is_err());
    }

    #[test]
    fn zero_projection_is_uniform() {
        let t = table(5, 3, 5);
        let mut m = random_seq2seq(t, 3, Squash::Sigmoid, 2);
        m.net.decoder.proj_w.fill(0.0);
        m.net.decoder.proj_b.fill(0.0);
        let (p, _) = m.decode_step(&m.encode(&[1]).unwrap(), m.vocab().bos()).unwrap();
        let n = (m.vocab().size() - 1) as f64;
        for &x in &p[1..] {
            assert!((x - 1.0 / n).abs() < 1e-15);
        }
    }

    #[test]
    fn decode_step_composes_cell_and_softmax() {
        let t = table(3, 2, 6);
        let m = random_seq2seq(t.clone(), 2, Squash::Sigmoid, 3);
        let state = m.encode(&[2]).unwrap();
        let bos = m.vocab().bos();
        let (p, next) = m.decode_step(&state, bos).unwrap();
        let x = m.net.embed.special.row(1);
        let s = lstm_cell_step(x, &state, &m.net.decoder.cell).unwrap();
        assert_eq!(next, s);
        let vocab = m.vocab().size();
        let logits: Vec<f64> = (0..vocab)
            .map(|j| {
                m.net.decoder.proj_b.data()[j]
                    + (0..2).map(|r| s.h[r] * m.net.decoder.proj_w.row(r)[j]).sum::<f64>()
            })
            .collect();
        let z: f64 = logits[1..].iter().map(|&l| libm::exp(l)).sum();
        for j in 1..vocab {
            assert!((p[j] - libm::exp(logits[j]) / z).abs() < 1e-10);
        }
    }

    #[test]
    fn lm_score_matches_path_enumeration() {
        let t = table(2, 3, 7);
        let lm = random_lm(t, 3, Squash::Sigmoid, 11);
        let v = lm.vocab();
        // Probabilities of all length-2 continuations from a fixed first
        // token sum to the first-step probability of that token.
        let p1 = libm::exp(lm_score(&lm, &[1]).unwrap());
        let total: f64 = (1..v.size()).map(|b| libm::exp(lm_score(&lm, &[1, b]).unwrap())).sum();
        assert!((p1 - total).abs() < 1e-10);

        // Chain rule by hand.
        let (l1, s1) = lm.log_step(&lm.initial_state(), v.bos()).unwrap();
        let (l2, _) = lm.log_step(&s1, 2).unwrap();
        assert!((lm_score(&lm, &[2, v.eos()]).unwrap() - (l1[2] + l2[v.eos()])).abs() < 1e-12);

        // Sum over every sequence up to length 3 ending in EOS, plus the mass
        // still unfinished at length 3, is one.
        let body: Vec<usize> = (1..v.size()).filter(|&t| t != v.eos()).collect();
        let mut mass = 0.0;
        let mut frontier = vec![Vec::new()];
        for len in 0..=3 {
            let mut next = Vec::new();
            for p in &frontier {
                let mut done: Vec<usize> = p.clone();
                done.push(v.eos());
                mass += libm::exp(lm_score(&lm, &done).unwrap());
                if len < 3 {
                    for &b in &body {
                        let mut q: Vec<usize> = p.clone();
                        q.push(b);
                        next.push(q);
                    }
                } else if !p.is_empty() {
                    mass += libm::exp(lm_score(&lm, p).unwrap())
                        * (1.0 - libm::exp(lm_score(&lm, &done).unwrap() - lm_score(&lm, p).unwrap()));
                }
            }
            frontier = next;
        }
        assert!((mass - 1.0).abs() < 1e-10, "{mass}");

        assert!(lm_score(&lm, &[]).is_err());
        assert!(lm_score(&lm, &[PAD]).is_err());
        assert!(lm_score(&lm, &[v.size()]).is_err());
    }

    #[test]
    fn mmi_arithmetic() {
        let a = [1usize];
        let b = [2usize];
        let cands = [(&a[..], -1.0, -0.5), (&b[..], -1.2, -2.0)];
        assert_eq!(mmi_select(&cands, 0.5), Some(1));
        assert_eq!(mmi_select(&cands, 0.0), Some(0));
        assert_eq!(mmi_select(&cands, 1e6), Some(1));
        assert_eq!(mmi_select(&[], 0.5), None);
        // Score tie: smaller ids win.
        let tie = [(&b[..], -1.0, 0.0), (&a[..], -1.0, 0.0)];
        assert_eq!(mmi_select(&tie, 0.5), Some(1));
    }

    #[test]
    fn rerank_with_zero_lambda_is_identity() {
        let t = table(5, 3, 8);
        let lm = random_lm(t.clone(), 3, Squash::Sigmoid, 0);
        for seed in 0..10 {
            let m = random_seq2seq(t.clone(), 3, Squash::Sigmoid, seed);
            let nbest = beam_search_from(&m, m.encode(&[1, 2]).unwrap(), &DecodeConfig::default()).unwrap();
            assert_eq!(mmi_rerank(&nbest, &lm, 0.0).unwrap(), &nbest[0]);
        }
        assert!(mmi_rerank(&[], &lm, 0.5).is_err());
    }

    #[test]
    fn generate_falls_back_and_is_deterministic() {
        let t = table(6, 3, 9);
        let m = random_seq2seq(t.clone(), 4, Squash::Sigmoid, 4);
        let lm = random_lm(t, 4, Squash::Sigmoid, 5);
        let cfg = DecodeConfig::default();
        let g = generate(&m, Some(&lm), "hello!!", &cfg, DEFAULT_FALLBACK).unwrap();
        assert!(g.fallback);
        assert_eq!(g.text, DEFAULT_FALLBACK);
        let a = generate(&m, Some(&lm), "天地人", &cfg, DEFAULT_FALLBACK).unwrap();
        let b = generate(&m, Some(&lm), "天地人", &cfg, DEFAULT_FALLBACK).unwrap();
        assert_eq!(a, b);
        if !a.fallback {
            assert_eq!(a.text, detokenize(&a.tokens, &m.table));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let t = table(4, 3, 10);
        let mut m = random_seq2seq(t.clone(), 3, Squash::Tanh, 7);
        m.role = Role::Counseling;
        m.pipeline = TextPipeline { profile: CleanProfile::PassThrough };
        let back = Seq2SeqModel::from_checkpoint(&m.to_checkpoint(), t.clone()).unwrap();
        assert_eq!(back, m);
        let lm = random_lm(t.clone(), 3, Squash::Sigmoid, 8);
        let ck = lm.to_checkpoint();
        assert_eq!(ck.meta("role").unwrap(), "lm");
        assert_eq!(LanguageModel::from_checkpoint(&ck, t.clone()).unwrap(), lm);
        assert!(Seq2SeqModel::from_checkpoint(&ck, t).is_err());
        let other = table(5, 3, 10);
        assert!(Seq2SeqModel::from_checkpoint(&m.to_checkpoint(), other).is_err());
    }

    #[test]
    fn unknown_targets_are_not_scored() {
        let t = table(4, 3, 11);
        let m = random_seq2seq(t.clone(), 3, Squash::Sigmoid, 1);
        let obj = Seq2SeqObjective { table: &t };
        let with_unk = PairExample { src: vec![1], tgt: vec![0, 2] };
        let (inputs, targets) = teacher_io(&with_unk.tgt, m.vocab());
        assert_eq!(inputs, vec![m.vocab().bos(), 0, 2]);
        assert_eq!(targets, vec![0, 2, m.vocab().eos()]);
        let loss = obj.loss(&m.net, &[&with_unk]).unwrap();
        let enc = m.encode(&[1]).unwrap();
        let (_, s1) = m.log_step(&enc, m.vocab().bos()).unwrap();
        let (l2, s2) = m.log_step(&s1, 0).unwrap();
        let (l3, _) = m.log_step(&s2, 2).unwrap();
        let expected = -(l2[2] + l3[m.vocab().eos()]) / 2.0;
        assert!((loss - expected).abs() < 1e-12, "{}", format!("{loss} vs {expected}"));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let t = table(4, 3, 12);
        let err = train_seq2seq(&[], None, &Seq2SeqConfig::default(), Role::Casual, t.clone(), |_, _| Ok(None));
        assert!(err.is_err());
        let pairs = [("abc".to_string(), "天".to_string())];
        assert!(train_seq2seq(&pairs, None, &Seq2SeqConfig::default(), Role::Casual, t, |_, _| Ok(None)).is_err());
    }
}
