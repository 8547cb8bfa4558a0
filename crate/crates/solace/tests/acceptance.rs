//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use solace::core::activation::Squash;
use solace::core::classifier::{
    train_classifier, ClassifierConfig, ClassifierNet, ClassifierObjective, Example, TaskTag,
};
use solace::core::corpus::{filter_conversations, parse_conv_str, Conversation};
use solace::core::dialogue::{route_message, Bot, Engine, MemoryStore, Reply};
use solace::core::eval::r_check_counts;
use solace::core::lstm::{lstm_cell_step, LstmCellParams, LstmState, WeightInit};
use solace::core::params::Parameters;
use solace::core::responder::{
    beam_search_from, generate, mmi_rerank, mmi_select, random_lm, random_seq2seq, rank_order,
    train_seq2seq_examples, BeamHypothesis, DecodeConfig, PairExample, Role, Seq2SeqConfig, Seq2SeqModel,
    StepModel, DEFAULT_FALLBACK,
};
use solace::core::text::EmbeddingTable;
use solace::core::train::{compute_gradients, Objective, TrainSchedule};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_table(rng: &mut ChaCha8Rng, words: &str, dim: usize) -> EmbeddingTable {
    EmbeddingTable::from_entries(
        dim,
        words.chars().map(|c| (c.to_string(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    const STEP: f64 = 1e-4;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random_table(&mut rng, "天地人日月", 2);
        let squash = if seed % 2 == 0 { Squash::Sigmoid } else { Squash::Tanh };
        let mut net = ClassifierNet::init(2, 2, 2, squash, WeightInit::default(), &mut rng);
        for t in net.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        check(net.param_count() <= 200, || format!("seed {seed}: {} parameters", net.param_count()))?;
        let batch: Vec<Example> = (0..3)
            .map(|_| Example {
                indices: (0..4).map(|_| rng.random_range(0..=5)).collect(),
                label: rng.random_range(0..2),
            })
            .collect();
        let refs: Vec<&Example> = batch.iter().collect();
        let obj = ClassifierObjective { table: &table };
        let analytic = compute_gradients(&obj, &net, &refs).map_err(|e| e.to_string())?.1.flatten();
        for (k, &a) in analytic.iter().enumerate() {
            let probe = |delta: f64| {
                let mut p = net.clone();
                let mut seen = 0;
                for t in p.tensors_mut() {
                    if k < seen + t.len() {
                        t.data_mut()[k - seen] += delta;
                        break;
                    }
                    seen += t.len();
                }
                obj.loss(&p, &refs).unwrap()
            };
            let numeric = (probe(STEP) - probe(-STEP)) / (2.0 * STEP);
            if a.abs() > 1e-6 {
                checked += 1;
                let rel = (a - numeric).abs() / a.abs();
                worst = worst.max(rel);
                check(rel < 1e-4, || format!("seed {seed} coordinate {k}: relative error {rel:e}"))?;
            }
        }
    }
    Ok(format!("{checked} coordinates, worst relative error {worst:.1e}"))
}

/// Gate equations written out element by element, independent of the
/// library's vectorized kernels.
fn scalar_cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmCellParams) -> (Vec<f64>, Vec<f64>) {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let s = |v: f64| match p.squash {
        Squash::Sigmoid => sig(v),
        Squash::Tanh => v.tanh(),
    };
    let n = h.len();
    let affine = |wx: &solace::core::Tensor, wh: &solace::core::Tensor, b: &solace::core::Tensor, j: usize| {
        let mut acc = b.data()[j];
        for (k, &xk) in x.iter().enumerate() {
            acc += xk * wx.data()[k * n + j];
        }
        for (k, &hk) in h.iter().enumerate() {
            acc += hk * wh.data()[k * n + j];
        }
        acc
    };
    let mut c_new = vec![0.0; n];
    let mut h_new = vec![0.0; n];
    for j in 0..n {
        let i = sig(affine(&p.w_xi, &p.w_hi, &p.b_i, j) + p.w_ci.data()[j] * c[j]);
        let f = sig(affine(&p.w_xf, &p.w_hf, &p.b_f, j) + p.w_cf.data()[j] * c[j]);
        c_new[j] = f * c[j] + i * s(affine(&p.w_xc, &p.w_hc, &p.b_c, j));
        let o = sig(affine(&p.w_xo, &p.w_ho, &p.b_o, j) + p.w_co.data()[j] * c_new[j]);
        h_new[j] = o * s(c_new[j]);
    }
    (h_new, c_new)
}

fn lstm_cell_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (d, n) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let squash = if seed % 2 == 0 { Squash::Sigmoid } else { Squash::Tanh };
        let mut p = LstmCellParams::init(d, n, squash, WeightInit::Uniform(1.0), &mut rng);
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
        }
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let prev = LstmState {
            h: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            c: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let got = lstm_cell_step(&x, &prev, &p).map_err(|e| e.to_string())?;
        let (h, c) = scalar_cell(&x, &prev.h, &prev.c, &p);
        for (a, b) in got.h.iter().zip(&h).chain(got.c.iter().zip(&c)) {
            worst = worst.max((a - b).abs());
        }
        check(worst <= 1e-12, || format!("case {seed}: difference {worst:e}"))?;
    }
    Ok(format!("100 cases, max abs difference {worst:.1e}"))
}

/// Every complete sequence (body of length 0..=max_len, then EOS) with its
/// log-probability, in rank order.
fn exhaustive(m: &Seq2SeqModel, src: &[usize], max_len: usize) -> Vec<(Vec<usize>, f64)> {
    let v = m.vocab();
    let body: Vec<usize> = (1..v.size()).filter(|&t| t != v.eos()).collect();
    let mut all = Vec::new();
    let mut frontier = vec![Vec::new()];
    for len in 0..=max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            let mut seq: Vec<usize> = prefix.clone();
            seq.push(v.eos());
            let lp = m.sequence_logprob(src, &seq).unwrap();
            all.push((seq, lp));
            if len < max_len {
                next.extend(body.iter().map(|&t| {
                    let mut p = prefix.clone();
                    p.push(t);
                    p
                }));
            }
        }
        frontier = next;
    }
    all.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
    all
}

fn beam_oracle() -> Outcome {
    let cfg = DecodeConfig {
        beam_width: 64,
        max_len: 3,
        ..DecodeConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // One word: PAD, word, EOS, BOS make a vocabulary of four.
    let table = Arc::new(random_table(&mut rng, "心", 3));
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut m = random_seq2seq(table.clone(), 3, if seed % 2 == 0 { Squash::Sigmoid } else { Squash::Tanh }, seed);
        m.net.decoder.proj_b.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-3.0..3.0));
        let src: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| 1).collect();
        let nbest = beam_search_from(&m, m.encode(&src).unwrap(), &cfg).map_err(|e| e.to_string())?;
        let want = exhaustive(&m, &src, cfg.max_len);
        check(nbest.len() == want.len(), || format!("model {seed}: {} finished vs {} sequences", nbest.len(), want.len()))?;
        for (h, (tokens, lp)) in nbest.iter().zip(&want) {
            check(&h.tokens == tokens, || format!("model {seed}: beam {:?} vs exhaustive {tokens:?}", h.tokens))?;
            worst = worst.max((h.logprob - lp).abs());
        }
        check(worst < 1e-12, || format!("model {seed}: log-probability gap {worst:e}"))?;
    }
    Ok(format!("100 models with vocabulary 4: full ranked list of 15 matches enumeration, max gap {worst:.1e}"))
}

fn mmi_identity() -> Outcome {
    let a = [1usize];
    let b = [2usize];
    let lambda = 0.5;
    let cands = [(&a[..], -1.0, -0.5), (&b[..], -1.2, -2.0)];
    let scores: Vec<f64> = cands.iter().map(|c| c.1 - lambda * c.2).collect();
    check(scores[0] == -0.75 && (scores[1] - -0.2).abs() < 1e-15, || format!("scores {scores:?}"))?;
    check(mmi_select(&cands, lambda) == Some(1), || "λ=0.5 did not pick the second candidate".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let table = Arc::new(random_table(&mut rng, "天地人日月", 3));
    let lm = random_lm(table.clone(), 4, Squash::Sigmoid, 1);
    let state = LstmState::zeros(1);
    let mut lists = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let mut list: Vec<BeamHypothesis> = (0..n)
            .map(|_| BeamHypothesis {
                tokens: (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=7)).collect(),
                // Coarse grid so equal scores and the tie-break get exercised.
                logprob: -(rng.random_range(0..6) as f64) * 0.5,
                state: state.clone(),
                finished: true,
            })
            .collect();
        list.shuffle(&mut rng);
        list.sort_by(|x, y| rank_order(x.logprob, &x.tokens, y.logprob, &y.tokens));
        let pick = mmi_rerank(&list, &lm, 0.0).map_err(|e| e.to_string())?;
        check(std::ptr::eq(pick, &list[0]), || format!("λ=0 picked {:?} over {:?}", pick.tokens, list[0].tokens))?;
        lists += 1;
    }
    for seed in 0..100 {
        let m = random_seq2seq(table.clone(), 4, Squash::Sigmoid, seed);
        let nbest = beam_search_from(&m, m.encode(&[1, 2]).unwrap(), &DecodeConfig::default()).unwrap();
        check(mmi_rerank(&nbest, &lm, 0.0).unwrap() == &nbest[0], || format!("model {seed}"))?;
        lists += 1;
    }
    Ok(format!("scores [{}, {}] pick #2; λ=0 identity on {lists} N-best lists", scores[0], scores[1]))
}

fn toy_classifier() -> Outcome {
    let table = common::table(8);
    let train = common::marker_dataset(500, common::MENTAL, 21);
    let val = common::marker_dataset(100, common::MENTAL, 22);
    let cfg = ClassifierConfig {
        task: TaskTag::Relatedness,
        squash: Squash::Tanh,
        ..ClassifierConfig::default()
    };
    let trained = train_classifier(&train, Some(&val), &cfg, table, |_, _| Ok(None)).map_err(|e| e.to_string())?;
    let report = trained.model.evaluate(&val).map_err(|e| e.to_string())?;
    let epochs = trained.history.epochs.len();
    check(report.f1 >= 0.95 && epochs <= 20, || format!("val F1 {:.3} after {epochs} epochs", report.f1))?;
    Ok(format!("val F1 {:.3} after {epochs} epochs (tanh cell squash)", report.f1))
}

fn copy_pairs(n: usize, seed: u64) -> Vec<PairExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let src: Vec<usize> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(1..=20)).collect();
            PairExample { tgt: src.clone(), src }
        })
        .collect()
}

fn toy_seq2seq() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let table = Arc::new(random_table(&mut rng, "一二三四五六七八九十甲乙丙丁戊己庚辛壬癸", 16));
    let cfg = Seq2SeqConfig {
        hidden: 64,
        squash: Squash::Tanh,
        schedule: TrainSchedule {
            initial_lr: 0.01,
            ..TrainSchedule::default()
        },
        ..Seq2SeqConfig::default()
    };
    let trained = train_seq2seq_examples(&copy_pairs(2000, 1), &copy_pairs(200, 2), &cfg, Role::Casual, table, |_, _| {
        Ok(None)
    })
    .map_err(|e| e.to_string())?;
    let m = trained.model;
    let greedy = DecodeConfig {
        beam_width: 1,
        max_len: 8,
        ..DecodeConfig::default()
    };
    let test = copy_pairs(300, 3);
    let hits = test
        .iter()
        .filter(|p| {
            let out = beam_search_from(&m, m.encode(&p.src).unwrap(), &greedy).unwrap();
            out[0].tokens[..out[0].tokens.len() - 1] == p.tgt[..] && out[0].tokens.len() == p.tgt.len() + 1
        })
        .count();
    let acc = hits as f64 / test.len() as f64;
    check(acc >= 0.9, || format!("greedy exact match {acc:.3}"))?;
    Ok(format!("greedy exact match {acc:.3} on 300 held-out copies, {} epochs", trained.history.epochs.len()))
}

fn rcheck_arithmetic() -> Outcome {
    let r = r_check_counts(18, 104, 78).map_err(|e| e.to_string())?;
    check(r.r_check == 0.91, || format!("r_check {}", r.r_check))?;
    check((r.frac_unqualified, r.frac_regular, r.frac_qualified) == (0.09, 0.52, 0.39), || "fractions".into())?;
    Ok(format!("0.09/0.52/0.39 → {}", r.r_check))
}

fn stub_score(text: &str) -> f64 {
    // FNV-1a of the text mapped to [0, 1).
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn filter_semantics() -> Outcome {
    let convs = common::conversations(1000, 77);
    let mut kept_sets = Vec::new();
    for t in [0.5, 0.7, 0.9] {
        let (kept, report) = filter_conversations(&convs, &stub_score, t);
        let brute: Vec<&Conversation> =
            convs.iter().filter(|c| c.utterances.iter().any(|u| stub_score(u) >= t)).collect();
        check(kept.iter().eq(brute.iter().copied()), || format!("threshold {t}: retained set differs"))?;
        check(report.total_conversations == 1000 && report.retained + report.dropped == 1000, || "counts".into())?;
        let ids: std::collections::BTreeSet<usize> =
            convs.iter().enumerate().filter(|(_, c)| kept.contains(c)).map(|(i, _)| i).collect();
        kept_sets.push((t, ids));
    }
    for w in kept_sets.windows(2) {
        check(w[1].1.is_subset(&w[0].1), || format!("retained({}) ⊄ retained({})", w[1].0, w[0].0))?;
    }
    let sizes: Vec<usize> = kept_sets.iter().map(|s| s.1.len()).collect();
    Ok(format!("1000 conversations, retained at 0.5/0.7/0.9 = {sizes:?}, nested"))
}

fn routing_state_machine() -> Outcome {
    for i in 0..=100 {
        for j in 0..=100 {
            let (m, s) = (i as f64 / 100.0, j as f64 / 100.0);
            let want = if m >= 0.5 && s < 0.5 { Bot::Counseling } else { Bot::Casual };
            let got = route_message(m, s).map_err(|e| e.to_string())?;
            check(got == want, || format!("({m}, {s}) → {got:?}"))?;
        }
    }
    // Each of the first five messages routes casual on its own scores, but
    // the five-message averages (mental 0.66, sentiment 0.37) are negative.
    let script = [(0.9, 0.55), (0.3, 0.1), (0.9, 0.55), (0.3, 0.1), (0.9, 0.55), (0.1, 0.9)];
    let lookup = move |t: &str| script[t.parse::<usize>().unwrap()];
    let engine = Engine::new(
        Box::new(move |t: &str| lookup(t).0),
        Box::new(move |t: &str| lookup(t).1),
        Box::new(|_: &str| Ok(Reply { text: "casual".into(), fallback: false })),
        Box::new(|_: &str| Ok(Reply { text: "counseling".into(), fallback: false })),
    );
    let mut store = MemoryStore::default();
    let mut session = engine.new_session("trace", 0);
    let mut used = Vec::new();
    for k in 0..6 {
        let turn = engine.respond(&mut session, &k.to_string(), &mut store, k as u64).map_err(|e| e.to_string())?;
        used.push(turn.bot_used());
    }
    let want = [Bot::Casual, Bot::Casual, Bot::Casual, Bot::Casual, Bot::Casual, Bot::Counseling];
    check(used == want, || format!("trace {used:?}"))?;
    check(store.records.len() == 6, || "store size".into())?;
    Ok("101×101 grid matches; trace switches to counseling exactly at turn 6".into())
}

fn pipeline_determinism() -> Outcome {
    let table = common::table(8);
    let a = common::small_classifier(TaskTag::Sentiment, common::POSITIVE, table.clone(), 9);
    let b = common::small_classifier(TaskTag::Sentiment, common::POSITIVE, table.clone(), 9);
    let ja = solace::checkpoint::to_json(&a.to_checkpoint())?;
    let jb = solace::checkpoint::to_json(&b.to_checkpoint())?;
    check(ja == jb, || "classifier checkpoints differ".into())?;
    let ra = common::small_responder(Role::Casual, table.clone(), 9);
    let rb = common::small_responder(Role::Casual, table.clone(), 9);
    let sa = solace::checkpoint::to_json(&ra.to_checkpoint())?;
    let sb = solace::checkpoint::to_json(&rb.to_checkpoint())?;
    check(sa == sb, || "responder checkpoints differ".into())?;
    let lm = common::small_lm(table.clone(), 9);
    let cfg = DecodeConfig::default();
    for text in ["天地风云", "春天难过", "东西南北好"] {
        let x = generate(&ra, Some(&lm), text, &cfg, DEFAULT_FALLBACK).map_err(|e| e.to_string())?;
        let y = generate(&rb, Some(&lm), text, &cfg, DEFAULT_FALLBACK).map_err(|e| e.to_string())?;
        check(x == y, || format!("generate differs for {text}"))?;
    }
    let other = common::small_classifier(TaskTag::Sentiment, common::POSITIVE, table, 10);
    check(solace::checkpoint::to_json(&other.to_checkpoint())? != ja, || "seed has no effect".into())?;
    Ok(format!(
        "identical checkpoints ({} and {} bytes) and replies across repeat runs",
        ja.len(),
        sa.len()
    ))
}

async fn e2e_session(base: &str) -> Result<Vec<Value>, String> {
    let http = reqwest::Client::new();
    let mut responses = Vec::new();
    let mut id: Option<String> = None;
    let messages = [
        "你好", "今天天气好", "我很难过", "难过睡不着", "心里难受难过", "工作难", "还是难过", "春天来了", "好一点了", "谢谢你好",
    ];
    for text in messages {
        let body = match &id {
            Some(id) => json!({ "session_id": id, "text": text }),
            None => json!({ "text": text }),
        };
        let r = http
            .post(format!("{base}/api/message"))
            .json(&body)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        check(r.status() == 200, || format!("status {} for {text}", r.status()))?;
        let v: Value = r.json().await.map_err(|e| e.to_string())?;
        for key in ["session_id", "reply", "bot_used", "mental_score", "sentiment_score"] {
            check(!v[key].is_null(), || format!("missing {key} in {v}"))?;
        }
        check(v["reply"].as_str().is_some_and(|r| !r.trim().is_empty()), || "empty reply".into())?;
        check(matches!(v["bot_used"].as_str(), Some("casual" | "counseling")), || format!("bot {}", v["bot_used"]))?;
        id = v["session_id"].as_str().map(String::from);
        responses.push(v);
    }
    let hist: Value = http
        .get(format!("{base}/api/session/{}/history", id.unwrap()))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    check(hist["turns"].as_array().map(Vec::len) == Some(10), || "history length".into())?;
    Ok(responses)
}

fn end_to_end_service() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = common::write_toy_deployment(dir.path());
    let cfg = solace::config::Config::load(&cfg_path).map_err(|e| e.to_string())?;
    let svc = Arc::new(solace::service::build_service(&cfg).map_err(|e| e.to_string())?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let responses = rt.block_on(async {
        let (tx, rx) = tokio::sync::oneshot::channel();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(solace::server::serve(svc, "127.0.0.1:0", |a| tx.send(a).unwrap(), async {
            let _ = stopped.await;
        }));
        let addr = rx.await.map_err(|e| e.to_string())?;
        let out = e2e_session(&format!("http://{addr}")).await;
        let _ = stop.send(());
        server.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
        out
    })?;
    let records = solace::store::read_records(&cfg.store).map_err(|e| e.to_string())?;
    check(records.len() == 10, || format!("{} knowledge records", records.len()))?;
    let convs = solace::core::dialogue::export_conversations(&records);
    let text = solace::core::corpus::serialize_conversations(&convs);
    let (parsed, warnings) = parse_conv_str(&text).map_err(|e| e.to_string())?;
    check(parsed.len() == 1 && warnings.is_empty(), || format!("{} records, {warnings:?}", parsed.len()))?;
    check(parsed[0].qa_pairs().count() == 10, || "pair count".into())?;
    let counseling = responses.iter().filter(|r| r["bot_used"] == "counseling").count();
    Ok(format!("10 well-formed replies ({counseling} counseling), 10 records, export re-parses as 10 pairs"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("gradient correctness", gradient_correctness),
        ("LSTM cell oracle", lstm_cell_oracle),
        ("beam-search oracle", beam_oracle),
        ("MMI identity", mmi_identity),
        ("toy classifier convergence", toy_classifier),
        ("toy seq2seq convergence", toy_seq2seq),
        ("R_check arithmetic", rcheck_arithmetic),
        ("filter semantics", filter_semantics),
        ("routing state machine", routing_state_machine),
        ("pipeline determinism", pipeline_determinism),
        ("end-to-end service", end_to_end_service),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
