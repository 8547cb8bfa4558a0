//! Toy data shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solace::core::activation::Squash;
use solace::core::classifier::{train_classifier, ClassifierConfig, ClassifierModel, LabeledText, TaskTag};
use solace::core::corpus::Conversation;
use solace::core::responder::{train_lm, train_seq2seq, LanguageModel, Role, Seq2SeqConfig, Seq2SeqModel};
use solace::core::text::EmbeddingTable;
use solace::core::train::TrainSchedule;

/// Filler characters plus two markers: 难 flags a mental-health topic and
/// 好 a positive mood.
pub const FILLER: &str = "天地日月山水火木金土风云雨雪花草鱼鸟春夏秋冬东西南北";
pub const MENTAL: char = '难';
pub const POSITIVE: char = '好';

pub fn words() -> Vec<char> {
    FILLER.chars().chain([MENTAL, POSITIVE]).collect()
}

pub fn embeddings_text(dim: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = words();
    let mut s = format!("{} {dim}\n", w.len());
    for c in w {
        s.push(c);
        for _ in 0..dim {
            let _ = write!(s, " {:.6}", rng.random_range(-1.0..1.0));
        }
        s.push('\n');
    }
    s
}

pub fn table(dim: usize) -> Arc<EmbeddingTable> {
    Arc::new(solace::core::text::parse_embeddings(&embeddings_text(dim), 100_000).unwrap())
}

/// Random filler text; half the examples carry `marker`, labeled 1.
pub fn marker_dataset(n: usize, marker: char, seed: u64) -> Vec<LabeledText> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler: Vec<char> = FILLER.chars().collect();
    (0..n)
        .map(|i| {
            let len = rng.random_range(3..=8);
            let mut t: Vec<char> = (0..len).map(|_| filler[rng.random_range(0..filler.len())]).collect();
            let label = (i % 2) as u8;
            if label == 1 {
                let at = rng.random_range(0..=t.len());
                t.insert(at, marker);
            }
            LabeledText::new(label, t.into_iter().collect::<String>())
        })
        .collect()
}

pub fn labeled_tsv(data: &[LabeledText]) -> String {
    data.iter().map(|e| format!("{}\t{}\n", e.label, e.text)).collect()
}

/// Conversations of random filler utterances; every third one mentions the
/// mental-health marker.
pub fn conversations(n: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler: Vec<char> = FILLER.chars().collect();
    (0..n)
        .map(|i| {
            let turns = 2 * rng.random_range(1..=3);
            let utts: Vec<String> = (0..turns)
                .map(|k| {
                    let len = rng.random_range(2..=5);
                    let mut u: String = (0..len).map(|_| filler[rng.random_range(0..filler.len())]).collect();
                    if i % 3 == 0 && k == 0 {
                        u.push(MENTAL);
                    }
                    u
                })
                .collect();
            Conversation::new(utts)
        })
        .collect()
}

pub fn tanh_schedule(epochs: usize, lr: f64, seed: u64) -> TrainSchedule {
    TrainSchedule {
        initial_lr: lr,
        max_epochs: epochs,
        rng_seed: seed,
        ..TrainSchedule::default()
    }
}

pub fn small_classifier(task: TaskTag, marker: char, table: Arc<EmbeddingTable>, seed: u64) -> ClassifierModel {
    let cfg = ClassifierConfig {
        task,
        bilstm_units: 8,
        lstm_units: 4,
        squash: Squash::Tanh,
        schedule: tanh_schedule(6, 0.01, seed),
        ..ClassifierConfig::default()
    };
    let data = marker_dataset(200, marker, seed + 100);
    train_classifier(&data, None, &cfg, table, |_, _| Ok(None)).unwrap().model
}

pub fn echo_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
    conversations(n, seed)
        .iter()
        .flat_map(|c| c.utterances.iter().map(|u| (u.clone(), u.clone())).collect::<Vec<_>>())
        .collect()
}

pub fn seq2seq_config(seed: u64) -> Seq2SeqConfig {
    Seq2SeqConfig {
        hidden: 16,
        squash: Squash::Tanh,
        schedule: tanh_schedule(3, 0.01, seed),
        ..Seq2SeqConfig::default()
    }
}

pub fn small_responder(role: Role, table: Arc<EmbeddingTable>, seed: u64) -> Seq2SeqModel {
    train_seq2seq(&echo_pairs(60, seed), None, &seq2seq_config(seed), role, table, |_, _| Ok(None))
        .unwrap()
        .model
}

pub fn small_lm(table: Arc<EmbeddingTable>, seed: u64) -> LanguageModel {
    let sentences: Vec<String> = echo_pairs(60, seed).into_iter().map(|p| p.1).collect();
    train_lm(&sentences, &seq2seq_config(seed), table, |_, _| Ok(None)).unwrap().model
}

/// Trains and saves the five toy models and writes a service config that
/// points at them. Returns the config path.
pub fn write_toy_deployment(dir: &Path) -> std::path::PathBuf {
    let table = table(8);
    std::fs::write(dir.join("emb.txt"), embeddings_text(8)).unwrap();
    let mental = small_classifier(TaskTag::Relatedness, MENTAL, table.clone(), 1);
    let sentiment = small_classifier(TaskTag::Sentiment, POSITIVE, table.clone(), 2);
    solace::models::save_classifier(&dir.join("mental.json"), &mental).unwrap();
    solace::models::save_classifier(&dir.join("sentiment.json"), &sentiment).unwrap();
    solace::models::save_seq2seq(&dir.join("casual.json"), &small_responder(Role::Casual, table.clone(), 3)).unwrap();
    solace::models::save_seq2seq(&dir.join("counseling.json"), &small_responder(Role::Counseling, table.clone(), 4))
        .unwrap();
    solace::models::save_lm(&dir.join("lm.json"), &small_lm(table, 5)).unwrap();
    let cfg = dir.join("solace.toml");
    std::fs::write(
        &cfg,
        r#"listen = "127.0.0.1:0"
embeddings = "emb.txt"
store = "data/knowledge.ndjson"
sessions_dir = "data/sessions"

[models]
mental = "mental.json"
sentiment = "sentiment.json"
casual = "casual.json"
counseling = "counseling.json"
lm = "lm.json"

[decode]
max_len = 8
"#,
    )
    .unwrap();
    cfg
}
