//! Two runs from the same seed must agree bit for bit: corpus files on disk,
//! the loss history and the checkpoint bytes. A different seed must not.

use std::collections::BTreeMap;
use std::path::Path;

use hcap_core::diffcore::write_checkpoint;
use hcap_core::model::{training_video, Model, ModelConfig, TrainingVideo};
use hcap_core::synth::{generate, split, write_corpus, SynthConfig, REFERENCE_RATIOS};
use hcap_core::text::Vocab;

fn config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        videos: 6,
        ..SynthConfig::default()
    }
}

/// Relative path to file bytes for everything under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn corpus_files(seed: u64) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let videos = generate(&config(seed)).unwrap();
    let ids: Vec<String> = videos
        .iter()
        .map(|v| v.annotation.video_id.clone())
        .collect();
    write_corpus(
        dir.path(),
        &videos,
        &split(&ids, REFERENCE_RATIOS, seed).unwrap(),
    )
    .unwrap();
    snapshot(dir.path())
}

/// Trains the tiny preset briefly; returns loss bits and checkpoint bytes.
fn train(seed: u64) -> (Vec<u64>, Vec<u8>) {
    let videos = generate(&config(seed)).unwrap();
    let vocab = Vocab::build(
        videos
            .iter()
            .flat_map(|v| v.annotation.persons.iter().map(|p| p.caption.as_str())),
    );
    let corpus: Vec<TrainingVideo<f64>> = videos
        .iter()
        .map(|v| training_video(&v.annotation, &v.frames, &v.persons, &vocab).unwrap())
        .collect();
    let mut cfg = ModelConfig::tiny();
    cfg.vocab_size = vocab.len();
    cfg.seed = seed;
    let mut model = Model::<f64>::init(cfg, 64, 64).unwrap();
    let outcome = model.train(&corpus, 30, |_| {}).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model.params.to_named_f64()).unwrap();
    (outcome.losses.iter().map(|l| l.to_bits()).collect(), bytes)
}

#[test]
fn same_seed_same_corpus_bytes() {
    let (a, b) = (corpus_files(9), corpus_files(9));
    assert!(a.len() >= 6 * 3 + 3, "{} files", a.len());
    assert_eq!(a, b);
    assert_ne!(a, corpus_files(10));
}

#[test]
fn same_seed_same_losses_and_checkpoint() {
    let (losses_a, ckpt_a) = train(4);
    let (losses_b, ckpt_b) = train(4);
    assert_eq!(losses_a.len(), 30);
    assert_eq!(losses_a, losses_b);
    assert_eq!(ckpt_a, ckpt_b);
    assert_ne!(train(5).1, ckpt_a);
}
