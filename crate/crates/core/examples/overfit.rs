//! Overfits the desk preset on a small synthetic corpus and prints progress.
//!
//! `cargo run --release -p hcap-core --example overfit -- [steps] [lr]`

use std::time::Instant;

use hcap_core::geometry::tiou;
use hcap_core::model::{training_video, Model, ModelConfig, TrainingVideo};
use hcap_core::synth::{generate, SynthConfig};
use hcap_core::text::Vocab;

fn report(model: &Model<f64>, corpus: &[TrainingVideo<f64>]) -> (f64, f64) {
    let (mut iou, mut n, mut hits, mut total) = (0.0, 0usize, 0usize, 0usize);
    for v in corpus {
        let preds = model.predict(&v.input).expect("predict");
        for p in preds.iter().filter(|p| p.person_index.is_some()) {
            let j = p.person_index.unwrap() - 1;
            iou += tiou(&p.segment, &v.segments[j]);
            n += 1;
            let mut target = v.captions[j].clone();
            target.push(Vocab::EOS);
            hits += target
                .iter()
                .enumerate()
                .filter(|(i, t)| p.tokens.get(*i) == Some(t))
                .count();
            total += target.len();
        }
    }
    (iou / n as f64, hits as f64 / total as f64)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(5000, |s| s.parse().unwrap());
    let lr: f64 = args.get(2).map_or(5e-5, |s| s.parse().unwrap());
    let videos = generate(&SynthConfig {
        seed: 1,
        videos: 20,
        ..SynthConfig::default()
    })
    .unwrap();
    let vocab = Vocab::build(
        videos
            .iter()
            .flat_map(|v| v.annotation.persons.iter().map(|p| p.caption.as_str())),
    );
    let corpus: Vec<TrainingVideo<f64>> = videos
        .iter()
        .map(|v| training_video(&v.annotation, &v.frames, &v.persons, &vocab).unwrap())
        .collect();
    let mut cfg = ModelConfig::desk();
    cfg.vocab_size = vocab.len();
    cfg.learning_rate = lr;
    cfg.checked = false;
    let mut model = Model::<f64>::init(cfg, 64, 64).unwrap();
    println!("vocab {} params {}", vocab.len(), model.params.len());
    let start = Instant::now();
    let chunk = 250;
    let mut done = 0;
    while done < steps {
        let n = chunk.min(steps - done);
        let out = model.train(&corpus, n, |_| {}).unwrap();
        done += n;
        let mean = out.losses.iter().sum::<f64>() / n as f64;
        let (iou, acc) = report(&model, &corpus);
        println!(
            "step {done:5} loss {mean:8.4} tiou {iou:.3} tokacc {acc:.3} elapsed {:.0}s",
            start.elapsed().as_secs_f64()
        );
    }
}
