//! Frame features must carry the scene state: an ordinary least-squares
//! probe fitted on frame features recovers how many persons are on screen.

use hcap_core::synth::{generate, SynthConfig};
use nalgebra::{DMatrix, DVector};

/// Stacks every frame row as `[features..., 1]` with its active count.
fn design(videos: &[hcap_core::synth::SynthVideo]) -> (DMatrix<f64>, Vec<usize>) {
    let width = videos[0].frames.shape[1] + 1;
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for v in videos {
        for r in 0..v.frames.rows() {
            rows.extend(v.frames.row::<f64>(r));
            rows.push(1.0);
            counts.push(v.active_counts[r]);
        }
    }
    (DMatrix::from_row_slice(counts.len(), width, &rows), counts)
}

fn accuracy(x: &DMatrix<f64>, w: &DVector<f64>, counts: &[usize]) -> f64 {
    let predicted = x * w;
    let hits = predicted
        .iter()
        .zip(counts)
        .filter(|(p, &c)| p.round().max(0.0) as usize == c)
        .count();
    hits as f64 / counts.len() as f64
}

#[test]
fn linear_probe_recovers_active_count_on_50_videos() {
    let videos = generate(&SynthConfig {
        seed: 17,
        videos: 50,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(videos.len(), 50);

    // Fit on 35 videos and score on the 15 the probe never saw, then on all.
    let (fit_x, fit_y) = design(&videos[..35]);
    let target = DVector::from_iterator(fit_y.len(), fit_y.iter().map(|&c| c as f64));
    let w = fit_x.clone().svd(true, true).solve(&target, 1e-10).unwrap();
    let (held_x, held_y) = design(&videos[35..]);
    let held = accuracy(&held_x, &w, &held_y);
    let (all_x, all_y) = design(&videos);
    let all = accuracy(&all_x, &w, &all_y);
    println!("held-out accuracy {held:.4}, whole corpus {all:.4}");
    assert!(held >= 0.95, "held-out accuracy {held}");
    assert!(all >= 0.95, "corpus accuracy {all}");
}
