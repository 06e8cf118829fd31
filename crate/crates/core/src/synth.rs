//! Seeded synthetic corpora.
//!
//! Every person carries a latent attribute vector: a presence bit, a one-hot
//! clothing color and two one-hot behavior slots. While a person is on
//! screen, the first half of the track switches on the first behavior and
//! the second half the second one. A frame's feature is a fixed random
//! projection of the summed latents of everyone visible, plus Gaussian noise.
//! A person's feature is the same projection of their track-averaged latent,
//! followed by the tracked extent. Captions spell out exactly the attributes
//! in the latent, so they are recoverable from the features.
//!
//! Video `i` draws from its own ChaCha stream, which keeps generation
//! parallel and order-independent.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::annotation::{
    serialize, write_features, AnnotationError, FeatureArray, FeatureData, PersonRecord,
    SceneLabel, VideoAnnotation, PALETTE,
};
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth configuration: {0}")]
    Config(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Words that fill the caption template
/// `the person in <color> clothes <phrase> then <phrase>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Templates {
    pub colors: Vec<String>,
    pub phrases: Vec<String>,
    /// Phrases used only for the offending person in anomaly scenes.
    pub anomaly_phrases: Vec<String>,
}

impl Default for Templates {
    fn default() -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            colors: own(&[
                "red", "blue", "green", "black", "white", "yellow", "gray", "brown",
            ]),
            phrases: own(&[
                "walks along the street",
                "walks into the store",
                "turns to the left",
                "turns around",
                "looks at the camera",
                "looks around",
                "stands near the door",
                "stands still",
            ]),
            anomaly_phrases: own(&[
                "fights with another man",
                "runs away quickly",
                "steals a bag",
            ]),
        }
    }
}

impl Templates {
    fn behaviors(&self) -> usize {
        self.phrases.len() + self.anomaly_phrases.len()
    }

    fn behavior(&self, i: usize) -> &str {
        if i < self.phrases.len() {
            &self.phrases[i]
        } else {
            &self.anomaly_phrases[i - self.phrases.len()]
        }
    }

    /// Latent width: presence, colors, then two behavior slots.
    pub fn latent_dim(&self) -> usize {
        1 + self.colors.len() + 2 * self.behaviors()
    }

    pub fn caption(&self, color: usize, first: usize, second: usize) -> String {
        format!(
            "the person in {} clothes {} then {}",
            self.colors[color],
            self.behavior(first),
            self.behavior(second)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub videos: usize,
    /// Inclusive range of whole-second durations.
    pub duration_s: (u32, u32),
    /// Inclusive range of persons per video.
    pub persons: (usize, usize),
    pub templates: Templates,
    pub feature_dim: usize,
    /// Annotation frame rate. Features are emitted at one row per second.
    pub fps: f64,
    pub frame_size: (u32, u32),
    /// Shortest track, in seconds.
    pub min_track_s: f64,
    pub anomaly_rate: f64,
    pub noise_sigma: f64,
    /// Half-width of the uniform error the simulated tracker adds to each
    /// end of a person's extent, in seconds.
    pub extent_jitter_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            videos: 20,
            duration_s: (16, 32),
            persons: (4, 8),
            templates: Templates::default(),
            feature_dim: 64,
            fps: 30.0,
            frame_size: (1280, 720),
            min_track_s: 4.0,
            anomaly_rate: 0.3,
            noise_sigma: 0.05,
            extent_jitter_s: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.videos == 0 {
            return bad("video count must be positive");
        }
        if self.duration_s.0 == 0 || self.duration_s.0 > self.duration_s.1 {
            return bad("duration range must be non-empty and positive");
        }
        if self.persons.0 == 0 || self.persons.0 > self.persons.1 {
            return bad("persons range must be non-empty and positive");
        }
        if f64::from(self.duration_s.0) < self.min_track_s || self.min_track_s <= 0.0 {
            return bad("shortest video must fit the shortest track");
        }
        let t = &self.templates;
        if t.colors.is_empty() || t.phrases.is_empty() {
            return bad("templates need colors and phrases");
        }
        if self.anomaly_rate > 0.0 && t.anomaly_phrases.is_empty() {
            return bad("anomaly scenes need anomaly phrases");
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return bad("anomaly rate must lie in [0, 1]");
        }
        if self.feature_dim == 0 || self.fps.partial_cmp(&0.0) != Some(Ordering::Greater) {
            return bad("feature width and frame rate must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.extent_jitter_s >= 0.0) {
            return bad("noise and jitter must be non-negative");
        }
        if self.frame_size.0 < 64 || self.frame_size.1 < 128 {
            return bad("frame must be at least 64x128 pixels");
        }
        Ok(())
    }
}

/// One generated video: its annotation and both feature arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthVideo {
    pub annotation: VideoAnnotation,
    /// `[T, C]` with one row per second.
    pub frames: FeatureArray,
    /// `[N, C + 2]`: projected track-averaged latent, then the tracked
    /// extent `(start, end)` normalized by the duration.
    pub persons: FeatureArray,
    /// Visible persons per feature row, kept for probing.
    pub active_counts: Vec<usize>,
}

struct Person {
    record: PersonRecord,
    color: usize,
    behaviors: [usize; 2],
}

fn projection(cfg: &SynthConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.templates.latent_dim();
    let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("positive sigma");
    (0..cfg.feature_dim * k)
        .map(|_| normal.sample(&mut rng))
        .collect()
}

fn project(proj: &[f64], latent: &[f64], out: &mut [f32], noise: &mut impl FnMut() -> f64) {
    let k = latent.len();
    for (c, o) in out.iter_mut().enumerate() {
        let row = &proj[c * k..(c + 1) * k];
        let v: f64 = row.iter().zip(latent).map(|(a, b)| a * b).sum();
        *o = (v + noise()) as f32;
    }
}

/// Tenths of a second keep every time exactly representable in the JSON.
fn tenths(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let (a, b) = ((lo * 10.0).round() as i64, (hi * 10.0).round() as i64);
    rng.random_range(a..=b) as f64 / 10.0
}

fn video(cfg: &SynthConfig, proj: &[f64], index: usize) -> SynthVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let t = &cfg.templates;
    let duration = rng.random_range(cfg.duration_s.0..=cfg.duration_s.1);
    let dur = f64::from(duration);
    let n = rng.random_range(cfg.persons.0..=cfg.persons.1);
    let scene_label = if rng.random_bool(cfg.anomaly_rate) {
        *SceneLabel::ANOMALIES.choose(&mut rng).expect("non-empty")
    } else {
        SceneLabel::Normal
    };
    let offender = scene_label.is_anomaly().then(|| rng.random_range(0..n));
    let (fw, fh) = (f64::from(cfg.frame_size.0), f64::from(cfg.frame_size.1));

    let mut persons: Vec<Person> = (0..n)
        .map(|i| {
            let appear = tenths(&mut rng, 0.0, dur - cfg.min_track_s);
            let disappear = tenths(&mut rng, appear + cfg.min_track_s, dur);
            let w = rng.random_range(40..=(fw / 6.0) as u32) as f64;
            let h = rng.random_range(80..=(fh / 2.0) as u32) as f64;
            let bbox = BBox {
                x: rng.random_range(0..=(fw - w) as u32) as f64,
                y: rng.random_range(0..=(fh - h) as u32) as f64,
                w,
                h,
            };
            let color = rng.random_range(0..t.colors.len());
            let first = rng.random_range(0..t.phrases.len());
            let second = match offender {
                Some(o) if o == i => t.phrases.len() + rng.random_range(0..t.anomaly_phrases.len()),
                _ => rng.random_range(0..t.phrases.len()),
            };
            Person {
                record: PersonRecord {
                    person_index: 0,
                    color_index: 0,
                    first_frame: (appear * cfg.fps).round() as u64,
                    bbox,
                    appear_s: appear,
                    disappear_s: disappear,
                    caption: t.caption(color, first, second),
                    track: Vec::new(),
                },
                color,
                behaviors: [first, second],
            }
        })
        .collect();
    persons.sort_by(|a, b| {
        (a.record.first_frame, a.record.bbox.x)
            .partial_cmp(&(b.record.first_frame, b.record.bbox.x))
            .expect("finite")
    });
    for (i, p) in persons.iter_mut().enumerate() {
        p.record.person_index = i + 1;
        p.record.color_index = i % PALETTE.len();
    }

    let k = t.latent_dim();
    let slot = |s: usize, b: usize| 1 + t.colors.len() + s * t.behaviors() + b;
    // Latent of person `p` at the centre of feature row `row`, if visible.
    let latent_at = |p: &Person, row: usize, out: &mut [f64]| -> bool {
        let at = row as f64 + 0.5;
        let (a, d) = (p.record.appear_s, p.record.disappear_s);
        if at < a || at >= d {
            return false;
        }
        let phase = usize::from(at >= 0.5 * (a + d));
        out[0] += 1.0;
        out[1 + p.color] += 1.0;
        out[slot(phase, p.behaviors[phase])] += 1.0;
        true
    };

    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let sigma = cfg.noise_sigma;
    let c = cfg.feature_dim;
    let rows = duration as usize;
    let mut frames = vec![0f32; rows * c];
    let mut active_counts = Vec::with_capacity(rows);
    let mut person_latents = vec![vec![0.0; k]; n];
    let mut person_rows = vec![0usize; n];
    for row in 0..rows {
        let mut latent = vec![0.0; k];
        let mut active = 0;
        for (j, p) in persons.iter().enumerate() {
            let mut own = vec![0.0; k];
            if latent_at(p, row, &mut own) {
                active += 1;
                person_rows[j] += 1;
                for (acc, (l, o)) in latent
                    .iter_mut()
                    .zip(person_latents[j].iter_mut().zip(&own))
                {
                    *acc += o;
                    *l += o;
                }
            }
        }
        active_counts.push(active);
        let mut draw = || {
            if sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            }
        };
        project(
            proj,
            &latent,
            &mut frames[row * c..(row + 1) * c],
            &mut draw,
        );
    }

    let mut person_feats = vec![0f32; n * (c + 2)];
    for (j, p) in persons.iter().enumerate() {
        let seen = person_rows[j].max(1) as f64;
        let mean: Vec<f64> = person_latents[j].iter().map(|v| v / seen).collect();
        let out = &mut person_feats[j * (c + 2)..(j + 1) * (c + 2)];
        let mut draw = || {
            if sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            }
        };
        project(proj, &mean, &mut out[..c], &mut draw);
        let jitter = cfg.extent_jitter_s;
        let mut wobble = |v: f64| {
            if jitter > 0.0 {
                v + rng.random_range(-jitter..=jitter)
            } else {
                v
            }
        };
        let start = wobble(p.record.appear_s).clamp(0.0, dur);
        let end = wobble(p.record.disappear_s).clamp(0.0, dur);
        let (start, end) = if end - start < 0.5 {
            (p.record.appear_s, p.record.disappear_s)
        } else {
            (start, end)
        };
        out[c] = (start / dur) as f32;
        out[c + 1] = (end / dur) as f32;
    }

    let annotation = VideoAnnotation {
        video_id: format!("synth_{index:05}"),
        fps: cfg.fps,
        frame_width: cfg.frame_size.0,
        frame_height: cfg.frame_size.1,
        duration_s: dur,
        scene_label,
        persons: persons.into_iter().map(|p| p.record).collect(),
    };
    SynthVideo {
        annotation,
        frames: FeatureArray::new(vec![rows, c], FeatureData::F32(frames)).expect("shape matches"),
        persons: FeatureArray::new(vec![n, c + 2], FeatureData::F32(person_feats))
            .expect("shape matches"),
        active_counts,
    }
}

/// Generates the whole corpus; the output depends only on `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthVideo>, SynthError> {
    cfg.validate()?;
    let proj = projection(cfg);
    Ok((0..cfg.videos)
        .into_par_iter()
        .map(|i| video(cfg, &proj, i))
        .collect())
}

/// Video ids of the three subsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle followed by contiguous slicing. Train and validation sizes
/// are `round(ratio · n)`; the test subset takes the remainder.
pub fn split(ids: &[String], ratios: [f64; 3], seed: u64) -> Result<Split, SynthError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0))
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6
    {
        return Err(SynthError::Split(format!(
            "ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let n = ids.len();
    let train = (ratios[0] * n as f64).round() as usize;
    let val = (ratios[1] * n as f64).round() as usize;
    if train == 0 || val == 0 || train + val >= n {
        return Err(SynthError::Split(format!(
            "ratios {ratios:?} leave an empty subset of {n} videos"
        )));
    }
    let mut order = ids.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(train + val);
    let val = order.split_off(train);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

/// Ratios matching the 584/205/223 split of the original 1012-video corpus.
pub const REFERENCE_RATIOS: [f64; 3] = [0.577, 0.203, 0.220];

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `annotations/<id>.json`, `features/<id>.frames.hcft`,
/// `features/<id>.persons.hcft` and one `<subset>.txt` manifest per subset.
pub fn write_corpus(dir: &Path, videos: &[SynthVideo], split: &Split) -> Result<(), SynthError> {
    let ann = dir.join("annotations");
    let feat = dir.join("features");
    for d in [&ann, &feat] {
        std::fs::create_dir_all(d).map_err(io(d))?;
    }
    videos.par_iter().try_for_each(|v| {
        let id = &v.annotation.video_id;
        let path = ann.join(format!("{id}.json"));
        std::fs::write(&path, serialize(&v.annotation)).map_err(io(&path))?;
        write_features(&feat.join(format!("{id}.frames.hcft")), &v.frames)?;
        write_features(&feat.join(format!("{id}.persons.hcft")), &v.persons)?;
        Ok::<_, SynthError>(())
    })?;
    for (name, ids) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        let path = dir.join(format!("{name}.txt"));
        let mut text = ids.join("\n");
        text.push('\n');
        std::fs::write(&path, text).map_err(io(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{validate, Severity};
    use crate::text::Vocab;

    fn small(seed: u64, videos: usize) -> SynthConfig {
        SynthConfig {
            seed,
            videos,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&small(7, 6)).unwrap();
        let b = generate(&small(7, 6)).unwrap();
        assert_eq!(a, b);
        let c = generate(&small(8, 6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn persons_histogram_in_range_and_valid() {
        let corpus = generate(&small(3, 40)).unwrap();
        for v in &corpus {
            let n = v.annotation.persons.len();
            assert!((4..=8).contains(&n));
            assert_eq!(v.persons.shape, vec![n, 66]);
            assert_eq!(v.frames.shape, vec![v.annotation.duration_s as usize, 64]);
            let errs: Vec<_> = validate(&v.annotation)
                .into_iter()
                .filter(|d| d.severity == Severity::Error)
                .collect();
            assert!(errs.is_empty(), "{errs:?}");
        }
        let vocab = Vocab::build(
            corpus
                .iter()
                .flat_map(|v| v.annotation.persons.iter().map(|p| p.caption.as_str())),
        );
        assert!(vocab.len() <= 60, "{}", vocab.len());
    }

    #[test]
    fn anomaly_scenes_carry_anomaly_phrase() {
        let t = Templates::default();
        for v in generate(&small(11, 60)).unwrap() {
            let hits = v
                .annotation
                .persons
                .iter()
                .filter(|p| {
                    t.anomaly_phrases
                        .iter()
                        .any(|a| p.caption.ends_with(a.as_str()))
                })
                .count();
            assert_eq!(hits, usize::from(v.annotation.scene_label.is_anomaly()));
        }
    }

    #[test]
    fn reference_split_sizes() {
        let ids: Vec<String> = (0..100).map(|i| format!("v{i:03}")).collect();
        let s = split(&ids, REFERENCE_RATIOS, 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (58, 20, 22));
        let mut all: Vec<_> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .cloned()
            .collect();
        all.sort();
        assert_eq!(all, ids);
        assert_eq!(split(&ids, REFERENCE_RATIOS, 5).unwrap(), s);
        assert!(split(&ids[..3], REFERENCE_RATIOS, 5).is_err());
        assert!(split(&ids, [0.5, 0.5, 0.5], 5).is_err());
    }
}
