use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use hcap_core::annotation::{
    self, parse_predictions, serialize_predictions, stats, AnnotationError, Diagnostic,
    PredictionFile, PredictionRecord, Severity,
};
use hcap_core::diffcore::{read_checkpoint, write_checkpoint};
use hcap_core::gradsuite::run_suite;
use hcap_core::metrics::{tiou_matched_eval, EvalReport, Event, VideoEval, THRESHOLDS};
use hcap_core::model::{training_video, video_input, Model, ModelConfig, TrainingVideo};
use hcap_core::synth::{generate, split, write_corpus, SynthConfig, REFERENCE_RATIOS};
use hcap_core::text::{tokenize, Vocab};
use log::info;

use crate::corpus::{
    feature_dims, json_stems, load_annotation, load_video, read_id_list, subset_ids, Subset,
};
use crate::manifest::{RunManifest, MANIFEST_NAME};
use crate::{CliError, Outcome, Ran};

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(text)
        .map_err(CliError::io(Path::new("<stdout>")))
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn ok(outcome: bool) -> Outcome {
    if outcome {
        Outcome::Success
    } else {
        Outcome::Failure
    }
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Seed for every random draw, including the subset split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of videos.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Output corpus directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Fewest persons in a video.
    #[arg(long, default_value_t = 4)]
    pub min_persons: usize,
    /// Most persons in a video.
    #[arg(long, default_value_t = 8)]
    pub max_persons: usize,
    /// Shortest video, in whole seconds.
    #[arg(long, default_value_t = 16)]
    pub min_duration: u32,
    /// Longest video, in whole seconds.
    #[arg(long, default_value_t = 32)]
    pub max_duration: u32,
    /// Width of frame and person feature vectors.
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
    /// Fraction of videos given an anomaly scene.
    #[arg(long, default_value_t = 0.3)]
    pub anomaly_rate: f64,
    /// Train, val and test fractions, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = REFERENCE_RATIOS)]
    pub ratios: Vec<f64>,
}

pub(crate) fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let cfg = SynthConfig {
        seed: a.seed,
        videos: a.count,
        duration_s: (a.min_duration, a.max_duration),
        persons: (a.min_persons, a.max_persons),
        feature_dim: a.feature_dim,
        anomaly_rate: a.anomaly_rate,
        ..SynthConfig::default()
    };
    let videos = generate(&cfg)?;
    let ids: Vec<String> = videos
        .iter()
        .map(|v| v.annotation.video_id.clone())
        .collect();
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Usage("--ratios takes exactly three values".into()))?;
    let subsets = split(&ids, ratios, a.seed)?;
    write_corpus(&a.out, &videos, &subsets)?;
    say(
        out,
        format_args!(
            "wrote {} videos to {} (train {}, val {}, test {})\n",
            videos.len(),
            a.out.display(),
            subsets.train.len(),
            subsets.val.len(),
            subsets.test.len()
        ),
    )?;

    let mut m = RunManifest::new("synth");
    m.seed = Some(a.seed);
    m.set("count", a.count);
    m.set("persons", format!("{}..={}", a.min_persons, a.max_persons));
    m.set(
        "duration_s",
        format!("{}..={}", a.min_duration, a.max_duration),
    );
    m.set("feature_dim", a.feature_dim);
    m.set("anomaly_rate", a.anomaly_rate);
    m.set("ratios", format!("{ratios:?}"));
    m.output(&a.out)?;
    Ok(Ran {
        outcome: Outcome::Success,
        manifest: m,
        manifest_path: Some(a.out.join(MANIFEST_NAME)),
    })
}

// ------------------------------------------------------------- validate

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Directory of `<video_id>.json` annotation files.
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    /// Print every warning instead of a count.
    #[arg(long)]
    pub show_warnings: bool,
}

/// Findings for one annotation file.
#[derive(Clone, Debug, PartialEq)]
pub struct FileReport {
    pub file: PathBuf,
    pub diagnostics: Vec<Diagnostic>,
}

impl FileReport {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }
}

/// Checks one annotation document. Syntax errors, schema violations and a
/// `video_id` that disagrees with the file name are all errors.
pub fn validate_file(path: &Path) -> Result<FileReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let diagnostics = match annotation::parse(&text) {
        Ok(a) => {
            let mut d = annotation::validate(&a);
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if a.video_id != stem {
                d.push(Diagnostic::error(
                    "video_id",
                    format!("`{}` does not match the file name `{stem}`", a.video_id),
                ));
            }
            d
        }
        Err(AnnotationError::Syntax { path, message }) => vec![Diagnostic::error(path, message)],
        Err(AnnotationError::Invalid(d)) => d,
        Err(e) => vec![Diagnostic::error("document", e.to_string())],
    };
    Ok(FileReport {
        file: path.to_path_buf(),
        diagnostics,
    })
}

/// Validates every `*.json` file in `dir`, in file-name order.
pub fn validate_dir(dir: &Path) -> Result<Vec<FileReport>, CliError> {
    let stems = json_stems(dir)?;
    if stems.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no .json annotation files",
            dir.display()
        )));
    }
    stems
        .iter()
        .map(|s| validate_file(&dir.join(format!("{s}.json"))))
        .collect()
}

pub(crate) fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let reports = validate_dir(&a.annotations)?;
    let mut invalid = 0;
    let mut warnings = 0;
    for r in &reports {
        invalid += usize::from(!r.is_valid());
        for d in &r.diagnostics {
            let shown = d.severity == Severity::Error || a.show_warnings;
            warnings += usize::from(d.severity == Severity::Warning);
            if shown {
                say(out, format_args!("{}: {d}\n", r.file.display()))?;
            }
        }
    }
    say(
        out,
        format_args!(
            "checked {} files: {} invalid, {} warnings\n",
            reports.len(),
            invalid,
            warnings
        ),
    )?;
    let mut m = RunManifest::new("validate");
    m.input(&a.annotations);
    m.set("files", reports.len());
    m.set("invalid", invalid);
    m.set("warnings", warnings);
    Ok(Ran {
        outcome: ok(invalid == 0),
        manifest: m,
        manifest_path: None,
    })
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Directory of `<video_id>.json` annotation files.
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    /// Emit JSON instead of tables.
    #[arg(long)]
    pub json: bool,
}

pub(crate) fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let corpus = json_stems(&a.annotations)?
        .iter()
        .map(|s| load_annotation(&a.annotations.join(format!("{s}.json"))))
        .collect::<Result<Vec<_>, _>>()?;
    let s = stats(&corpus)?;
    if a.json {
        let text = serde_json::to_string_pretty(&s).expect("stats serialize");
        say(out, format_args!("{text}\n"))?;
    } else {
        say(
            out,
            format_args!(
                "videos {}  captions {}  mean caption length {:.2}\n\
                 scenes: normal {}  anomaly {}\n",
                s.videos, s.captions, s.mean_caption_length, s.normal_videos, s.anomaly_videos
            ),
        )?;
        say(out, format_args!("\ncaption length  captions\n"))?;
        for (len, n) in &s.caption_length_histogram {
            say(out, format_args!("{len:>14}  {n:>8}\n"))?;
        }
        say(out, format_args!("\npersons/video  videos\n"))?;
        for (p, n) in &s.persons_per_video {
            say(out, format_args!("{p:>13}  {n:>6}\n"))?;
        }
        say(out, format_args!("\nverb   count\n"))?;
        for (v, n) in &s.verb_counts {
            say(out, format_args!("{v:<6} {n:>5}\n"))?;
        }
    }
    let mut m = RunManifest::new("stats");
    m.input(&a.annotations);
    m.set("videos", s.videos);
    Ok(Ran {
        outcome: Outcome::Success,
        manifest: m,
        manifest_path: None,
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Corpus directory written by `synth` (or laid out the same way).
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Flat `key = value` config file applied on top of the preset.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Starting point before the config file: desk, full or tiny.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Videos to train on.
    #[arg(long, value_enum, default_value_t = Subset::Train)]
    pub subset: Subset,
    /// Overrides `steps` from the config.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path. `.vocab`, `.cfg` and `.losses.tsv` files are
    /// written beside it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Resolves preset, config file and flag overrides into one config.
pub fn train_config(a: &TrainArgs) -> Result<ModelConfig, CliError> {
    let mut cfg = ModelConfig::preset(&a.preset)?;
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        cfg = cfg
            .apply_kv(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(steps) = a.steps {
        cfg.steps = steps;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub(crate) fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let mut cfg = train_config(a)?;
    let ids = subset_ids(&a.corpus, a.subset)?;
    let videos = ids
        .iter()
        .map(|id| load_video(&a.corpus, id))
        .collect::<Result<Vec<_>, _>>()?;
    let (frame_dim, person_dim) = feature_dims(&videos)?;
    let vocab = Vocab::build(
        videos
            .iter()
            .flat_map(|v| v.annotation.persons.iter().map(|p| p.caption.as_str())),
    );
    cfg.vocab_size = vocab.len();
    let corpus: Vec<TrainingVideo<f64>> = videos
        .iter()
        .map(|v| training_video(&v.annotation, &v.frames, &v.persons, &vocab))
        .collect::<Result<_, _>>()?;
    let mut model = Model::<f64>::init(cfg.clone(), frame_dim, person_dim)?;
    info!(
        "training {} scalars on {} videos for {} steps",
        model.params.scalar_count(),
        corpus.len(),
        cfg.steps
    );

    let losses_path = sidecar(&a.out, ".losses.tsv");
    let mut log = BufWriter::new(File::create(&losses_path).map_err(CliError::io(&losses_path))?);
    let mut write_err = None;
    writeln!(log, "step\tvideo\tloss").map_err(CliError::io(&losses_path))?;
    let every = cfg.log_every.max(1);
    let outcome = model.train(&corpus, cfg.steps, |s| {
        if let Err(e) = writeln!(log, "{}\t{}\t{:e}", s.step, s.video, s.loss) {
            write_err.get_or_insert(e);
        }
        if (s.step + 1) % every == 0 {
            info!("step {} loss {:.5}", s.step + 1, s.loss);
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::io(&losses_path)(e));
    }
    log.flush().map_err(CliError::io(&losses_path))?;

    let file = File::create(&a.out).map_err(CliError::io(&a.out))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, &model.params.to_named_f64())?;
    w.flush().map_err(CliError::io(&a.out))?;
    let vocab_path = sidecar(&a.out, ".vocab");
    std::fs::write(&vocab_path, vocab.to_text()).map_err(CliError::io(&vocab_path))?;
    let cfg_path = sidecar(&a.out, ".cfg");
    std::fs::write(&cfg_path, cfg.to_kv()).map_err(CliError::io(&cfg_path))?;

    let tail = &outcome.losses[outcome.losses.len().saturating_sub(every)..];
    let recent = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    say(
        out,
        format_args!(
            "trained {} steps on {} videos; mean loss over the last {} steps {:.5}\n",
            outcome.losses.len(),
            corpus.len(),
            tail.len(),
            recent
        ),
    )?;

    let mut m = RunManifest::new("train");
    m.seed = Some(cfg.seed);
    for line in cfg.to_kv().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            m.set(k, v);
        }
    }
    m.set("subset", a.subset.name());
    m.set("frame_dim", frame_dim);
    m.set("person_dim", person_dim);
    m.input(&a.corpus);
    if let Some(c) = &a.config {
        m.input(c);
    }
    for p in [&a.out, &vocab_path, &cfg_path, &losses_path] {
        m.output(p)?;
    }
    Ok(Ran {
        outcome: Outcome::Success,
        manifest: m,
        manifest_path: Some(sidecar(&a.out, ".manifest.json")),
    })
}

// ---------------------------------------------------------------- infer

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Checkpoint written by `train`; its `.vocab` and `.cfg` files must
    /// sit beside it.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Corpus directory to read features from.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Videos to predict.
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    /// Directory for `<video_id>.json` prediction files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Keep the K most confident queries instead of thresholding.
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
}

/// Loads a checkpoint with its sidecar files for the given feature widths.
pub fn load_model(
    checkpoint: &Path,
    frame_dim: usize,
    person_dim: usize,
) -> Result<(Model<f64>, Vocab), CliError> {
    let cfg_path = sidecar(checkpoint, ".cfg");
    let cfg_text = std::fs::read_to_string(&cfg_path).map_err(CliError::io(&cfg_path))?;
    let cfg = ModelConfig::default()
        .apply_kv(&cfg_text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", cfg_path.display())))?;
    let vocab_path = sidecar(checkpoint, ".vocab");
    let vocab_text = std::fs::read_to_string(&vocab_path).map_err(CliError::io(&vocab_path))?;
    let vocab = Vocab::from_text(&vocab_text)?;
    let file = File::open(checkpoint).map_err(CliError::io(checkpoint))?;
    let named = read_checkpoint(BufReader::new(file))?;
    let model = Model::from_named(cfg, frame_dim, person_dim, &named)?;
    Ok((model, vocab))
}

pub(crate) fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let ids = subset_ids(&a.corpus, a.subset)?;
    let videos = ids
        .iter()
        .map(|id| load_video(&a.corpus, id))
        .collect::<Result<Vec<_>, _>>()?;
    let (frame_dim, person_dim) = feature_dims(&videos)?;
    let (model, vocab) = load_model(&a.checkpoint, frame_dim, person_dim)?;
    std::fs::create_dir_all(&a.out).map_err(CliError::io(&a.out))?;
    let mut total = 0;
    for v in &videos {
        let input = video_input::<f64>(&v.frames, &v.persons)?;
        let preds = match a.top_k {
            Some(k) => model.infer_top_k(&input, k)?,
            None => model.infer(&input)?,
        };
        let predictions = preds
            .iter()
            .map(|p| {
                Ok(PredictionRecord {
                    person_index: p.person_index,
                    segment: p.segment,
                    confidence: p.confidence,
                    caption: vocab.decode(&p.tokens)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        total += predictions.len();
        let file = PredictionFile {
            video_id: v.annotation.video_id.clone(),
            duration_s: v.annotation.duration_s,
            predictions,
        };
        let path = a.out.join(format!("{}.json", file.video_id));
        std::fs::write(&path, serialize_predictions(&file)).map_err(CliError::io(&path))?;
    }
    say(
        out,
        format_args!(
            "wrote {total} predictions for {} videos to {}\n",
            videos.len(),
            a.out.display()
        ),
    )?;
    let mut m = RunManifest::new("infer");
    m.set("subset", a.subset.name());
    m.set(
        "selection",
        a.top_k
            .map_or("confidence_threshold".to_string(), |k| format!("top_{k}")),
    );
    m.set("confidence_threshold", model.cfg.confidence_threshold);
    m.input(&a.checkpoint);
    m.input(&a.corpus);
    m.output(&a.out)?;
    Ok(Ran {
        outcome: Outcome::Success,
        manifest: m,
        manifest_path: Some(a.out.join(MANIFEST_NAME)),
    })
}

// ----------------------------------------------------------------- eval

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of `<video_id>.json` prediction files.
    #[arg(long, value_name = "DIR")]
    pub predictions: PathBuf,
    /// Directory of ground-truth annotation files.
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    /// Restrict scoring to the ids listed in this file (e.g. a corpus
    /// `test.txt`); by default every annotation is scored.
    #[arg(long, value_name = "FILE")]
    pub ids: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
    /// Write per-video scores as tab-separated values.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

/// Scores the predictions for `ids` (every annotation when `None`). A video
/// without a prediction file counts as one with no predictions.
pub fn evaluate(
    predictions: &Path,
    annotations: &Path,
    ids: Option<&[String]>,
) -> Result<EvalReport, CliError> {
    let ids: Vec<String> = match ids {
        Some(ids) => ids.to_vec(),
        None => json_stems(annotations)?,
    };
    let mut missing = Vec::new();
    let mut videos = Vec::with_capacity(ids.len());
    for id in &ids {
        let gt = load_annotation(&annotations.join(format!("{id}.json")))?;
        let ground_truth = gt
            .persons
            .iter()
            .map(|p| {
                Ok(Event {
                    segment: p
                        .segment(gt.duration_s)
                        .map_err(|e| CliError::Data(format!("{id}: {e}")))?,
                    tokens: tokenize(&p.caption),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let path = predictions.join(format!("{id}.json"));
        let preds = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
            let file = parse_predictions(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if file.video_id != *id {
                return Err(CliError::Data(format!(
                    "{}: video_id `{}` does not match `{id}`",
                    path.display(),
                    file.video_id
                )));
            }
            file.predictions
                .iter()
                .map(|p| Event {
                    segment: p.segment,
                    tokens: tokenize(&p.caption),
                })
                .collect()
        } else {
            missing.push(id.clone());
            Vec::new()
        };
        videos.push(VideoEval {
            video_id: id.clone(),
            predictions: preds,
            ground_truth,
        });
    }
    let mut report = tiou_matched_eval(&videos, &THRESHOLDS)?;
    if !missing.is_empty() {
        report.diagnostics.push(format!(
            "{} videos have no prediction file: {}",
            missing.len(),
            missing.join(", ")
        ));
    }
    Ok(report)
}

pub(crate) fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let ids = a.ids.as_deref().map(read_id_list).transpose()?;
    let report = evaluate(&a.predictions, &a.annotations, ids.as_deref())?;
    say(out, format_args!("{report}"))?;
    let mut m = RunManifest::new("eval");
    m.set("thresholds", format!("{:?}", report.thresholds));
    m.input(&a.predictions);
    m.input(&a.annotations);
    if let Some(p) = &a.ids {
        m.input(p);
    }
    if let Some(path) = &a.json {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(CliError::io(path))?;
        m.output(path)?;
    }
    if let Some(path) = &a.table {
        std::fs::write(path, report.table()).map_err(CliError::io(path))?;
        m.output(path)?;
    }
    let manifest_path = a.json.as_ref().map(|p| sidecar(p, ".manifest.json"));
    Ok(Ran {
        outcome: Outcome::Success,
        manifest: m,
        manifest_path,
    })
}

// ------------------------------------------------------------ gradcheck

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Seed for the random inputs of every trial.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random trials per kernel.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

pub(crate) fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<Ran, CliError> {
    let reports = run_suite(a.seed, a.trials)?;
    say(
        out,
        format_args!(
            "{:<20} {:>6} {:>7} {:>7} {:>12} {:>9}  result\n",
            "kernel", "trials", "coords", "skipped", "max rel err", "tolerance"
        ),
    )?;
    for r in &reports {
        say(
            out,
            format_args!(
                "{:<20} {:>6} {:>7} {:>7} {:>12.3e} {:>9.0e}  {}\n",
                r.name,
                r.trials,
                r.coords,
                r.skipped,
                r.max_rel_error,
                r.tolerance,
                if r.passed() { "pass" } else { "FAIL" }
            ),
        )?;
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    say(
        out,
        format_args!("{} kernels, {failed} failed\n", reports.len()),
    )?;
    let mut m = RunManifest::new("gradcheck");
    m.seed = Some(a.seed);
    m.set("trials", a.trials);
    m.set("failed", failed);
    Ok(Ran {
        outcome: ok(failed == 0),
        manifest: m,
        manifest_path: None,
    })
}
