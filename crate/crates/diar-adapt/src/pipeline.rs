//! End-to-end orchestration: SAD smoothing → segment or window embeddings →
//! optional dimensionality reduction → optional attention aggregation →
//! clustering → optional non-speech refinement → timeline, plus the ablation
//! runner and the synthetic benchmark generator.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregate::attention_aggregate;
use crate::cluster::{
    self, ClusterAssignment, SpectralConfig, DEFAULT_K_MAX, DEFAULT_K_MIN,
};
use crate::config::{
    stage_seed, Clusterer, NonspeechMode, PipelineConfig, SpeakerCount,
    REFERENCE_SAD_HOP_SECONDS,
};
use crate::dim_reduce::{reduce_session, TrainConfig};
use crate::embeddings::{
    generate_synthetic_session, parse_embeddings, read_embeddings, segment_embeddings,
    write_embeddings, SessionEmbeddings, SyntheticSessionSpec, Window,
};
use crate::error::{Error, Result};
use crate::nonspeech::{identify_nonspeech_cluster, refine, SadLabels};
use crate::sad::{binarize, read_sad_probs, smooth, write_sad_probs, FrameProbs, SpeechSegments};
use crate::scoring::{
    assignment_to_timeline, read_rttm, score, write_rttm, DerReport, Timeline,
};

/// Highest SAD-speech fraction a cluster may have and still be accepted as
/// the non-speech cluster. Windows that merely overlap a short silence keep
/// their SAD-speech label (they are mostly speech), so even a clean
/// non-speech cluster scores well above zero; a genuine speaker cluster sits
/// close to one.
const NS_CANDIDATE_MAX_SPEECH: f64 = 0.9;

/// Parsed inputs of one session.
#[derive(Debug, Clone)]
pub struct SessionInputs {
    pub session_id: String,
    pub embeddings: SessionEmbeddings,
    pub sad: Option<FrameProbs>,
}

/// Reads the embedding file and, if given, the SAD input. A `.rttm` SAD
/// input is converted to hard frame probabilities from its speech regions
/// (reference-segment mode); anything else is read as SADP probabilities.
pub fn load_session_inputs(
    embeddings_path: &Path,
    sad_path: Option<&Path>,
) -> Result<SessionInputs> {
    let session_id = embeddings_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::invalid("embeddings path has no file name"))?;
    let embeddings = read_embeddings(embeddings_path)?;
    let sad = match sad_path {
        None => None,
        Some(p) if p.extension().is_some_and(|e| e == "rttm") => {
            let timelines = read_rttm(p)?;
            let timeline = timelines
                .iter()
                .find(|t| t.session_id() == session_id)
                .or_else(|| (timelines.len() == 1).then(|| &timelines[0]))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "{} has no session {session_id}",
                        p.display()
                    ))
                })?;
            let turns_end = timeline
                .turns()
                .iter()
                .map(|t| t.end())
                .fold(0.0, f64::max);
            Some(timeline_to_sad_probs(
                timeline,
                embeddings.duration().max(turns_end),
            )?)
        }
        Some(p) => Some(read_sad_probs(p)?),
    };
    Ok(SessionInputs {
        session_id,
        embeddings,
        sad,
    })
}

/// Hard 1.0/0.0 frame probabilities from a timeline's speech regions, for
/// running the pipeline from reference segments instead of SAD output.
pub fn timeline_to_sad_probs(timeline: &Timeline, duration: f64) -> Result<FrameProbs> {
    let hop = REFERENCE_SAD_HOP_SECONDS;
    let n = (duration / hop).ceil() as usize;
    let speech = speech_union(timeline);
    let probs = (0..n)
        .map(|f| {
            let mid = (f as f64 + 0.5) * hop;
            if in_union(&speech, mid) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    FrameProbs::new(probs, hop)
}

/// Merged speech intervals of a timeline, sorted and disjoint.
fn speech_union(timeline: &Timeline) -> Vec<(f64, f64)> {
    let mut intervals: Vec<(f64, f64)> = timeline
        .turns()
        .iter()
        .map(|t| (t.start, t.end()))
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

fn in_union(intervals: &[(f64, f64)], x: f64) -> bool {
    let idx = intervals.partition_point(|&(s, _)| s <= x);
    idx > 0 && x < intervals[idx - 1].1
}

/// Per-window speech labels: 1 when the window midpoint lies inside a speech
/// segment (the same midpoint rule used for segment averaging).
fn window_speech_labels(session: &SessionEmbeddings, segments: &SpeechSegments) -> SadLabels {
    session
        .windows()
        .iter()
        .map(|w| u8::from(in_union(segments, 0.5 * (w.start + w.end))))
        .collect()
}

fn speech_subsession(session: &SessionEmbeddings, labels: &[u8]) -> Result<SessionEmbeddings> {
    let windows: Vec<Window> = session
        .windows()
        .iter()
        .zip(labels)
        .filter(|(_, &e)| e == 1)
        .map(|(w, _)| w.clone())
        .collect();
    SessionEmbeddings::with_dim(windows, session.dim())
}

/// Runs the full pipeline on parsed inputs. `prototype` is the optional
/// non-speech prototype embedding, already in the input embedding space.
pub fn run_session(
    inputs: &SessionInputs,
    config: &PipelineConfig,
    prototype: Option<&[f64]>,
) -> Result<Timeline> {
    let use_ns = config.use_ns();
    if use_ns && inputs.sad.is_none() {
        return Err(Error::invalid(
            "non-speech clustering requires SAD input; pass one or set nonspeech=off",
        ));
    }

    let segments: Option<SpeechSegments> = match &inputs.sad {
        Some(probs) => {
            let frames = binarize(probs, config.sad_threshold)
                .map_err(|e| e.at_stage("sad"))?;
            Some(
                smooth(
                    &frames,
                    config.sad_window_seconds,
                    config.sad_on_ratio,
                    probs.frame_hop_seconds,
                )
                .map_err(|e| e.at_stage("sad"))?,
            )
        }
        None => None,
    };

    let window_labels: Option<SadLabels> = segments
        .as_ref()
        .map(|segs| window_speech_labels(&inputs.embeddings, segs));

    // With non-speech clustering every window stays in and SAD becomes a
    // per-window label; otherwise SAD segments replace windows as the units
    // to cluster, each carrying its mean embedding.
    let (mut working, sad_labels): (SessionEmbeddings, Option<SadLabels>) =
        match (&segments, use_ns) {
            (Some(_), true) => (inputs.embeddings.clone(), window_labels.clone()),
            (Some(segs), false) => {
                let (units, dropped) = segment_embeddings(&inputs.embeddings, segs)
                    .map_err(|e| e.at_stage("segment"))?;
                if !dropped.is_empty() {
                    log::debug!(
                        "session {}: {} speech segments contained no window midpoint",
                        inputs.session_id,
                        dropped.len()
                    );
                }
                (units, None)
            }
            (None, _) => (inputs.embeddings.clone(), None),
        };
    if working.is_empty() {
        return Err(Error::invalid(format!(
            "session {}: no speech units to diarise",
            inputs.session_id
        )));
    }

    if config.use_dr {
        let train = TrainConfig {
            seed: stage_seed(config.seed, "dim-reduce"),
            ..config.train.clone()
        };
        working = reduce_session(&working, config.code_dim, &train)
            .map_err(|e| e.at_stage("dim-reduce"))?;
    }
    if config.use_aa {
        working = attention_aggregate(&working, &config.aggregation)
            .map_err(|e| e.at_stage("aggregate"))?;
    }

    // Auto speaker counting always looks at the raw windows over SAD speech:
    // the count is a property of the session, and estimating it before any
    // technique transform keeps it identical across technique combinations.
    let est_view: Option<SessionEmbeddings> = window_labels
        .as_ref()
        .map(|labels| speech_subsession(&inputs.embeddings, labels))
        .transpose()?;

    let raw = cluster_stage(&working, est_view.as_ref(), use_ns, config)
        .map_err(|e| e.at_stage("cluster"))?;

    // The non-speech stage works in the original embedding space: centroid
    // identification and reassignment rely on the raw geometry, which the
    // session-level transforms exist to sharpen for clustering, not replace.
    let assignment = match &sad_labels {
        Some(e) => {
            let identified =
                identify_nonspeech_cluster(&raw, e, prototype, &inputs.embeddings)
                    .map_err(|err| err.at_stage("nonspeech"))?;
            let (ns_total, ns_speech) = identified.labels.iter().zip(e).fold(
                (0usize, 0usize),
                |(total, speech), (&c, &sad)| {
                    if c == 0 {
                        (total + 1, speech + usize::from(sad == 1))
                    } else {
                        (total, speech)
                    }
                },
            );
            // Only trust the identification when the chosen cluster misses
            // SAD speech on a meaningful share of its windows: refining
            // around a plain speech cluster would delete a speaker. The bar
            // sits high because windows overlapping a short silence on both
            // ends still count as SAD speech.
            if ns_speech as f64 >= NS_CANDIDATE_MAX_SPEECH * ns_total as f64 {
                log::warn!(
                    "session {}: weakest non-speech candidate is mostly speech; \
                     keeping all clusters as speakers",
                    inputs.session_id
                );
                ClusterAssignment {
                    labels: raw.labels.iter().map(|&l| l + 1).collect(),
                    num_clusters: raw.num_clusters,
                }
            } else {
                refine(&inputs.embeddings, e, &identified)
                    .map_err(|err| err.at_stage("nonspeech"))?
            }
        }
        // Raw cluster labels are 0-based; shift them into the timeline
        // convention where 0 means non-speech.
        None => ClusterAssignment {
            labels: raw.labels.iter().map(|&l| l + 1).collect(),
            num_clusters: raw.num_clusters,
        },
    };

    assignment_to_timeline(&working, &assignment, &inputs.session_id)
        .map_err(|e| e.at_stage("timeline"))
}

/// Clusters the working units. With non-speech clustering on, the speaker
/// count (given or estimated) is incremented by one to reserve the
/// non-speech slot. Auto estimation uses `est_view` (the window-scale speech
/// view) when SAD is given and the working units themselves otherwise.
fn cluster_stage(
    working: &SessionEmbeddings,
    est_view: Option<&SessionEmbeddings>,
    reserve_nonspeech: bool,
    config: &PipelineConfig,
) -> Result<ClusterAssignment> {
    // A single working unit is a single cluster; the clusterers themselves
    // need at least two points.
    if working.len() == 1 {
        return Ok(ClusterAssignment { labels: vec![0], num_clusters: 1 });
    }
    let reserve = usize::from(reserve_nonspeech);
    let spectral = SpectralConfig {
        seed: stage_seed(config.seed, "spectral"),
        ..config.spectral.clone()
    };
    let cap = |k: usize| {
        if k > working.len() {
            log::warn!("{k} clusters requested on {} units; capping", working.len());
        }
        k.min(working.len())
    };
    let estimated = |view: &SessionEmbeddings, for_spectral: bool| -> Result<usize> {
        if view.len() < 2 {
            return Ok(1);
        }
        if for_spectral {
            let eigenvalues = cluster::affinity_eigenvalues(view)?;
            Ok(eigenvalues
                .iter()
                .filter(|&&v| v > config.spectral.eigen_threshold)
                .count()
                .max(1))
        } else {
            cluster::estimate_k_silhouette(
                view,
                DEFAULT_K_MIN,
                DEFAULT_K_MAX.min(view.len() - 1),
            )
        }
    };
    match config.clusterer {
        Clusterer::Ahc => match (config.num_speakers, config.ahc_threshold, est_view) {
            (SpeakerCount::Fixed(k), _, _) => cluster::ahc(working, Some(cap(k + reserve))),
            (SpeakerCount::Auto, Some(threshold), _) => {
                cluster::ahc_threshold(working, threshold)
            }
            (SpeakerCount::Auto, None, Some(view)) => {
                let k = estimated(view, false)?;
                cluster::ahc(working, Some(cap(k + reserve)))
            }
            (SpeakerCount::Auto, None, None) => cluster::ahc(working, None),
        },
        Clusterer::Spc => {
            let k = match (config.num_speakers, est_view) {
                (SpeakerCount::Fixed(k), _) => Some(cap(k + reserve)),
                (SpeakerCount::Auto, Some(view)) => Some(cap(estimated(view, true)? + reserve)),
                (SpeakerCount::Auto, None) => None,
            };
            cluster::spectral(working, &spectral, k)
        }
    }
}

/// Reads the prototype embedding when the config names one.
pub fn load_prototype(config: &PipelineConfig) -> Result<Option<Vec<f64>>> {
    let NonspeechMode::Prototype(path) = &config.nonspeech else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
    let session = parse_embeddings(&text, &path.display().to_string())?;
    Ok(Some(session.embedding(0).to_vec()))
}

/// File-level entry point: parse inputs, run the pipeline, return the
/// hypothesis timeline.
pub fn run_diarise(
    embeddings_path: &Path,
    sad_path: Option<&Path>,
    config: &PipelineConfig,
) -> Result<Timeline> {
    let inputs = load_session_inputs(embeddings_path, sad_path)?;
    let prototype = load_prototype(config)?;
    run_session(&inputs, config, prototype.as_deref())
}

/// The eight technique combinations in report order: baseline, each single
/// technique, each pair, then all three.
pub const TECHNIQUE_COMBOS: [(bool, bool, bool); 8] = [
    (false, false, false),
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

pub fn techniques_label(dr: bool, aa: bool, ns: bool) -> String {
    let mut label = String::new();
    for (on, name) in [(dr, "+dr"), (aa, "+aa"), (ns, "+ns")] {
        if on {
            label.push_str(name);
        }
    }
    if label.is_empty() {
        label.push_str("baseline");
    }
    label
}

/// One pooled result row of an ablation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub clusterer: Clusterer,
    pub use_dr: bool,
    pub use_aa: bool,
    pub use_ns: bool,
    pub missed_pct: f64,
    pub false_alarm_pct: f64,
    pub confusion_pct: f64,
    pub der_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Full-precision CSV; floats use the shortest representation that
    /// parses back to the same value, so a re-parse is lossless.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.clusterer,
                r.use_dr,
                r.use_aa,
                r.use_ns,
                r.missed_pct,
                r.false_alarm_pct,
                r.confusion_pct,
                r.der_pct
            );
        }
        out
    }

    /// Human-readable table with two-decimal percentages.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<9} {:<10} {:>7} {:>7} {:>7} {:>7}",
            "clusterer", "techniques", "MS%", "FA%", "SC%", "DER%"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<9} {:<10} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
                r.clusterer.to_string(),
                techniques_label(r.use_dr, r.use_aa, r.use_ns),
                r.missed_pct,
                r.false_alarm_pct,
                r.confusion_pct,
                r.der_pct
            );
        }
        out
    }
}

const CSV_HEADER: &str = "clusterer,dr,aa,ns,missed_pct,false_alarm_pct,confusion_pct,der_pct";

/// Parses a CSV produced by [`AblationTable::to_csv`].
pub fn parse_ablation_csv(text: &str, source: &str) -> Result<AblationTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(source, 1, "missing ablation CSV header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let flag = |i: usize| -> Result<bool> {
            fields[i]
                .parse()
                .map_err(|_| Error::parse(source, lineno, format!("invalid flag {:?}", fields[i])))
        };
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| {
                Error::parse(source, lineno, format!("invalid number {:?}", fields[i]))
            })
        };
        rows.push(AblationRow {
            clusterer: fields[0].parse()?,
            use_dr: flag(1)?,
            use_aa: flag(2)?,
            use_ns: flag(3)?,
            missed_pct: num(4)?,
            false_alarm_pct: num(5)?,
            confusion_pct: num(6)?,
            der_pct: num(7)?,
        });
    }
    Ok(AblationTable { rows })
}

fn ablation_threads() -> usize {
    match std::env::var("DIAR_ADAPT_THREADS") {
        Err(_) => 0,
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                log::warn!("ignoring invalid DIAR_ADAPT_THREADS={v:?}");
                0
            }
        },
    }
}

struct AblationSession {
    inputs: SessionInputs,
    reference: Timeline,
}

/// Runs every technique combination under both clusterers over a directory
/// of paired `<id>.seg` / `<id>.sadp` / `<id>.rttm` files and pools the
/// scores per combination. Sessions missing the SAD or reference file are
/// skipped with a warning. Sessions run in parallel, capped by
/// `DIAR_ADAPT_THREADS`.
pub fn run_ablation(dataset_dir: &Path, base: &PipelineConfig) -> Result<AblationTable> {
    let mut ids = Vec::new();
    let entries =
        std::fs::read_dir(dataset_dir).map_err(|e| Error::io(dataset_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dataset_dir, e))?.path();
        if path.extension().is_some_and(|e| e == "seg") {
            if let Some(stem) = path.file_stem() {
                ids.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    let mut sessions = Vec::new();
    for id in ids {
        let seg = dataset_dir.join(format!("{id}.seg"));
        let sadp = dataset_dir.join(format!("{id}.sadp"));
        let rttm = dataset_dir.join(format!("{id}.rttm"));
        if !sadp.exists() || !rttm.exists() {
            log::warn!("session {id}: missing SAD or reference file, skipped");
            continue;
        }
        let inputs = load_session_inputs(&seg, Some(&sadp))?;
        let reference = read_rttm(&rttm)?
            .into_iter()
            .find(|t| t.session_id() == id)
            .ok_or_else(|| {
                Error::invalid(format!("{} has no session {id}", rttm.display()))
            })?;
        sessions.push(AblationSession { inputs, reference });
    }
    if sessions.is_empty() {
        return Err(Error::invalid(format!(
            "no usable sessions in {}",
            dataset_dir.display()
        )));
    }

    let ns_mode = match &base.nonspeech {
        NonspeechMode::Off => NonspeechMode::Sad,
        other => other.clone(),
    };
    let mut configs: Vec<PipelineConfig> = Vec::with_capacity(16);
    for clusterer in [Clusterer::Ahc, Clusterer::Spc] {
        for (dr, aa, ns) in TECHNIQUE_COMBOS {
            configs.push(PipelineConfig {
                clusterer,
                use_dr: dr,
                use_aa: aa,
                nonspeech: if ns { ns_mode.clone() } else { NonspeechMode::Off },
                ..base.clone()
            });
        }
    }
    let prototype = load_prototype(&PipelineConfig {
        nonspeech: ns_mode,
        ..base.clone()
    })?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ablation_threads())
        .build()
        .map_err(|e| Error::invalid(format!("could not build thread pool: {e}")))?;
    let per_session: Vec<Result<Vec<DerReport>>> = pool.install(|| {
        sessions
            .par_iter()
            .map(|s| {
                configs
                    .iter()
                    .map(|config| {
                        let hyp = run_session(&s.inputs, config, prototype.as_deref())?;
                        score(&s.reference, &hyp, base.collar)
                    })
                    .collect()
            })
            .collect()
    });

    let mut totals: Vec<DerReport> = vec![
        DerReport {
            missed_seconds: 0.0,
            false_alarm_seconds: 0.0,
            confusion_seconds: 0.0,
            scored_reference_seconds: 0.0,
            mapping: Vec::new(),
        };
        configs.len()
    ];
    for reports in per_session {
        for (total, report) in totals.iter_mut().zip(reports?) {
            total.missed_seconds += report.missed_seconds;
            total.false_alarm_seconds += report.false_alarm_seconds;
            total.confusion_seconds += report.confusion_seconds;
            total.scored_reference_seconds += report.scored_reference_seconds;
        }
    }
    let rows = configs
        .iter()
        .zip(&totals)
        .map(|(config, total)| AblationRow {
            clusterer: config.clusterer,
            use_dr: config.use_dr,
            use_aa: config.use_aa,
            use_ns: config.use_ns(),
            missed_pct: total.missed_pct(),
            false_alarm_pct: total.false_alarm_pct(),
            confusion_pct: total.confusion_pct(),
            der_pct: total.der_pct(),
        })
        .collect();
    Ok(AblationTable { rows })
}

/// Parameters of the synthetic benchmark dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub sessions: usize,
    pub seed: u64,
    pub dim: usize,
    pub windows_per_speaker: usize,
    pub noise_sigma: f64,
    pub nonspeech_fraction: f64,
    /// Inject SAD errors (whole silent gaps flipped to speech, short speech
    /// stretches silenced) so the non-speech stage has something to fix.
    pub sad_errors: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            sessions: 20,
            seed: 42,
            dim: 32,
            windows_per_speaker: 50,
            noise_sigma: 0.25,
            nonspeech_fraction: 0.1,
            sad_errors: true,
        }
    }
}

/// Fraction of silent gaps whose SAD probabilities are flipped to speech.
const SAD_GAP_FLIP_PROBABILITY: f64 = 0.5;
/// Number of one-second false-silence stretches injected per session.
const SAD_FALSE_SILENCE_SPANS: usize = 4;
const SAD_FALSE_SILENCE_SECONDS: f64 = 1.0;

/// SAD probabilities for a reference timeline: 0.95 inside speech, 0.05
/// outside, with optional seeded corruption.
fn synth_sad_probs(
    reference: &Timeline,
    duration: f64,
    corrupt: bool,
    rng: &mut ChaCha8Rng,
) -> Result<FrameProbs> {
    let hop = REFERENCE_SAD_HOP_SECONDS;
    let n = (duration / hop).ceil() as usize;
    let speech = speech_union(reference);
    let mut probs: Vec<f64> = (0..n)
        .map(|f| {
            let mid = (f as f64 + 0.5) * hop;
            if in_union(&speech, mid) {
                0.95
            } else {
                0.05
            }
        })
        .collect();
    if corrupt {
        let mut set_range = |from: f64, to: f64, p: f64| {
            let lo = ((from / hop).ceil() as usize).min(n);
            let hi = ((to / hop).floor() as usize).min(n);
            if lo < hi {
                for v in &mut probs[lo..hi] {
                    *v = p;
                }
            }
        };
        // False accepts: flip whole silent gaps to confident speech. The
        // first gap always stays silent so every session keeps genuinely
        // non-speech frames.
        for pair in speech.windows(2).skip(1) {
            if rng.random_range(0.0..1.0) < SAD_GAP_FLIP_PROBABILITY {
                set_range(pair[0].1, pair[1].0, 0.9);
            }
        }
        // False rejects: silence short stretches inside long speech regions.
        let long: Vec<(f64, f64)> = speech
            .iter()
            .copied()
            .filter(|(s, e)| e - s >= 2.5 * SAD_FALSE_SILENCE_SECONDS)
            .collect();
        if !long.is_empty() {
            for _ in 0..SAD_FALSE_SILENCE_SPANS {
                let (s, e) = long[rng.random_range(0..long.len())];
                let latest = e - 1.5 * SAD_FALSE_SILENCE_SECONDS;
                let from = rng.random_range(s + 0.5 * SAD_FALSE_SILENCE_SECONDS..latest);
                set_range(from, from + SAD_FALSE_SILENCE_SECONDS, 0.05);
            }
        }
    }
    FrameProbs::new(probs, hop)
}

/// Writes the benchmark dataset: per session `<id>.seg`, `<id>.sadp` and
/// `<id>.rttm`. Speaker counts cycle over 2–5. Returns the session ids.
pub fn generate_benchmark(out_dir: &Path, spec: &BenchmarkSpec) -> Result<Vec<String>> {
    if spec.sessions == 0 {
        return Err(Error::invalid("benchmark needs at least one session"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut ids = Vec::with_capacity(spec.sessions);
    for i in 0..spec.sessions {
        let id = format!("synth{i:02}");
        let session_seed = stage_seed(spec.seed, &id);
        let synth = generate_synthetic_session(&SyntheticSessionSpec {
            num_speakers: 2 + i % 4,
            windows_per_speaker: spec.windows_per_speaker,
            noise_sigma: spec.noise_sigma,
            nonspeech_fraction: spec.nonspeech_fraction,
            dim: spec.dim,
            seed: session_seed,
        })?;
        let reference = assignment_to_timeline(&synth.session, &synth.assignment, &id)?;
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(session_seed, "sad"));
        let probs = synth_sad_probs(
            &reference,
            synth.session.duration(),
            spec.sad_errors,
            &mut rng,
        )?;
        write_embeddings(&synth.session, out_dir.join(format!("{id}.seg")))?;
        write_sad_probs(&probs, out_dir.join(format!("{id}.sadp")))?;
        write_rttm(
            std::slice::from_ref(&reference),
            &out_dir.join(format!("{id}.rttm")),
        )?;
        ids.push(id);
    }
    Ok(ids)
}
