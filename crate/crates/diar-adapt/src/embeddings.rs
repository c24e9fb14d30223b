//! Session embedding data model: timestamped embedding windows, segment-level
//! averaging, SEG file I/O and the synthetic session generator used by the
//! test suites and the `synth` subcommand.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::scoring::{assignment_to_timeline, Timeline};

/// Extraction window width used when laying out synthetic sessions (seconds).
pub const WINDOW_WIDTH_SECONDS: f64 = 1.5;
/// Extraction window hop used when laying out synthetic sessions (seconds).
pub const WINDOW_HOP_SECONDS: f64 = 0.5;

/// One timestamped embedding window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub embedding: Vec<f64>,
}

/// Ordered, timestamped embeddings of one session. Windows are sorted by
/// strictly increasing start time and share a single dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEmbeddings {
    windows: Vec<Window>,
    dim: usize,
}

impl SessionEmbeddings {
    /// Builds a session from windows, validating ordering, timestamps,
    /// uniform dimension and finiteness.
    pub fn new(windows: Vec<Window>) -> Result<Self> {
        let dim = windows
            .first()
            .map(|w| w.embedding.len())
            .ok_or_else(|| Error::invalid("session must contain at least one window"))?;
        Self::with_dim(windows, dim)
    }

    /// Like [`SessionEmbeddings::new`] but with an explicit dimension so the
    /// session may be empty.
    pub fn with_dim(windows: Vec<Window>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut prev_start = f64::NEG_INFINITY;
        for (i, w) in windows.iter().enumerate() {
            if !w.start.is_finite() || !w.end.is_finite() || w.start < 0.0 {
                return Err(Error::invalid(format!(
                    "window {i}: timestamps must be finite and non-negative"
                )));
            }
            if w.end <= w.start {
                return Err(Error::invalid(format!(
                    "window {i}: end {} must exceed start {}",
                    w.end, w.start
                )));
            }
            if w.start <= prev_start {
                return Err(Error::invalid(format!(
                    "window {i}: start times must be strictly increasing"
                )));
            }
            if w.embedding.len() != dim {
                return Err(Error::invalid(format!(
                    "window {i}: dimension {} does not match session dimension {dim}",
                    w.embedding.len()
                )));
            }
            if w.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "window {i}: embedding contains a non-finite value"
                )));
            }
            prev_start = w.start;
        }
        Ok(Self { windows, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.windows[i].embedding
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &[f64]> {
        self.windows.iter().map(|w| w.embedding.as_slice())
    }

    /// End of the last window, i.e. the session duration in seconds.
    pub fn duration(&self) -> f64 {
        self.windows.last().map_or(0.0, |w| w.end)
    }

    /// Replaces every embedding while keeping the timestamps. The new vectors
    /// must all share one dimension.
    pub fn with_embeddings(&self, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if embeddings.len() != self.windows.len() {
            return Err(Error::invalid(format!(
                "expected {} embeddings, got {}",
                self.windows.len(),
                embeddings.len()
            )));
        }
        let dim = embeddings.first().map_or(self.dim, Vec::len);
        let windows = self
            .windows
            .iter()
            .zip(embeddings)
            .map(|(w, e)| Window {
                start: w.start,
                end: w.end,
                embedding: e,
            })
            .collect();
        Self::with_dim(windows, dim)
    }
}

/// Elementwise arithmetic mean of a non-empty set of equal-dimension vectors.
pub fn average_windows<'a, I>(embeddings: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = embeddings.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("no embeddings to aggregate"))?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for e in iter {
        if e.len() != sum.len() {
            return Err(Error::invalid(format!(
                "embedding dimension {} does not match {}",
                e.len(),
                sum.len()
            )));
        }
        for (s, v) in sum.iter_mut().zip(e) {
            *s += v;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    for s in &mut sum {
        *s *= inv;
    }
    Ok(sum)
}

/// Averages the windows whose midpoint falls inside each segment, yielding one
/// embedding per non-empty segment. Returns the segment-level session together
/// with the indices of segments that contained no window midpoint and were
/// dropped.
pub fn segment_embeddings(
    session: &SessionEmbeddings,
    segments: &[(f64, f64)],
) -> Result<(SessionEmbeddings, Vec<usize>)> {
    let mut prev_end = f64::NEG_INFINITY;
    for (i, &(start, end)) in segments.iter().enumerate() {
        if end <= start {
            return Err(Error::invalid(format!(
                "segment {i}: end {end} must exceed start {start}"
            )));
        }
        if start < prev_end {
            return Err(Error::invalid(format!(
                "segment {i}: segments must be sorted and non-overlapping"
            )));
        }
        prev_end = end;
    }

    let mut out = Vec::new();
    let mut dropped = Vec::new();
    for (i, &(start, end)) in segments.iter().enumerate() {
        let members: Vec<&[f64]> = session
            .windows()
            .iter()
            .filter(|w| {
                let mid = 0.5 * (w.start + w.end);
                mid >= start && mid < end
            })
            .map(|w| w.embedding.as_slice())
            .collect();
        if members.is_empty() {
            dropped.push(i);
            continue;
        }
        out.push(Window {
            start,
            end,
            embedding: average_windows(members)?,
        });
    }
    let session = SessionEmbeddings::with_dim(out, session.dim())?;
    Ok((session, dropped))
}

/// Parameters of the synthetic session generator. The same spec always yields
/// the same session, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSessionSpec {
    pub num_speakers: usize,
    /// Average number of windows per speaker. Individual speakers alternate
    /// ±20% around it so turn and total durations are uneven, as in natural
    /// conversation.
    pub windows_per_speaker: usize,
    /// Per-coordinate standard deviation of the Gaussian perturbation applied
    /// to each window before renormalisation.
    pub noise_sigma: f64,
    /// Fraction of the generated windows drawn from the dedicated non-speech
    /// centroid.
    pub nonspeech_fraction: f64,
    pub dim: usize,
    pub seed: u64,
}

/// A generated session together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub session: SessionEmbeddings,
    /// Per-window labels; 0 is the non-speech cluster, speakers are 1..=S.
    pub assignment: ClusterAssignment,
    pub reference: Timeline,
}

/// Windows per speaker turn in generated sessions without non-speech.
const SYNTH_RUN_LEN: usize = 5;
/// Preferred non-speech gap length in windows between speaker turns.
const SYNTH_GAP_LEN: usize = 4;
const CENTROID_ATTEMPTS: usize = 1000;
const MAX_CENTROID_COSINE: f64 = 0.15;

/// Generates a synthetic diarisation session: speaker centroids on the unit
/// sphere with pairwise cosine below 0.15, per-window Gaussian noise, optional
/// non-speech windows from a dedicated centroid, and window timestamps laid
/// out contiguously at the standard hop and width.
pub fn generate_synthetic_session(spec: &SyntheticSessionSpec) -> Result<SyntheticSession> {
    if spec.num_speakers < 1 || spec.windows_per_speaker < 1 {
        return Err(Error::invalid(
            "num_speakers and windows_per_speaker must be at least 1",
        ));
    }
    if spec.dim < 2 {
        return Err(Error::invalid("dim must be at least 2"));
    }
    if !(0.0..1.0).contains(&spec.nonspeech_fraction) {
        return Err(Error::invalid("nonspeech_fraction must lie in [0, 1)"));
    }
    if spec.noise_sigma < 0.0 {
        return Err(Error::invalid("noise_sigma must be non-negative"));
    }

    let budgets = speaker_window_budgets(spec.num_speakers, spec.windows_per_speaker);
    let n_speech: usize = budgets.iter().sum();
    let f = spec.nonspeech_fraction;
    let n_nonspeech = (f / (1.0 - f) * n_speech as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_centroids = spec.num_speakers + usize::from(n_nonspeech > 0);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(n_centroids);
    for _ in 0..n_centroids {
        let mut attempts = 0;
        loop {
            let candidate = sample_unit_vector(spec.dim, &mut rng);
            let separated = centroids
                .iter()
                .all(|c| dot(c, &candidate) < MAX_CENTROID_COSINE);
            if separated {
                centroids.push(candidate);
                break;
            }
            attempts += 1;
            if attempts >= CENTROID_ATTEMPTS {
                return Err(Error::numeric(format!(
                    "failed to sample {n_centroids} centroids with pairwise cosine < \
                     {MAX_CENTROID_COSINE} after {CENTROID_ATTEMPTS} attempts; \
                     dimension {} is too small",
                    spec.dim
                )));
            }
        }
    }

    let labels = synth_label_sequence(&budgets, n_nonspeech);

    let mut windows = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let centroid = if label == 0 {
            &centroids[spec.num_speakers] // non-speech centroid is sampled last
        } else {
            &centroids[label - 1]
        };
        let mut e: Vec<f64> = centroid
            .iter()
            .map(|&c| c + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        normalize(&mut e)?;
        let start = i as f64 * WINDOW_HOP_SECONDS;
        windows.push(Window {
            start,
            end: start + WINDOW_WIDTH_SECONDS,
            embedding: e,
        });
    }

    let session = SessionEmbeddings::with_dim(windows, spec.dim)?;
    let assignment = ClusterAssignment {
        labels,
        num_clusters: spec.num_speakers,
    };
    let reference = assignment_to_timeline(&session, &assignment, "synth")?;
    Ok(SyntheticSession {
        session,
        assignment,
        reference,
    })
}

/// Lays out speaker turns round-robin with a non-speech gap at every turn
/// boundary, so silence separates consecutive speakers. The non-speech budget
/// fixes the number of gaps (aiming for [`SYNTH_GAP_LEN`] windows each — a gap
/// shorter than three windows leaves no actual silence between 1.5 s windows
/// hopping at 0.5 s), which in turn fixes the number and length of the turns.
/// Sessions without non-speech fall back to turns of [`SYNTH_RUN_LEN`]
/// windows.
/// Alternates speaker window counts ±20% around the requested average so
/// turn lengths differ across speakers. Uneven turns keep a segment that
/// straddles a missed silence from splitting into equal halves, which would
/// leave its cluster attachment to chance.
fn speaker_window_budgets(num_speakers: usize, windows_per_speaker: usize) -> Vec<usize> {
    let delta = windows_per_speaker / 5;
    (0..num_speakers)
        .map(|s| {
            if s % 2 == 0 {
                windows_per_speaker + delta
            } else {
                windows_per_speaker - delta
            }
        })
        .collect()
}

fn synth_label_sequence(budgets: &[usize], n_nonspeech: usize) -> Vec<usize> {
    let num_speakers = budgets.len();
    let n_speech: usize = budgets.iter().sum();
    let min_budget = budgets.iter().copied().min().unwrap_or(1).max(1);
    let n_runs = if n_nonspeech == 0 {
        n_speech.div_ceil(SYNTH_RUN_LEN.min(min_budget))
    } else {
        (n_nonspeech / SYNTH_GAP_LEN).max(1) + 1
    }
    .clamp(num_speakers, n_speech);

    // Round-robin speakers over the runs; each speaker's window budget is
    // split as evenly as possible across the runs it owns. Every speaker owns
    // at least one run and no speaker owns more runs than windows.
    let mut run_budget = vec![0usize; num_speakers];
    for r in 0..n_runs {
        run_budget[r % num_speakers] += 1;
    }
    let mut window_budget = budgets.to_vec();

    let n_gaps = n_runs - 1;
    let gap_base = n_nonspeech.checked_div(n_gaps).unwrap_or(0);
    let gap_extra = n_nonspeech.checked_rem(n_gaps).unwrap_or(0);

    let mut labels = Vec::with_capacity(n_speech + n_nonspeech);
    for r in 0..n_runs {
        let s = r % num_speakers;
        let len = window_budget[s].div_ceil(run_budget[s]);
        window_budget[s] -= len;
        run_budget[s] -= 1;
        labels.extend(std::iter::repeat_n(s + 1, len));
        if r < n_gaps {
            let gap = gap_base + usize::from(r < gap_extra);
            labels.extend(std::iter::repeat_n(0, gap));
        }
    }
    // A single run has no boundary to host the non-speech windows; park them
    // at the end of the session instead.
    if n_gaps == 0 {
        labels.extend(std::iter::repeat_n(0, n_nonspeech));
    }
    labels
}

fn sample_unit_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v).is_ok() {
            return v;
        }
    }
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= f64::MIN_POSITIVE {
        return Err(Error::numeric("cannot normalize a zero-norm vector"));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reads a SEG file: one window per line as
/// `<start> <end> <v0> ... <vD-1>`, whitespace separated, `#` starting a
/// comment line. The dimension is inferred from the first data line.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<SessionEmbeddings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string())
}

/// Parses SEG text; `source` names the input in errors.
pub fn parse_embeddings(text: &str, source: &str) -> Result<SessionEmbeddings> {
    let mut windows: Vec<Window> = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                source,
                lineno,
                "expected start, end and at least one embedding value",
            ));
        }
        let mut values = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| {
                Error::parse(source, lineno, format!("invalid number {f:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(source, lineno, "non-finite value"));
            }
            values.push(v);
        }
        let embedding = values.split_off(2);
        let (start, end) = (values[0], values[1]);
        match dim {
            None => dim = Some(embedding.len()),
            Some(d) if d != embedding.len() => {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("expected {d} embedding values, got {}", embedding.len()),
                ));
            }
            Some(_) => {}
        }
        if end <= start {
            return Err(Error::parse(
                source,
                lineno,
                format!("end {end} must exceed start {start}"),
            ));
        }
        if let Some(prev) = windows.last() {
            if start <= prev.start {
                return Err(Error::parse(
                    source,
                    lineno,
                    "window start times must be strictly increasing",
                ));
            }
        }
        if start < 0.0 {
            return Err(Error::parse(source, lineno, "negative start time"));
        }
        windows.push(Window {
            start,
            end,
            embedding,
        });
    }
    let dim = dim.ok_or_else(|| Error::parse(source, 1, "file contains no windows"))?;
    SessionEmbeddings::with_dim(windows, dim)
}

/// Writes a session as SEG text. Floats are printed in shortest round-trip
/// form, so read(write(x)) reproduces x exactly.
pub fn write_embeddings(session: &SessionEmbeddings, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, embeddings_to_string(session)).map_err(|e| Error::io(path, e))
}

pub fn embeddings_to_string(session: &SessionEmbeddings) -> String {
    let mut out = String::new();
    for w in session.windows() {
        let _ = write!(out, "{} {}", w.start, w.end);
        for v in &w.embedding {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}
