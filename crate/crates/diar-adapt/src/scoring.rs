//! Diarisation scoring: RTTM parsing and emission, conversion of window
//! assignments to speaker timelines, and DER computation with an optimal
//! speaker mapping and a no-score collar around reference boundaries.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::cluster::ClusterAssignment;
use crate::embeddings::SessionEmbeddings;
use crate::error::{Error, Result};

/// One speaker turn. The duration is stored rather than the end time so that
/// parsing and re-emitting an RTTM file reproduces its fields exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: String,
    pub start: f64,
    pub duration: f64,
}

impl Turn {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// All turns of one recording session, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    session_id: String,
    turns: Vec<Turn>,
}

impl Timeline {
    /// Validates that every turn has a finite non-negative start and a
    /// positive duration, and that turns of the same speaker do not overlap.
    pub fn new(session_id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let session_id = session_id.into();
        for (i, t) in turns.iter().enumerate() {
            if !t.start.is_finite() || !t.duration.is_finite() {
                return Err(Error::invalid(format!(
                    "turn {i} of session {session_id} has a non-finite time"
                )));
            }
            if t.start < 0.0 {
                return Err(Error::invalid(format!(
                    "turn {i} of session {session_id} starts before zero"
                )));
            }
            if t.duration <= 0.0 {
                return Err(Error::invalid(format!(
                    "turn {i} of session {session_id} has non-positive duration"
                )));
            }
        }
        let mut by_speaker: HashMap<&str, Vec<&Turn>> = HashMap::new();
        for t in &turns {
            by_speaker.entry(&t.speaker).or_default().push(t);
        }
        for (speaker, mut ts) in by_speaker {
            ts.sort_by(|a, b| a.start.total_cmp(&b.start));
            for pair in ts.windows(2) {
                if pair[1].start < pair[0].end() {
                    return Err(Error::invalid(format!(
                        "turns of speaker {speaker} overlap in session {session_id}"
                    )));
                }
            }
        }
        Ok(Self { session_id, turns })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Total speaker time (overlap counted once per active speaker).
    pub fn total_speech(&self) -> f64 {
        self.turns.iter().map(|t| t.duration).sum()
    }

    /// Distinct speaker names in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.turns {
            if !out.contains(&t.speaker.as_str()) {
                out.push(&t.speaker);
            }
        }
        out
    }
}

/// Converts a window assignment to a speaker timeline. Label 0 is
/// non-speech and emits no turn; consecutive windows with the same non-zero
/// label merge into one turn when they touch or overlap in time, and
/// temporally separated runs of the same label stay separate turns. Because
/// windows are wider than their hop, a later run of a speaker can reach back
/// over a short gap into that speaker's previous turn; such turns are
/// clipped to start where the previous one ended. Speaker names are
/// `spk<label>`.
pub fn assignment_to_timeline(
    session: &SessionEmbeddings,
    assignment: &ClusterAssignment,
    session_id: &str,
) -> Result<Timeline> {
    if assignment.labels.len() != session.len() {
        return Err(Error::invalid(format!(
            "assignment covers {} windows, expected {}",
            assignment.labels.len(),
            session.len()
        )));
    }
    let mut turns: Vec<Turn> = Vec::new();
    let mut last_end: HashMap<usize, f64> = HashMap::new();
    let mut open: Option<(usize, f64, f64)> = None; // (label, start, end)
    let close = |open: &mut Option<(usize, f64, f64)>,
                 turns: &mut Vec<Turn>,
                 last_end: &mut HashMap<usize, f64>| {
        if let Some((l, start, end)) = open.take() {
            let start = last_end.get(&l).copied().unwrap_or(0.0).max(start);
            last_end.insert(l, end);
            turns.push(Turn {
                speaker: format!("spk{l}"),
                start,
                duration: end - start,
            });
        }
    };
    for (w, &label) in session.windows().iter().zip(&assignment.labels) {
        match open {
            Some((l, start, end)) if l == label && w.start <= end => {
                open = Some((l, start, end.max(w.end)));
            }
            _ => {
                close(&mut open, &mut turns, &mut last_end);
                if label != 0 {
                    open = Some((label, w.start, w.end));
                }
            }
        }
    }
    close(&mut open, &mut turns, &mut last_end);
    Timeline::new(session_id, turns)
}

/// Parses RTTM text into one timeline per session, in order of first
/// appearance. Only SPEAKER records are read; other record types and blank
/// lines are skipped. `source` names the input in error messages.
pub fn parse_rttm(text: &str, source: &str) -> Result<Vec<Timeline>> {
    let mut order: Vec<String> = Vec::new();
    let mut turns: HashMap<String, Vec<Turn>> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first() {
            None => continue,
            Some(&"SPEAKER") => {}
            Some(_) => continue,
        }
        if fields.len() != 10 {
            return Err(Error::parse(
                source,
                lineno,
                format!("SPEAKER record has {} fields, expected 10", fields.len()),
            ));
        }
        let session = fields[1].to_string();
        let start: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(source, lineno, "invalid turn onset"))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(source, lineno, "invalid turn duration"))?;
        if !start.is_finite() || start < 0.0 {
            return Err(Error::parse(source, lineno, "turn onset must be >= 0"));
        }
        if !duration.is_finite() || duration <= 0.0 {
            return Err(Error::parse(source, lineno, "turn duration must be positive"));
        }
        if !turns.contains_key(&session) {
            order.push(session.clone());
        }
        turns.entry(session).or_default().push(Turn {
            speaker: fields[7].to_string(),
            start,
            duration,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let ts = turns.remove(&id).unwrap();
            Timeline::new(id, ts)
        })
        .collect()
}

/// Reads an RTTM file; see [`parse_rttm`].
pub fn read_rttm(path: &Path) -> Result<Vec<Timeline>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rttm(&text, &path.display().to_string())
}

/// Serialises timelines as RTTM SPEAKER records, one line per turn.
pub fn rttm_to_string(timelines: &[Timeline]) -> String {
    let mut out = String::new();
    for tl in timelines {
        for t in &tl.turns {
            writeln!(
                out,
                "SPEAKER {} 1 {} {} <NA> <NA> {} <NA> <NA>",
                tl.session_id, t.start, t.duration, t.speaker
            )
            .expect("string write cannot fail");
        }
    }
    out
}

/// Writes timelines to an RTTM file; see [`rttm_to_string`].
pub fn write_rttm(timelines: &[Timeline], path: &Path) -> Result<()> {
    std::fs::write(path, rttm_to_string(timelines)).map_err(|e| Error::io(path, e))
}

/// Diarisation error breakdown for one scored pair of timelines. All
/// `*_seconds` fields are speaker-time in seconds outside the collar;
/// `scored_reference_seconds` is the denominator for the percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct DerReport {
    pub missed_seconds: f64,
    pub false_alarm_seconds: f64,
    pub confusion_seconds: f64,
    pub scored_reference_seconds: f64,
    /// Optimal (reference speaker, hypothesis speaker) pairs with non-zero
    /// scored overlap.
    pub mapping: Vec<(String, String)>,
}

impl DerReport {
    pub fn missed_pct(&self) -> f64 {
        100.0 * self.missed_seconds / self.scored_reference_seconds
    }

    pub fn false_alarm_pct(&self) -> f64 {
        100.0 * self.false_alarm_seconds / self.scored_reference_seconds
    }

    pub fn confusion_pct(&self) -> f64 {
        100.0 * self.confusion_seconds / self.scored_reference_seconds
    }

    /// DER is by definition the sum of the three component rates.
    pub fn der_pct(&self) -> f64 {
        self.missed_pct() + self.false_alarm_pct() + self.confusion_pct()
    }
}

/// One fixed-format report line: `MS`, `FA`, `SC` and `DER` percentages at
/// two decimal places.
pub fn format_report_line(name: &str, report: &DerReport) -> String {
    format!(
        "{name:<24} MS {:6.2}%  FA {:6.2}%  SC {:6.2}%  DER {:6.2}%",
        report.missed_pct(),
        report.false_alarm_pct(),
        report.confusion_pct(),
        report.der_pct()
    )
}

/// Merged, sorted no-score intervals of width `collar` centred on every
/// reference turn boundary.
fn collar_intervals(reference: &Timeline, collar: f64) -> Vec<(f64, f64)> {
    if collar <= 0.0 {
        return Vec::new();
    }
    let half = collar / 2.0;
    let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(2 * reference.turns.len());
    for t in &reference.turns {
        intervals.push((t.start - half, t.start + half));
        intervals.push((t.end() - half, t.end() + half));
    }
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

fn in_intervals(intervals: &[(f64, f64)], x: f64) -> bool {
    let idx = intervals.partition_point(|&(s, _)| s <= x);
    idx > 0 && x < intervals[idx - 1].1
}

/// One elementary time slice between adjacent boundaries, with the active
/// speaker indices on each side.
struct Slice {
    len: f64,
    refs: Vec<usize>,
    hyps: Vec<usize>,
}

fn active_speakers(turns: &[Turn], speakers: &[&str], midpoint: f64) -> Vec<usize> {
    let mut active = Vec::new();
    for t in turns {
        if t.start <= midpoint && midpoint < t.end() {
            let idx = speakers
                .iter()
                .position(|&s| s == t.speaker)
                .expect("turn speaker is in the speaker list");
            if !active.contains(&idx) {
                active.push(idx);
            }
        }
    }
    active
}

/// Scores a hypothesis timeline against a reference timeline.
///
/// Time is cut into elementary slices at every turn boundary and collar
/// edge; slices whose midpoint falls inside a collar interval are excluded.
/// Per slice, missed speech is `max(0, Nref - Nhyp)`, false alarm is
/// `max(0, Nhyp - Nref)` and confusion is `min(Nref, Nhyp)` minus the number
/// of optimally mapped speaker pairs active on both sides. The speaker
/// mapping maximises total attributed overlap across the whole session.
pub fn score(reference: &Timeline, hypothesis: &Timeline, collar: f64) -> Result<DerReport> {
    if !collar.is_finite() || collar < 0.0 {
        return Err(Error::invalid("collar must be finite and non-negative"));
    }
    let ref_speakers = reference.speakers();
    let hyp_speakers = hypothesis.speakers();
    let collars = collar_intervals(reference, collar);

    let mut bounds: Vec<f64> = Vec::new();
    for t in reference.turns.iter().chain(&hypothesis.turns) {
        bounds.push(t.start);
        bounds.push(t.end());
    }
    for &(s, e) in &collars {
        bounds.push(s);
        bounds.push(e);
    }
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut slices: Vec<Slice> = Vec::new();
    for pair in bounds.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let mid = t0 + (t1 - t0) / 2.0;
        if in_intervals(&collars, mid) {
            continue;
        }
        let refs = active_speakers(&reference.turns, &ref_speakers, mid);
        let hyps = active_speakers(&hypothesis.turns, &hyp_speakers, mid);
        if !refs.is_empty() || !hyps.is_empty() {
            slices.push(Slice {
                len: t1 - t0,
                refs,
                hyps,
            });
        }
    }

    let mut overlap = vec![vec![0.0; hyp_speakers.len()]; ref_speakers.len()];
    let mut scored_ref = 0.0;
    for s in &slices {
        scored_ref += s.len * s.refs.len() as f64;
        for &r in &s.refs {
            for &h in &s.hyps {
                overlap[r][h] += s.len;
            }
        }
    }
    if scored_ref <= 0.0 {
        return Err(Error::invalid("reference contains no scored speech"));
    }

    let ref_to_hyp = best_mapping(&overlap);
    let mut missed = 0.0;
    let mut false_alarm = 0.0;
    let mut confusion = 0.0;
    for s in &slices {
        let nr = s.refs.len() as f64;
        let nh = s.hyps.len() as f64;
        missed += s.len * (nr - nh).max(0.0);
        false_alarm += s.len * (nh - nr).max(0.0);
        let correct = s
            .refs
            .iter()
            .filter(|&&r| ref_to_hyp[r].is_some_and(|h| s.hyps.contains(&h)))
            .count() as f64;
        confusion += s.len * (nr.min(nh) - correct);
    }

    let mapping = ref_to_hyp
        .iter()
        .enumerate()
        .filter_map(|(r, h)| {
            h.filter(|&h| overlap[r][h] > 0.0)
                .map(|h| (ref_speakers[r].to_string(), hyp_speakers[h].to_string()))
        })
        .collect();
    Ok(DerReport {
        missed_seconds: missed,
        false_alarm_seconds: false_alarm,
        confusion_seconds: confusion,
        scored_reference_seconds: scored_ref,
        mapping,
    })
}

/// A one-to-one speaker mapping maximising total overlap. Rows without a
/// counterpart map to `None`. Small problems are solved by exhaustive
/// permutation search in lexicographic order (so ties keep the earliest
/// pairing); larger ones by the Hungarian algorithm.
fn best_mapping(overlap: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = overlap.len();
    let cols = overlap.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    let padded: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if r < rows && c < cols {
                        overlap[r][c]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let row_to_col = if n <= 8 {
        exhaustive_max(&padded)
    } else {
        hungarian_max(&padded)
    };
    (0..rows)
        .map(|r| Some(row_to_col[r]).filter(|&c| c < cols))
        .collect()
}

fn exhaustive_max(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_weight = f64::NEG_INFINITY;
    loop {
        let w: f64 = perm.iter().enumerate().map(|(r, &c)| weights[r][c]).sum();
        if w > best_weight {
            best_weight = w;
            best.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// O(n^3) assignment by the potentials method, maximising total weight on a
/// square matrix.
fn hungarian_max(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    let top = weights
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, &v| acc.max(v));
    let cost = |r: usize, c: usize| top - weights[r][c];

    // 1-based arrays; p[j] is the row matched to column j, column 0 is a
    // virtual anchor.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Scores hypothesis timelines against reference timelines session by
/// session, matching on session id, and returns the per-session reports in
/// reference order together with the pooled totals. A reference session
/// without a hypothesis counterpart scores against an empty timeline with a
/// warning; hypothesis sessions absent from the reference are ignored with
/// a warning.
pub fn score_sessions(
    references: &[Timeline],
    hypotheses: &[Timeline],
    collar: f64,
) -> Result<(Vec<(String, DerReport)>, DerReport)> {
    if references.is_empty() {
        return Err(Error::invalid("no reference sessions to score"));
    }
    let by_id: HashMap<&str, &Timeline> = hypotheses
        .iter()
        .map(|t| (t.session_id.as_str(), t))
        .collect();
    for h in hypotheses {
        if !references.iter().any(|r| r.session_id == h.session_id) {
            log::warn!(
                "hypothesis session {} has no reference and was ignored",
                h.session_id
            );
        }
    }
    let empty = Timeline::new("", Vec::new())?;
    let mut per_session = Vec::with_capacity(references.len());
    let mut total = DerReport {
        missed_seconds: 0.0,
        false_alarm_seconds: 0.0,
        confusion_seconds: 0.0,
        scored_reference_seconds: 0.0,
        mapping: Vec::new(),
    };
    for r in references {
        let hyp = match by_id.get(r.session_id.as_str()) {
            Some(h) => h,
            None => {
                log::warn!(
                    "no hypothesis for session {}; scoring it as all missed",
                    r.session_id
                );
                &empty
            }
        };
        let report = score(r, hyp, collar)?;
        total.missed_seconds += report.missed_seconds;
        total.false_alarm_seconds += report.false_alarm_seconds;
        total.confusion_seconds += report.confusion_seconds;
        total.scored_reference_seconds += report.scored_reference_seconds;
        per_session.push((r.session_id.clone(), report));
    }
    Ok((per_session, total))
}
