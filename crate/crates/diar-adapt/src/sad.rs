//! Speech activity post-processing: binarize frame-level speech
//! probabilities and smooth them into continuous speech segments with a
//! sliding-window hysteresis rule.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAD_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SMOOTH_WINDOW_SECONDS: f64 = 0.100;
pub const DEFAULT_ON_RATIO: f64 = 0.7;
pub const DEFAULT_FRAME_HOP_SECONDS: f64 = 0.010;

/// Frame-level speech probabilities at a fixed hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameProbs {
    pub probs: Vec<f64>,
    pub frame_hop_seconds: f64,
}

impl FrameProbs {
    pub fn new(probs: Vec<f64>, frame_hop_seconds: f64) -> Result<Self> {
        if !frame_hop_seconds.is_finite() || frame_hop_seconds <= 0.0 {
            return Err(Error::invalid("frame hop must be positive"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "frame {i}: probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            probs,
            frame_hop_seconds,
        })
    }
}

/// Sorted, non-overlapping `(start_seconds, end_seconds)` speech spans.
pub type SpeechSegments = Vec<(f64, f64)>;

/// Marks frame `i` as speech iff `probs[i] >= threshold`.
pub fn binarize(probs: &FrameProbs, threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("binarization threshold must lie in (0, 1)"));
    }
    Ok(probs.probs.iter().map(|&p| p >= threshold).collect())
}

/// Smooths binary frame decisions into speech segments.
///
/// A window of `window_seconds` slides over the frames at one-frame stride.
/// In the non-speech state an onset fires at the first position whose
/// speech-frame ratio reaches `on_ratio`; in the speech state an offset fires
/// at the first position whose non-speech ratio reaches `on_ratio`. The
/// emitted boundary is anchored at the speech transition itself — the first
/// speech frame (onset) or first non-speech frame (offset) at or after the
/// firing window — so that clean inputs round-trip exactly and re-smoothing
/// the output reproduces it. A segment still open at the end of the stream is
/// closed at the total duration. Inputs shorter than one window collapse to a
/// single all-or-nothing decision by majority over all frames.
pub fn smooth(
    frames: &[bool],
    window_seconds: f64,
    on_ratio: f64,
    frame_hop_seconds: f64,
) -> Result<SpeechSegments> {
    if !window_seconds.is_finite() || window_seconds <= 0.0 {
        return Err(Error::invalid("smoothing window must be positive"));
    }
    if !(on_ratio > 0.0 && on_ratio <= 1.0) {
        return Err(Error::invalid("on_ratio must lie in (0, 1]"));
    }
    if !frame_hop_seconds.is_finite() || frame_hop_seconds <= 0.0 {
        return Err(Error::invalid("frame hop must be positive"));
    }
    let hop = frame_hop_seconds;
    let n = frames.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let w = ((window_seconds / hop).round() as usize).max(1);
    if n < w {
        let speech = frames.iter().filter(|&&f| f).count();
        return Ok(if 2 * speech >= n {
            vec![(0.0, n as f64 * hop)]
        } else {
            Vec::new()
        });
    }
    // Smallest integer count c with c / w >= on_ratio, guarded against the
    // product landing one ulp above an exact integer.
    let need = ((on_ratio * w as f64 - 1e-9).ceil().max(1.0)) as usize;

    let mut true_count = frames[..w].iter().filter(|&&f| f).count();
    let mut segments = Vec::new();
    let mut in_speech = false;
    let mut onset = 0usize;
    let mut floor = 0usize; // never open a segment before the previous close
    for p in 0..=n - w {
        if p > 0 {
            true_count += usize::from(frames[p + w - 1]);
            true_count -= usize::from(frames[p - 1]);
        }
        if !in_speech {
            if true_count >= need {
                if let Some(i) = (p.max(floor)..n).find(|&i| frames[i]) {
                    onset = i;
                    in_speech = true;
                }
            }
        } else if w - true_count >= need {
            let from = p.max(onset + 1);
            let close = (from..n).find(|&j| !frames[j]).unwrap_or(n);
            segments.push((onset as f64 * hop, close as f64 * hop));
            floor = close;
            in_speech = false;
        }
    }
    if in_speech {
        segments.push((onset as f64 * hop, n as f64 * hop));
    }
    Ok(segments)
}

/// Reads a SADP file: a `hop <seconds>` header line followed by one
/// probability per line. `#` lines and blank lines are ignored.
pub fn read_sad_probs(path: impl AsRef<Path>) -> Result<FrameProbs> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sad_probs(&text, &path.display().to_string())
}

/// Parses SADP text; `source` names the input in errors.
pub fn parse_sad_probs(text: &str, source: &str) -> Result<FrameProbs> {
    let mut hop: Option<f64> = None;
    let mut probs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if hop.is_none() {
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some("hop"), Some(value), None) => {
                    let h: f64 = value.parse().map_err(|_| {
                        Error::parse(source, lineno, format!("invalid hop value {value:?}"))
                    })?;
                    if !h.is_finite() || h <= 0.0 {
                        return Err(Error::parse(source, lineno, "hop must be positive"));
                    }
                    hop = Some(h);
                    continue;
                }
                _ => {
                    return Err(Error::parse(
                        source,
                        lineno,
                        "expected header `hop <seconds>`",
                    ));
                }
            }
        }
        let p: f64 = line.parse().map_err(|_| {
            Error::parse(source, lineno, format!("invalid probability {line:?}"))
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parse(
                source,
                lineno,
                format!("probability {p} outside [0, 1]"),
            ));
        }
        probs.push(p);
    }
    let hop = hop.ok_or_else(|| Error::parse(source, 1, "missing `hop <seconds>` header"))?;
    FrameProbs::new(probs, hop)
}

/// Writes a SADP file.
pub fn write_sad_probs(probs: &FrameProbs, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sad_probs_to_string(probs)).map_err(|e| Error::io(path, e))
}

pub fn sad_probs_to_string(probs: &FrameProbs) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "hop {}", probs.frame_hop_seconds);
    for p in &probs.probs {
        let _ = writeln!(out, "{p}");
    }
    out
}
