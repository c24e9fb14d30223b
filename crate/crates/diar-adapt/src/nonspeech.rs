//! Non-speech clustering: treat non-speech as an additional cluster, build a
//! reliable set from windows where the SAD decision and the cluster label
//! agree, recompute centroids from reliable members only, and reassign every
//! window to its nearest centroid.

use crate::cluster::ClusterAssignment;
use crate::embeddings::SessionEmbeddings;
use crate::error::{Error, Result};

/// Per-window SAD decisions: 0 = non-speech, 1 = speech.
pub type SadLabels = Vec<u8>;

fn validate_sad(e: &[u8], len: usize) -> Result<()> {
    if e.len() != len {
        return Err(Error::invalid(format!(
            "SAD labels cover {} windows, expected {len}",
            e.len()
        )));
    }
    if let Some(i) = e.iter().position(|&v| v > 1) {
        return Err(Error::invalid(format!("SAD label at window {i} is not 0 or 1")));
    }
    Ok(())
}

/// Indices whose SAD decision and cluster label agree: non-speech on both
/// sides (e=0, c=0) or speech assigned to a speaker cluster (e=1, c>0).
pub fn build_reliable_set(e: &SadLabels, c: &ClusterAssignment) -> Result<Vec<usize>> {
    validate_sad(e, c.labels.len())?;
    Ok(e.iter()
        .zip(&c.labels)
        .enumerate()
        .filter(|(_, (&e_i, &c_i))| (e_i == 0 && c_i == 0) || (e_i == 1 && c_i > 0))
        .map(|(i, _)| i)
        .collect())
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= f64::MIN_POSITIVE || nb <= f64::MIN_POSITIVE {
        return Err(Error::numeric("cosine of a zero-norm vector is undefined"));
    }
    Ok(dot / (na * nb))
}

fn cluster_centroid(session: &SessionEmbeddings, members: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; session.dim()];
    for &i in members {
        for (s, v) in sum.iter_mut().zip(session.embedding(i)) {
            *s += v;
        }
    }
    let inv = 1.0 / members.len() as f64;
    for s in &mut sum {
        *s *= inv;
    }
    sum
}

/// Picks which raw cluster plays the non-speech role and relabels: the chosen
/// cluster becomes 0 and the remaining clusters are renumbered 1..S in
/// ascending raw-label order.
///
/// With a `prototype` embedding the cluster whose centroid is most
/// cosine-similar to it wins; otherwise the cluster with the lowest fraction
/// of SAD-speech members wins. Exact ties resolve to the smaller raw label
/// with a warning.
pub fn identify_nonspeech_cluster(
    assignment: &ClusterAssignment,
    sad: &SadLabels,
    prototype: Option<&[f64]>,
    session: &SessionEmbeddings,
) -> Result<ClusterAssignment> {
    let l = session.len();
    if assignment.labels.len() != l {
        return Err(Error::invalid(format!(
            "assignment covers {} windows, expected {l}",
            assignment.labels.len()
        )));
    }
    validate_sad(sad, l)?;
    let k = assignment.num_clusters;
    if k < 1 {
        return Err(Error::invalid("assignment has no clusters"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assignment.labels.iter().enumerate() {
        if c >= k {
            return Err(Error::invalid(format!(
                "label {c} at window {i} exceeds cluster count {k}"
            )));
        }
        members[c].push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("cluster {empty} has no members")));
    }

    // Higher score = more non-speech-like; ties go to the smaller raw label.
    let scores: Vec<f64> = match prototype {
        Some(p) => {
            if p.len() != session.dim() {
                return Err(Error::invalid(format!(
                    "prototype dimension {} does not match session dimension {}",
                    p.len(),
                    session.dim()
                )));
            }
            members
                .iter()
                .map(|m| cosine(&cluster_centroid(session, m), p))
                .collect::<Result<_>>()?
        }
        None => members
            .iter()
            .map(|m| {
                let speech = m.iter().filter(|&&i| sad[i] == 1).count();
                -(speech as f64 / m.len() as f64)
            })
            .collect(),
    };
    let mut chosen = 0usize;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[chosen] {
            chosen = c;
        } else if s == scores[chosen] {
            log::warn!(
                "non-speech cluster tie between {chosen} and {c}; keeping {chosen}"
            );
        }
    }

    let labels = assignment
        .labels
        .iter()
        .map(|&c| {
            if c == chosen {
                0
            } else if c < chosen {
                c + 1
            } else {
                c
            }
        })
        .collect();
    Ok(ClusterAssignment {
        labels,
        num_clusters: k - 1,
    })
}

/// Non-speech refinement: recompute centroids C_0..C_S from the reliable set
/// and map every window to the nearest centroid by cosine similarity.
///
/// Clusters with no reliable members fall back to the mean over all of their
/// members; clusters with no members at all are dropped, with the remaining
/// speaker clusters renumbered and a warning emitted. Nearest-centroid ties
/// resolve to the smaller cluster label.
pub fn refine(
    session: &SessionEmbeddings,
    e: &SadLabels,
    c: &ClusterAssignment,
) -> Result<ClusterAssignment> {
    let l = session.len();
    if c.labels.len() != l {
        return Err(Error::invalid(format!(
            "assignment covers {} windows, expected {l}",
            c.labels.len()
        )));
    }
    validate_sad(e, l)?;
    let s = c.num_clusters;
    if s < 1 {
        return Err(Error::invalid("refine needs at least one speaker cluster"));
    }
    if let Some((i, &bad)) = c.labels.iter().enumerate().find(|(_, &v)| v > s) {
        return Err(Error::invalid(format!(
            "label {bad} at window {i} exceeds speaker count {s}"
        )));
    }

    let reliable = build_reliable_set(e, c)?;
    let mut reliable_members: Vec<Vec<usize>> = vec![Vec::new(); s + 1];
    for &i in &reliable {
        reliable_members[c.labels[i]].push(i);
    }
    let mut all_members: Vec<Vec<usize>> = vec![Vec::new(); s + 1];
    for (i, &label) in c.labels.iter().enumerate() {
        all_members[label].push(i);
    }

    // (original label, centroid) for every surviving cluster.
    let mut centroids: Vec<(usize, Vec<f64>)> = Vec::with_capacity(s + 1);
    for label in 0..=s {
        if !reliable_members[label].is_empty() {
            centroids.push((label, cluster_centroid(session, &reliable_members[label])));
        } else if !all_members[label].is_empty() {
            log::debug!(
                "cluster {label} has no reliable members; averaging all {} members",
                all_members[label].len()
            );
            centroids.push((label, cluster_centroid(session, &all_members[label])));
        } else {
            log::warn!("cluster {label} is empty and was dropped");
        }
    }
    if centroids.is_empty() {
        return Err(Error::invalid("no non-empty cluster to refine"));
    }

    // Renumber survivors: non-speech keeps label 0, speakers become 1..
    // in ascending original order. If the non-speech cluster itself was
    // dropped, label 0 simply goes unused.
    let has_ns = centroids[0].0 == 0;
    let new_labels: Vec<usize> = centroids
        .iter()
        .enumerate()
        .map(|(idx, _)| if has_ns { idx } else { idx + 1 })
        .collect();

    let mut labels = vec![0usize; l];
    for (i, label) in labels.iter_mut().enumerate() {
        let x = session.embedding(i);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (slot, (_, centroid)) in centroids.iter().enumerate() {
            let sim = cosine(x, centroid)?;
            if sim > best.0 {
                best = (sim, slot);
            }
        }
        *label = new_labels[best.1];
    }
    let num_speakers = centroids.len() - usize::from(has_ns);
    Ok(ClusterAssignment {
        labels,
        num_clusters: num_speakers,
    })
}
