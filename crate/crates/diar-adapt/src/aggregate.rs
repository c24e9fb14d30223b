//! Attention-based embedding aggregation: iteratively replace each embedding
//! by a softmax-weighted combination of all session embeddings, sharpening
//! the session's affinity structure without any trained parameters.

use crate::embeddings::SessionEmbeddings;
use crate::error::{Error, Result};

/// Square cosine-similarity matrix stored as rows.
pub type AffinityMatrix = Vec<Vec<f64>>;

/// Aggregation settings: number of repetitions and softmax temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationConfig {
    pub repetitions: usize,
    pub temperature: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            repetitions: 5,
            temperature: 15.0,
        }
    }
}

/// Builds the L×L cosine affinity of a session: symmetric, unit diagonal,
/// entries clamped to [-1, 1] against rounding spill.
pub fn cosine_affinity(session: &SessionEmbeddings) -> Result<AffinityMatrix> {
    let l = session.len();
    if l == 0 {
        return Err(Error::invalid("cannot build affinity of an empty session"));
    }
    let norms: Vec<f64> = session
        .embeddings()
        .enumerate()
        .map(|(i, e)| {
            let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n <= f64::MIN_POSITIVE {
                Err(Error::numeric(format!("window {i} has a zero-norm embedding")))
            } else {
                Ok(n)
            }
        })
        .collect::<Result<_>>()?;
    let mut a = vec![vec![0.0; l]; l];
    for i in 0..l {
        a[i][i] = 1.0;
        let ei = session.embedding(i);
        for j in i + 1..l {
            let dot: f64 = ei.iter().zip(session.embedding(j)).map(|(x, y)| x * y).sum();
            let c = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            a[i][j] = c;
            a[j][i] = c;
        }
    }
    Ok(a)
}

/// Applies a numerically stable row-wise softmax to `matrix · tau` in place;
/// afterwards every row sums to 1.
pub fn softmax_rows(matrix: &mut AffinityMatrix, tau: f64) {
    for row in matrix.iter_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * tau));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v * tau - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Runs the aggregation loop: for each of `repetitions` iterations the
/// affinity is rebuilt from the current embeddings, each row of `A·τ` is
/// softmax-normalized, and the embeddings are replaced by `A·X`. Each output
/// is therefore a convex combination of the inputs; timestamps and dimension
/// are unchanged, and no re-normalization is applied between iterations.
pub fn attention_aggregate(
    session: &SessionEmbeddings,
    config: &AggregationConfig,
) -> Result<SessionEmbeddings> {
    if !config.temperature.is_finite() || config.temperature <= 0.0 {
        return Err(Error::invalid("aggregation temperature must be positive"));
    }
    if session.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty session"));
    }
    let l = session.len();
    let d = session.dim();
    let mut current = session.clone();
    for _ in 0..config.repetitions {
        let mut a = cosine_affinity(&current)?;
        softmax_rows(&mut a, config.temperature);
        let mut next = vec![vec![0.0; d]; l];
        for (row, out) in a.iter().zip(next.iter_mut()) {
            for (w, e) in row.iter().zip(current.embeddings()) {
                for (o, v) in out.iter_mut().zip(e) {
                    *o += w * v;
                }
            }
        }
        current = current.with_embeddings(next)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{generate_synthetic_session, SyntheticSessionSpec, Window};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn session_of(vectors: Vec<Vec<f64>>) -> SessionEmbeddings {
        let windows = vectors
            .into_iter()
            .enumerate()
            .map(|(i, embedding)| Window {
                start: i as f64 * 0.5,
                end: i as f64 * 0.5 + 1.5,
                embedding,
            })
            .collect();
        SessionEmbeddings::new(windows).unwrap()
    }

    #[test]
    fn single_vector_affinity_is_one() {
        let session = session_of(vec![vec![3.0, 4.0]]);
        assert_eq!(cosine_affinity(&session).unwrap(), vec![vec![1.0]]);
    }

    #[test]
    fn orthogonal_pair_affinity_is_identity() {
        let session = session_of(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(
            cosine_affinity(&session).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
    }

    #[test]
    fn affinity_matches_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vectors: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let session = session_of(vectors.clone());
        let a = cosine_affinity(&session).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(x, y)| x * y).sum();
                let ni: f64 = vectors[i].iter().map(|v| v * v).sum::<f64>().sqrt();
                let nj: f64 = vectors[j].iter().map(|v| v * v).sum::<f64>().sqrt();
                let expected = if i == j { 1.0 } else { dot / (ni * nj) };
                assert!(
                    (a[i][j] - expected).abs() < 1e-12,
                    "a[{i}][{j}] = {} vs {expected}",
                    a[i][j]
                );
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }

    #[test]
    fn zero_norm_embedding_error_names_the_window() {
        let session = session_of(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        let err = cosine_affinity(&session).unwrap_err();
        assert!(err.to_string().contains("window 1"), "{err}");
    }

    #[test]
    fn zero_repetitions_is_the_identity() {
        let session = session_of(vec![vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let config = AggregationConfig {
            repetitions: 0,
            temperature: 15.0,
        };
        assert_eq!(attention_aggregate(&session, &config).unwrap(), session);
    }

    #[test]
    fn identical_embeddings_are_an_exact_fixed_point_for_two_windows() {
        // With two equal rows the softmax weights are exactly 0.5 and
        // 0.5·v + 0.5·v rounds to v, so the fixed point is bit-exact.
        let v = vec![0.3, -1.7, 2.5];
        let session = session_of(vec![v.clone(), v.clone()]);
        let out = attention_aggregate(&session, &AggregationConfig::default()).unwrap();
        assert_eq!(out, session);
    }

    #[test]
    fn identical_embeddings_are_a_fixed_point_within_tolerance() {
        let v = vec![0.25, -0.5, 1.0, 2.0];
        for l in [3usize, 5, 7] {
            let session = session_of(vec![v.clone(); l]);
            for (n, tau) in [(1usize, 15.0), (5, 15.0), (3, 2.0)] {
                let out = attention_aggregate(
                    &session,
                    &AggregationConfig {
                        repetitions: n,
                        temperature: tau,
                    },
                )
                .unwrap();
                for w in out.windows() {
                    for (o, e) in w.embedding.iter().zip(&v) {
                        assert!((o - e).abs() <= 1e-12, "{o} vs {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonal_pair_matches_scalar_softmax_oracle() {
        let session = session_of(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let out = attention_aggregate(
            &session,
            &AggregationConfig {
                repetitions: 1,
                temperature: 15.0,
            },
        )
        .unwrap();
        // Hand-computed: row [15, 0] softmaxes to [1-eps, eps] with
        // eps = 1/(1+e^15).
        let eps = 1.0 / (1.0 + 15.0f64.exp());
        assert!((out.embedding(0)[0] - (1.0 - eps)).abs() < 1e-9);
        assert!((out.embedding(0)[1] - eps).abs() < 1e-9);
        assert!((out.embedding(1)[0] - eps).abs() < 1e-9);
        assert!((out.embedding(1)[1] - (1.0 - eps)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_stochastic(
            vectors in proptest::collection::vec(
                proptest::collection::vec(-3.0f64..3.0, 4), 2..10),
            tau in 0.5f64..30.0,
        ) {
            prop_assume!(vectors.iter().all(|v| v.iter().any(|x| x.abs() > 1e-6)));
            let session = session_of(vectors);
            let mut a = cosine_affinity(&session).unwrap();
            softmax_rows(&mut a, tau);
            for row in &a {
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&w| w >= 0.0));
            }
        }

        #[test]
        fn aggregation_is_permutation_equivariant(
            seed in 0u64..100,
            rotation in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vectors: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0f64..1.0)).collect())
                .filter(|v: &Vec<f64>| v.iter().any(|x| x.abs() > 1e-6))
                .collect();
            prop_assume!(vectors.len() == 6);
            let mut rotated = vectors.clone();
            rotated.rotate_left(rotation);
            let config = AggregationConfig { repetitions: 2, temperature: 10.0 };
            let a = attention_aggregate(&session_of(vectors), &config).unwrap();
            let b = attention_aggregate(&session_of(rotated), &config).unwrap();
            // Equivariance is exact up to float reassociation in the dot
            // products, so compare with a tight tolerance rather than bitwise.
            for i in 0..6 {
                let ai = a.embedding((i + rotation) % 6);
                let bi = b.embedding(i);
                for (x, y) in ai.iter().zip(bi) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn outputs_stay_in_the_per_coordinate_convex_hull(
            seed in 0u64..100,
            n in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vectors: Vec<Vec<f64>> = (0..7)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0f64..1.0)).collect())
                .filter(|v: &Vec<f64>| v.iter().any(|x| x.abs() > 1e-6))
                .collect();
            prop_assume!(vectors.len() == 7);
            let session = session_of(vectors.clone());
            let config = AggregationConfig { repetitions: n, temperature: 15.0 };
            let out = attention_aggregate(&session, &config).unwrap();
            for d in 0..3 {
                let lo = vectors.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
                let hi = vectors.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
                for w in out.windows() {
                    prop_assert!(w.embedding[d] >= lo - 1e-12);
                    prop_assert!(w.embedding[d] <= hi + 1e-12);
                }
            }
        }
    }

    /// Mean within-cluster minus mean cross-cluster affinity.
    fn affinity_contrast(session: &SessionEmbeddings, labels: &[usize]) -> f64 {
        let a = cosine_affinity(session).unwrap();
        let (mut within, mut cross) = ((0.0, 0usize), (0.0, 0usize));
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                if labels[i] == labels[j] {
                    within = (within.0 + a[i][j], within.1 + 1);
                } else {
                    cross = (cross.0 + a[i][j], cross.1 + 1);
                }
            }
        }
        within.0 / within.1 as f64 - cross.0 / cross.1 as f64
    }

    #[test]
    fn aggregation_denoises_two_cluster_affinity() {
        let mut improved = 0;
        for seed in 0..5u64 {
            let spec = SyntheticSessionSpec {
                num_speakers: 2,
                windows_per_speaker: 20,
                noise_sigma: 0.3,
                nonspeech_fraction: 0.0,
                dim: 24,
                seed: 900 + seed,
            };
            let synth = generate_synthetic_session(&spec).unwrap();
            let before = affinity_contrast(&synth.session, &synth.assignment.labels);
            let out =
                attention_aggregate(&synth.session, &AggregationConfig::default()).unwrap();
            let after = affinity_contrast(&out, &synth.assignment.labels);
            if after > before {
                improved += 1;
            }
        }
        assert_eq!(improved, 5);
    }

    #[test]
    fn within_cluster_variance_shrinks_across_iterations() {
        let spec = SyntheticSessionSpec {
            num_speakers: 3,
            windows_per_speaker: 15,
            noise_sigma: 0.1,
            nonspeech_fraction: 0.0,
            dim: 24,
            seed: 1000,
        };
        let synth = generate_synthetic_session(&spec).unwrap();
        let variance = |s: &SessionEmbeddings| -> f64 {
            let mut total = 0.0;
            for cluster in 1..=3usize {
                let members: Vec<&[f64]> = s
                    .embeddings()
                    .zip(&synth.assignment.labels)
                    .filter(|(_, &l)| l == cluster)
                    .map(|(e, _)| e)
                    .collect();
                let mean = crate::embeddings::average_windows(members.iter().copied()).unwrap();
                total += members
                    .iter()
                    .map(|m| {
                        m.iter()
                            .zip(&mean)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .sum::<f64>();
            }
            total
        };
        let mut prev = variance(&synth.session);
        for n in 1..=5usize {
            let out = attention_aggregate(
                &synth.session,
                &AggregationConfig {
                    repetitions: n,
                    temperature: 15.0,
                },
            )
            .unwrap();
            let var = variance(&out);
            assert!(var <= prev + 1e-12, "iteration {n}: {var} > {prev}");
            prev = var;
        }
    }
}
