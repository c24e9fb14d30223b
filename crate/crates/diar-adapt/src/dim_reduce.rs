//! Per-session dimensionality reduction: a two-layer autoencoder with a
//! max-feature-map encoder and a linear decoder, trained at run time on the
//! session's own embeddings and used to project them to a low-dimensional
//! code.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::SessionEmbeddings;
use crate::error::{Error, Result};

/// Default dimensionality of the encoder output.
pub const DEFAULT_CODE_DIM: usize = 20;

/// Full-batch adam training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Autoencoder parameters. The encoder maps D to 2·C pre-activations which a
/// max-feature-map collapses to C (`code[k] = max(pre[k], pre[k+C])`); the
/// decoder maps C linearly back to D. Weights are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoderParams {
    pub input_dim: usize,
    pub code_dim: usize,
    /// (2·C) × D
    pub encoder_weight: Vec<f64>,
    /// 2·C
    pub encoder_bias: Vec<f64>,
    /// D × C
    pub decoder_weight: Vec<f64>,
    /// D
    pub decoder_bias: Vec<f64>,
}

impl AutoEncoderParams {
    pub fn zeros(input_dim: usize, code_dim: usize) -> Self {
        Self {
            input_dim,
            code_dim,
            encoder_weight: vec![0.0; 2 * code_dim * input_dim],
            encoder_bias: vec![0.0; 2 * code_dim],
            decoder_weight: vec![0.0; input_dim * code_dim],
            decoder_bias: vec![0.0; input_dim],
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let (d, c) = (self.input_dim, self.code_dim);
        if d == 0 || c == 0 {
            return Err(Error::invalid("autoencoder dimensions must be positive"));
        }
        if self.encoder_weight.len() != 2 * c * d
            || self.encoder_bias.len() != 2 * c
            || self.decoder_weight.len() != d * c
            || self.decoder_bias.len() != d
        {
            return Err(Error::invalid("autoencoder parameter shapes are inconsistent"));
        }
        Ok(())
    }
}

/// Gradient of the reconstruction loss, shaped like [`AutoEncoderParams`].
#[derive(Debug, Clone)]
pub struct AutoEncoderGradients {
    pub encoder_weight: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub decoder_weight: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

/// Encoder pre-activations for one input.
fn pre_activations(params: &AutoEncoderParams, x: &[f64]) -> Vec<f64> {
    let d = params.input_dim;
    let mut pre = params.encoder_bias.clone();
    for (j, p) in pre.iter_mut().enumerate() {
        let row = &params.encoder_weight[j * d..(j + 1) * d];
        *p += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    pre
}

/// Encodes an input vector to its C-dimensional code. Max-feature-map ties
/// resolve to the first half for determinism.
pub fn encode(params: &AutoEncoderParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_shapes()?;
    if x.len() != params.input_dim {
        return Err(Error::invalid(format!(
            "encode: input dimension {} does not match {}",
            x.len(),
            params.input_dim
        )));
    }
    let c = params.code_dim;
    let pre = pre_activations(params, x);
    Ok((0..c)
        .map(|k| if pre[k] >= pre[k + c] { pre[k] } else { pre[k + c] })
        .collect())
}

/// Decodes a code vector back to the input space (linear, no activation).
pub fn decode(params: &AutoEncoderParams, code: &[f64]) -> Result<Vec<f64>> {
    params.check_shapes()?;
    if code.len() != params.code_dim {
        return Err(Error::invalid(format!(
            "decode: code dimension {} does not match {}",
            code.len(),
            params.code_dim
        )));
    }
    let c = params.code_dim;
    let mut out = params.decoder_bias.clone();
    for (d, o) in out.iter_mut().enumerate() {
        let row = &params.decoder_weight[d * c..(d + 1) * c];
        *o += row.iter().zip(code).map(|(w, v)| w * v).sum::<f64>();
    }
    Ok(out)
}

/// Mean squared reconstruction error over all windows and dimensions.
pub fn reconstruction_loss(params: &AutoEncoderParams, session: &SessionEmbeddings) -> Result<f64> {
    Ok(loss_gradients_inner(params, session, false)?.0)
}

/// Loss together with its analytic gradient with respect to every parameter.
pub fn loss_gradients(
    params: &AutoEncoderParams,
    session: &SessionEmbeddings,
) -> Result<(f64, AutoEncoderGradients)> {
    let (loss, grads) = loss_gradients_inner(params, session, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

fn loss_gradients_inner(
    params: &AutoEncoderParams,
    session: &SessionEmbeddings,
    with_grads: bool,
) -> Result<(f64, Option<AutoEncoderGradients>)> {
    params.check_shapes()?;
    if session.dim() != params.input_dim {
        return Err(Error::invalid(format!(
            "session dimension {} does not match autoencoder input {}",
            session.dim(),
            params.input_dim
        )));
    }
    if session.is_empty() {
        return Err(Error::invalid("cannot evaluate loss on an empty session"));
    }
    let (d, c) = (params.input_dim, params.code_dim);
    let l = session.len();
    let mut loss_sum = 0.0;
    let mut g = if with_grads {
        Some(AutoEncoderGradients {
            encoder_weight: vec![0.0; 2 * c * d],
            encoder_bias: vec![0.0; 2 * c],
            decoder_weight: vec![0.0; d * c],
            decoder_bias: vec![0.0; d],
        })
    } else {
        None
    };

    let mut diff = vec![0.0; d];
    for x in session.embeddings() {
        let pre = pre_activations(params, x);
        let winners: Vec<usize> = (0..c)
            .map(|k| if pre[k] >= pre[k + c] { k } else { k + c })
            .collect();
        let code: Vec<f64> = winners.iter().map(|&j| pre[j]).collect();
        for (dd, (o, x_d)) in params.decoder_bias.iter().zip(x).enumerate() {
            let row = &params.decoder_weight[dd * c..(dd + 1) * c];
            let xhat = o + row.iter().zip(&code).map(|(w, v)| w * v).sum::<f64>();
            diff[dd] = xhat - x_d;
            loss_sum += diff[dd] * diff[dd];
        }
        if let Some(g) = g.as_mut() {
            for ((gb, &diff_d), row) in g
                .decoder_bias
                .iter_mut()
                .zip(&diff)
                .zip(g.decoder_weight.chunks_exact_mut(c))
            {
                *gb += diff_d;
                for (gw, code_k) in row.iter_mut().zip(&code) {
                    *gw += diff_d * code_k;
                }
            }
            for (k, &j) in winners.iter().enumerate() {
                let g_code: f64 = (0..d).map(|dd| params.decoder_weight[dd * c + k] * diff[dd]).sum();
                g.encoder_bias[j] += g_code;
                let row = &mut g.encoder_weight[j * d..(j + 1) * d];
                for (gw, x_d) in row.iter_mut().zip(x) {
                    *gw += g_code * x_d;
                }
            }
        }
    }

    let scale = 1.0 / (l as f64 * d as f64);
    if let Some(g) = g.as_mut() {
        for t in [
            &mut g.encoder_weight,
            &mut g.encoder_bias,
            &mut g.decoder_weight,
            &mut g.decoder_bias,
        ] {
            for v in t.iter_mut() {
                *v *= 2.0 * scale;
            }
        }
    }
    Ok((loss_sum * scale, g))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, param: &mut [f64], grad: &[f64], t: usize, cfg: &TrainConfig) {
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        for i in 0..param.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
}

/// Trains an autoencoder on one session with full-batch adam. Returns the
/// final parameters and the per-epoch loss history (loss measured before each
/// update). Deterministic for a fixed seed.
pub fn train_session_ae(
    session: &SessionEmbeddings,
    code_dim: usize,
    config: &TrainConfig,
) -> Result<(AutoEncoderParams, Vec<f64>)> {
    config.validate()?;
    if code_dim == 0 {
        return Err(Error::invalid("code dimension must be positive"));
    }
    if session.len() < 2 {
        return Err(Error::invalid("session too small for dimensionality reduction"));
    }
    let d = session.dim();
    let c = code_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = AutoEncoderParams::zeros(d, c);
    let enc_bound = (6.0 / (d + 2 * c) as f64).sqrt();
    for w in params.encoder_weight.iter_mut() {
        *w = rng.random_range(-enc_bound..enc_bound);
    }
    let dec_bound = (6.0 / (c + d) as f64).sqrt();
    for w in params.decoder_weight.iter_mut() {
        *w = rng.random_range(-dec_bound..dec_bound);
    }
    // Each code dimension starts centred over the session: shifting both MFM
    // halves by the same amount shifts their max by that amount, so the
    // encoder bias can soak up the positive offset the max activation would
    // otherwise share across every window, which would drown the cosine
    // structure of the codes.
    let l = session.len() as f64;
    let mut code_mean = vec![0.0; c];
    for x in session.embeddings() {
        for (m, v) in code_mean.iter_mut().zip(encode(&params, x)?) {
            *m += v / l;
        }
    }
    for (k, m) in code_mean.iter().enumerate() {
        params.encoder_bias[k] -= m;
        params.encoder_bias[k + c] -= m;
    }
    // The decoder bias starts at the mean residual of the random-weight
    // reconstruction — the least-squares intercept for the initial weights.
    // Training then only has to learn the variance structure, which matters
    // within the small per-session epoch budget.
    let mut intercept = vec![0.0; d];
    for x in session.embeddings() {
        let recon = decode(&params, &encode(&params, x)?)?;
        for ((b, xi), ri) in intercept.iter_mut().zip(x).zip(&recon) {
            *b += (xi - ri) / l;
        }
    }
    params.decoder_bias = intercept;

    let mut state = [
        AdamState::new(params.encoder_weight.len()),
        AdamState::new(params.encoder_bias.len()),
        AdamState::new(params.decoder_weight.len()),
        AdamState::new(params.decoder_bias.len()),
    ];
    let mut losses = Vec::with_capacity(config.epochs);
    for t in 1..=config.epochs {
        let (loss, grads) = loss_gradients(&params, session)?;
        losses.push(loss);
        state[0].step(&mut params.encoder_weight, &grads.encoder_weight, t, config);
        state[1].step(&mut params.encoder_bias, &grads.encoder_bias, t, config);
        state[2].step(&mut params.decoder_weight, &grads.decoder_weight, t, config);
        state[3].step(&mut params.decoder_bias, &grads.decoder_bias, t, config);
    }
    Ok((params, losses))
}

/// Trains an autoencoder on the session and returns the encoded embeddings
/// with their original timestamps. Sessions with fewer windows than the code
/// dimension pass through unchanged (an undertrained projection would be
/// worse than none).
pub fn reduce_session(
    session: &SessionEmbeddings,
    code_dim: usize,
    config: &TrainConfig,
) -> Result<SessionEmbeddings> {
    reduce_session_with_params(session, code_dim, config).map(|(s, _)| s)
}

/// Like [`reduce_session`], additionally returning the trained parameters so
/// callers can encode further vectors into the same code space. The
/// parameters are `None` when the session passed through unreduced.
pub fn reduce_session_with_params(
    session: &SessionEmbeddings,
    code_dim: usize,
    config: &TrainConfig,
) -> Result<(SessionEmbeddings, Option<AutoEncoderParams>)> {
    if session.len() < code_dim {
        log::debug!(
            "session has {} windows, fewer than code dimension {}; skipping reduction",
            session.len(),
            code_dim
        );
        return Ok((session.clone(), None));
    }
    let (params, _) = train_session_ae(session, code_dim, config)?;
    let codes = session
        .embeddings()
        .map(|x| encode(&params, x))
        .collect::<Result<Vec<_>>>()?;
    Ok((session.with_embeddings(codes)?, Some(params)))
}

/// Dumps parameters as text for debugging: a shape header followed by each
/// tensor, one row per line.
pub fn dump_params(params: &AutoEncoderParams, path: impl AsRef<std::path::Path>) -> Result<()> {
    use std::fmt::Write as _;
    let path = path.as_ref();
    let (d, c) = (params.input_dim, params.code_dim);
    let mut out = String::new();
    let _ = writeln!(out, "autoencoder input_dim {d} code_dim {c}");
    for (name, tensor, cols) in [
        ("encoder_weight", &params.encoder_weight, d),
        ("encoder_bias", &params.encoder_bias, 2 * c),
        ("decoder_weight", &params.decoder_weight, c),
        ("decoder_bias", &params.decoder_bias, d),
    ] {
        let _ = writeln!(out, "{name} {}x{cols}", tensor.len() / cols);
        for row in tensor.chunks(cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{generate_synthetic_session, SyntheticSessionSpec, Window};
    use proptest::prelude::*;

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

    fn random_params(d: usize, c: usize, seed: u64) -> AutoEncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = AutoEncoderParams::zeros(d, c);
        for t in [
            &mut p.encoder_weight,
            &mut p.encoder_bias,
            &mut p.decoder_weight,
            &mut p.decoder_bias,
        ] {
            for v in t.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        p
    }

    #[test]
    fn zero_params_encode_to_zero() {
        let params = AutoEncoderParams::zeros(4, 2);
        assert_eq!(encode(&params, &[1.0, -2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn max_feature_map_takes_the_larger_half() {
        // C=1, D=1: pre-activations (1, -1) for x = 1.
        let params = AutoEncoderParams {
            input_dim: 1,
            code_dim: 1,
            encoder_weight: vec![1.0, -1.0],
            encoder_bias: vec![0.0, 0.0],
            decoder_weight: vec![0.0],
            decoder_bias: vec![0.0],
        };
        assert_eq!(encode(&params, &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn encode_matches_naive_loop_oracle() {
        let (d, c) = (9, 3);
        let params = random_params(d, c, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = encode(&params, &x).unwrap();
        // Independent oracle: explicit matrix-vector product plus pairwise max.
        for (k, &got_k) in got.iter().enumerate() {
            let mut a = params.encoder_bias[k];
            let mut b = params.encoder_bias[k + c];
            for (dd, &x_d) in x.iter().enumerate() {
                a += params.encoder_weight[k * d + dd] * x_d;
                b += params.encoder_weight[(k + c) * d + dd] * x_d;
            }
            let expected = a.max(b);
            assert!((got_k - expected).abs() < 1e-10, "{got_k} vs {expected}");
        }
    }

    #[test]
    fn zero_code_decodes_to_bias() {
        let mut params = AutoEncoderParams::zeros(3, 2);
        params.decoder_bias = vec![0.5, -1.0, 2.0];
        assert_eq!(decode(&params, &[0.0, 0.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn identity_decoder_passes_code_through() {
        let c = 3;
        let mut params = AutoEncoderParams::zeros(c, c);
        for k in 0..c {
            params.decoder_weight[k * c + k] = 1.0;
        }
        let code = vec![1.5, -0.25, 3.0];
        assert_eq!(decode(&params, &code).unwrap(), code);
    }

    #[test]
    fn decode_matches_naive_loop_oracle() {
        let (d, c) = (7, 4);
        let params = random_params(d, c, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let code: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = decode(&params, &code).unwrap();
        for (dd, &got_d) in got.iter().enumerate() {
            let mut expected = params.decoder_bias[dd];
            for (k, &code_k) in code.iter().enumerate() {
                expected += params.decoder_weight[dd * c + k] * code_k;
            }
            assert!((got_d - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let params = AutoEncoderParams::zeros(4, 2);
        assert!(encode(&params, &[1.0, 2.0]).is_err());
        assert!(decode(&params, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn identical_vectors_reach_tiny_reconstruction_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let v: Vec<f64> = (0..24).map(|_| rng.random_range(-0.5..0.5)).collect();
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        let session = session_of(vec![v.clone(); 10]);
        let (_, losses) = train_session_ae(&session, 4, &TrainConfig::default()).unwrap();
        let final_loss = *losses.last().unwrap();
        assert!(
            final_loss < 1e-3 * norm_sq,
            "loss {final_loss} vs bound {}",
            1e-3 * norm_sq
        );
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let (d, c, l) = (6, 2, 5);
        // Resample until every max-feature-map pair is comfortably non-tied,
        // so the finite-difference step cannot flip a winner.
        let mut seed = 0u64;
        let (params, session) = loop {
            let params = random_params(d, c, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let vectors: Vec<Vec<f64>> = (0..l)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let session = session_of(vectors);
            let non_tied = session.embeddings().all(|x| {
                let pre = pre_activations(&params, x);
                (0..c).all(|k| (pre[k] - pre[k + c]).abs() > 1e-3)
            });
            if non_tied {
                break (params, session);
            }
            seed += 1;
        };

        let (_, grads) = loss_gradients(&params, &session).unwrap();
        let flat_grads = [
            (&grads.encoder_weight, 0usize),
            (&grads.encoder_bias, 1),
            (&grads.decoder_weight, 2),
            (&grads.decoder_bias, 3),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let h = 1e-4;
        for _ in 0..20 {
            let tensor = rng.random_range(0..4usize);
            let (g, _) = flat_grads[tensor];
            let idx = rng.random_range(0..g.len());
            let analytic = g[idx];

            let probe = |delta: f64| -> f64 {
                let mut p = params.clone();
                let t = match tensor {
                    0 => &mut p.encoder_weight,
                    1 => &mut p.encoder_bias,
                    2 => &mut p.decoder_weight,
                    _ => &mut p.decoder_bias,
                };
                t[idx] += delta;
                reconstruction_loss(&p, &session).unwrap()
            };
            let numeric = (probe(h) - probe(-h)) / (2.0 * h);
            let err = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            assert!(
                err <= 1e-4 * scale || err <= 1e-10,
                "tensor {tensor} idx {idx}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let spec = SyntheticSessionSpec {
            num_speakers: 2,
            windows_per_speaker: 8,
            noise_sigma: 0.2,
            nonspeech_fraction: 0.0,
            dim: 12,
            seed: 50,
        };
        let session = generate_synthetic_session(&spec).unwrap().session;
        let cfg = TrainConfig {
            epochs: 30,
            seed: 7,
            ..TrainConfig::default()
        };
        let (a, _) = train_session_ae(&session, 3, &cfg).unwrap();
        let (b, _) = train_session_ae(&session, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_moving_average_is_non_increasing() {
        let spec = SyntheticSessionSpec {
            num_speakers: 2,
            windows_per_speaker: 20,
            noise_sigma: 0.3,
            nonspeech_fraction: 0.0,
            dim: 16,
            seed: 60,
        };
        let session = generate_synthetic_session(&spec).unwrap().session;
        let (_, losses) = train_session_ae(&session, 4, &TrainConfig::default()).unwrap();
        assert_eq!(losses.len(), 200);
        let ma: Vec<f64> = losses
            .windows(20)
            .map(|w| w.iter().sum::<f64>() / 20.0)
            .collect();
        for pair in ma.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9 * ma[0],
                "moving average increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    proptest! {
        /// Scaling encoder weights and bias by a power of two scales the code
        /// exactly: max(s·a, s·b) = s·max(a, b) and binary scaling commutes
        /// with rounding.
        #[test]
        fn encode_scale_equivariance(seed in 0u64..50, exp in -3i32..4) {
            let s = 2.0f64.powi(exp);
            let (d, c) = (5, 2);
            let params = random_params(d, c, seed);
            let mut scaled = params.clone();
            for w in scaled.encoder_weight.iter_mut() {
                *w *= s;
            }
            for b in scaled.encoder_bias.iter_mut() {
                *b *= s;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base = encode(&params, &x).unwrap();
            let got = encode(&scaled, &x).unwrap();
            for (g, b) in got.iter().zip(&base) {
                prop_assert_eq!(*g, s * b);
            }
        }
    }

    #[test]
    fn reduce_session_outputs_default_code_dim() {
        let spec = SyntheticSessionSpec {
            num_speakers: 2,
            windows_per_speaker: 15,
            noise_sigma: 0.2,
            nonspeech_fraction: 0.0,
            dim: 32,
            seed: 70,
        };
        let session = generate_synthetic_session(&spec).unwrap().session;
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let reduced = reduce_session(&session, DEFAULT_CODE_DIM, &cfg).unwrap();
        assert_eq!(reduced.dim(), 20);
        assert_eq!(reduced.len(), session.len());
        for (r, o) in reduced.windows().iter().zip(session.windows()) {
            assert_eq!(r.start, o.start);
            assert_eq!(r.end, o.end);
        }
    }

    #[test]
    fn tiny_sessions_pass_through_unreduced() {
        let session = session_of(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let reduced = reduce_session(&session, 20, &TrainConfig::default()).unwrap();
        assert_eq!(reduced, session);
    }

    #[test]
    fn single_window_session_is_an_error_when_training_runs() {
        let session = session_of(vec![vec![1.0, 0.0]]);
        let err = train_session_ae(&session, 1, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("too small"), "{err}");
    }

    #[test]
    fn codes_separate_speakers_on_noise_free_data() {
        let spec = SyntheticSessionSpec {
            num_speakers: 2,
            windows_per_speaker: 10,
            noise_sigma: 0.0,
            nonspeech_fraction: 0.0,
            dim: 16,
            seed: 80,
        };
        let synth = generate_synthetic_session(&spec).unwrap();
        let reduced = reduce_session(&synth.session, 4, &TrainConfig::default()).unwrap();
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let mut min_within = f64::INFINITY;
        let mut max_cross = f64::NEG_INFINITY;
        for i in 0..reduced.len() {
            for j in i + 1..reduced.len() {
                let c = cos(reduced.embedding(i), reduced.embedding(j));
                if synth.assignment.labels[i] == synth.assignment.labels[j] {
                    min_within = min_within.min(c);
                } else {
                    max_cross = max_cross.max(c);
                }
            }
        }
        assert!(
            min_within > max_cross,
            "within {min_within} vs cross {max_cross}"
        );
    }
}

