//! Speaker diarisation from precomputed per-window speaker embeddings and
//! frame-level speech-activity probabilities.
//!
//! The pipeline is the conventional one — SAD smoothing, windowed embeddings,
//! clustering (agglomerative or spectral), RTTM output — extended with three
//! independently switchable session-level embedding adaptations:
//!
//! - **Dimensionality reduction** ([`dim_reduce`]): a small autoencoder with
//!   max-feature-map activation trained per session compresses embeddings to
//!   a session-specific subspace.
//! - **Attention aggregation** ([`aggregate`]): repeated softmax-weighted
//!   averaging over the session's cosine affinities denoises embeddings by
//!   pulling same-speaker windows together.
//! - **Non-speech clustering** ([`nonspeech`]): one cluster slot is reserved
//!   for non-speech, identified from SAD agreement or a prototype embedding,
//!   and cluster centroids are refined on windows whose SAD and clustering
//!   evidence agree.
//!
//! [`pipeline`] wires the stages together and provides the ablation runner
//! and a synthetic benchmark generator; [`scoring`] implements a DER scorer
//! with collar handling and optimal speaker mapping.

pub mod aggregate;
pub mod cluster;
pub mod config;
pub mod dim_reduce;
pub mod embeddings;
pub mod error;
pub mod nonspeech;
pub mod pipeline;
pub mod sad;
pub mod scoring;

pub use config::{Clusterer, NonspeechMode, PipelineConfig, SpeakerCount};
pub use embeddings::{SessionEmbeddings, Window};
pub use error::{Error, Result};
pub use scoring::{DerReport, Timeline, Turn};
