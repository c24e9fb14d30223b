//! Command-line interface: diarise sessions, score RTTM files, generate the
//! synthetic benchmark and run the technique ablation.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors (unreadable
//! or malformed inputs, numerical failures). `DIAR_ADAPT_THREADS` caps the
//! session parallelism of `ablate`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use diar_adapt::config::{
    read_config, Clusterer, NonspeechMode, PipelineConfig, SpeakerCount, DEFAULT_COLLAR_SECONDS,
};
use diar_adapt::error::{Error, Result};
use diar_adapt::pipeline::{generate_benchmark, run_ablation, run_diarise, BenchmarkSpec};
use diar_adapt::scoring::{
    format_report_line, read_rttm, rttm_to_string, score_sessions, write_rttm,
};

#[derive(Parser)]
#[command(
    name = "diar-adapt",
    version,
    about = "Speaker diarisation from precomputed embeddings, with per-session \
             dimensionality reduction, attention aggregation and non-speech clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diarise one session and emit RTTM
    Diarise(DiariseArgs),
    /// Score hypothesis RTTM files against a reference
    Score(ScoreArgs),
    /// Generate a synthetic benchmark dataset
    Synth(SynthArgs),
    /// Run every technique combination under both clusterers over a dataset
    Ablate(AblateArgs),
}

/// Pipeline settings shared by `diarise` and `ablate`. Flags override the
/// config file, which overrides the built-in defaults.
#[derive(Args)]
struct ConfigOverrides {
    /// Configuration file with flat `key = value` lines
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Clustering backend
    #[arg(long, value_name = "ahc|spc")]
    clusterer: Option<Clusterer>,
    /// Speaker count: a positive integer, or auto to estimate per session
    #[arg(long, value_name = "INT|auto")]
    num_speakers: Option<SpeakerCount>,
    /// Per-session dimensionality reduction
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    dr: Option<bool>,
    /// Attention-based embedding aggregation
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    aa: Option<bool>,
    /// Non-speech clustering mode
    #[arg(long, value_name = "off|sad|prototype:<path>")]
    nonspeech: Option<NonspeechMode>,
    /// Autoencoder code dimension used by --dr
    #[arg(long, value_name = "INT")]
    code_dim: Option<usize>,
    /// Aggregation repetitions (N)
    #[arg(long, value_name = "INT")]
    aa_iterations: Option<usize>,
    /// Aggregation softmax temperature (tau)
    #[arg(long, value_name = "REAL")]
    aa_temperature: Option<f64>,
    /// Eigenvalue threshold for spectral auto speaker counting
    #[arg(long, value_name = "REAL")]
    eigen_threshold: Option<f64>,
    /// AHC stopping distance used instead of silhouette estimation
    #[arg(long, value_name = "REAL")]
    ahc_threshold: Option<f64>,
    /// Scoring collar in seconds (used by ablate)
    #[arg(long, value_name = "SECONDS")]
    collar: Option<f64>,
    /// Master random seed
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
}

impl ConfigOverrides {
    fn build(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => read_config(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.clusterer {
            config.clusterer = v;
        }
        if let Some(v) = self.num_speakers {
            config.num_speakers = v;
        }
        if let Some(v) = self.dr {
            config.use_dr = v;
        }
        if let Some(v) = self.aa {
            config.use_aa = v;
        }
        if let Some(v) = &self.nonspeech {
            config.nonspeech = v.clone();
        }
        if let Some(v) = self.code_dim {
            config.code_dim = v;
        }
        if let Some(v) = self.aa_iterations {
            config.aggregation.repetitions = v;
        }
        if let Some(v) = self.aa_temperature {
            config.aggregation.temperature = v;
        }
        if let Some(v) = self.eigen_threshold {
            config.spectral.eigen_threshold = v;
        }
        if let Some(v) = self.ahc_threshold {
            config.ahc_threshold = Some(v);
        }
        if let Some(v) = self.collar {
            config.collar = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct DiariseArgs {
    /// SEG embeddings file (one window per line)
    embeddings: PathBuf,
    /// SADP frame probabilities; an .rttm file instead supplies its speech
    /// regions as reference SAD
    #[arg(long, value_name = "FILE")]
    sad: Option<PathBuf>,
    /// Write the RTTM here instead of stdout
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct ScoreArgs {
    /// Reference RTTM
    #[arg(long = "ref", value_name = "FILE")]
    reference: PathBuf,
    /// Hypothesis RTTM
    #[arg(long, value_name = "FILE")]
    hyp: PathBuf,
    /// Scoring collar in seconds, split around reference boundaries
    #[arg(long, value_name = "SECONDS", default_value_t = DEFAULT_COLLAR_SECONDS)]
    collar: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the <id>.seg / <id>.sadp / <id>.rttm triples
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of sessions (speaker counts cycle over 2-5)
    #[arg(long, default_value_t = BenchmarkSpec::default().sessions)]
    sessions: usize,
    #[arg(long, default_value_t = BenchmarkSpec::default().seed)]
    seed: u64,
    /// Embedding dimension
    #[arg(long, default_value_t = BenchmarkSpec::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = BenchmarkSpec::default().windows_per_speaker)]
    windows_per_speaker: usize,
    /// Per-coordinate Gaussian noise on the embeddings
    #[arg(long, default_value_t = BenchmarkSpec::default().noise_sigma)]
    noise_sigma: f64,
    /// Fraction of windows drawn from the non-speech centroid
    #[arg(long, default_value_t = BenchmarkSpec::default().nonspeech_fraction)]
    nonspeech_fraction: f64,
    /// Emit clean SAD probabilities instead of corrupted ones
    #[arg(long)]
    clean_sad: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Dataset directory of <id>.seg / <id>.sadp / <id>.rttm triples
    dataset: PathBuf,
    /// Also write the table as CSV
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Diarise(args) => {
            let config = args.overrides.build()?;
            let timeline = run_diarise(&args.embeddings, args.sad.as_deref(), &config)?;
            let timelines = [timeline];
            match &args.output {
                Some(path) => write_rttm(&timelines, path)?,
                None => print!("{}", rttm_to_string(&timelines)),
            }
        }
        Command::Score(args) => {
            let references = read_rttm(&args.reference)?;
            let hypotheses = read_rttm(&args.hyp)?;
            let (per_session, total) = score_sessions(&references, &hypotheses, args.collar)?;
            for (id, report) in &per_session {
                println!("{}", format_report_line(id, report));
            }
            println!("{}", format_report_line("TOTAL", &total));
        }
        Command::Synth(args) => {
            let spec = BenchmarkSpec {
                sessions: args.sessions,
                seed: args.seed,
                dim: args.dim,
                windows_per_speaker: args.windows_per_speaker,
                noise_sigma: args.noise_sigma,
                nonspeech_fraction: args.nonspeech_fraction,
                sad_errors: !args.clean_sad,
            };
            let ids = generate_benchmark(&args.out, &spec)?;
            println!("wrote {} sessions to {}", ids.len(), args.out.display());
        }
        Command::Ablate(args) => {
            let base = args.overrides.build()?;
            let table = run_ablation(&args.dataset, &base)?;
            print!("{}", table.to_text());
            if let Some(path) = &args.csv {
                std::fs::write(path, table.to_csv()).map_err(|e| Error::io(path.clone(), e))?;
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help and --version are successes.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    // Error messages carry their context inline (paths, line numbers, stage
    // names), so a single line suffices.
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(2);
    }
}
