//! `vqat` command-line driver: preprocess audio, train the VQ-VAE and the
//! prior, generate fakes, evaluate and plot, with every artifact digested
//! in a run manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use vqat_prior::{GenerationMode, StartPolicy};
use vqat_vqvae::{Case, QuantizerMode};

pub use config::PipelineConfig;
pub use error::CliError;
pub use stages::{GenerateRequest, Run};

#[derive(Debug, Parser)]
#[command(name = "vqat", version, about = "VQ-VAE + transformer prior pipeline for spoken-digit spectrograms")]
pub struct Cli {
    /// TOML pipeline config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory for artifacts and the manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; stage seeds derive from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Compression case: 1 (1408 tokens) or 2 (352 tokens).
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case: Option<u8>,
    /// Train and sample the prior with class start tokens.
    #[arg(long, global = true)]
    pub conditioned: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum QuantizerArg {
    Nearest,
    Ema,
    Stochastic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Conditioned,
    Unconditioned,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StartArg {
    Bos,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// WAV files to normalized Mel-spectrograms.
    Preprocess {
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Train the VQ-VAE on the spectrograms.
    TrainVqvae {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum)]
        quantizer: Option<QuantizerArg>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Encode every spectrogram to a token grid.
    ExportLatents,
    /// Train the transformer prior on the token grids.
    TrainPrior {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Sample a set of fake token grids.
    Generate {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Only this digit (conditioned mode).
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=9))]
        class: Option<u8>,
        /// Sequences per class, or in total with --class.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long, value_enum)]
        start: Option<StartArg>,
        /// File name inside the run directory.
        #[arg(long)]
        output: Option<String>,
    },
    /// Classifier accuracy and KDE fidelity/diversity of a fake set.
    Evaluate {
        #[arg(long)]
        fakes: Option<String>,
        #[arg(long)]
        confidence: Option<f64>,
        #[arg(long)]
        pca_dims: Option<usize>,
    },
    /// PNG grid of originals, reconstructions and decoded fakes.
    Plot {
        #[arg(long)]
        fakes: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Number of principal components covering a variance fraction.
    PcaDim {
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
    },
}

impl Cli {
    /// Config file plus flag overrides, finalized.
    pub fn resolve_config(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.case {
            cfg.case = Case::try_from(c).map_err(CliError::Usage)?;
        }
        if self.conditioned {
            cfg.conditioned = true;
        }
        match &self.command {
            Command::Preprocess { data_root } => {
                if let Some(d) = data_root {
                    cfg.data_root = d.clone();
                }
            }
            Command::TrainVqvae { epochs, quantizer, batch_size, lr } => {
                let v = &mut cfg.vqvae;
                v.epochs = epochs.unwrap_or(v.epochs);
                v.batch_size = batch_size.unwrap_or(v.batch_size);
                v.lr = lr.unwrap_or(v.lr);
                if let Some(q) = quantizer {
                    v.quantizer = match q {
                        QuantizerArg::Nearest => QuantizerMode::Nearest,
                        QuantizerArg::Ema => QuantizerMode::Ema,
                        QuantizerArg::Stochastic => QuantizerMode::Stochastic,
                    };
                }
            }
            Command::TrainPrior { epochs, batch_size, lr } => {
                let p = &mut cfg.prior;
                p.epochs = epochs.unwrap_or(p.epochs);
                p.batch_size = batch_size.unwrap_or(p.batch_size);
                p.lr = lr.unwrap_or(p.lr);
            }
            Command::Generate { mode, temperature, start, .. } => {
                let g = &mut cfg.generate;
                if let Some(m) = mode {
                    g.mode = Some(match m {
                        ModeArg::Conditioned => GenerationMode::Conditioned,
                        ModeArg::Unconditioned => GenerationMode::Unconditioned,
                    });
                }
                g.temperature = temperature.unwrap_or(g.temperature);
                if let Some(s) = start {
                    g.start = match s {
                        StartArg::Bos => StartPolicy::Bos,
                        StartArg::Random => StartPolicy::Random,
                    };
                }
            }
            Command::Evaluate { confidence, pca_dims, .. } => {
                cfg.eval.confidence = confidence.unwrap_or(cfg.eval.confidence);
                cfg.eval.pca_dims = pca_dims.unwrap_or(cfg.eval.pca_dims);
            }
            Command::Plot { count, .. } => {
                cfg.plot.count = count.unwrap_or(cfg.plot.count);
            }
            Command::ExportLatents | Command::PcaDim { .. } => {}
        }
        cfg.finalize()
    }

    pub fn execute(&self) -> Result<(), CliError> {
        let mut run = Run::open(self.resolve_config()?)?;
        match &self.command {
            Command::Preprocess { .. } => run.preprocess(),
            Command::TrainVqvae { .. } => run.train_vqvae(),
            Command::ExportLatents => run.export_latents(),
            Command::TrainPrior { .. } => run.train_prior(),
            Command::Generate { class, count, output, .. } => run
                .generate(&GenerateRequest { class: *class, count: *count, output: output.clone() })
                .map(drop),
            Command::Evaluate { fakes, .. } => run.evaluate(fakes.as_deref()).map(drop),
            Command::Plot { fakes, .. } => run.plot(fakes.as_deref()),
            Command::PcaDim { threshold } => {
                if !(*threshold > 0.0 && *threshold <= 1.0) {
                    return Err(CliError::Usage(format!("--threshold must lie in (0, 1], got {threshold}")));
                }
                let n = run.pca_dim(*threshold)?;
                println!("{n}");
                Ok(())
            }
        }
    }
}

/// Parses `args` and runs one subcommand. Returns the process exit code:
/// 0 on success, 1 for usage errors, 2 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.execute() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
