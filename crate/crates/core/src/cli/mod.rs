//! The `mustas` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 a source could not be read or parsed, 4 data or model error.

mod config;
mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

pub use config::{
    HybridSection, LdaSection, PipelineConfig, ServiceSection, TextprepSection,
    DEFAULT_CORS_ORIGIN,
};
pub use pipeline::{
    build_corpus, export, infer, infer_document, ingest, paragraph_seed, release, train, Corpus,
    InferOptions, InferSettings, IngestReport, PipelineError, TrainOptions, TrainReport,
};

use crate::service::{self, ApiConfig, ApiOverrides};
use crate::store::Backend;

#[derive(Debug, Parser)]
#[command(name = "mustas", version, about = "Multi-source topic aggregation pipeline")]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "mustas.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch and store new documents from the configured sources.
    Ingest {
        /// Only this source id.
        #[arg(long)]
        source: Option<String>,
    },
    /// Train a model on the stored corpus and register it as staged.
    Train {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        backend: Option<Backend>,
    },
    /// Fold documents without an entry into a released model.
    Infer {
        #[arg(long)]
        model: String,
        #[arg(long)]
        seed: u64,
        /// RFC 3339 instant or YYYY-MM-DD.
        #[arg(long, value_parser = parse_instant)]
        since: Option<DateTime<Utc>>,
    },
    /// Promote a staged model to released.
    Release {
        #[arg(long)]
        model: String,
    },
    /// Serve the read-only HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Write a model's entries as newline-delimited JSON.
    Export {
        #[arg(long)]
        model: String,
        /// Output file, `-` for standard output.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>, String> {
    crate::ingest::parse_instant(s).ok_or_else(|| format!("invalid instant `{s}`"))
}

/// Parses `args` and runs the subcommand. Results go to `out`, progress and
/// errors to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, PipelineError> {
    let cfg = PipelineConfig::load(&cli.config).map_err(PipelineError::Config)?;
    match cli.command {
        Command::Ingest { source } => {
            let report = ingest(&cfg, source.as_deref(), Utc::now(), err)?;
            let _ = writeln!(out, "{}", report.summary());
            if report.failures.is_empty() {
                Ok(0)
            } else {
                for (id, msg) in &report.failures {
                    let _ = writeln!(err, "error: source {id}: {msg}");
                }
                Ok(3)
            }
        }
        Command::Train { k, seed, backend } => {
            let report = train(&cfg, &TrainOptions { seed, k, backend }, Utc::now(), err)?;
            let _ = writeln!(out, "{}", report.model_id);
            Ok(0)
        }
        Command::Infer { model, seed, since } => {
            let n = infer(&cfg, &InferOptions { model_id: model, seed, since })?;
            let _ = writeln!(out, "inferred={n}");
            Ok(0)
        }
        Command::Release { model } => {
            let record = release(&cfg, &model)?;
            let _ = writeln!(out, "{} {}", record.model_id, record.status);
            Ok(0)
        }
        Command::Export { model, out: path } => {
            let n = export(&cfg, &model, &path)?;
            let _ = writeln!(err, "exported={n}");
            Ok(0)
        }
        Command::Serve { bind, port } => {
            let api = ApiConfig::resolve(
                &cfg,
                &ApiOverrides { bind, port, ..ApiOverrides::default() },
                |k| std::env::var(k).ok(),
            )
            .map_err(PipelineError::Config)?;
            service::serve_blocking(api, err).map_err(PipelineError::Runtime)?;
            Ok(0)
        }
    }
}
