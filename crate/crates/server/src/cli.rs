//! Command-line entry points. Exit codes: 0 success, 1 failure, 2 usage.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use medico_core::demo::{self, DEFAULT_SEED, EXPECTED_TRANSCRIPT};
use medico_core::{RandomIds, Repository};

use crate::app::{self, App, StartupError};
use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "medico", version, about = "Semantic annotation and dialogue server for radiology images")]
pub struct Cli {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP/JSON API.
    Serve,
    /// Ingest every DICOM file below a directory into the data directory.
    Ingest { path: PathBuf },
    /// Run a query file against the data directory and print TSV.
    Query { file: PathBuf },
    /// Replay the scripted demo dialogue and compare it with the reference.
    DemoScript,
}

pub fn run(cli: Cli, out: &mut impl Write, err: &mut impl Write) -> u8 {
    let config = match Config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Serve => serve(config),
        Command::Ingest { path } => ingest(&config, &path, out),
        Command::Query { file } => query(&config, &file, out),
        Command::DemoScript => demo_script(out, err),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

fn open_plain(config: &Config) -> Result<Repository, String> {
    Repository::open(&config.data_dir, app::OffsetClock::for_config(config), RandomIds).map_err(|source| {
        StartupError::DataDir {
            path: config.data_dir.display().to_string(),
            source,
        }
        .to_string()
    })
}

fn ingest(config: &Config, path: &Path, out: &mut impl Write) -> Result<u8, String> {
    let mut repo = open_plain(config)?;
    let report = repo.ingest_directory(path).map_err(|e| e.to_string())?;
    let _ = writeln!(
        out,
        "files {} accepted {} rejected {}\npatients {} studies {} series {} images {}",
        report.files_seen,
        report.accepted,
        report.rejected.len(),
        report.patients,
        report.studies,
        report.series,
        report.images
    );
    for (file, reason) in &report.rejected {
        let _ = writeln!(out, "rejected {}: {reason}", file.display());
    }
    Ok(0)
}

fn query(config: &Config, file: &Path, out: &mut impl Write) -> Result<u8, String> {
    let text = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let repo = open_plain(config)?;
    let solutions = repo.store().query(&text).map_err(|e| e.to_string())?;
    let _ = out.write_all(solutions.to_tsv().as_bytes());
    Ok(0)
}

fn demo_script(out: &mut impl Write, err: &mut impl Write) -> Result<u8, String> {
    let run = demo::run_script(DEFAULT_SEED).map_err(|e| e.to_string())?;
    let _ = out.write_all(run.transcript.as_bytes());
    if run.transcript == EXPECTED_TRANSCRIPT {
        return Ok(0);
    }
    let _ = writeln!(err, "transcript differs from the reference:");
    let got = split_turns(&run.transcript);
    let want = split_turns(EXPECTED_TRANSCRIPT);
    for index in 0..got.len().max(want.len()) {
        let (g, w) = (got.get(index).copied().unwrap_or(""), want.get(index).copied().unwrap_or(""));
        if g != w {
            for line in w.lines() {
                let _ = writeln!(err, "-{line}");
            }
            for line in g.lines() {
                let _ = writeln!(err, "+{line}");
            }
        }
    }
    Ok(1)
}

fn split_turns(transcript: &str) -> Vec<&str> {
    let mut starts: Vec<usize> = transcript.match_indices("turn ").map(|(i, _)| i).filter(|&i| i == 0 || transcript.as_bytes()[i - 1] == b'\n').collect();
    starts.push(transcript.len());
    starts.windows(2).map(|w| &transcript[w[0]..w[1]]).collect()
}

fn serve(config: Config) -> Result<u8, String> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let repo = app::open_repository(&config).map_err(|e| e.to_string())?;
        let port = config.port;
        let app = Arc::new(App::new(repo, config));
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|source| StartupError::Bind { port, source }.to_string())?;
        tracing::info!(port, "listening");
        let sweeper = {
            let app = app.clone();
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(Duration::from_secs(60));
                loop {
                    tick.tick().await;
                    let dropped = app.expire_sessions();
                    if dropped > 0 {
                        tracing::debug!(dropped, "expired idle sessions");
                    }
                }
            })
        };
        let served = axum::serve(listener, crate::api::router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await;
        sweeper.abort();
        served.map_err(|e| e.to_string())?;
        Ok(0)
    })
}
