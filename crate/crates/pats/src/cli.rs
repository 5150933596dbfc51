//! Command-line surface. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use pats_core::EvalConfig;

use crate::config::read_config;
use crate::error::Error;
use crate::matches::{read_matches, write_matches};
use crate::run::{run_eval, run_match, synth, MatchRequest};
use crate::sidecar::parse_warp_spec;
use crate::threads::ThreadPoolExecutor;
use crate::{pnm, svg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pats",
    version,
    about = "Patch area transportation matcher",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a seeded texture pair related by a known warp.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `N` or `WxH`.
        #[arg(long, default_value = "256", value_parser = parse_size)]
        size: (usize, usize),
        /// identity | scale:S | affine:a,b,tx,c,d,ty | homography:h00,...,h22
        #[arg(long, default_value = "identity")]
        warp: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Match two images and write the finest-level matches as JSON lines.
    Match {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        /// PATS-DESC file for the source image.
        #[arg(long, requires = "desc_dst")]
        desc_src: Option<PathBuf>,
        /// PATS-DESC file for the target image.
        #[arg(long, requires = "desc_src")]
        desc_dst: Option<PathBuf>,
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Warp sidecar, used by the ground-truth area backend.
        #[arg(long)]
        warp: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a match file against a warp sidecar.
    Eval {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        warp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Precision threshold in pixels.
        #[arg(long, default_value_t = 3.0)]
        tau: f64,
        /// Coverage grid cells per axis.
        #[arg(long, default_value_t = 10)]
        grid: usize,
    },
    /// Draw matches between two images as an SVG.
    ExportVis {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_size(v: &str) -> Result<(usize, usize), String> {
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&n| n > 0);
    let size = match v.split_once(['x', 'X']) {
        Some((w, h)) => parse(w).zip(parse(h)),
        None => parse(v).map(|n| (n, n)),
    };
    size.ok_or_else(|| format!("expected N or WxH with positive integers, got {v:?}"))
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Data(Error::io(path, e)))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth { seed, size, warp, out } => {
            let warp = parse_warp_spec(&warp, size).map_err(Failure::Usage)?;
            synth(seed, &warp, &out)?;
        }
        Command::Match {
            src,
            dst,
            desc_src,
            desc_dst,
            config,
            warp,
            out,
        } => {
            let cfg = match &config {
                Some(path) => read_config(path)?,
                None => Default::default(),
            };
            let executor = ThreadPoolExecutor::from_env().map_err(Failure::Usage)?;
            let request = MatchRequest {
                source: src,
                target: dst,
                source_desc: desc_src,
                target_desc: desc_dst,
                warp,
                config_path: config,
                config: cfg,
            };
            let run = run_match(&request, &executor)?;
            write_matches(&run.records, &out)?;
        }
        Command::Eval {
            matches,
            warp,
            out,
            tau,
            grid,
        } => {
            if !(tau > 0.0) || grid == 0 {
                return Err(Failure::Usage("--tau and --grid must be positive".to_string()));
            }
            let report = run_eval(&matches, &warp, &EvalConfig { tau, coverage_grid: grid })?;
            let text = serde_json::to_string_pretty(&report).expect("reports always serialize");
            write_text(&out, &(text + "\n"))?;
        }
        Command::ExportVis { matches, src, dst, out } => {
            let records = read_matches(&matches)?;
            let source = pnm::read_image(&src)?;
            let target = pnm::read_image(&dst)?;
            write_text(&out, &svg::overlay(&source, &target, &records))?;
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{}", e.render());
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
