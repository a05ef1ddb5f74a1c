//! `stega` — embed, fit, detect, eval, and budget subcommands for the
//! green steganalyzer. Exit codes: 0 success, 1 usage, 2 bad data,
//! 3 training failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use stega_cli::commands::{self, CmdError, DetectOptions, EmbedSource};
use stega_cli::config::RunConfig;
use stega_core::budget::Convention;

#[derive(Parser)]
#[command(name = "stega", version, about = "Lightweight image steganalysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cover/stego dataset with ground-truth change maps.
    Embed {
        /// key=value config file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Embedding scheme override (hill | suniward)
        #[arg(long)]
        scheme: Option<String>,
        /// Payload override in bits per pixel
        #[arg(long)]
        payload: Option<f64>,
        /// Master seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Generate this many synthetic covers instead of reading a directory
        #[arg(long)]
        synthetic: Option<usize>,
        /// Side length for synthetic covers
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Directory of .pgm covers to embed into
        #[arg(long)]
        covers: Option<PathBuf>,
        /// Output directory for the dataset and its manifest
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a detector from a manifest of cover/stego/change-map triples.
    Fit {
        /// key=value config file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset manifest (cover<TAB>stego<TAB>change_map lines)
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the fitted model
        #[arg(long)]
        model: PathBuf,
        /// Optional directory for split manifests and diagnostic CSVs
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score images with a fitted model.
    Detect {
        /// Fitted model file
        #[arg(long)]
        model: PathBuf,
        /// Images to score
        #[arg(required = true)]
        images: Vec<PathBuf>,
        /// Write per-pixel score planes and heatmaps
        #[arg(long)]
        export_scores: bool,
        /// Write detected-spot CSVs
        #[arg(long)]
        export_spots: bool,
        /// Directory for exported artifacts
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Report error rates over a labelled manifest.
    Eval {
        /// Fitted model file
        #[arg(long)]
        model: PathBuf,
        /// Manifest of cover/stego pairs to score
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print the parameter and FLOP ledger for a fitted model.
    Budget {
        /// Fitted model file
        #[arg(long)]
        model: PathBuf,
        /// Counting convention (paper | exact)
        #[arg(long, default_value = "paper")]
        convention: String,
        /// Image size the per-pixel figures amortize over, as WxH
        #[arg(long, default_value = "256x256")]
        image_size: String,
    },
}

fn load_config(
    path: Option<&PathBuf>,
    seed: Option<u64>,
    scheme: Option<&str>,
    payload: Option<f64>,
) -> Result<RunConfig, CmdError> {
    let mut config = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.set("seed", &s.to_string())?;
    }
    if let Some(s) = scheme {
        config.set("scheme", s)?;
    }
    if let Some(p) = payload {
        config.set("payload", &p.to_string())?;
    }
    Ok(config)
}

fn parse_convention(text: &str) -> Result<Convention, CmdError> {
    match text {
        "paper" => Ok(Convention::Paper),
        "exact" => Ok(Convention::Exact),
        other => Err(CmdError::Usage(format!(
            "unknown convention '{other}' (expected paper or exact)"
        ))),
    }
}

fn parse_image_size(text: &str) -> Result<(usize, usize), CmdError> {
    let bad = || CmdError::Usage(format!("bad --image-size '{text}' (expected WxH)"));
    let (w, h) = text.split_once('x').ok_or_else(bad)?;
    Ok((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Embed {
            config,
            scheme,
            payload,
            seed,
            synthetic,
            size,
            covers,
            out,
        } => {
            let config = load_config(config.as_ref(), seed, scheme.as_deref(), payload)?;
            let source = match (synthetic, covers) {
                (Some(count), None) => EmbedSource::Synthetic { count, size },
                (None, Some(dir)) => EmbedSource::CoverDir(dir),
                _ => {
                    return Err(CmdError::Usage(
                        "embed needs exactly one of --synthetic or --covers".into(),
                    ))
                }
            };
            commands::cmd_embed(&config, source, &out)
        }
        Command::Fit {
            config,
            seed,
            manifest,
            model,
            out,
        } => {
            let config = load_config(config.as_ref(), seed, None, None)?;
            commands::cmd_fit(&config, &manifest, &model, out.as_deref())
        }
        Command::Detect {
            model,
            images,
            export_scores,
            export_spots,
            out,
        } => commands::cmd_detect(
            &model,
            &images,
            &DetectOptions {
                export_scores,
                export_spots,
                out,
            },
        ),
        Command::Eval { model, manifest } => commands::cmd_eval(&model, &manifest),
        Command::Budget {
            model,
            convention,
            image_size,
        } => {
            let convention = parse_convention(&convention)?;
            let (w, h) = parse_image_size(&image_size)?;
            commands::cmd_budget(&model, convention, w, h)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits; everything else is a
            // usage error, which this tool reports as exit code 1.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
