use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use strokepaint::cli::{self, Config, TrainTarget};
use strokepaint::{Error, Result};

/// Recognition-driven vector painting, curation and stroke bitstreams.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args)]
struct Common {
    /// JSON config; defaults apply for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    strokes_black: Option<usize>,
    #[arg(long, global = true)]
    strokes_colour: Option<usize>,
    #[arg(long, global = true)]
    palette_size: Option<usize>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    quant_coord_bits: Option<u8>,
    /// Encoder weights (`.penc`).
    #[arg(long, global = true)]
    encoder: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Paint one image and write layers, SVG, bitstream, losses and palette.
    Paint {
        image: PathBuf,
        /// Also write the edge, saliency and attention maps.
        #[arg(long)]
        dump_maps: bool,
    },
    /// Select images by category conditions, gallery composition and complexity.
    Curate {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        gallery: Option<PathBuf>,
    },
    /// Train the reference encoder or the complexity estimator.
    Train {
        which: Which,
        /// Directory of class subdirectories; procedural data if omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run the gradient, codec and geometry self-checks.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Encoder,
    Estimator,
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_json(&std::fs::read_to_string(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?)?,
        None => Config::default(),
    };
    let p = &mut cfg.painting;
    if let Some(v) = common.strokes_black {
        p.strokes_black = v;
    }
    if let Some(v) = common.strokes_colour {
        p.strokes_colour = v;
    }
    if let Some(v) = common.palette_size {
        p.palette_size = v;
    }
    if let Some(v) = common.iterations {
        p.iterations = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    if let Some(v) = common.quant_coord_bits {
        cfg.quant.coord_bits = v;
    }
    if let Some(v) = &common.encoder {
        cfg.weights.encoder = Some(v.clone());
    }
    cfg.sync();
    Ok(cfg)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("summaries serialize")
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli::threads_from_env()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Paint { image, dump_maps } => {
            let (summary, _) = cli::cmd_paint(&image, &cfg, dump_maps)?;
            println!("{}", json(&summary));
        }
        Command::Curate {
            annotations,
            images,
            gallery,
        } => {
            let c = &mut cfg.curation;
            c.annotations = annotations.or(c.annotations.take());
            c.images = images.or(c.images.take());
            c.gallery = gallery.or(c.gallery.take());
            println!("{}", json(&cli::cmd_curate(&cfg)?));
        }
        Command::Train { which, corpus, epochs } => {
            cfg.training.corpus = corpus.or(cfg.training.corpus.take());
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let target = match which {
                Which::Encoder => TrainTarget::Encoder,
                Which::Estimator => TrainTarget::Estimator,
            };
            let summary = cli::cmd_train(target, &cfg)?;
            eprintln!("final accuracy {:.2}%", 100.0 * summary.accuracy);
            println!("{}", json(&summary));
        }
        Command::Verify => {
            let report = cli::cmd_verify(&cfg)?;
            print!("{}", report.table());
            if !report.all_passed() {
                for f in report.failures() {
                    eprintln!("check failed: {}", f.name);
                }
                return Ok(ExitCode::from(cli::EXIT_VERIFY_FAILED as u8));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
