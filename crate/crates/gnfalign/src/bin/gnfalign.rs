use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gnfalign::bench::bench;
use gnfalign::config::{format_train, parse_override, synth_config, train_config};
use gnfalign::core::cascade::train_cascade;
use gnfalign::core::crop::BBox;
use gnfalign::eval::{evaluate, load_training_samples, write_report, NormalizerKind};
use gnfalign::manifest::load_manifest;
use gnfalign::model_io::{load_model, save_model};
use gnfalign::pgm::load_gray;
use gnfalign::pts::write_pts;
use gnfalign::synth::{synth_generate, write_dataset};
use gnfalign::Result;

/// Cascaded face alignment with greedy neural forests.
#[derive(Debug, Parser)]
#[command(name = "gnfalign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Setting override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizerArg {
    InterPupil,
    Bbox,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated dataset.
    Synth {
        /// Output directory; receives images/, pts/ and manifest.tsv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train a cascade on a dataset manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Model file to write.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        settings: Settings,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Align one image and write the landmarks as a pts file.
    Align {
        #[arg(long)]
        model: PathBuf,
        /// P5 graymap.
        #[arg(long)]
        image: PathBuf,
        /// Face box `x,y,w,h`.
        #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
        bbox: BBox,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on a dataset and write CSV reports.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report directory; receives per_image.csv, ced.csv and summary.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = NormalizerArg::InterPupil)]
        normalizer: NormalizerArg,
    },
    /// Time each alignment step and write a CSV.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// CSV file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_bbox(s: &str) -> std::result::Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => BBox::new(x, y, w, h).map_err(|e| e.to_string()),
        _ => Err(format!("expected x,y,w,h, got {} values", v.len())),
    }
}

fn overrides(settings: &Settings) -> Result<Vec<(String, String)>> {
    settings.set.iter().map(|s| parse_override(s)).collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { out, seed, settings } => {
            let config = synth_config(settings.config.as_deref(), &overrides(&settings)?)?;
            let examples = synth_generate(&config, seed)?;
            let manifest = write_dataset(&out, &examples)?;
            log::info!("wrote {} examples, manifest {}", examples.len(), manifest.display());
        }
        Command::Train {
            manifest,
            model,
            settings,
            print_config,
        } => {
            let config = train_config(settings.config.as_deref(), &overrides(&settings)?)?;
            if print_config {
                print!("{}", format_train(&config));
                return Ok(());
            }
            config.validate()?;
            let examples = load_manifest(&manifest)?;
            let samples = load_training_samples(&examples, config.crop_size)?;
            let trained = train_cascade(&config, samples)?;
            save_model(&model, &trained)?;
        }
        Command::Align {
            model,
            image,
            bbox,
            out,
        } => {
            let model = load_model(&model)?;
            let image = load_gray(&image)?;
            let aligned = model.align(&image, &bbox)?;
            write_pts(&out, &aligned.shape)?;
        }
        Command::Eval {
            model,
            manifest,
            out,
            normalizer,
        } => {
            let model = load_model(&model)?;
            let examples = load_manifest(&manifest)?;
            let kind = match normalizer {
                NormalizerArg::InterPupil => NormalizerKind::InterPupil,
                NormalizerArg::Bbox => NormalizerKind::BBoxSize,
            };
            let report = evaluate(&model, &examples, kind)?;
            write_report(&out, &report)?;
            println!("mean NME {:.4} over {} images", report.mean_nme, report.per_image.len());
        }
        Command::Bench {
            model,
            manifest,
            repetitions,
            out,
        } => {
            let model = load_model(&model)?;
            let images = load_manifest(&manifest)?
                .iter()
                .map(|ex| Ok((ex.load_image()?, ex.bbox)))
                .collect::<Result<Vec<_>>>()?;
            let csv = bench(&model, &images, repetitions)?.to_csv();
            match out {
                Some(p) => std::fs::write(&p, csv).map_err(|source| gnfalign::Error::Io { path: p, source })?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // a bad setting is a usage error; everything else concerns the data
        Err(e @ (gnfalign::Error::Setting { .. } | gnfalign::Error::Config { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
