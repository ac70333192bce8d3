use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radiomics::cnn::{generate_test_weights, save_weights};
use radiomics::gmm::FeatureMatrix;
use radiomics::pipeline::{cmd_classify, cmd_extract, cmd_inspect, cmd_survive, CohortManifest, RunConfig, Target};
use radiomics::synthetic::{write_cohort, CohortSpec};

#[derive(Parser)]
#[command(name = "radiomics", version, about = "Deep radiomic features, classification and survival reports")]
struct Cli {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract mixture features for every patient into features.csv.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// LOOCV random-forest classification per feature set.
    Classify {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// m1, neutrophils, tfh or survival
        #[arg(long)]
        target: Target,
    },
    /// Kaplan-Meier and log-rank comparison of predicted survival groups.
    Survive {
        #[arg(long)]
        manifest: PathBuf,
        /// Used to run the survival classification when its reports are missing.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Histogram, mixture overlay and central slice of one activation map.
    Inspect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        map: usize,
    },
    /// Write seeded random network weights.
    GenWeights {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic cohort (volumes, masks, manifest.csv, weights.bin).
    Synth {
        #[arg(long, default_value_t = 10)]
        patients: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        dir: PathBuf,
    },
}

enum Outcome {
    Done,
    Partial,
}

fn init_threads() {
    let Ok(v) = std::env::var("RADIOMICS_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring RADIOMICS_THREADS={v}"),
    }
}

fn run(cli: Cli) -> radiomics::Result<Outcome> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    let out: &Path = &config.output_dir;
    match cli.command {
        Command::Extract { manifest, weights } => {
            let m = CohortManifest::read(&manifest)?;
            let s = cmd_extract(&m, &weights, &config, out)?;
            println!("wrote {} ({} patients)", s.features_path.display(), s.n_extracted);
            for (id, err) in &s.failures {
                eprintln!("skipped {id}: {err}");
            }
            if s.is_partial() {
                return Ok(Outcome::Partial);
            }
        }
        Command::Classify { features, manifest, target } => {
            let m = CohortManifest::read(&manifest)?;
            let f = FeatureMatrix::read_csv(&features)?;
            let o = cmd_classify(&f, &m, target, &config, out)?;
            for (set, r) in &o.reports {
                println!("{target}\t{set}\tauc={:.4}\taccuracy={:.4}", r.auc, r.accuracy);
            }
            println!("wrote {}", o.summary_path.display());
        }
        Command::Survive { manifest, features } => {
            let m = CohortManifest::read(&manifest)?;
            let f = features.map(FeatureMatrix::read_csv).transpose()?;
            let o = cmd_survive(&m, f.as_ref(), &config, out)?;
            print!("{}", std::fs::read_to_string(&o.table_path)?);
        }
        Command::Inspect { manifest, weights, patient, map } => {
            let m = CohortManifest::read(&manifest)?;
            let o = cmd_inspect(&m, &weights, &patient, map, &config, out)?;
            for c in &o.artifacts.fit.components {
                println!("mu={:.4} var={:.4} w={:.4}", c.mu, c.sigma2, c.omega);
            }
            println!("wrote {}, {}, {}", o.svg_path.display(), o.pgm_path.display(), o.json_path.display());
        }
        Command::GenWeights { seed, output } => {
            save_weights(&generate_test_weights(seed), &output)?;
            println!("wrote {}", output.display());
        }
        Command::Synth { patients, seed, dir } => {
            let files = write_cohort(&dir, &CohortSpec { n_patients: patients, seed, ..Default::default() })?;
            println!("wrote {} and {}", files.manifest.display(), files.weights.display());
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
