//! `granball` command-line driver.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use granball::boundary::InferenceRule;
use granball::experiment::make_split;
use granball::{
    build_boundaries, build_single_boundary_baseline, classify_dataset, cluster_adaptive, evaluate,
    gen_synthetic, load_embeddings, run_experiment, save_embeddings, train_ce_baseline, train_hrl,
    Dataset, EncoderCheckpoint, ExperimentConfig, Label, OpenSetPrediction, SplitFractions, Sweep,
    SyntheticSpec,
};
use serde::{Deserialize, Serialize};

use args::{read_json, write_json, ExperimentArgs, HyperArgs, SweepArgs};

#[derive(Parser)]
#[command(
    name = "granball",
    version,
    about = "Granular-ball open-set classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// Preset name: ring, gaussian_mixture or crescent.
        #[arg(long, default_value = "ring", conflicts_with = "spec")]
        preset: String,
        /// JSON generator spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.tsv` selects the text format, anything else GBEM.
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into train, valid and test files.
    Split {
        #[arg(long)]
        data: PathBuf,
        /// Known-class ratio. Without it, pre-labeled open samples go to test.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        valid_fraction: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cluster a dataset and write the ball report.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder and write its checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Train with cross-entropy instead of the granular-ball objective.
        #[arg(long)]
        cross_entropy: bool,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build decision boundaries from training data and classify a dataset.
    Infer(InferArgs),
    /// Score predictions against the labels of a dataset.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment grid.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
    /// Run the experiment grid across quality-filter values.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    encoder: PathBuf,
    /// Training data the boundaries are built from.
    #[arg(long)]
    train: PathBuf,
    /// Data to classify.
    #[arg(long)]
    data: PathBuf,
    /// One boundary per class instead of one per ball.
    #[arg(long)]
    single_boundary: bool,
    /// Pick among containing spheres by distance over radius.
    #[arg(long)]
    radius_normalized: bool,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Also write the boundary model here.
    #[arg(long)]
    boundaries_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionFile {
    num_known: Label,
    labels: Vec<Label>,
    details: Vec<OpenSetPrediction>,
}

fn load(path: &Path) -> Result<Dataset> {
    load_embeddings(path).with_context(|| format!("loading {}", path.display()))
}

fn synth(preset: &str, spec: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let spec: SyntheticSpec = match spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::preset(preset)?,
    };
    let ds = gen_synthetic(&spec, seed)?;
    save_embeddings(&ds, out)?;
    log::info!(
        "wrote {} samples of dimension {} to {}",
        ds.len(),
        ds.dim(),
        out.display()
    );
    Ok(())
}

fn split(
    data: &Path,
    ratio: Option<f64>,
    seed: u64,
    fractions: SplitFractions,
    out_dir: &Path,
) -> Result<()> {
    let ds = load(data)?;
    let s = make_split(&ds, ratio, seed, &fractions)?;
    std::fs::create_dir_all(out_dir)?;
    for (name, part) in [("train", &s.train), ("valid", &s.valid), ("test", &s.test)] {
        save_embeddings(part, out_dir.join(format!("{name}.gbem")))?;
    }
    write_json(&out_dir.join("remap.json"), &s.remap)?;
    log::info!(
        "{} known classes; train {}, valid {}, test {}",
        s.num_known(),
        s.train.len(),
        s.valid.len(),
        s.test.len()
    );
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    let ckpt: EncoderCheckpoint = read_json(&a.encoder)?;
    let mut hp = a.hyper.resolve()?;
    if a.hyper.seed.is_none() {
        hp.seed = ckpt.seed;
    }
    let encoder = ckpt.into_encoder()?;
    let train = encoder.encode(&load(&a.train)?)?;
    let target = encoder.encode(&load(&a.data)?)?;
    if target.num_known() != train.num_known() {
        bail!(
            "train has {} known classes but the data has {}",
            train.num_known(),
            target.num_known()
        );
    }
    let model = if a.single_boundary {
        build_single_boundary_baseline(&train, hp.metric)?
    } else {
        build_boundaries(&train, &cluster_adaptive(&train, &hp)?, hp.metric)?
    };
    if let Some(p) = &a.boundaries_out {
        write_json(p, &model)?;
    }
    let rule = if a.radius_normalized {
        InferenceRule::RadiusNormalized
    } else {
        InferenceRule::Nearest
    };
    let details = classify_dataset(&target, &model, rule)?;
    let file = PredictionFile {
        num_known: model.num_known,
        labels: details.iter().map(|p| p.label).collect(),
        details,
    };
    write_json(&a.out, &file)?;
    log::info!(
        "{} boundaries, {} predictions",
        model.n_boundaries(),
        file.labels.len()
    );
    Ok(())
}

fn eval(predictions: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let preds: PredictionFile = read_json(predictions)?;
    let ds = load(data)?;
    let report = evaluate(&preds.labels, &ds.labels(), preds.num_known)?;
    let [acc, f1_all, f1_u, f1_k] = report.percentages();
    println!("acc {acc:.2}  f1_all {f1_all:.2}  f1_u {f1_u:.2}  f1_k {f1_k:.2}");
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok(())
}

fn experiment(cfg: ExperimentConfig) -> Result<ExitCode> {
    let out = run_experiment(&cfg)?;
    if cfg.output_dir.is_none() {
        print!("{}", out.csv());
    }
    for f in &out.failures {
        eprintln!(
            "failed: ratio {:?} seed {} {}: {}",
            f.ratio, f.seed, f.ablation, f.error
        );
    }
    Ok(if out.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            preset,
            spec,
            seed,
            out,
        } => synth(&preset, spec.as_deref(), seed, &out)?,
        Command::Split {
            data,
            ratio,
            seed,
            test_fraction,
            valid_fraction,
            out_dir,
        } => split(
            &data,
            ratio,
            seed,
            SplitFractions {
                test: test_fraction,
                valid: valid_fraction,
            },
            &out_dir,
        )?,
        Command::Cluster { data, hyper, out } => {
            let res = cluster_adaptive(&load(&data)?, &hyper.resolve()?)?;
            write_json(&out, &res.report())?;
        }
        Command::Train {
            data,
            cross_entropy,
            hyper,
            out,
        } => {
            let hp = hyper.resolve()?;
            let raw = load(&data)?;
            let encoder = if cross_entropy {
                train_ce_baseline(&raw, &hp)?.encoder
            } else {
                train_hrl(&raw, &hp)?.encoder
            };
            write_json(&out, &encoder.checkpoint(hp.seed, hp.epochs))?;
        }
        Command::Infer(a) => infer(&a)?,
        Command::Eval {
            predictions,
            data,
            out,
        } => eval(&predictions, &data, out.as_deref())?,
        Command::Run { experiment: e } => return experiment(e.resolve()?),
        Command::Sweep {
            experiment: e,
            sweep,
        } => {
            let mut cfg = e.resolve()?;
            cfg.sweep = Some(Sweep {
                param: sweep.param,
                values: sweep.values,
            });
            return experiment(cfg);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
