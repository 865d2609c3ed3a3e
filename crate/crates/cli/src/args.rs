use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use granball::boundary::InferenceRule;
use granball::{Ablation, DatasetSource, ExperimentConfig, HyperParams, Metric, SweepParam};
use serde::de::DeserializeOwned;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Hyperparameter overrides shared by every command that clusters or trains.
#[derive(Debug, Default, Args)]
pub struct HyperArgs {
    /// JSON file with hyperparameters; flags below override it.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    #[arg(long)]
    pub p_l: Option<f64>,
    #[arg(long)]
    pub n_l: Option<usize>,
    #[arg(long)]
    pub p_t: Option<f64>,
    #[arg(long)]
    pub n_t: Option<usize>,
    /// `cosine` or `euclidean`.
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoder output dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub recluster_every: Option<usize>,
}

impl HyperArgs {
    pub fn apply(&self, hp: &mut HyperParams) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { hp.$field = v; })*
            };
        }
        set!(p_l => p_l, p_t => p_t, n_t => n_t, metric => metric, seed => seed, dim => dim,
             epochs => epochs, batch_size => batch_size, lr => learning_rate, recluster_every => recluster_every);
        if let Some(n) = self.n_l {
            hp.n_l = Some(n);
        }
    }

    pub fn resolve(&self) -> Result<HyperParams> {
        let mut hp = match &self.hyper {
            Some(p) => read_json(p)?,
            None => HyperParams::default(),
        };
        self.apply(&mut hp);
        hp.validate()?;
        Ok(hp)
    }
}

fn parse_rule(s: &str) -> std::result::Result<InferenceRule, String> {
    match s {
        "nearest" => Ok(InferenceRule::Nearest),
        "radius_normalized" => Ok(InferenceRule::RadiusNormalized),
        other => Err(format!("unknown inference rule `{other}`")),
    }
}

/// Experiment flags. A config file sets the baseline and each flag given
/// replaces the matching field.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Value of the `dataset` CSV column.
    #[arg(long)]
    pub name: Option<String>,
    /// GBEM or TSV dataset file.
    #[arg(long, conflicts_with = "preset")]
    pub data: Option<PathBuf>,
    /// Synthetic preset: ring, gaussian_mixture or crescent.
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated known-class ratios.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated subset of full, no_hrl, no_mb, no_hrl_no_mb.
    #[arg(long, value_delimiter = ',')]
    pub ablations: Option<Vec<Ablation>>,
    /// `nearest` or `radius_normalized`.
    #[arg(long, value_parser = parse_rule)]
    pub inference: Option<InferenceRule>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_json(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.hyper.hyper {
            cfg.hyper = read_json(p)?;
        }
        self.hyper.apply(&mut cfg.hyper);
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(p) = &self.data {
            cfg.dataset = DatasetSource::File(p.clone());
        }
        if let Some(p) = &self.preset {
            cfg.dataset = DatasetSource::Preset(p.clone());
        }
        if let Some(v) = &self.ratios {
            cfg.known_class_ratios = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.ablations {
            cfg.ablations = v.clone();
        }
        if let Some(v) = self.inference {
            cfg.inference = v;
        }
        if let Some(v) = self.test_fraction {
            cfg.split.test = v;
        }
        if let Some(v) = self.valid_fraction {
            cfg.split.valid = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = Some(v.clone());
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `p_t` or `n_t`.
    #[arg(long)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
}
